"""Trivial bridge server: every sample is the first covariate coordinate,
repeated. Useful for protocol conformance tests where the parent-side
score has a closed form |y - x0|."""

from __future__ import annotations

import argparse
import sys

from .protocol import Handler, serve


class EchoHandler(Handler):
    has_density = False
    d = 1

    def __init__(self, p: int = 1):
        self.p = p

    def sample(self, x, k, seed):
        return [[x[0]] for _ in range(k)], None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=1, help="covariate dimension")
    args = ap.parse_args(argv)
    return serve(EchoHandler(p=args.p))


if __name__ == "__main__":
    sys.exit(main())
