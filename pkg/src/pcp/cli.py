"""Command-line entry point: run experiments, draw plots, generate data,
probe bridge servers."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .backbones import BridgeBackbone, BridgeProtocolError
from .core import (
    BallUnionSet,
    CapabilityError,
    ConfigurationError,
    DataError,
    DimensionError,
    load_csv,
    save_csv,
)
from .experiment import ExperimentConfig, run_experiment
from .plots import interval_histogram, plot_set_2d, plot_set_pairs, plot_sets_1d
from .synth import SynthSpec, generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BRIDGE = 4


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(obj: dict, key: str, value):
    """Set a possibly dotted key inside a nested dict config."""
    parts = key.split(".")
    node = obj
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot override through non-section key {part!r}")
    node[parts[-1]] = value


def _split_overrides(extra):
    overrides = []
    for item in extra:
        if not item.startswith("--") or "=" not in item:
            raise ConfigurationError(f"expected --key=value override, got {item!r}")
        key, _, value = item[2:].partition("=")
        overrides.append((key, _parse_value(value)))
    return overrides


def cmd_run(args, extra) -> int:
    if args.config.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib

        with open(args.config, "rb") as fh:
            obj = tomllib.load(fh)
    else:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
    for key, value in _split_overrides(extra):
        _apply_override(obj, key, value)
    cfg = ExperimentConfig.from_dict(obj)
    reports = run_experiment(cfg)
    for i, rep in enumerate(reports):
        print(f"rep {i}: {json.dumps(rep.to_json_dict(), sort_keys=True)}")
    print(f"wrote {cfg.outdir}/reports.csv")
    return EXIT_OK


def cmd_plot(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    run_dir = args.run_dir
    sets_dir = os.path.join(run_dir, "sets")
    if not os.path.isdir(sets_dir):
        raise DataError(f"{sets_dir}: no serialized sets to plot")
    names = sorted(f for f in os.listdir(sets_dir) if f.endswith(".json"))
    if not names:
        raise DataError(f"{sets_dir}: no serialized sets to plot")
    sets = []
    for name in names:
        with open(os.path.join(sets_dir, name), encoding="utf-8") as fh:
            sets.append(BallUnionSet.from_json_dict(json.load(fh)))
    points_path = os.path.join(run_dir, "test_points.csv")
    xs = ys = None
    if os.path.exists(points_path):
        xs, ys = load_csv(points_path)
        xs, ys = xs[: len(sets)], ys[: len(sets)]
    plots_dir = os.path.join(run_dir, "plots")
    os.makedirs(plots_dir, exist_ok=True)
    d = sets[0].d
    finite = [s for s in sets if not s.is_infinite]
    if not finite:
        raise DataError("all predictive sets have infinite radius; nothing to draw")
    if d == 1:
        flags = None
        if ys is not None:
            flags = np.array(
                [
                    s.is_infinite or any(lo <= y[0] <= hi for lo, hi in s.intervals())
                    for s, y in zip(sets, ys)
                ]
            )
        keep = [not s.is_infinite for s in sets]
        plot_sets_1d(
            [s for s in sets if not s.is_infinite],
            xs[keep, 0] if xs is not None else np.arange(len(finite)),
            ys[keep, 0] if ys is not None else None,
            flags[keep] if flags is not None else None,
            path=os.path.join(plots_dir, "sets_1d.svg"),
        )
        interval_histogram(finite, path=os.path.join(plots_dir, "interval_histogram.svg"))
    elif d == 2:
        for i, s in enumerate(finite[: args.max_sets]):
            y = ys[i] if ys is not None else None
            plot_set_2d(s, y, path=os.path.join(plots_dir, f"set_{i:04d}.svg"))
    else:
        if not args.pairwise:
            raise ConfigurationError(
                f"targets have dimension {d}; pass --pairwise for pairwise panels"
            )
        for i, s in enumerate(finite[: args.max_sets]):
            y = ys[i] if ys is not None else None
            plot_set_pairs(s, y, path=os.path.join(plots_dir, f"set_pairs_{i:04d}.svg"))
    print(f"wrote plots to {plots_dir}")
    return EXIT_OK


def cmd_gen(args, extra) -> int:
    params = {}
    for key, value in _split_overrides(extra):
        params[key] = value
    spec = SynthSpec(name=args.name, n=args.n, seed=args.seed, params=params)
    dataset = generate(spec)
    save_csv(args.out, dataset.x, dataset.y)
    print(f"wrote {dataset.n} rows ({dataset.p} covariates, {dataset.d} targets) to {args.out}")
    return EXIT_OK


def cmd_bridge_test(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    if not args.command:
        raise ConfigurationError("bridge-test needs a child command")
    with BridgeBackbone(args.command) as backbone:
        print(
            f"handshake ok: p={backbone.p} d={backbone.d} "
            f"has_density={backbone.has_density}"
        )
        x = np.zeros(backbone.p)
        batch = backbone.sample(x, args.k, seed=args.seed)
        print(f"sampled {batch.k} points of dimension {batch.d} at x=0")
        if batch.densities is not None:
            lo, hi = float(np.min(batch.densities)), float(np.max(batch.densities))
            print(f"density range [{lo:.6g}, {hi:.6g}]")
    print("bridge ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcp",
        description="Sample-based conformal predictive sets: run, plot, generate, probe.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON/TOML config")
    p_run.add_argument("config")

    p_plot = sub.add_parser("plot", help="draw SVG plots from a finished run directory")
    p_plot.add_argument("run_dir")
    p_plot.add_argument("--max-sets", type=int, default=20)
    p_plot.add_argument("--pairwise", action="store_true")

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    p_gen.add_argument("name")
    p_gen.add_argument("--n", type=int, default=2000)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)

    p_bridge = sub.add_parser("bridge-test", help="handshake and sample one bridge server")
    p_bridge.add_argument("--k", type=int, default=5)
    p_bridge.add_argument("--seed", type=int, default=0)
    # everything after the options is the child command line
    p_bridge.add_argument("command", nargs=argparse.REMAINDER)

    return parser


COMMANDS = {
    "run": cmd_run,
    "plot": cmd_plot,
    "gen": cmd_gen,
    "bridge-test": cmd_bridge_test,
}


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return COMMANDS[args.verb](args, extra)
    except (ConfigurationError, CapabilityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BridgeProtocolError as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return EXIT_BRIDGE
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
