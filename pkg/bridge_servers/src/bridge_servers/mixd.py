"""Mixture density network bridge server.

Trains a small diagonal-Gaussian mixture network on a CSV dataset
(columns x0..x{p-1}, y0..y{d-1}) by negative log-likelihood, then answers
sample requests with exact conditional densities. Sampling is driven by
the request seed, so identical requests yield identical replies.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np
import torch
from torch import nn

from .protocol import Handler, serve

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_SIGMA_FLOOR = -7.0


def load_xy_csv(path: str):
    """Read the x*/y* column CSV format; rejects non-finite rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
        if not x_cols or not y_cols:
            raise ValueError(f"{path}: header must contain x* and y* columns")
        xs, ys = [], []
        for row in reader:
            if not row:
                continue
            vals = [float(v) for v in row]
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: non-finite entry")
            xs.append([vals[i] for i in x_cols])
            ys.append([vals[i] for i in y_cols])
    return np.asarray(xs), np.asarray(ys)


class MdnNet(nn.Module):
    """Two hidden tanh layers; heads for component logits, means and
    per-dimension log standard deviations."""

    def __init__(self, p: int, d: int, hidden: int = 64, components: int = 5):
        super().__init__()
        self.p, self.d, self.m = p, d, components
        self.body = nn.Sequential(
            nn.Linear(p, hidden), nn.Tanh(), nn.Linear(hidden, hidden), nn.Tanh()
        )
        self.logits = nn.Linear(hidden, components)
        self.means = nn.Linear(hidden, components * d)
        self.log_sigmas = nn.Linear(hidden, components * d)

    def forward(self, x):
        h = self.body(x)
        log_pi = torch.log_softmax(self.logits(h), dim=-1)
        mu = self.means(h).view(-1, self.m, self.d)
        log_sigma = self.log_sigmas(h).view(-1, self.m, self.d)
        log_sigma = torch.clamp(log_sigma, min=_LOG_SIGMA_FLOOR, max=5.0)
        return log_pi, mu, log_sigma

    def nll(self, x, y):
        log_pi, mu, log_sigma = self.forward(x)
        dev = (y[:, None, :] - mu) / torch.exp(log_sigma)
        comp_ll = -0.5 * (dev**2 + _LOG_2PI).sum(dim=2) - log_sigma.sum(dim=2)
        return -torch.logsumexp(log_pi + comp_ll, dim=1).mean()


def train_mdn(
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    hidden: int = 64,
    components: int = 5,
    epochs: int = 200,
    batch_size: int = 128,
    lr: float = 1e-3,
):
    """Standardize, fit by Adam on the mixture NLL; returns (net, scaler)."""
    torch.manual_seed(seed)
    x_loc, x_scale = x.mean(axis=0), x.std(axis=0)
    y_loc, y_scale = y.mean(axis=0), y.std(axis=0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    y_scale = np.where(y_scale > 0, y_scale, 1.0)
    xt = torch.tensor((x - x_loc) / x_scale, dtype=torch.float32)
    yt = torch.tensor((y - y_loc) / y_scale, dtype=torch.float32)

    net = MdnNet(x.shape[1], y.shape[1], hidden=hidden, components=components)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    n = xt.shape[0]
    order_rng = np.random.default_rng(seed)
    for _ in range(epochs):
        perm = torch.tensor(order_rng.permutation(n))
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            opt.zero_grad()
            loss = net.nll(xt[idx], yt[idx])
            loss.backward()
            opt.step()
    net.eval()
    scaler = (x_loc, x_scale, y_loc, y_scale)
    return net, scaler


class MdnHandler(Handler):
    has_density = True

    def __init__(self, net: MdnNet, scaler):
        self.net = net
        self.x_loc, self.x_scale, self.y_loc, self.y_scale = scaler
        self.p = net.p
        self.d = net.d
        self._log_jac = float(np.sum(np.log(self.y_scale)))

    def _conditional(self, x):
        x_std = (np.asarray(x, dtype=float) - self.x_loc) / self.x_scale
        with torch.no_grad():
            log_pi, mu, log_sigma = self.net(
                torch.tensor(x_std[None, :], dtype=torch.float32)
            )
        return (
            np.exp(log_pi[0].numpy().astype(float)),
            mu[0].numpy().astype(float),
            np.exp(log_sigma[0].numpy().astype(float)),
        )

    def sample(self, x, k, seed):
        pi, mu, sigma = self._conditional(x)
        pi = pi / pi.sum()
        rng = np.random.default_rng(seed)
        comps = rng.choice(len(pi), size=k, p=pi)
        y_std = mu[comps] + sigma[comps] * rng.standard_normal((k, self.d))
        # mixture density of each draw, mapped back to original y units
        dev = (y_std[:, None, :] - mu[None, :, :]) / sigma[None, :, :]
        comp_ll = -0.5 * np.sum(dev**2 + _LOG_2PI, axis=2) - np.sum(
            np.log(sigma), axis=1
        )[None, :]
        with np.errstate(divide="ignore"):
            weighted = comp_ll + np.log(pi)[None, :]
        top = weighted.max(axis=1, keepdims=True)
        log_dens = top[:, 0] + np.log(np.sum(np.exp(weighted - top), axis=1))
        dens = np.exp(log_dens - self._log_jac)
        y = self.y_loc + y_std * self.y_scale
        return y.tolist(), dens.tolist()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", required=True, help="training CSV (x*/y* columns)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--components", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=128)
    ap.add_argument("--lr", type=float, default=1e-3)
    args = ap.parse_args(argv)

    x, y = load_xy_csv(args.train)
    print(f"training on {x.shape[0]} rows", file=sys.stderr)
    net, scaler = train_mdn(
        x,
        y,
        seed=args.seed,
        hidden=args.hidden,
        components=args.components,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
    )
    print("ready", file=sys.stderr)
    return serve(MdnHandler(net, scaler))


if __name__ == "__main__":
    sys.exit(main())
