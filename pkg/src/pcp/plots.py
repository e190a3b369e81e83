"""SVG visualizations of predictive sets and their interval structure."""

from __future__ import annotations

import math

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Circle, Rectangle

from .core import BallUnionSet, DataError, DimensionError, NormKind


def _require_finite(sets):
    for s in sets:
        if s.is_infinite:
            raise DataError("cannot draw a set with infinite radius")


def plot_sets_1d(sets, xs, ys=None, flags=None, path=None, title=None):
    """Vertical interval segments per test point, covered points marked."""
    _require_finite(sets)
    xs = np.asarray(xs, dtype=float).ravel()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for x0, s in zip(xs, sets):
        if s.d != 1:
            raise DimensionError("1-D plot needs scalar-target sets")
        for lo, hi in s.intervals():
            ax.plot([x0, x0], [lo, hi], color="tab:blue", lw=2, alpha=0.6, zorder=1)
    if ys is not None:
        ys = np.asarray(ys, dtype=float).ravel()
        if flags is None:
            flags = np.ones(ys.size, dtype=bool)
        flags = np.asarray(flags, dtype=bool)
        ax.scatter(xs[flags], ys[flags], s=14, color="tab:green", zorder=2, label="covered")
        if np.any(~flags):
            ax.scatter(
                xs[~flags], ys[~flags], s=18, color="tab:red", marker="x", zorder=3,
                label="missed",
            )
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def _ball_patch(center, radius, norm: NormKind):
    if norm is NormKind.L2:
        return Circle(center, radius, fill=True, alpha=0.25, color="tab:blue", lw=0)
    if norm is NormKind.LINF:
        return Rectangle(
            (center[0] - radius, center[1] - radius), 2 * radius, 2 * radius,
            fill=True, alpha=0.25, color="tab:blue", lw=0,
        )
    # L1 ball is the diamond with vertices at distance radius along the axes
    diamond = plt.Polygon(
        [
            (center[0] + radius, center[1]),
            (center[0], center[1] + radius),
            (center[0] - radius, center[1]),
            (center[0], center[1] - radius),
        ],
        fill=True, alpha=0.25, color="tab:blue", lw=0,
    )
    return diamond


def plot_set_2d(ball_set: BallUnionSet, y=None, path=None, title=None):
    """One 2-D ball union; the observed target drawn on top when given."""
    _require_finite([ball_set])
    if ball_set.d != 2:
        raise DimensionError("2-D plot needs two-dimensional targets")
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for c in ball_set.centers:
        ax.add_patch(_ball_patch(c, ball_set.radius, ball_set.norm))
    ax.scatter(
        ball_set.centers[:, 0], ball_set.centers[:, 1], s=8, color="tab:blue", zorder=2
    )
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        ax.scatter([y[0]], [y[1]], s=40, color="tab:red", marker="*", zorder=3)
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_xlabel("y0")
    ax.set_ylabel("y1")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def plot_set_pairs(ball_set: BallUnionSet, y=None, path=None, title=None):
    """Pairwise coordinate panels for targets above two dimensions."""
    _require_finite([ball_set])
    d = ball_set.d
    if d < 3:
        raise DimensionError("pairwise panels are for d >= 3; use plot_set_2d")
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    ncols = min(3, len(pairs))
    nrows = int(math.ceil(len(pairs) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(4 * ncols, 4 * nrows), squeeze=False)
    for ax in axes.ravel()[len(pairs):]:
        ax.set_visible(False)
    for ax, (i, j) in zip(axes.ravel(), pairs):
        proj = BallUnionSet(ball_set.centers[:, [i, j]], ball_set.radius, ball_set.norm)
        for c in proj.centers:
            ax.add_patch(_ball_patch(c, proj.radius, proj.norm))
        ax.scatter(proj.centers[:, 0], proj.centers[:, 1], s=6, color="tab:blue")
        if y is not None:
            yv = np.asarray(y, dtype=float).ravel()
            ax.scatter([yv[i]], [yv[j]], s=36, color="tab:red", marker="*")
        ax.set_aspect("equal")
        ax.autoscale_view()
        ax.set_xlabel(f"y{i}")
        ax.set_ylabel(f"y{j}")
    if title:
        fig.suptitle(title)
    return _finish(fig, path)


def interval_histogram(sets, path=None, title=None):
    """Histogram of the number of disjoint intervals per scalar predictive set."""
    _require_finite(sets)
    counts = []
    for s in sets:
        if s.d != 1:
            raise DimensionError("interval histogram needs scalar-target sets")
        counts.append(len(s.intervals()))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    top = max(counts)
    ax.hist(counts, bins=np.arange(0.5, top + 1.5), color="tab:blue", rwidth=0.9)
    ax.set_xticks(range(1, top + 1))
    ax.set_xlabel("disjoint intervals")
    ax.set_ylabel("sets")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def _finish(fig, path):
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, format="svg")
        plt.close(fig)
        return path
    return fig
