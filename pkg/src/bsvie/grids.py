"""Time grids, the recombining binomial tree, and Monte Carlo path ensembles.

The tree places the scaled random walk W(k, j) = (2j - k) * sqrt(h) at level k,
node j (j = 0..k), with up/down probability 1/2 each, so one-step conditional
expectations are plain midpoint averages and are exact (no quadrature error).
The path ensemble draws Brownian increments from counter-based substreams keyed
by (master seed, path id), which makes generation order-independent: path m is
the same bit pattern regardless of how many paths are requested around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = [
    "TimeGrid",
    "BinomialTree",
    "RandomStream",
    "PathEnsemble",
    "make_grid",
    "build_tree",
    "simulate_paths",
    "tree_conditional_expectation",
    "conditional_expectation_via_weights",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * horizon / steps, k = 0..steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.h

    def time(self, k: int) -> float:
        return k * self.h


@dataclass(frozen=True)
class BinomialTree:
    """Recombining binomial approximation of Brownian motion on a TimeGrid."""

    grid: TimeGrid

    @property
    def sqrt_h(self) -> float:
        return float(np.sqrt(self.grid.h))

    def nodes(self, k: int) -> np.ndarray:
        """W values at level k, shape (k + 1,), node j holds (2j - k) * sqrt(h)."""
        if not 0 <= k <= self.grid.steps:
            raise ValueError(f"level {k} outside 0..{self.grid.steps}")
        return (2.0 * np.arange(k + 1) - k) * self.sqrt_h

    @property
    def terminal_nodes(self) -> np.ndarray:
        return self.nodes(self.grid.steps)


@dataclass(frozen=True)
class RandomStream:
    """Counter-based substream: (master seed, stream id) -> independent generator.

    Streams with distinct ids never share draws, and a stream's output does not
    depend on which other streams exist, so parallel generation stays
    reproducible. `generator(skip)` restarts the stream and advances the
    counter, which is how a position inside the stream is addressed.
    """

    master_seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in uint64")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must fit in uint64")

    def bit_generator(self) -> np.random.Philox:
        return np.random.Philox(key=[self.master_seed, self.stream_id])

    def generator(self, skip: int = 0) -> np.random.Generator:
        bg = self.bit_generator()
        if skip:
            bg = bg.advance(skip)
        return np.random.Generator(bg)


@dataclass(frozen=True)
class PathEnsemble:
    """M simulated paths of Brownian increments on a grid.

    increments[m, k] is the step over [t_k, t_{k+1}] for path m, drawn N(0, h)
    from the substream (seed, m). `paths` holds the cumulative sums with the
    leading zero column, shape (M, steps + 1).
    """

    grid: TimeGrid
    seed: int
    increments: np.ndarray
    paths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        M, N = self.increments.shape
        if N != self.grid.steps:
            raise ValueError("increment column count must equal grid.steps")
        w = np.zeros((M, N + 1))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        object.__setattr__(self, "paths", w)

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]

    def block(self, start: int, stop: int) -> "PathEnsemble":
        """Sub-ensemble of paths [start, stop); bitwise equal to a fresh draw
        of those path ids thanks to per-path substreams."""
        return PathEnsemble(self.grid, self.seed, self.increments[start:stop].copy())


def make_grid(horizon: float, steps: int) -> TimeGrid:
    return TimeGrid(float(horizon), int(steps))


def build_tree(grid: TimeGrid) -> BinomialTree:
    return BinomialTree(grid)


def simulate_paths(grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
    """Draw n_paths Brownian paths; path m depends only on (seed, m)."""
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    scale = np.sqrt(grid.h)
    inc = np.empty((n_paths, grid.steps))
    for m in range(n_paths):
        gen = RandomStream(seed, m).generator()
        inc[m] = gen.standard_normal(grid.steps)
    inc *= scale
    return PathEnsemble(grid, seed, inc)


def tree_conditional_expectation(values_next: np.ndarray) -> np.ndarray:
    """One-step conditional expectation on the tree.

    values_next holds a field over level k+1 nodes (leading axis length k+2);
    returns the field over level k nodes. Exact: each parent averages its two
    children with weight 1/2.
    """
    v = np.asarray(values_next)
    if v.shape[0] < 2:
        raise ValueError("need at least two child nodes")
    return 0.5 * (v[1:] + v[:-1])


def conditional_expectation_via_weights(
    tree: BinomialTree, k: int, values_at_level: np.ndarray, source_level: int | None = None
) -> np.ndarray:
    """Conditional expectation from `source_level` down to level k in one shot.

    Independent re-derivation used to cross-check the sweep: conditioned on
    node (k, j), the walk reaches node j + m of the source level with binomial
    C(d, m) / 2^d weight, d = source_level - k. Applied as a correlation of
    the field with the exact binomial pmf.
    """
    v = np.asarray(values_at_level, dtype=float)
    d_level = tree.grid.steps if source_level is None else source_level
    d = d_level - k
    if d < 0:
        raise ValueError("source level must be >= target level")
    if v.shape[0] != d_level + 1:
        raise ValueError("field length must match source level width")
    if d == 0:
        return v.copy()
    w = stats.binom.pmf(np.arange(d + 1), d, 0.5)
    if v.ndim == 1:
        out = np.empty(k + 1)
        for j in range(k + 1):
            out[j] = float(np.dot(w, v[j : j + d + 1]))
    else:
        out = np.empty((k + 1,) + v.shape[1:])
        for j in range(k + 1):
            out[j] = np.tensordot(w, v[j : j + d + 1], axes=(0, 0))
    return out
