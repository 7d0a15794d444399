"""Uniform time grids, sampled paths and path norms.

Everything downstream (fractional operators, rough lifts, solvers) works on a
shared uniform grid.  Norms are computed exactly on grid points: the discrete
path *is* the object, there is no hidden interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "TimeGrid",
    "SampledPath",
    "ControlFunction",
    "default_control",
    "p_variation",
    "holder_norm",
    "partition_pvar_inequality_check",
    "pvar_from_increments",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``n`` cells on ``[t0, T]``."""

    t0: float
    T: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"grid needs at least one cell, got n={self.n}")
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got [{self.t0}, {self.T}]")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.n

    @property
    def points(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n + 1)

    def time(self, i: int) -> float:
        return self.t0 + self.h * i

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to ``t``; rejects off-grid times."""
        x = (t - self.t0) / self.h
        i = int(round(x))
        if i < 0 or i > self.n or abs(x - i) > 1e-9 * max(1.0, self.n):
            raise ValueError(f"t={t} is not a grid point of {self}")
        return i

    def subgrid(self, i: int, j: int) -> "TimeGrid":
        if not 0 <= i < j <= self.n:
            raise ValueError(f"bad window indices ({i}, {j}) for n={self.n}")
        return TimeGrid(self.time(i), self.time(j), j - i)

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n * factor)


@dataclass(frozen=True)
class SampledPath:
    """Path values on the points of a :class:`TimeGrid`, in ``R^dim``.

    ``values`` has shape ``(n+1, dim)``; scalar input is promoted.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n + 1:
            raise ValueError(
                f"got {v.shape[0]} samples for a grid with {self.grid.n + 1} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value(self, i: int) -> np.ndarray:
        return self.values[i]

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    def restrict(self, i: int, j: int) -> "SampledPath":
        return SampledPath(self.grid.subgrid(i, j), self.values[i : j + 1].copy())

    def sup_norm(self, i: int = 0, j: int | None = None) -> float:
        j = self.grid.n if j is None else j
        seg = self.values[i : j + 1]
        return float(np.max(np.linalg.norm(seg, axis=1)))

    def to_csv(self, path: str) -> None:
        cols = ",".join(f"v{k + 1}" for k in range(self.dim))
        with open(path, "w") as fh:
            fh.write(f"t,{cols}\n")
            for t, row in zip(self.grid.points, self.values):
                vals = ",".join(f"{x:.17g}" for x in row)
                fh.write(f"{t:.17g},{vals}\n")

    @staticmethod
    def from_csv(path: str) -> "SampledPath":
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("t,"):
                raise ValueError(f"malformed path CSV header: {header!r}")
            rows = [tuple(float(x) for x in line.split(",")) for line in fh if line.strip()]
        t = np.array([r[0] for r in rows])
        vals = np.array([r[1:] for r in rows])
        grid = TimeGrid(t[0], t[-1], len(t) - 1)
        return SampledPath(grid, vals)


@dataclass(frozen=True)
class ControlFunction:
    """A superadditive control ``omega(s, t)`` vanishing on the diagonal."""

    evaluate: Callable[[float, float], float]

    def __call__(self, s: float, t: float) -> float:
        if t < s:
            raise ValueError(f"need s <= t, got ({s}, {t})")
        return self.evaluate(s, t)

    def spot_check(self, grid: TimeGrid, rng: np.random.Generator, trials: int = 50) -> None:
        """Raise if a sampled grid triple violates the control axioms."""
        for i in range(min(trials, grid.n + 1)):
            t = grid.time(int(rng.integers(0, grid.n + 1)))
            if abs(self(t, t)) > 1e-12:
                raise ValueError(f"omega({t},{t}) != 0")
        for _ in range(trials):
            i, u, j = sorted(rng.integers(0, grid.n + 1, size=3))
            s, m, t = grid.time(int(i)), grid.time(int(u)), grid.time(int(j))
            if self(s, m) + self(m, t) > self(s, t) + 1e-10:
                raise ValueError(f"superadditivity fails on ({s},{m},{t})")


def default_control(path: SampledPath, p: float) -> ControlFunction:
    """omega(s,t) = (t-s) + ||path||_p^p on [s,t], the workhorse control."""

    def evaluate(s: float, t: float) -> float:
        if t <= s:
            return 0.0
        i, j = path.grid.index_of(s), path.grid.index_of(t)
        return (t - s) + p_variation(path, p, (i, j)) ** p

    return ControlFunction(evaluate)


def pvar_from_increments(
    increment_norm: Callable[[int, int], float], indices: Sequence[int], p: float
) -> float:
    """Exact p-variation over partitions drawn from ``indices``.

    ``increment_norm(a, b)`` must give ``|X_{ab}|`` for grid indices ``a < b``.
    Dynamic program over end indices, O(k^2) calls.
    """
    if p < 1:
        raise ValueError(f"p-variation needs p >= 1, got p={p}")
    k = len(indices)
    if k < 2:
        return 0.0
    best = np.zeros(k)
    for j in range(1, k):
        cand = [best[i] + increment_norm(indices[i], indices[j]) ** p for i in range(j)]
        best[j] = max(cand)
    return float(best[-1] ** (1.0 / p))


def p_variation(path: SampledPath, p: float, window: tuple[int, int] | None = None) -> float:
    """Exact p-variation of the sampled path over grid sub-partitions."""
    i, j = (0, path.grid.n) if window is None else window
    if not 0 <= i <= j <= path.grid.n:
        raise ValueError(f"bad window ({i}, {j})")

    def norm(a: int, b: int) -> float:
        return float(np.linalg.norm(path.values[b] - path.values[a]))

    return pvar_from_increments(norm, range(i, j + 1), p)


def holder_norm(path: SampledPath, alpha: float) -> float:
    """sup over grid pairs s<t of |X_t - X_s| / (t-s)^alpha."""
    if not 0 < alpha <= 1:
        raise ValueError(f"Holder exponent must lie in (0,1], got {alpha}")
    n = path.grid.n
    h = path.grid.h
    out = 0.0
    for gap in range(1, n + 1):
        diffs = path.values[gap:] - path.values[:-gap]
        m = float(np.max(np.linalg.norm(diffs, axis=1)))
        out = max(out, m / (gap * h) ** alpha)
    return out


def partition_pvar_inequality_check(
    path: SampledPath, p: float, cuts: Sequence[int]
) -> bool:
    """Check ||X||_p <= n (sum_i ||X||_p^p over the cut cells)^(1/p).

    ``cuts`` are interior grid indices partitioning the full window.
    """
    idx = [0, *sorted(cuts), path.grid.n]
    if len(set(idx)) != len(idx):
        raise ValueError("cut points must be distinct interior grid indices")
    lhs = p_variation(path, p)
    pieces = [p_variation(path, p, (idx[k], idx[k + 1])) ** p for k in range(len(idx) - 1)]
    n_pieces = len(idx) - 1
    rhs = n_pieces * sum(pieces) ** (1.0 / p)
    return lhs <= rhs + 1e-12 * max(1.0, rhs)
