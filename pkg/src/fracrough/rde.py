"""Controlled rough differential equations: dX = b dt + lambda(X, gamma) dzeta.

The solver realizes the small-window fixed-point construction: the grid is
chopped into windows on which a contraction proxy is small, and on each
window the integral map is Picard-iterated from a constant initial guess
until the sweep residual dies.  Because the compensated-sum integral map is
causal, the converged trace is the unique discrete fixed point (the
all-levels Euler scheme), independent of the windowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controlled import (
    ControlledPath,
    SmoothFunction,
    composition_terms,
    rough_integral,
)
from .gridpath import SampledPath, p_variation, pvar_from_increments
from .roughlift import RoughPath, Word, rough_distance, words_up_to

__all__ = [
    "RdeProblem",
    "RdeSolution",
    "PicardDivergence",
    "solve",
    "stability_probe",
    "remainder_growth_check",
]


class PicardDivergence(RuntimeError):
    """Raised when a window's sweeps stop contracting or hit the cap."""


@dataclass(frozen=True)
class RdeProblem:
    """Data of one controlled RDE.

    ``b`` may be ``None`` for driftless dynamics; ``lam`` maps the state and
    control value to an ``(e, d)`` matrix and must carry derivatives up to
    ``N + 1``.
    """

    lam: SmoothFunction
    zeta: RoughPath
    gamma: SampledPath
    x0: np.ndarray
    b: SmoothFunction | None = None

    def __post_init__(self) -> None:
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", x0)
        e, d = self.lam.out_shape
        if d != self.zeta.d:
            raise ValueError(f"lambda maps into {self.lam.out_shape}, driver has d={self.zeta.d}")
        if e != x0.shape[0]:
            raise ValueError(f"initial state has dim {x0.shape[0]}, lambda output {e}")
        if self.gamma.grid.n != self.zeta.grid.n:
            raise ValueError("control path and driver must share the grid")
        if self.b is not None and self.b.out_shape != (e,):
            raise ValueError("drift output shape must match the state")

    @property
    def e(self) -> int:
        return self.x0.shape[0]


def solution_components_at(
    lam: SmoothFunction, x: np.ndarray, g: np.ndarray | None, d: int, N: int
) -> tuple[dict[Word, np.ndarray], dict[Word, np.ndarray]]:
    """Self-consistent Gubinelli components at one point.

    Level by level: the state component for word ``w`` is the ``w[-1]``
    column of the composed coefficient at word ``w[:-1]``, and the composed
    coefficients extend one level using the state components already built.
    Returns ``(state_components, coefficient_components)``.
    """
    lam0 = np.asarray(lam.value(x, g), dtype=float)
    lam_comps: dict[Word, np.ndarray] = {(): lam0}
    x_comps: dict[Word, np.ndarray] = {}
    for level in range(1, N):
        for w in words_up_to(d, level, min_level=level):
            x_comps[w] = lam_comps[w[:-1]][:, w[-1] - 1]
        for w in words_up_to(d, level, min_level=level):
            acc = np.zeros(lam.out_shape)
            for m, tup, weight in composition_terms(w, d):
                vs = [x_comps[part] for part in tup]
                acc = acc + weight * lam.contracted(m, x, g, vs)
            lam_comps[w] = acc
    return x_comps, lam_comps


def _window_plan(problem: RdeProblem, threshold: float = 0.5) -> list[tuple[int, int]]:
    """Chop the grid so C_lam * (dt + cell-mass proxy) stays under threshold."""
    zeta = problem.zeta
    n = zeta.grid.n
    h = zeta.grid.h
    p = zeta.p
    cell_mass = np.zeros(n)
    for i in range(n):
        tab = zeta.increment_table(i, i + 1)
        cell_mass[i] = sum(abs(v) ** (p / len(w)) for w, v in tab.items())
    scale = max(problem.lam.bound, problem.b.bound if problem.b else 0.0, 1.0)
    windows = []
    i = 0
    while i < n:
        j = i
        acc_t, acc_m = 0.0, 0.0
        while j < n:
            if j > i and scale * (acc_t + h + (acc_m + cell_mass[j]) ** (1.0 / p)) >= threshold:
                break
            acc_t += h
            acc_m += cell_mass[j]
            j += 1
        windows.append((i, j))
        i = j
    return windows


@dataclass
class RdeSolution:
    """Converged controlled path plus per-window Picard diagnostics."""

    problem: RdeProblem
    controlled: ControlledPath
    diagnostics: list[dict] = field(default_factory=list)
    tol: float = 0.0

    def trace(self) -> SampledPath:
        return self.controlled.trace_path()

    def self_consistency_residual(self) -> float:
        """Max gap between stored components and their recomputed definition."""
        zeta = self.problem.zeta
        n = zeta.grid.n
        worst = 0.0
        for t in range(n + 1):
            x = self.controlled.components[()][t]
            g = self.problem.gamma.values[t]
            x_comps, _ = solution_components_at(self.problem.lam, x, g, zeta.d, zeta.N)
            for w, v in x_comps.items():
                worst = max(worst, float(np.max(np.abs(v - self.controlled.components[w][t]))))
        return worst

    def integral_residual(self) -> float:
        """Max defect of the trace against the compensated-sum integral map."""
        fixed = _sweep(self.problem, self.controlled.components[()], 0, self.problem.zeta.grid.n)
        return float(np.max(np.abs(fixed - self.controlled.components[()])))


def _coefficients_row(problem: RdeProblem, trace: np.ndarray, i: int) -> dict[Word, np.ndarray]:
    _, lam_comps = solution_components_at(
        problem.lam, trace[i], problem.gamma.values[i], problem.zeta.d, problem.zeta.N
    )
    return lam_comps


def _sweep(problem: RdeProblem, trace: np.ndarray, i0: int, j0: int) -> np.ndarray:
    """One Jacobi application of the integral map on window ``[i0, j0]``.

    Coefficients are frozen at the current iterate; the new trace is the
    accumulated compensated sum started from the (fixed) window entry value.
    """
    zeta = problem.zeta
    h = zeta.grid.h
    words = words_up_to(zeta.d, zeta.N)
    new = trace.copy()
    acc = trace[i0].copy()
    for i in range(i0, j0):
        lam_comps = _coefficients_row(problem, trace, i)
        tab = zeta.increment_table(i, i + 1)
        step = np.zeros_like(acc)
        for w in words:
            z = tab.get(w, 0.0)
            if z != 0.0:
                step = step + lam_comps[w[:-1]][:, w[-1] - 1] * z
        if problem.b is not None:
            step = step + np.asarray(problem.b.value(trace[i], problem.gamma.values[i]), float) * h
        acc = acc + step
        new[i + 1] = acc
    return new


def solve(problem: RdeProblem, tol: float = 1e-12, max_sweeps: int = 50) -> RdeSolution:
    """Solve the RDE by windowed Picard iteration of the integral map."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if problem.lam.order < problem.zeta.N + 1:
        raise ValueError(
            f"lambda needs {problem.zeta.N + 1} derivatives for level {problem.zeta.N}, "
            f"carries {problem.lam.order}"
        )
    zeta = problem.zeta
    n = zeta.grid.n
    e = problem.e
    trace = np.zeros((n + 1, e))
    trace[0] = problem.x0
    diagnostics = []
    for (a, b) in _window_plan(problem):
        trace[a + 1 : b + 1] = trace[a]  # constant initial guess on the window
        prev_res = np.inf
        grow = 0
        used = max_sweeps
        for sweep in range(1, max_sweeps + 1):
            new = _sweep(problem, trace, a, b)
            res = float(np.max(np.abs(new[a : b + 1] - trace[a : b + 1])))
            trace[a : b + 1] = new[a : b + 1]
            if res <= tol:
                used = sweep
                break
            grow = grow + 1 if res > prev_res else 0
            if grow >= 3:
                raise PicardDivergence(
                    f"window [{zeta.grid.time(a)}, {zeta.grid.time(b)}]: residual grew "
                    f"for 3 sweeps (last {res:.3e})"
                )
            prev_res = res
        else:
            raise PicardDivergence(
                f"window [{zeta.grid.time(a)}, {zeta.grid.time(b)}]: residual {prev_res:.3e} "
                f"above tol {tol} after {max_sweeps} sweeps"
            )
        diagnostics.append(
            {"window": (zeta.grid.time(a), zeta.grid.time(b)), "iterations": used, "residual": res}
        )

    comps: dict[Word, np.ndarray] = {(): trace}
    for w in words_up_to(zeta.d, zeta.N - 1):
        comps[w] = np.zeros((n + 1, e))
    for t in range(n + 1):
        x_comps, _ = solution_components_at(
            problem.lam, trace[t], problem.gamma.values[t], zeta.d, zeta.N
        )
        for w, v in x_comps.items():
            comps[w][t] = v
    controlled = ControlledPath(zeta, comps, (e,))
    return RdeSolution(problem=problem, controlled=controlled, diagnostics=diagnostics, tol=tol)


def _controlled_gap(a: ControlledPath, b: ControlledPath) -> float:
    """|X0 - Y0| plus component-wise variation norms of the difference."""
    p = a.reference.p
    N = a.N
    out = float(np.linalg.norm(a.components[()][0] - b.components[()][0]))
    for w in [(), *words_up_to(a.reference.d, N - 1)]:
        diff = a.components[w] - b.components[w]
        expo = max(p / (N - len(w)) if len(w) else p, 1.0)

        def inc(i: int, j: int, diff=diff) -> float:
            return float(np.linalg.norm(diff[j] - diff[i]))

        out += pvar_from_increments(inc, range(diff.shape[0]), expo)
    return out


def stability_probe(
    base: RdeProblem, perturbed: RdeProblem, tol: float = 1e-12
) -> dict:
    """Solution gap over input gap, the ratio the local estimate bounds.

    Zero input perturbation returns ratio ``0.0`` by convention.
    """
    sol_a = solve(base, tol)
    sol_b = solve(perturbed, tol)
    fl = max(1, math.floor(base.zeta.p))
    denom = float(np.linalg.norm(base.x0 - perturbed.x0))
    denom += float(np.linalg.norm(base.gamma.values[0] - perturbed.gamma.values[0]))
    gdiff = SampledPath(base.gamma.grid, base.gamma.values - perturbed.gamma.values)
    denom += p_variation(gdiff, base.zeta.p / fl)
    denom += rough_distance(base.zeta, perturbed.zeta)
    num = _controlled_gap(sol_a.controlled, sol_b.controlled)
    ratio = 0.0 if denom == 0.0 else num / denom
    return {"numerator": num, "denominator": denom, "ratio": ratio}


def remainder_growth_check(solution: RdeSolution, windows: list[tuple[int, int]]) -> list[dict]:
    """Per-window trace-remainder norms against the paper-shaped envelopes.

    Each row carries ``lhs = |R^X|_{p/floor(p)}`` on the window, the product
    envelope ``(dt + |zeta|_p)(1 + |gamma|_{p/floor(p)})(1 + sum_j lhs^j)``
    and the greedy-partition envelope ``1 + |gamma|^{p+1}``.  Constants are
    fitted by the property tests, not here.
    """
    problem = solution.problem
    zeta = problem.zeta
    p = zeta.p
    fl = max(1, math.floor(p))
    rows = []
    for (i, j) in windows:
        lhs = solution.controlled.remainder_pvar((), (i, j), expo=max(p / fl, 1.0))
        dt = zeta.grid.time(j) - zeta.grid.time(i)
        zn = 0.0
        for w in words_up_to(zeta.d, zeta.N):
            def inc(a: int, b: int, w=w) -> float:
                return abs(zeta.increment_table(a, b).get(w, 0.0))

            zn += pvar_from_increments(inc, range(i, j + 1), p / len(w))
        gn = p_variation(problem.gamma, p / fl, (i, j))
        poly = sum(lhs**k for k in range(1, fl))
        rows.append(
            {
                "window": (zeta.grid.time(i), zeta.grid.time(j)),
                "lhs": lhs,
                "envelope": (dt + zn) * (1.0 + gn) * (1.0 + poly),
                "greedy_envelope": 1.0 + gn ** (p + 1.0),
            }
        )
    return rows
