"""Penalized pathwise control: cost functional, lattice value, DPP probes.

The value is the exact minimum of the cost over all lattice-valued
piecewise-constant pseudo-controls on the decision blocks.  Enumeration is
depth-first over prefixes with sound branch-and-bound cuts; the fractional
memory means a prefix pins the whole trajectory up to its decision time, so
prefix work is shared on the stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .controlled import SmoothFunction, compose, rough_integral
from .fraccalc import ACAlphaPath
from .gridpath import SampledPath, TimeGrid
from .rde import RdeProblem, solve
from .roughlift import RoughPath

__all__ = [
    "ControlProblem",
    "ValueEstimate",
    "CostEvaluator",
    "cost_functional",
    "value_function",
    "dpp_check",
    "degeneracy_probe",
    "penalty_admissibility_threshold",
]


def penalty_admissibility_threshold(p: float, alpha: float) -> float:
    """Exponent the penalty must exceed: floor(p)(p+1) or kappa/(kappa-1).

    ``kappa`` sits at its weakest admissible edge ``1/(1 - alpha + floor(p)/p)``;
    below ``alpha <= floor(p)/p`` no kappa is admissible and the threshold is
    infinite.
    """
    fl = math.floor(p)
    base = fl * (p + 1.0)
    if alpha <= fl / p:
        return math.inf
    kap = 1.0 / (1.0 - alpha + fl / p)
    if kap <= 1.0:
        return math.inf
    return max(base, kap / (kap - 1.0))


@dataclass(frozen=True)
class ControlProblem:
    """Everything defining one penalized control problem.

    ``f0 |u|^q_exp`` is the penalty; ``f_smooth(x, g, u)`` an optional extra
    running cost; ``g(x, g_T)`` the terminal cost; ``psi`` the rough running
    cost composed against the driver.  ``decision_steps`` blocks of equal
    length tile the horizon; ``lattice`` must contain 0.
    """

    alpha: float
    driver: RoughPath
    lam: SmoothFunction
    g: Callable[[np.ndarray, np.ndarray], float]
    f0: float
    q_exp: float
    lattice: np.ndarray
    decision_steps: int
    b: SmoothFunction | None = None
    psi: SmoothFunction | None = None
    f_smooth: Callable[[np.ndarray, np.ndarray, np.ndarray], float] | None = None
    f_smooth_lb: float = 0.0
    # stage_lower_bound(i, j, z): a number such that summing it over all
    # decision blocks and adding terminal_lower_bound(problem, x, gamma, r)
    # lower-bounds the total cost of every completion; both or neither.
    stage_lower_bound: Callable[[int, int, float], float] | None = None
    terminal_lower_bound: Callable[..., float] | None = None
    bound_slack: float = 1e-6
    rde_tol: float = 1e-12
    name: str = ""

    def __post_init__(self) -> None:
        lat = np.sort(np.atleast_1d(np.asarray(self.lattice, dtype=float)))
        if lat.size == 0 or not np.any(lat == 0.0):
            raise ValueError("control lattice must be nonempty and contain 0")
        object.__setattr__(self, "lattice", lat)
        if not 0 < self.alpha < 1:
            raise ValueError("fractional order must lie in (0,1)")
        if self.f0 < 0:
            raise ValueError("penalty weight must be nonnegative")
        if self.decision_steps < 1:
            raise ValueError("need at least one decision step")

    @property
    def p(self) -> float:
        return self.driver.p

    @property
    def grid(self) -> TimeGrid:
        return self.driver.grid

    def decision_blocks(self, r_index: int) -> list[tuple[int, int]]:
        """Equal cell blocks tiling [r, T]; the horizon must divide evenly."""
        n = self.grid.n
        span = n - r_index
        m = self.decision_steps
        if span <= 0:
            return []
        if span % m != 0:
            raise ValueError(
                f"{span} cells on [r, T] do not split into {m} equal decision blocks"
            )
        w = span // m
        return [(r_index + k * w, r_index + (k + 1) * w) for k in range(m)]


@dataclass(frozen=True)
class ValueEstimate:
    """Exact lattice value with its argmin and bookkeeping."""

    value: float
    argmin: tuple[int, ...]
    decomposition: dict
    diagnostics: dict


class CostEvaluator:
    """Incremental cost of a pseudo-control sequence, block by block.

    ``push`` extends the trajectory over the next decision block, ``pop``
    rewinds; a completed stack prices the terminal cost.  The fractional
    extension, the controlled RDE on the block and the compensated-sum
    integral of the rough cost are all cell-additive, so the pieces glue
    exactly across blocks.
    """

    def __init__(self, problem: ControlProblem, r: float, x: np.ndarray, gamma: ACAlphaPath):
        if gamma.alpha != problem.alpha:
            raise ValueError("history path order differs from the problem order")
        grid = problem.grid
        if gamma.grid.n != grid.n:
            raise ValueError("history path must live on the driver grid")
        self.problem = problem
        self.r_index = grid.index_of(r)
        self.blocks = problem.decision_blocks(self.r_index)
        self.x0 = np.atleast_1d(np.asarray(x, dtype=float))
        self.gamma = gamma
        # only the history cells of u may influence anything downstream
        self.u = np.zeros((grid.n, gamma.dim))
        self.u[: self.r_index] = gamma.u.values[: self.r_index]
        self.base = gamma.a.copy()
        self._trace = np.zeros((grid.n + 1, self.x0.shape[0]))
        self._trace[self.r_index] = self.x0
        self._stack: list[dict] = []

    # -- fractional extension ------------------------------------------------
    def _nu_at(self, t: float, upto: int) -> np.ndarray:
        pts = self.problem.grid.points
        i = min(upto, np.searchsorted(pts, t - 1e-12))
        if i == 0:
            return self.base.copy()
        left, right = pts[:i], pts[1 : i + 1]
        a = self.problem.alpha
        w = ((t - left) ** a - (t - np.minimum(right, t)) ** a) / (a * math.gamma(a))
        return self.base + w @ self.u[:i]

    @property
    def depth(self) -> int:
        return len(self._stack)

    def push(self, u_value: float | np.ndarray) -> None:
        if self.depth >= len(self.blocks):
            raise ValueError("all decision blocks already chosen")
        prob = self.problem
        grid = prob.grid
        i, j = self.blocks[self.depth]
        uv = np.atleast_1d(np.asarray(u_value, dtype=float))
        self.u[i:j] = uv

        pts = grid.points
        nu_block = np.array([self._nu_at(pts[k], k) for k in range(i, j + 1)])
        sub = grid.subgrid(i, j)
        z_block = RoughPath(
            grid=sub,
            d=prob.driver.d,
            N=prob.driver.N,
            p=prob.driver.p,
            cell_sigs=prob.driver.cell_sigs[i:j],
            base=prob.driver.trace().values[i].copy(),
        ) if prob.driver.cell_sigs is not None else prob.driver.restrict(i, j)
        gam_block = SampledPath(sub, nu_block)
        rde_prob = RdeProblem(
            lam=prob.lam, zeta=z_block, gamma=gam_block, x0=self._trace[i], b=prob.b
        )
        sol = solve(rde_prob, tol=prob.rde_tol)
        tr = sol.trace().values
        self._trace[i : j + 1] = tr

        h = grid.h
        penalty = 0.0
        running = 0.0
        umag = float(np.linalg.norm(uv))
        for k in range(i, j):
            penalty += prob.f0 * umag**prob.q_exp * h
            if prob.f_smooth is not None:
                t_mid = pts[k] + 0.5 * h
                x_mid = 0.5 * (self._trace[k] + self._trace[k + 1])
                nu_mid = self._nu_at(t_mid, k + 1)
                running += prob.f_smooth(x_mid, nu_mid, uv) * h

        rough = 0.0
        if prob.psi is not None:
            integrand = compose(prob.psi, sol.controlled, gam_block)
            rough = float(np.asarray(rough_integral(integrand, z_block).value))

        self._stack.append(
            {"penalty": penalty, "running": running, "rough": rough, "block": (i, j)}
        )

    def pop(self) -> None:
        fr = self._stack.pop()
        i, j = fr["block"]
        self.u[i:j] = 0.0

    def prefix_cost(self) -> dict:
        return {
            "penalty": sum(f["penalty"] for f in self._stack),
            "running": sum(f["running"] for f in self._stack),
            "rough": sum(f["rough"] for f in self._stack),
        }

    def state_at_depth(self) -> tuple[float, np.ndarray, ACAlphaPath]:
        """(time, state, extended control path) after the pushed blocks."""
        grid = self.problem.grid
        j = self.blocks[self.depth - 1][1] if self.depth else self.r_index
        ext = ACAlphaPath(
            self.problem.alpha,
            self.base.copy(),
            SampledPath(grid, np.vstack([self.u, self.u[-1:]])),
        )
        return grid.time(j), self._trace[j].copy(), ext

    def total(self) -> tuple[float, dict]:
        if self.depth != len(self.blocks):
            raise ValueError("terminal cost needs every decision block chosen")
        prob = self.problem
        T = prob.grid.T
        nu_T = self._nu_at(T, prob.grid.n)
        pieces = self.prefix_cost()
        pieces["terminal"] = float(prob.g(self._trace[-1], nu_T))
        value = pieces["penalty"] + pieces["running"] + pieces["rough"] + pieces["terminal"]
        return value, pieces


def cost_functional(
    problem: ControlProblem,
    r: float,
    x: np.ndarray,
    gamma: ACAlphaPath,
    u_values: Sequence[float],
) -> tuple[float, dict]:
    """Cost of one pseudo-control sequence (one value per decision block)."""
    ev = CostEvaluator(problem, r, x, gamma)
    if len(u_values) != len(ev.blocks):
        raise ValueError(f"need {len(ev.blocks)} block values, got {len(u_values)}")
    for uv in u_values:
        ev.push(uv)
    return ev.total()


def _stage_minima(problem: ControlProblem, blocks, lattice) -> list[float] | None:
    if problem.stage_lower_bound is None:
        return None
    return [
        min(problem.stage_lower_bound(k, float(z)) for z in lattice)
        for k in range(len(blocks))
    ]


def value_function(
    problem: ControlProblem,
    r: float,
    x: np.ndarray,
    gamma: ACAlphaPath,
    max_steps: int = 6,
    max_lattice: int = 9,
    prune: bool = True,
) -> ValueEstimate:
    """Exact minimum of the cost over all lattice sequences.

    Depth-first enumeration; a branch is cut only when a sound lower bound
    on every completion exceeds the incumbent.  Raising the caps is the
    caller's explicit opt-in, never silent.
    """
    lattice = problem.lattice
    m = problem.decision_steps
    if m > max_steps:
        raise ValueError(f"{m} decision steps exceed the configured cap {max_steps}")
    if lattice.size > max_lattice:
        raise ValueError(f"lattice size {lattice.size} exceeds the configured cap {max_lattice}")

    ev = CostEvaluator(problem, r, x, gamma)
    blocks = ev.blocks
    if not blocks:
        nu_T = gamma.value(problem.grid.n)
        val = float(problem.g(np.atleast_1d(np.asarray(x, float)), nu_T))
        dec = {"penalty": 0.0, "running": 0.0, "rough": 0.0, "terminal": val}
        return ValueEstimate(val, (), dec, {"evaluated": 0, "pruned": 0})

    stage_min = _stage_minima(problem, blocks, lattice)
    tail_const = -math.inf
    if problem.terminal_lower_bound is not None:
        tail_const = float(problem.terminal_lower_bound(problem, x, gamma, r))

    best = {
        "value": math.inf,
        "argmin": None,
        "decomposition": None,
        "evaluated": 0,
        "pruned": 0,
    }
    slack = problem.bound_slack

    def leaf() -> None:
        value, pieces = ev.total()
        best["evaluated"] += 1
        seq = tuple(fr["idx"] for fr in frames)
        if value < best["value"] or (
            value == best["value"] and best["argmin"] is not None and seq < best["argmin"]
        ):
            best["value"] = value
            best["argmin"] = seq
            best["decomposition"] = pieces

    frames: list[dict] = []

    def bound_after_push(depth: int) -> float:
        """Sound lower bound for completions of the current prefix."""
        if stage_min is not None and tail_const > -math.inf:
            pre = ev.prefix_cost()
            rest = sum(stage_min[k] for k in range(depth, m))
            return pre["penalty"] + pre["running"] + pre["rough"] + rest + tail_const - slack
        if tail_const > -math.inf:
            pre = ev.prefix_cost()
            fl = problem.f_smooth_lb * (problem.grid.T - problem.grid.time(blocks[depth][0]))
            return pre["penalty"] + min(fl, 0.0) + tail_const - slack
        return -math.inf

    def order(depth: int) -> list[int]:
        idx = list(range(lattice.size))
        if stage_min is not None:
            idx.sort(key=lambda k: problem.stage_lower_bound(depth, float(lattice[k])))
        return idx

    def dfs(depth: int) -> None:
        if depth == m:
            leaf()
            return
        for k in order(depth):
            ev.push(float(lattice[k]))
            frames.append({"idx": k})
            lb = bound_after_push(depth + 1)
            if prune and lb > best["value"]:
                best["pruned"] += 1
            else:
                dfs(depth + 1)
            frames.pop()
            ev.pop()

    dfs(0)
    return ValueEstimate(
        value=best["value"],
        argmin=best["argmin"],
        decomposition=best["decomposition"],
        diagnostics={"evaluated": best["evaluated"], "pruned": best["pruned"]},
    )


def dpp_check(
    problem: ControlProblem,
    r: float,
    x: np.ndarray,
    gamma: ACAlphaPath,
    t: float,
    max_steps: int = 6,
    max_lattice: int = 9,
) -> dict:
    """Gap between the value and its one-split dynamic-programming rewrite.

    The split time must be a decision-block boundary; the inner value reuses
    the same lattice on the shortened horizon, so exhaustive enumeration
    makes the identity exact up to arithmetic slack.
    """
    grid = problem.grid
    r_index = grid.index_of(r)
    blocks = problem.decision_blocks(r_index)
    t_index = grid.index_of(t)
    boundary = [b for b, (i, j) in enumerate(blocks) if j == t_index]
    if t_index == r_index:
        m1 = 0
    elif boundary:
        m1 = boundary[0] + 1
    else:
        raise ValueError(f"split time {t} is not a decision-block boundary")

    full = value_function(problem, r, x, gamma, max_steps, max_lattice)
    if m1 == 0:
        return {"gap": 0.0, "value": full.value, "split": full.value}
    if m1 == len(blocks):
        return {"gap": 0.0, "value": full.value, "split": full.value}

    import dataclasses

    inner_problem = dataclasses.replace(problem, decision_steps=problem.decision_steps - m1)

    ev = CostEvaluator(problem, r, x, gamma)
    lattice = problem.lattice
    best = math.inf

    def rec(depth: int) -> None:
        nonlocal best
        if depth == m1:
            pre = ev.prefix_cost()
            t_cur, x_cur, ext = ev.state_at_depth()
            inner = value_function(inner_problem, t_cur, x_cur, ext, max_steps, max_lattice)
            cand = pre["penalty"] + pre["running"] + pre["rough"] + inner.value
            best = min(best, cand)
            return
        for z in lattice:
            ev.push(float(z))
            rec(depth + 1)
            ev.pop()

    rec(0)
    return {"gap": abs(full.value - best), "value": full.value, "split": best}


def degeneracy_probe(
    problem: ControlProblem,
    r: float,
    x: np.ndarray,
    gamma: ACAlphaPath,
    ladder: Sequence[float] = (1.0, 2.0, 4.0),
    max_steps: int = 6,
    max_lattice: int = 64,
) -> dict:
    """Value across control-lattice ladders, penalized and unpenalized.

    The unpenalized problem keeps drifting down as the lattice range grows;
    the admissibly penalized one stabilizes.  Returns both value sequences
    and their successive gaps.
    """
    import dataclasses

    def values_for(f0: float) -> list[float]:
        out = []
        for scale in ladder:
            prob = dataclasses.replace(
                problem,
                f0=f0,
                lattice=problem.lattice * scale,
                stage_lower_bound=None,
                terminal_lower_bound=None,
            )
            est = value_function(prob, r, x, gamma, max_steps, max_lattice, prune=False)
            out.append(est.value)
        return out

    unpen = values_for(0.0)
    pen = values_for(problem.f0)
    return {
        "ladder": list(ladder),
        "unpenalized": unpen,
        "penalized": pen,
        "unpenalized_gaps": [a - b for a, b in zip(unpen, unpen[1:])],
        "penalized_gaps": [abs(b - a) for a, b in zip(pen, pen[1:])],
        "threshold": penalty_admissibility_threshold(problem.p, problem.alpha),
    }
