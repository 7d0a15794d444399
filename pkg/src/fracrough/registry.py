"""Built-in problems the CLI and the test battery run.

The centerpiece is the closed-form worked example: driftless scalar
dynamics whose rough cost exactly offsets the terminal state cost, a pure
power penalty, and a terminal reward linear in the control path.  Its value
functional is known in closed form and does not depend on the driver at
all, which is what the convergence ladder checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import ControlProblem
from .controlled import SmoothFunction, scalar_smooth
from .fraccalc import ACAlphaPath
from .gridpath import SampledPath, TimeGrid
from .roughlift import RoughPath, signature_lift

__all__ = [
    "example_penalty_constant",
    "example_problem",
    "example_closed_form",
    "example_optimal_feedback",
    "degeneracy_problem",
    "generic_problem",
    "driver_path",
    "DRIVERS",
    "PROBLEMS",
]


def example_penalty_constant(q: int) -> float:
    """The penalty weight that normalizes the Hamiltonian to |phi|^(2q/(2q-1))."""
    tq = 2.0 * q
    return ((1.0 / tq) ** (1.0 / (tq - 1.0)) - (1.0 / tq) ** (tq / (tq - 1.0))) ** (tq - 1.0)


def _lam_value(gv: float) -> float:
    return math.cos(gv) + 2.0


def example_lam() -> SmoothFunction:
    zero = lambda x, g: 0.0
    return scalar_smooth(
        lambda x, g: _lam_value(g[0]),
        zero,
        zero,
        zero,
        zero,
        out="matrix",
        bound=3.0,
        name="lam_example",
    )


def example_psi() -> SmoothFunction:
    """psi(x, g) = -2 lam(g) x exp(-x^2), the exact offset of the terminal cost."""

    def w0(x):
        return x * math.exp(-(x**2))

    def w1(x):
        return (1.0 - 2.0 * x * x) * math.exp(-(x**2))

    def w2(x):
        return (4.0 * x**3 - 6.0 * x) * math.exp(-(x**2))

    def w3(x):
        return (-8.0 * x**4 + 24.0 * x * x - 6.0) * math.exp(-(x**2))

    return scalar_smooth(
        lambda x, g: -2.0 * _lam_value(g[0]) * w0(x),
        lambda x, g: -2.0 * _lam_value(g[0]) * w1(x),
        lambda x, g: -2.0 * _lam_value(g[0]) * w2(x),
        lambda x, g: -2.0 * _lam_value(g[0]) * w3(x),
        out="vector",
        bound=6.0,
        name="psi_example",
    )


DRIVERS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": lambda t: np.sin(2.0 * np.pi * t) + 0.5 * t,
    "line": lambda t: t.copy(),
    "zigzag": lambda t: np.abs(((2.0 * t) % 2.0) - 1.0) + 0.3 * t,
    "flat": lambda t: np.zeros_like(t),
}


def driver_path(name: str, grid: TimeGrid) -> SampledPath:
    try:
        fn = DRIVERS[name]
    except KeyError:
        raise ValueError(f"unknown driver '{name}', have {sorted(DRIVERS)}") from None
    return SampledPath(grid, fn(grid.points))


@dataclass(frozen=True)
class ExampleSpec:
    """Frozen parameters of the worked example instance."""

    T: float = 1.0
    n: int = 256
    alpha: float = 0.92
    p: float = 2.5
    q: int = 5
    m: int = 6
    u_max: float = 2.0
    lattice_size: int = 21
    driver: str = "sin"

    @property
    def q_exp(self) -> float:
        return 2.0 * self.q

    @property
    def beta(self) -> float:
        return self.q_exp * (1.0 - self.alpha) / (self.q_exp - 1.0)

    @property
    def c(self) -> float:
        return example_penalty_constant(self.q)


def _kernel_block_mass(spec: ExampleSpec, i: int, j: int, grid: TimeGrid) -> float:
    """int over [t_i, t_j] of (T - s)^(alpha-1) ds, exactly."""
    a = spec.alpha
    return ((spec.T - grid.time(i)) ** a - (spec.T - grid.time(j)) ** a) / a


def example_problem(spec: ExampleSpec | None = None) -> ControlProblem:
    spec = spec or ExampleSpec()
    grid = TimeGrid(0.0, spec.T, spec.n)
    eta = driver_path(spec.driver, grid)
    zeta = signature_lift(eta, N=math.floor(spec.p), p=spec.p)
    lattice = np.linspace(0.0, spec.u_max, spec.lattice_size)
    gam = math.gamma(spec.alpha)
    c = spec.c

    def stage_lb(i: int, j: int, z: float) -> float:
        # exact per-block cost share: penalty minus the terminal kernel reward
        mass = _kernel_block_mass(spec, i, j, grid)
        dt = grid.time(j) - grid.time(i)
        return c * abs(z) ** spec.q_exp * dt - z * mass

    def terminal_lb(problem: ControlProblem, x, gamma: ACAlphaPath, rr: float) -> float:
        # floor for the cost minus all stage shares: the rough integral offsets
        # the terminal state cost up to discretization noise, leaving
        # -e^{-x^2} - Gamma(alpha) a - history reward
        i = problem.grid.index_of(rr)
        hist = float(
            sum(
                gamma.u.values[k, 0] * _kernel_block_mass(spec, k, k + 1, problem.grid)
                for k in range(i)
            )
        )
        xs = float(np.atleast_1d(np.asarray(x, float))[0])
        return -math.exp(-(xs**2)) - gam * float(gamma.a[0]) - hist - 1e-4

    problem = ControlProblem(
        alpha=spec.alpha,
        driver=zeta,
        lam=example_lam(),
        g=lambda x, g_T: float(-math.exp(-float(x[0]) ** 2) - gam * float(g_T[0])),
        f0=c,
        q_exp=spec.q_exp,
        lattice=lattice,
        decision_steps=spec.m,
        psi=example_psi(),
        stage_lower_bound=stage_lb,
        terminal_lower_bound=terminal_lb,
        bound_slack=1e-4,
        name="example",
    )
    return problem


def example_closed_form(spec: ExampleSpec, r: float, x: float, gamma: ACAlphaPath) -> float:
    """The exact value: -e^{-x^2} minus the path reward minus the feedback term.

    The reward term integrates the stored pseudo-control against the
    terminal kernel over the history [0, r] (plus the base-value constant);
    the last term is the optimized penalty balance, whose constant the
    penalty weight normalizes to one.
    """
    grid = gamma.grid
    i = grid.index_of(r)
    hist = 0.0
    for k in range(i):
        hist += float(gamma.u.values[k, 0]) * _kernel_block_mass(spec, k, k + 1, grid)
    b = spec.beta
    tail = (spec.T - r) ** (1.0 - b) / (1.0 - b)
    return -math.exp(-(x**2)) - math.gamma(spec.alpha) * float(gamma.a[0]) - hist - tail


def example_optimal_feedback(spec: ExampleSpec, s: float) -> float:
    """Continuous-time optimal pseudo-control at time s."""
    k = (spec.T - s) ** (spec.alpha - 1.0)
    return (k / (spec.q_exp * spec.c)) ** (1.0 / (spec.q_exp - 1.0))


def zero_lam() -> SmoothFunction:
    zero = lambda x, g: 0.0
    return scalar_smooth(zero, zero, zero, zero, zero, out="matrix", bound=1.0, name="lam_zero")


def degeneracy_problem(
    n: int = 60,
    T: float = 1.0,
    alpha: float = 0.92,
    p: float = 2.5,
    q_exp: float = 10.0,
    f0: float = 0.05,
    m: int = 3,
    lattice_max: float = 1.0,
    lattice_size: int = 4,
) -> ControlProblem:
    """Linear reward for a large control path, power penalty against it.

    psi(x, g) = -g against an increasing driver rewards pushing the control
    path up; with the penalty off the lattice ladder keeps paying, with an
    admissible penalty it settles.
    """
    grid = TimeGrid(0.0, T, n)
    eta = driver_path("line", grid)
    zeta = signature_lift(eta, N=math.floor(p), p=p)
    zero = lambda x, g: 0.0
    psi = scalar_smooth(
        lambda x, g: -float(g[0]),
        zero,
        zero,
        zero,
        out="vector",
        bound=5.0,
        name="psi_linear",
    )
    return ControlProblem(
        alpha=alpha,
        driver=zeta,
        lam=zero_lam(),
        g=lambda x, g_T: 0.0,
        f0=f0,
        q_exp=q_exp,
        lattice=np.linspace(0.0, lattice_max, lattice_size),
        decision_steps=m,
        psi=psi,
        name="degeneracy",
    )


def generic_problem(
    seed: int = 0,
    n: int = 32,
    T: float = 1.0,
    alpha: float = 0.8,
    p: float = 2.2,
    q_exp: float = 8.0,
    f0: float = 0.2,
    m: int = 2,
    lattice: np.ndarray | None = None,
    driver: str = "sin",
) -> ControlProblem:
    """A small coupled instance for DPP and regression tests."""
    rng = np.random.default_rng(seed)
    grid = TimeGrid(0.0, T, n)
    eta = driver_path(driver, grid)
    zeta = signature_lift(eta, N=math.floor(p), p=p)
    a1, a2 = float(rng.uniform(0.2, 0.6)), float(rng.uniform(0.1, 0.4))

    lam = scalar_smooth(
        lambda x, g: a1 * math.sin(x) + 1.0 + a2 * g[0],
        lambda x, g: a1 * math.cos(x),
        lambda x, g: -a1 * math.sin(x),
        lambda x, g: -a1 * math.cos(x),
        out="matrix",
        bound=2.0,
        name="lam_generic",
    )
    zero = lambda x, g: 0.0
    psi = scalar_smooth(
        lambda x, g: 0.3 * math.cos(x) + 0.2 * g[0],
        lambda x, g: -0.3 * math.sin(x),
        lambda x, g: -0.3 * math.cos(x),
        zero,
        out="vector",
        bound=1.0,
        name="psi_generic",
    )
    return ControlProblem(
        alpha=alpha,
        driver=zeta,
        lam=lam,
        g=lambda x, g_T: float(x[0] ** 2 + 0.1 * g_T[0] ** 2),
        f0=f0,
        q_exp=q_exp,
        lattice=lattice if lattice is not None else np.array([-0.5, 0.0, 0.5]),
        decision_steps=m,
        psi=psi,
        f_smooth=lambda x, g, u: 0.1 * float(x[0] ** 2),
        f_smooth_lb=0.0,
        name=f"generic-{seed}",
    )


def history_path(alpha: float, grid: TimeGrid, kind: str = "ramp", scale: float = 0.5, a: float = 0.0) -> ACAlphaPath:
    """Convenient fractional histories for probes."""
    t = grid.points
    if kind == "ramp":
        u = scale * t
    elif kind == "const":
        u = np.full_like(t, scale)
    elif kind == "zero":
        u = np.zeros_like(t)
    elif kind == "wave":
        u = scale * np.sin(3.0 * t)
    else:
        raise ValueError(f"unknown history kind '{kind}'")
    return ACAlphaPath(alpha, np.array([a]), SampledPath(grid, u))


PROBLEMS: dict[str, Callable[..., ControlProblem]] = {
    "example": lambda **kw: example_problem(ExampleSpec(**{k: v for k, v in kw.items() if k in ExampleSpec.__dataclass_fields__}), r=kw.get("r", 0.5)),
    "degeneracy": degeneracy_problem,
    "generic": generic_problem,
}
