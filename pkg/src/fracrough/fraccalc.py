"""Riemann-Liouville operators and the fractional control-path class.

Pseudo-controls are piecewise constant on grid cells, so every kernel
integral ``int u_s (t-s)^(a-1) ds`` is evaluated in closed form per cell:
the integrable singularity never meets a quadrature rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridpath import SampledPath, TimeGrid, holder_norm, p_variation

__all__ = [
    "ACAlphaPath",
    "MemoryExtension",
    "rl_integral",
    "caputo_verification",
    "verification_discrepancy",
    "memory_tail",
    "nu_extend",
    "frac_variation_bound",
    "holder_embedding_ratio",
]


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"fractional order must lie in (0,1), got {alpha}")


def _cell_weights(cell_left: np.ndarray, cell_right: np.ndarray, t: float, alpha: float) -> np.ndarray:
    """Exact kernel mass of each cell: int_cell (t-s)^(alpha-1) ds / Gamma(alpha)."""
    a = np.minimum(cell_left, t)
    b = np.minimum(cell_right, t)
    return ((t - a) ** alpha - (t - b) ** alpha) / (alpha * math.gamma(alpha))


def rl_integral(u: SampledPath, alpha: float, r: float, t: float) -> np.ndarray:
    """Riemann-Liouville integral of order ``alpha`` with base point ``r``.

    ``u`` is read as piecewise constant on grid cells (left-endpoint values);
    only cells inside ``[r, t]`` contribute.  ``r`` and ``t`` must be grid
    points with ``r <= t``.
    """
    _check_alpha(alpha)
    grid = u.grid
    i, j = grid.index_of(r), grid.index_of(t)
    if j < i:
        raise ValueError(f"need r <= t, got ({r}, {t})")
    if j == i:
        return np.zeros(u.dim)
    pts = grid.points
    w = _cell_weights(pts[i:j], pts[i + 1 : j + 1], t, alpha)
    return w @ u.values[i:j]


@dataclass(frozen=True)
class ACAlphaPath:
    """Path ``gamma_t = a + I^alpha u(t)`` driven by a bounded pseudo-control.

    ``u`` lives on the same grid as the path and is piecewise constant on
    cells.  The representation is the source of truth: the stored ``u`` *is*
    the fractional derivative of ``gamma - a``.
    """

    alpha: float
    a: np.ndarray
    u: SampledPath

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.shape != (self.u.dim,):
            raise ValueError(f"base value has shape {a.shape}, pseudo-control dim {self.u.dim}")
        object.__setattr__(self, "a", a)

    @property
    def grid(self) -> TimeGrid:
        return self.u.grid

    @property
    def dim(self) -> int:
        return self.u.dim

    def value(self, i: int) -> np.ndarray:
        t = self.grid.time(i)
        return self.a + rl_integral(self.u, self.alpha, self.grid.t0, t)

    def reconstruct(self) -> SampledPath:
        """Evaluate the path at every grid point."""
        grid = self.grid
        pts = grid.points
        n = grid.n
        vals = np.empty((n + 1, self.dim))
        vals[0] = self.a
        for j in range(1, n + 1):
            w = _cell_weights(pts[:j], pts[1 : j + 1], pts[j], self.alpha)
            vals[j] = self.a + w @ self.u.values[:j]
        return SampledPath(grid, vals)

    def caputo(self, i: int) -> np.ndarray:
        """Stored-mode fractional derivative at grid point ``i``: the cell value."""
        return self.u.values[min(i, self.grid.n - 1)]


def caputo_verification(gamma: SampledPath, base: np.ndarray, alpha: float) -> np.ndarray:
    """Fractional derivative of ``gamma - base`` recovered from samples alone.

    Pushes the one-sided grid differences of the samples through the exact
    ``I^(1-alpha)`` cell weights (differentiation of the fractional integral
    under the integral sign).  The leading ``t^alpha`` layer at the base
    point, which no fixed-stencil scheme resolves on a uniform grid, is
    subtracted first and differentiated in closed form.  Independent of any
    stored pseudo-control; the returned values approximate the derivative
    from the left of each grid point.
    """
    _check_alpha(alpha)
    grid = gamma.grid
    n, h = grid.n, grid.h
    pts = grid.points
    dev = gamma.values - np.atleast_1d(np.asarray(base, float))[None, :]

    # singular layer c * t^alpha pinned to the first sample; D^alpha of it is flat
    layer = dev[1][None, :] * ((pts / h) ** alpha)[:, None]
    d_layer = dev[1] * math.gamma(1.0 + alpha) / h**alpha
    resid = dev - layer
    slope = (resid[1:] - resid[:-1]) / h

    c = math.gamma(2.0 - alpha)
    D = np.zeros_like(dev)
    D[0] = d_layer
    for j in range(1, n + 1):
        t = pts[j]
        w = ((t - pts[:j]) ** (1.0 - alpha) - (t - pts[1 : j + 1]) ** (1.0 - alpha)) / c
        D[j] = d_layer + w @ slope[:j]
    return D


def verification_discrepancy(path: ACAlphaPath) -> np.ndarray:
    """Pointwise gap between the verification-mode derivative and stored ``u``.

    The verification derivative at a grid point is one-sided from the left,
    so the stored reference at point ``j`` is the cell value ``u_{j-1}``.
    Entry 0 compares against ``u_0``.
    """
    gamma = path.reconstruct()
    D = caputo_verification(gamma, path.a, path.alpha)
    u = path.u.values
    n = path.grid.n
    ref = np.vstack([u[:1], u[:n]])
    return D - ref


def memory_tail(path: ACAlphaPath, r: float, t: float) -> np.ndarray:
    """The functional ``a(t | r, gamma)``: history forecast with the control off.

    For ``t <= r`` this is just ``gamma_t``; beyond ``r`` it is the base value
    plus the kernel integral of the stored pseudo-control over ``[0, r]``.
    """
    grid = path.grid
    i = grid.index_of(r)
    if t <= r:
        return path.value(grid.index_of(t))
    pts = grid.points
    w = _cell_weights(pts[:i], pts[1 : i + 1], t, path.alpha)
    return path.a + w @ path.u.values[:i]


@dataclass(frozen=True)
class MemoryExtension:
    """Extension of a path beyond ``r`` by a fresh pseudo-control tail.

    The integral equation defining the extension is exactly the fractional
    reconstruction with the concatenated pseudo-control, so the extension is
    stored as an :class:`ACAlphaPath` sharing the master grid.
    """

    r: float
    z: float
    source: ACAlphaPath
    extended: ACAlphaPath

    def value(self, i: int) -> np.ndarray:
        return self.extended.value(i)

    def path(self) -> SampledPath:
        return self.extended.reconstruct()


def nu_extend(path: ACAlphaPath, r: float, z: float, tail_u: SampledPath) -> MemoryExtension:
    """Extend ``path`` past ``r`` with pseudo-control ``tail_u`` up to ``z``.

    ``tail_u`` must live on the master grid restricted to ``[r, z]``; its
    cells replace the stored pseudo-control there.  On ``[0, r]`` the
    extension coincides with the source path.
    """
    grid = path.grid
    i, j = grid.index_of(r), grid.index_of(z)
    if j < i:
        raise ValueError(f"need r <= z, got ({r}, {z})")
    tg = tail_u.grid
    if j > i:
        if tg.n != j - i or abs(tg.t0 - r) > 1e-12 or abs(tg.T - z) > 1e-12:
            raise ValueError("tail grid is not the master grid restricted to [r, z]")
        if abs(tg.h - grid.h) > 1e-12 * grid.h:
            raise ValueError("tail grid mesh differs from the master grid")
        if tail_u.dim != path.dim:
            raise ValueError("tail pseudo-control dimension mismatch")
    u_new = path.u.values.copy()
    if j > i:
        u_new[i:j] = tail_u.values[: j - i]
    ext = ACAlphaPath(path.alpha, path.a.copy(), SampledPath(grid, u_new))
    return MemoryExtension(r, z, path, ext)


def frac_variation_bound(
    path: ACAlphaPath, p: float, kappa: float, window: tuple[float, float]
) -> tuple[float, float]:
    """Both sides of the fractional-variation bound, constant left out.

    Returns ``(lhs, bracket)`` where ``lhs`` is the (p/floor(p))-variation of
    the reconstructed path raised to ``p/floor(p)`` over the window, and
    ``bracket`` the structural right-hand side whose fitted multiple must
    dominate.  Admissibility: ``alpha in (floor(p)/p, 1)`` and
    ``1 < kappa <= 1/(1 - alpha + floor(p)/p)``.
    """
    fl = math.floor(p)
    if not path.alpha > fl / p:
        raise ValueError(f"need alpha > floor(p)/p = {fl / p}, got {path.alpha}")
    kap_max = 1.0 / (1.0 - path.alpha + fl / p)
    if not 1 < kappa <= kap_max + 1e-12:
        raise ValueError(f"kappa must lie in (1, {kap_max}], got {kappa}")
    grid = path.grid
    i, j = grid.index_of(window[0]), grid.index_of(window[1])
    gamma = path.reconstruct()
    q = p / fl
    lhs = p_variation(gamma, q, (i, j)) ** q

    conj = kappa / (kappa - 1.0)
    h = grid.h
    umag = np.linalg.norm(path.u.values, axis=1)
    tail = float(np.sum(umag[i:j] ** conj) * h)
    head = float(np.sum(umag[:i] ** conj) * h)
    expo = p * (kappa - 1.0) / (fl * kappa)
    tgap = grid.time(j) - grid.time(i)
    bracket = (tail**expo + head**expo) * tgap ** (q * (path.alpha - 1.0 + 1.0 / kappa))
    return lhs, bracket


def holder_embedding_ratio(path: ACAlphaPath) -> float:
    """||gamma||_(alpha-Hol) / ||u||_inf, the fitted-constant observable."""
    gamma = path.reconstruct()
    un = float(np.max(np.linalg.norm(path.u.values[:-1], axis=1)))
    if un == 0.0:
        return 0.0
    return holder_norm(gamma, path.alpha) / un
