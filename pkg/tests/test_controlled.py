import math

import numpy as np
import pytest

from fracrough.controlled import (
    ControlledPath,
    SmoothFunction,
    compose,
    controlled_path_norm,
    driver_controlled,
    local_integral_estimate,
    remainder_table,
    rough_integral,
    scalar_smooth,
)
from fracrough.gridpath import SampledPath, TimeGrid
from fracrough.roughlift import signature_lift, words_up_to


def smooth_driver(n=128, d=1, seed=None, N=2, p=2.2):
    g = TimeGrid(0.0, 1.0, n)
    if seed is None:
        vals = np.sin(2 * np.pi * g.points) + 0.4 * g.points
        vals = vals[:, None] if d == 1 else np.column_stack([vals] * d)
    else:
        rng = np.random.default_rng(seed)
        vals = np.cumsum(rng.standard_normal((n + 1, d)), axis=0) * 0.08
    return signature_lift(SampledPath(g, vals), N, p=p)


def square_fn():
    return scalar_smooth(
        lambda x, g: x * x,
        lambda x, g: 2 * x,
        lambda x, g: 2.0,
        lambda x, g: 0.0,
        out="vector",
        name="square",
    )


def test_smooth_function_validation_catches_bad_derivative():
    good = square_fn()
    good.validate([(np.array([0.3]), None), (np.array([-1.2]), None)])
    bad = scalar_smooth(
        lambda x, g: x * x,
        lambda x, g: 3 * x,  # wrong slope
        out="vector",
        name="liar",
    )
    with pytest.raises(ValueError):
        bad.validate([(np.array([0.5]), None)])


def test_compose_identity_returns_components():
    z = smooth_driver(n=16)
    X = driver_controlled(z)
    ident = SmoothFunction(
        value=lambda x, g: np.asarray(x, float),
        x_derivs=(lambda x, g: np.eye(1), lambda x, g: np.zeros((1, 1, 1))),
        out_shape=(1,),
        state_dim=1,
        name="id",
    )
    C = compose(ident, X)
    for w, arr in C.components.items():
        assert np.allclose(arr, X.components[w], atol=1e-14)


def test_compose_linear_scales_components():
    z = smooth_driver(n=16)
    X = driver_controlled(z)
    A = 2.5
    lin = scalar_smooth(lambda x, g: A * x, lambda x, g: A, lambda x, g: 0.0, out="vector")
    C = compose(lin, X)
    for w in C.components:
        assert np.allclose(C.components[w], A * X.components[w], atol=1e-14)


def test_compose_square_symbolic_expansion():
    # phi(x) = x^2 at N=2: first-level component must be 2 X_t Xbar_t
    z = smooth_driver(n=32)
    X = driver_controlled(z)
    C = compose(square_fn(), X)
    xs = X.components[()][:, 0]
    assert np.allclose(C.components[()][:, 0], xs**2, atol=1e-14)
    assert np.allclose(C.components[(1,)][:, 0], 2 * xs * X.components[(1,)][:, 0], atol=1e-14)


def test_compose_square_level3_expansion():
    # N=3, d=1: component for (1,1) is phi' Xbar_(1,1) + phi'' Xbar_(1) Xbar_(1);
    # for phi = x^2 on the driver itself the symbolic expansion gives
    # Y_t - Y_s = 2 zeta_s zeta^(1) + 2 zeta^(1,1), so the component is 2.
    z = smooth_driver(n=16, N=3, p=3.1)
    X = driver_controlled(z)
    C = compose(square_fn(), X)
    xs = X.components[()][:, 0]
    x1 = X.components[(1,)][:, 0]
    x11 = X.components[(1, 1)][:, 0]
    want = 2 * xs * x11 + 2.0 * x1 * x1
    assert np.allclose(C.components[(1, 1)][:, 0], want, atol=1e-13)
    assert np.allclose(C.components[(1, 1)][:, 0], 2.0, atol=1e-13)


def test_compose_remainder_order_improves_with_level():
    # empirical remainder order: log-log slope of max |R^w| vs h at least
    # (N - |w|)/p minus slack
    z = smooth_driver(n=256)
    X = driver_controlled(z)
    C = compose(square_fn(), X)
    p = z.p
    for w, want in (((), 2 / p), ((1,), 1 / p)):
        hs, ms = [], []
        for gap in (2, 4, 8, 16, 32):
            m = max(
                float(np.linalg.norm(C.remainder(w, i, i + gap)))
                for i in range(0, 256 - gap, gap)
            )
            if m > 0:
                hs.append(gap / 256)
                ms.append(m)
        slope = np.polyfit(np.log(hs), np.log(ms), 1)[0]
        assert slope >= want - 0.2


def test_rough_integral_constant_integrand():
    z = smooth_driver(n=64)
    n = z.grid.n
    comps = {(): np.full((n + 1, 1), 3.0)}
    for w in words_up_to(1, z.N - 1):
        comps[w] = np.zeros((n + 1, 1))
    Y = ControlledPath(z, comps, (1,))
    res = rough_integral(Y)
    want = 3.0 * z.increment(0, n, (1,))
    assert res.value == pytest.approx(want, abs=1e-12)


def test_integral_of_driver_against_itself():
    z = smooth_driver(n=128)
    Y = driver_controlled(z)
    res = rough_integral(Y)
    tr = z.trace().values[:, 0]
    assert res.value == pytest.approx((tr[-1] ** 2 - tr[0] ** 2) / 2, abs=1e-10)


def test_rough_integral_matches_riemann_stieltjes():
    # smooth driver: error vs trapezoid oracle on a 2x finer grid -> order >= 1
    errs = []
    ns = (64, 128, 256)
    for n in ns:
        g = TimeGrid(0.0, 1.0, n)
        eta = SampledPath(g, np.sin(2 * np.pi * g.points) + g.points)
        z = signature_lift(eta, 2, p=2.2)
        X = driver_controlled(z)
        C = compose(square_fn(), X)  # integrand x^2 against dzeta
        comps = {w: arr.copy() for w, arr in C.components.items()}
        Y = ControlledPath(z, comps, (1,))
        got = float(np.asarray(rough_integral(Y).value))
        # trapezoid on 2x finer sample of the true integrand
        gf = TimeGrid(0.0, 1.0, 2 * n)
        ef = np.sin(2 * np.pi * gf.points) + gf.points
        integrand = ef**2
        deta = np.diff(ef)
        want = float(np.sum(0.5 * (integrand[:-1] + integrand[1:]) * deta))
        errs.append(abs(got - want))
    order = np.polyfit(np.log(1.0 / np.array(ns)), np.log(np.maximum(errs, 1e-16)), 1)[0]
    assert order >= 1.0
    # exact closed form int phi(eta) deta = eta^3/3 evaluated at the ends
    assert errs[-1] < 1e-3


def test_rough_integral_additivity():
    z = smooth_driver(n=64, seed=5)
    Y = driver_controlled(z)
    full = float(np.asarray(rough_integral(Y, window=(0, 64)).value))
    a = float(np.asarray(rough_integral(Y, window=(0, 29)).value))
    b = float(np.asarray(rough_integral(Y, window=(29, 64)).value))
    assert full == pytest.approx(a + b, abs=1e-10)


def test_integration_by_parts_geometric():
    # d=1, N=2: int X dzeta + int zeta dX = X zeta |_s^t for X = zeta
    z = smooth_driver(n=128, seed=7)
    Y = driver_controlled(z)
    tr = z.trace().values[:, 0]
    both = 2.0 * float(np.asarray(rough_integral(Y).value))
    assert both == pytest.approx(tr[-1] ** 2 - tr[0] ** 2, abs=1e-10)


def test_compose_trace_exact():
    z = smooth_driver(n=32, seed=3)
    X = driver_controlled(z)
    g = SampledPath(z.grid, np.cos(z.grid.points))
    phi = scalar_smooth(
        lambda x, gg: math.sin(x) + gg[0],
        lambda x, gg: math.cos(x),
        lambda x, gg: -math.sin(x),
        out="vector",
    )
    C = compose(phi, X, g)
    xs = X.components[()][:, 0]
    want = np.sin(xs) + g.values[:, 0]
    assert np.array_equal(C.components[()][:, 0], want)


def test_remainder_table_trivial_cases():
    z = smooth_driver(n=32)
    n = z.grid.n
    comps = {(): np.full((n + 1, 1), 2.0)}
    for w in words_up_to(1, z.N - 1):
        comps[w] = np.zeros((n + 1, 1))
    Y = ControlledPath(z, comps, (1,))
    table = remainder_table(Y)
    for w, v in table["words"].items():
        assert v == pytest.approx(0.0, abs=1e-14)

    X = driver_controlled(z)
    tx = remainder_table(X, (0, 16))
    # driver controlled by itself: trace remainder reproduces level-2 order
    assert tx["words"][()] >= 0.0
    assert tx["words"][(1,)] == pytest.approx(0.0, abs=1e-13)


def test_local_integral_estimate_ratio_bounded():
    z = smooth_driver(n=64, seed=9)
    X = driver_controlled(z)
    C = compose(square_fn(), X)
    Y = ControlledPath(z, {w: a.copy() for w, a in C.components.items()}, (1,))
    ratios = []
    for (i, j) in ((0, 8), (8, 24), (24, 64), (0, 32)):
        lhs, rhs = local_integral_estimate(Y, z, i, j)
        if rhs > 1e-15:
            ratios.append(lhs / rhs)
    assert ratios and max(ratios) < 10.0


def test_controlled_norm_positive_and_monotone_window():
    z = smooth_driver(n=64, seed=11)
    X = driver_controlled(z)
    inner = controlled_path_norm(X, (8, 24))
    outer = controlled_path_norm(X, (8, 40))
    assert 0 <= inner <= outer + 1e-12
