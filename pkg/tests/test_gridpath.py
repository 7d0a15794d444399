import itertools

import numpy as np
import pytest

from fracrough.gridpath import (
    SampledPath,
    TimeGrid,
    default_control,
    holder_norm,
    p_variation,
    partition_pvar_inequality_check,
)


def brute_force_pvar(values, p, i, j):
    """Enumerate every sub-partition of grid points between i and j."""
    interior = list(range(i + 1, j))
    best = 0.0
    for r in range(len(interior) + 1):
        for combo in itertools.combinations(interior, r):
            pts = [i, *combo, j]
            s = sum(
                np.linalg.norm(values[pts[k + 1]] - values[pts[k]]) ** p
                for k in range(len(pts) - 1)
            )
            best = max(best, s)
    return best ** (1.0 / p)


def random_path(rng, n, dim=1):
    grid = TimeGrid(0.0, 1.0, n)
    return SampledPath(grid, rng.standard_normal((n + 1, dim)))


def test_monotone_path_p1_is_total_variation():
    grid = TimeGrid(0.0, 1.0, 6)
    vals = np.array([0.0, 0.5, 0.7, 1.1, 1.15, 2.0, 2.5])
    path = SampledPath(grid, vals)
    assert p_variation(path, 1.0) == pytest.approx(2.5, abs=1e-14)


def test_linear_path_p2_coarsest_partition_dominates():
    # frozen from the brute force over all 2^4 sub-partitions of 5 points
    path = SampledPath(TimeGrid(0.0, 1.0, 4), np.linspace(0.0, 1.0, 5))
    assert p_variation(path, 2.0) == pytest.approx(1.0, abs=1e-14)
    assert brute_force_pvar(path.values, 2.0, 0, 4) == pytest.approx(1.0, abs=1e-14)


def test_constant_path_any_p_is_zero():
    path = SampledPath(TimeGrid(0.0, 1.0, 5), np.full(6, 3.3))
    for p in (1.0, 1.7, 2.0, 3.5):
        assert p_variation(path, p) == 0.0


def test_p_below_one_rejected():
    path = SampledPath(TimeGrid(0.0, 1.0, 2), np.zeros(3))
    with pytest.raises(ValueError):
        p_variation(path, 0.9)


def test_pvar_matches_exhaustive_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        dim = int(rng.integers(1, 3))
        p = float(rng.uniform(1.0, 4.0))
        path = random_path(rng, n, dim)
        dp = p_variation(path, p)
        brute = brute_force_pvar(path.values, p, 0, n)
        assert dp == pytest.approx(brute, rel=1e-12, abs=1e-12)


def test_pvar_monotone_in_window():
    rng = np.random.default_rng(3)
    for _ in range(50):
        path = random_path(rng, 10, 2)
        p = float(rng.uniform(1.0, 3.0))
        inner = p_variation(path, p, (2, 7))
        outer = p_variation(path, p, (1, 9))
        assert inner <= outer + 1e-12


def test_holder_norm_cases():
    const = SampledPath(TimeGrid(0.0, 1.0, 8), np.full(9, 1.2))
    assert holder_norm(const, 0.3) == 0.0

    ident = SampledPath(TimeGrid(0.0, 1.0, 10), np.linspace(0.0, 1.0, 11))
    assert holder_norm(ident, 1.0) == pytest.approx(1.0, abs=1e-14)

    # sqrt path on a dyadic grid: sup attained at s=0, value 1
    grid = TimeGrid(0.0, 1.0, 16)
    sq = SampledPath(grid, np.sqrt(grid.points))
    assert holder_norm(sq, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_holder_bounds_max_increment():
    rng = np.random.default_rng(11)
    for _ in range(20):
        path = random_path(rng, 12)
        alpha = float(rng.uniform(0.2, 1.0))
        span = path.grid.T - path.grid.t0
        max_inc = max(
            np.linalg.norm(path.values[j] - path.values[0]) for j in range(13)
        )
        assert holder_norm(path, alpha) * span**alpha >= max_inc - 1e-12


def test_partition_inequality_random():
    rng = np.random.default_rng(19)
    for _ in range(1000):
        n = int(rng.integers(4, 20))
        path = random_path(rng, n, int(rng.integers(1, 3)))
        p = float(rng.uniform(1.0, 4.0))
        k = int(rng.integers(1, min(4, n - 1)))
        cuts = sorted(rng.choice(np.arange(1, n), size=k, replace=False).tolist())
        assert partition_pvar_inequality_check(path, p, cuts)


def test_partition_inequality_single_interval_equality():
    path = SampledPath(TimeGrid(0.0, 1.0, 5), np.array([0, 1, 0.5, 2, 1.5, 3.0]))
    idx = [0, path.grid.n]
    lhs = p_variation(path, 2.0)
    rhs = 1 * (p_variation(path, 2.0, (0, 5)) ** 2.0) ** 0.5
    assert lhs == pytest.approx(rhs, rel=1e-14)
    assert partition_pvar_inequality_check(path, 2.0, [])


def test_partition_inequality_linear_dyadic_strict():
    path = SampledPath(TimeGrid(0.0, 1.0, 8), np.linspace(0.0, 1.0, 9))
    idx = [0, 2, 4, 6, 8]
    lhs = p_variation(path, 2.0)
    pieces = sum(p_variation(path, 2.0, (idx[k], idx[k + 1])) ** 2 for k in range(4))
    rhs = 4 * pieces**0.5
    assert lhs < rhs - 1e-6
    assert partition_pvar_inequality_check(path, 2.0, [2, 4, 6])


def test_default_control_axioms():
    rng = np.random.default_rng(5)
    path = random_path(rng, 16, 2)
    omega = default_control(path, 2.0)
    omega.spot_check(path.grid, rng)


def test_grid_index_and_subgrid():
    grid = TimeGrid(0.0, 2.0, 8)
    assert grid.index_of(0.75) == 3
    with pytest.raises(ValueError):
        grid.index_of(0.7)
    sub = grid.subgrid(2, 6)
    assert sub.t0 == pytest.approx(0.5)
    assert sub.n == 4


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(23)
    path = random_path(rng, 9, 3)
    f = tmp_path / "path.csv"
    path.to_csv(str(f))
    back = SampledPath.from_csv(str(f))
    assert np.array_equal(back.values, path.values)
    assert back.grid.n == path.grid.n


def test_invalid_grids_rejected():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        SampledPath(TimeGrid(0.0, 1.0, 3), np.zeros(3))
    with pytest.raises(ValueError):
        SampledPath(TimeGrid(0.0, 1.0, 2), np.array([0.0, np.inf, 1.0]))
