import math

import numpy as np
import pytest

from premreg.errors import DomainError
from premreg.mixture import expected_precision, uniform_psi0
from premreg.models import MixingDensity, ScaleGrid
from premreg.pr import (
    PowerWeights,
    PrConfig,
    exhaustive_permutations,
    fixed_permutations,
    pr_averaged,
    pr_pass,
)


def _config(grid: ScaleGrid, **kwargs) -> PrConfig:
    return PrConfig(grid=grid, psi0=uniform_psi0(grid), **kwargs)


def _direct_pr(residuals, order, grid: ScaleGrid):
    """Plain-loop predictive recursion used as an oracle."""

    u = list(grid.points)
    q = list(grid.quadrature_weights)
    psi = [1.0 / sum(q)] * len(u)
    log_marginal = 0.0
    weights = [0.0] * len(residuals)
    for i, index in enumerate(order, start=1):
        r = residuals[index]
        k = [math.exp(-r * r / (2 * x * x)) / math.sqrt(2 * math.pi * x * x) for x in u]
        f = sum(qj * kj * pj for qj, kj, pj in zip(q, k, psi))
        log_marginal += math.log(f)
        post = [qj * kj * pj / f for qj, kj, pj in zip(q, k, psi)]
        weights[index] = sum(m / (x * x) for m, x in zip(post, u))
        w = 1.0 / (i + 1)
        psi = [(1 - w) * pj + w * kj * pj / f for kj, pj in zip(k, psi)]
        total = sum(qj * pj for qj, pj in zip(q, psi))
        psi = [pj / total for pj in psi]
    return psi, log_marginal, weights


def test_empty_residuals_return_initial_density():
    config = _config(ScaleGrid.uniform(0.5, 1.5, 5))
    psi, log_marginal, weights = pr_pass([], config)
    assert psi is config.psi0
    assert log_marginal == 0.0
    assert weights.size == 0
    assert pr_averaged([], config).log_marginal == 0.0


def test_single_residual_oracle():
    grid = ScaleGrid.uniform(0.5, 1.5, 3)
    config = _config(grid)
    psi, log_marginal, weights = pr_pass([0.2], config)

    expected_psi, expected_log, expected_weights = _direct_pr([0.2], [0], grid)

    assert log_marginal == pytest.approx(expected_log, abs=1e-12)
    np.testing.assert_allclose(psi.values, expected_psi, atol=1e-12)
    np.testing.assert_allclose(weights, expected_weights, atol=1e-12)


def test_small_problems_match_plain_loop():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        size = int(rng.integers(2, 6))
        grid = ScaleGrid.uniform(0.3, 3.0, size)
        residuals = rng.standard_normal(n)
        order = rng.permutation(n)

        psi, log_marginal, weights = pr_pass(residuals, _config(grid), permutation=order)
        expected_psi, expected_log, expected_weights = _direct_pr(list(residuals), list(order), grid)

        assert log_marginal == pytest.approx(expected_log, abs=1e-12)
        np.testing.assert_allclose(psi.values, expected_psi, atol=1e-12)
        np.testing.assert_allclose(weights, expected_weights, atol=1e-12)


def test_weights_are_reported_in_original_order():
    grid = ScaleGrid.uniform(0.3, 3.0, 20)
    config = _config(grid)
    residuals = np.array([0.1, 2.5, -0.7])
    _, _, weights = pr_pass(residuals, config, permutation=[2, 0, 1])
    _, _, expected = _direct_pr(list(residuals), [2, 0, 1], grid)
    np.testing.assert_allclose(weights, expected, atol=1e-12)
    # the first residual processed sees psi0 only
    assert weights[2] == pytest.approx(expected_precision(config.psi0, -0.7), abs=1e-12)


def test_invalid_permutation_rejected():
    config = _config(ScaleGrid.uniform(0.5, 1.5, 5))
    with pytest.raises(DomainError):
        pr_pass([0.1, 0.2], config, permutation=[0, 0])
    with pytest.raises(DomainError):
        pr_pass([0.1, float("nan")], config)


def test_one_permutation_average_equals_single_pass():
    grid = ScaleGrid.uniform(1e-5, 50.0, 100)
    config = _config(grid, n_permutations=1, permutation_seed=4)
    residuals = np.random.default_rng(2).standard_normal(30)
    order = fixed_permutations(4, 30, 1)[0]

    averaged = pr_averaged(residuals, config)
    psi, log_marginal, weights = pr_pass(residuals, config, permutation=order)

    assert averaged.log_marginal == pytest.approx(log_marginal, abs=1e-12)
    np.testing.assert_allclose(averaged.per_obs_weights, weights, atol=1e-12)
    np.testing.assert_allclose(averaged.psi_n.values, psi.values, atol=1e-12)


def test_averaging_is_deterministic():
    grid = ScaleGrid.uniform(1e-5, 50.0, 100)
    config = _config(grid, n_permutations=10, permutation_seed=9)
    residuals = np.random.default_rng(5).standard_t(2, size=40)
    first = pr_averaged(residuals, config)
    second = pr_averaged(residuals, config)
    assert first.log_marginal == second.log_marginal
    assert np.array_equal(first.per_obs_weights, second.per_obs_weights)
    assert np.array_equal(first.per_perm_log_marginals, second.per_perm_log_marginals)


def test_fixed_permutations_are_cached_bijections():
    orders = fixed_permutations(3, 12, 5)
    assert orders.shape == (5, 12)
    for row in orders:
        assert sorted(row) == list(range(12))
    assert fixed_permutations(3, 12, 5) is orders
    assert not np.array_equal(fixed_permutations(4, 12, 5), orders)


def test_equal_residuals_give_equal_permutation_marginals():
    config = _config(ScaleGrid.uniform(1e-5, 50.0, 100), n_permutations=8)
    result = pr_averaged(np.full(15, 0.4), config)
    np.testing.assert_allclose(result.per_perm_log_marginals, result.per_perm_log_marginals[0], atol=1e-12)


def test_exhaustive_average_ignores_input_order():
    config = _config(ScaleGrid.uniform(0.1, 5.0, 30), exhaustive=True)
    residuals = np.array([0.3, -1.2, 2.0])
    first = pr_averaged(residuals, config)
    second = pr_averaged(residuals[[2, 0, 1]], config)
    assert first.per_perm_log_marginals.size == 6
    assert first.log_marginal == pytest.approx(second.log_marginal, abs=1e-12)


def test_exhaustive_limit():
    assert exhaustive_permutations(3).shape == (6, 3)
    with pytest.raises(DomainError):
        exhaustive_permutations(9)


def test_weights_lie_inside_the_precision_range():
    grid = ScaleGrid.uniform(0.2, 10.0, 50)
    config = _config(grid, n_permutations=5)
    residuals = np.concatenate([np.random.default_rng(8).standard_normal(20), [0.0, 80.0]])
    weights = pr_averaged(residuals, config).per_obs_weights
    assert np.all(weights > grid.u_max ** -2)
    assert np.all(weights < grid.u_min ** -2)


def test_expected_precision_spike_and_uniform():
    grid = ScaleGrid.uniform(1.0, 3.0, 21)
    values = np.zeros(grid.size)
    values[10] = 1.0
    spike = MixingDensity.normalized(grid, values)
    assert expected_precision(spike, 0.9) == pytest.approx(0.25, abs=1e-12)

    fine = ScaleGrid.uniform(1.0, 2.0, 2001)
    # int u^-3 du / int u^-1 du over [1, 2]
    assert expected_precision(uniform_psi0(fine), 0.0) == pytest.approx(0.375 / math.log(2.0), rel=1e-6)


def test_large_residuals_get_small_weights():
    psi = uniform_psi0(ScaleGrid.uniform(1e-5, 50.0, 100))
    assert expected_precision(psi, 500.0) < expected_precision(psi, 0.0)


def test_weight_schedules_are_validated():
    with pytest.raises(DomainError):
        PowerWeights(gamma=0.4)
    grid = ScaleGrid.uniform(0.5, 1.5, 5)
    config = _config(grid, weight_schedule=lambda steps: np.ones(len(steps)))
    with pytest.raises(DomainError):
        pr_pass([0.1, 0.2], config)
    slow = _config(grid, weight_schedule=PowerWeights(0.67))
    psi, _, _ = pr_pass([0.1, 0.2, 0.3], slow)
    assert psi.integral() == pytest.approx(1.0, abs=1e-10)
