import numpy as np
import pytest

from premreg.baselines import ols_fit, ols_sigma, ols_standard_errors
from premreg.datasets import LEVERAGE_POINT
from premreg.errors import DataError, DomainError
from premreg.mixture import expected_precision
from premreg.models import RegressionData
from premreg.pr import pr_averaged
from premreg.simulation import (
    DESIGN_STREAM,
    ERROR_STREAM,
    ErrorDistribution,
    ScenarioSpec,
    make_design,
    replication_stream,
    sample_errors,
)
from premreg.prem import (
    PremConfig,
    default_umax,
    e_step,
    flag_outliers,
    loglik_objective,
    m_step,
    pr_loglik,
    prem_fit,
)


def _linear_data(n: int, beta, noise, seed: int = 0) -> RegressionData:
    rng = np.random.default_rng(seed)
    p = len(beta)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    y = X @ np.asarray(beta, dtype=float) + noise(rng, n)
    names = ("intercept",) + tuple(f"x{j}" for j in range(1, p))
    return RegressionData(X=X, y=y, column_names=names, has_intercept=True)


def test_default_umax():
    assert default_umax(2.0) == 50.0
    assert default_umax(20.0) == 60.0
    assert default_umax(0.0) == 50.0
    with pytest.raises(DomainError):
        default_umax(-1.0)
    with pytest.raises(DomainError):
        default_umax(float("nan"))


def test_config_validation():
    with pytest.raises(DomainError):
        PremConfig(tol_delta=0.0)
    with pytest.raises(DomainError):
        PremConfig(max_iterations=0)
    with pytest.raises(DomainError):
        PremConfig(psi0="cauchy")
    grid = PremConfig(grid_size=40).pr_config(30.0).grid
    assert grid.size == 40
    assert grid.u_max == 90.0


def test_m_step_equal_weights_is_least_squares():
    data = RegressionData(X=np.ones((2, 1)), y=np.array([1.0, 2.0]), column_names=("intercept",))
    assert m_step(data, [1.0, 1.0])[0] == pytest.approx(1.5, abs=1e-12)

    other = _linear_data(30, [1.0, -2.0, 0.5], lambda rng, n: rng.standard_normal(n), seed=1)
    np.testing.assert_allclose(m_step(other, np.full(30, 3.0)), ols_fit(other).beta_hat, atol=1e-10)


def test_m_step_matches_normal_equations_and_is_optimal():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((10, 3))
    y = rng.standard_normal(10)
    w = rng.uniform(0.1, 2.0, 10)
    data = RegressionData(X=X, y=y, column_names=("a", "b", "c"))

    beta = m_step(data, w)

    expected = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * y))
    np.testing.assert_allclose(beta, expected, rtol=1e-10)
    resid = y - X @ beta
    assert np.max(np.abs(X.T @ (w * resid))) <= 1e-10 * max(1.0, np.max(np.abs(X.T @ (w * y))))

    def objective(b):
        return float(np.sum(w * (y - X @ b) ** 2))

    base = objective(beta)
    for _ in range(50):
        assert objective(beta + 1e-3 * rng.standard_normal(3)) >= base


def test_m_step_is_affine_equivariant():
    data = _linear_data(25, [2.0, 1.0], lambda rng, n: rng.standard_normal(n), seed=6)
    w = np.random.default_rng(7).uniform(0.2, 3.0, 25)
    shift = np.array([0.5, -1.0])
    moved = data.with_response(data.y + data.X @ shift)
    np.testing.assert_allclose(m_step(moved, w), m_step(data, w) + shift, atol=1e-10)


def test_m_step_rank_deficiency_names_columns():
    x = np.arange(6, dtype=float)
    data = RegressionData(X=np.column_stack([np.ones(6), x, 2 * x]), y=x, column_names=("intercept", "x", "x2"))
    with pytest.raises(DataError) as excinfo:
        m_step(data, np.ones(6))
    assert "dependent columns" in str(excinfo.value)
    with pytest.raises(DataError):
        prem_fit(data)


def test_intercept_only_loglik_is_pr_on_centered_response():
    y = np.random.default_rng(3).standard_normal(12)
    data = RegressionData(X=np.ones((12, 1)), y=y, column_names=("intercept",))
    config = PremConfig(n_permutations=4)
    expected = pr_averaged(y - 0.25, config.pr_config(ols_sigma(data))).log_marginal
    assert pr_loglik([0.25], data, config) == expected


def test_e_step_perfect_fit_gives_equal_weights():
    X = np.column_stack([np.ones(8), np.arange(8.0)])
    beta = np.array([1.0, 2.0])
    data = RegressionData(X=X, y=X @ beta, column_names=("intercept", "x"))
    weights, loglik, psi = e_step(beta, data, PremConfig(n_permutations=3))
    np.testing.assert_allclose(weights, weights[0], rtol=1e-12)
    assert np.isfinite(loglik)
    assert psi.integral() == pytest.approx(1.0, abs=1e-10)


def test_e_step_downweights_a_gross_outlier():
    data = _linear_data(30, [1.0, 2.0], lambda rng, n: 0.1 * rng.standard_normal(n), seed=2)
    y = data.y.copy()
    y[5] += 10.0
    data = data.with_response(y)
    weights, _, _ = e_step([1.0, 2.0], data, PremConfig(n_permutations=5))
    assert int(np.argmin(weights)) == 5


def test_e_step_single_observation_uses_initial_density():
    data = RegressionData(X=np.ones((1, 1)), y=np.array([0.7]), column_names=("intercept",))
    config = PremConfig(n_permutations=3)
    weights, _, _ = e_step([0.0], data, config)
    psi0 = config.pr_config(ols_sigma(data)).psi0
    assert weights[0] == pytest.approx(expected_precision(psi0, 0.7), abs=1e-12)


def test_gaussian_errors_track_least_squares():
    data = _linear_data(200, [1.0, 1.0, 1.0], lambda rng, n: rng.standard_normal(n), seed=10)
    fit = prem_fit(data, PremConfig(seed=1))
    assert np.max(np.abs(fit.beta_hat - ols_fit(data).beta_hat)) < 0.15
    assert fit.loglik_path.size == fit.iterations + 1
    assert fit.beta_path.shape == (fit.iterations + 1, 3)


def test_loglik_path_mostly_ascends_and_converges():
    data = _linear_data(80, [0.0, 1.0], lambda rng, n: rng.standard_t(2, size=n), seed=12)
    fit = prem_fit(data, PremConfig(n_permutations=10, seed=3))
    steps = fit.loglik_path.size - 1
    assert len(fit.ascent_violations) <= 0.05 * steps + 1
    assert fit.loglik_path[-1] >= fit.loglik_path[0]
    if fit.converged:
        assert np.sum(np.abs(fit.beta_path[-1] - fit.beta_path[-2])) < 1e-4


def test_fit_is_deterministic_for_a_seed():
    data = _linear_data(40, [1.0, -1.0], lambda rng, n: rng.laplace(size=n), seed=5)
    config = PremConfig(n_permutations=6, seed=42)
    first = prem_fit(data, config)
    second = prem_fit(data, config)
    assert np.array_equal(first.beta_hat, second.beta_hat)
    assert np.array_equal(first.obs_weights, second.obs_weights)
    assert np.array_equal(first.loglik_path, second.loglik_path)


def test_iteration_cap_reports_non_convergence():
    data = _linear_data(30, [0.0, 1.0], lambda rng, n: rng.standard_cauchy(n), seed=8)
    fit = prem_fit(data, PremConfig(n_permutations=4, max_iterations=1, tol_delta=1e-12))
    assert fit.iterations == 1
    assert not fit.converged
    assert fit.loglik_path.size == 2


def test_progress_events_are_emitted_per_iteration():
    data = _linear_data(20, [0.0, 1.0], lambda rng, n: rng.standard_normal(n), seed=9)
    events = []
    fit = prem_fit(data, PremConfig(n_permutations=3), on_progress=events.append)
    assert len(events) == fit.iterations
    assert all(event.stage == "Fit" for event in events)


def test_phones_outliers_are_downweighted(phones):
    data = phones.payload
    fit = prem_fit(data, PremConfig(seed=7))

    median = np.median(fit.obs_weights)
    for row in range(14, 20):
        assert fit.obs_weights[row] < 0.1 * median
    assert set(range(14, 20)) <= set(flag_outliers(fit))

    ls = ols_fit(data).beta_hat
    se = ols_standard_errors(data)
    keep = np.setdiff1d(np.arange(data.n), np.arange(14, 20))
    clean = RegressionData(X=data.X[keep], y=data.y[keep], column_names=data.column_names, has_intercept=True)
    clean_slope = ols_fit(clean).beta_hat[1]
    # even the line through the clean years sits under 3 LS standard errors from LS
    assert 2.0 * se[1] < ls[1] - clean_slope < 3.0 * se[1]
    assert ls[1] - fit.beta_hat[1] > 0.8 * (ls[1] - clean_slope)


def test_hbk_fit_follows_the_clean_points(hbk):
    data = hbk.payload
    fit = prem_fit(data, PremConfig(seed=7))
    leverage = set(hbk.rows_tagged(LEVERAGE_POINT))
    rows = [i for i in range(data.n) if i not in leverage]

    prem_resid = np.abs(data.residuals(fit.beta_hat))[rows]
    ls_resid = np.abs(data.residuals(ols_fit(data).beta_hat))[rows]
    assert np.median(prem_resid) < np.median(ls_resid)


def test_flag_outliers_threshold():
    data = _linear_data(20, [0.0, 1.0], lambda rng, n: rng.standard_normal(n), seed=3)
    fit = prem_fit(data, PremConfig(n_permutations=3))
    with pytest.raises(DomainError):
        flag_outliers(fit, threshold=0.0)
    assert flag_outliers(fit, threshold=1e-12) == []


def test_loglik_objective_matches_pr_loglik():
    data = _linear_data(25, [1.0, 0.5], lambda rng, n: rng.standard_normal(n), seed=13)
    config = PremConfig(n_permutations=5)
    objective = loglik_objective(data, config)
    beta = [0.9, 0.6]
    assert objective(beta) == pr_loglik(beta, data, config)


def test_hbk_leverage_rows_get_the_smallest_weights(hbk):
    fit = prem_fit(hbk.payload, PremConfig(seed=7))
    leverage = hbk.rows_tagged(LEVERAGE_POINT)

    smallest = sorted(np.argsort(fit.obs_weights)[:4].tolist())
    assert smallest == leverage
    median = np.median(fit.obs_weights)
    assert all(fit.obs_weights[row] < 1e-2 * median for row in leverage)
    sigma = fit.sigma_hat_ls
    assert fit.psi_hat.mass_between(0.5 * sigma, 2.0 * sigma) >= 0.5


def test_case_study_fits_increase_the_likelihood(phones, hbk):
    for dataset in (phones, hbk):
        fit = prem_fit(dataset.payload, PremConfig(seed=7))
        assert fit.loglik_path[-1] > fit.loglik_path[0]
        assert len(fit.ascent_violations) <= 0.05 * (fit.loglik_path.size - 1) + 1


@pytest.mark.slow
def test_pr_em_ascends_on_simulated_and_case_study_data(phones, hbk):
    fits = [prem_fit(phones.payload, PremConfig(seed=7)), prem_fit(hbk.payload, PremConfig(seed=7))]
    laws = ("Laplace", "T1", "T2", "NExp", "NUnif")
    for seed in range(20):
        spec = ScenarioSpec(error=ErrorDistribution(laws[seed % len(laws)]), n=100, p=3, seed=seed)
        design = make_design(spec, replication_stream(seed, 0, DESIGN_STREAM))
        errors = sample_errors(spec.error, spec.n, replication_stream(seed, 0, ERROR_STREAM))
        fits.append(prem_fit(design.with_response(design.X @ spec.beta_true + errors), PremConfig(seed=seed)))

    steps = sum(fit.loglik_path.size - 1 for fit in fits)
    violations = sum(len(fit.ascent_violations) for fit in fits)
    assert violations <= 0.05 * steps
    for fit in fits:
        assert fit.loglik_path[-1] > fit.loglik_path[0]
