import numpy as np
import pytest

from arsieve.errors import (
    InsufficientSampleError,
    InvalidInputError,
    InvalidLagError,
)
from arsieve.factors import fit_factor_model
from arsieve.panel import FactorSeries
from arsieve.simlab import DgpSpec, simulate_two_factor
from arsieve.varsieve import (
    VarSieveModel,
    companion_matrix,
    factor_autocov,
    rate_rule_order,
    select_order,
    stability_check,
    yule_walker_fit,
    yule_walker_system,
)


def simulate_var(coeffs, T, seed, burn=300):
    """Plain-numpy VAR simulator, independent of the package kernel."""
    rng = np.random.default_rng(seed)
    coeffs = [np.asarray(a, dtype=float) for a in coeffs]
    r = coeffs[0].shape[0]
    p = len(coeffs)
    total = T + burn
    innov = rng.normal(size=(r, total))
    f = np.zeros((r, total))
    for t in range(total):
        acc = innov[:, t].copy()
        for l in range(1, min(p, t) + 1):
            acc += coeffs[l - 1] @ f[:, t - l]
        f[:, t] = acc
    return FactorSeries(f[:, burn:])


def test_factor_autocov_zero_series():
    series = FactorSeries(np.zeros((2, 10)))
    assert np.abs(factor_autocov(series, 1)).max() == 0.0


def test_factor_autocov_alternating_example():
    series = FactorSeries(np.array([[1.0, -1.0, 1.0, -1.0]]))
    assert factor_autocov(series, 1)[0, 0] == pytest.approx(-1.0)


def test_factor_autocov_lag0_gram():
    rng = np.random.default_rng(0)
    series = FactorSeries(rng.normal(size=(3, 50)))
    g0 = factor_autocov(series, 0)
    assert np.abs(g0 - g0.T).max() < 1e-10
    assert np.linalg.eigvalsh(g0).min() > -1e-10
    with pytest.raises(InvalidLagError):
        factor_autocov(series, 49)


def test_yule_walker_scalar_identity():
    # for r=1, p=1 the solution is gamma(1)/gamma(0) up to the tiny ridge
    rng = np.random.default_rng(1)
    series = FactorSeries(rng.normal(size=(1, 200)))
    centered = FactorSeries(series.values - series.values.mean())
    g0 = factor_autocov(centered, 0)[0, 0]
    g1 = factor_autocov(centered, 1)[0, 0]
    model = yule_walker_fit(series, 1)
    assert model.coeffs[0][0, 0] == pytest.approx(g1 / g0, rel=1e-6)


def test_yule_walker_white_noise_coefficients_small():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        T = 2000
        series = FactorSeries(rng.normal(size=(2, T)))
        model = yule_walker_fit(series, 2)
        for a in model.coeffs:
            assert np.abs(a).max() < 3.0 / np.sqrt(T)


def test_yule_walker_scalar_ar1_consistency():
    series = simulate_var([np.array([[0.5]])], T=5000, seed=7)
    model = yule_walker_fit(series, 1)
    assert abs(model.coeffs[0][0, 0] - 0.5) < 0.05


def test_yule_walker_round_trip_recovers_var1():
    a = np.array([[0.6, -0.2], [0.1, 0.3]])
    errs = []
    for seed in range(5):
        series = simulate_var([a], T=20000, seed=100 + seed)
        model = yule_walker_fit(series, 1)
        errs.append(np.linalg.norm(model.coeffs[0] - a))
    assert max(errs) < 0.05


def test_yule_walker_round_trip_var2():
    # orientation check with two lags: refit must recover both matrices
    a1 = np.array([[0.4, 0.15], [-0.1, 0.2]])
    a2 = np.array([[0.2, -0.05], [0.05, 0.15]])
    series = simulate_var([a1, a2], T=50000, seed=3)
    model = yule_walker_fit(series, 2)
    assert np.abs(model.coeffs[0] - a1).max() < 0.05
    assert np.abs(model.coeffs[1] - a2).max() < 0.05


def test_yule_walker_residual_shape_and_cov():
    series = simulate_var([np.array([[0.5]])], T=500, seed=11)
    model = yule_walker_fit(series, 3)
    assert model.residuals.shape == (1, 497)
    assert model.residual_cov.shape == (1, 1)
    assert np.linalg.eigvalsh(model.residual_cov).min() > -1e-10
    assert model.spectral_radius >= 0.0


def test_yule_walker_preconditions():
    series = FactorSeries(np.random.default_rng(0).normal(size=(1, 20)))
    with pytest.raises(InvalidInputError):
        yule_walker_fit(series, 0)
    with pytest.raises(InsufficientSampleError):
        yule_walker_fit(series, 5)  # T = 20 <= 4 * 5


def test_block_toeplitz_symmetry():
    rng = np.random.default_rng(13)
    series = FactorSeries(rng.normal(size=(2, 100)))
    centered = FactorSeries(series.values - series.values.mean(axis=1, keepdims=True))
    pi0, pi1 = yule_walker_system(centered, 4)
    assert pi0.shape == (8, 8)
    assert pi1.shape == (2, 8)
    assert np.abs(pi0 - pi0.T).max() < 1e-10


def test_residuals_near_orthogonal_to_lagged_factors():
    spec = DgpSpec("two_factor_ar1", N=50, T=1000, nu=1.0, seed=21)
    panel, _ = simulate_two_factor(spec)
    fit = fit_factor_model(panel, k0=2, r=2)
    p = 2
    model = yule_walker_fit(fit.factors, p)
    g = fit.factors.values - model.factor_mean[:, None]
    T = fit.factors.n_periods
    for l in range(1, p + 1):
        cross = model.residuals @ g[:, p - l : T - l].T / (T - p)
        assert np.abs(cross).max() < 5.0 / np.sqrt(T)


def test_select_order_fixed_passthrough():
    series = simulate_var([np.array([[0.5]])], T=200, seed=0)
    sel = select_order(series, "fixed", p_fixed=3)
    assert sel.chosen_p == 3
    assert sel.scores.size == 0


def test_select_order_rate_rule():
    assert rate_rule_order(1000) == 2
    series = simulate_var([np.array([[0.5]])], T=1000, seed=0)
    sel = select_order(series, "rate-rule")
    assert sel.chosen_p == 2


def test_select_order_sc_recovers_ar1():
    hits = 0
    for seed in range(100):
        a = np.diag([0.7, 0.5])
        series = simulate_var([a], T=1000, seed=2000 + seed)
        sel = select_order(series, "sc", p_max=6)
        hits += sel.chosen_p == 1
    assert hits >= 90


def test_select_order_always_at_least_one():
    rng = np.random.default_rng(30)
    series = FactorSeries(rng.normal(size=(2, 120)))
    for criterion in ("aic", "sc"):
        sel = select_order(series, criterion, p_max=5)
        assert 1 <= sel.chosen_p <= 5
        assert sel.scores.size == 5
    with pytest.raises(InvalidInputError):
        select_order(series, "aic", p_max=31)  # above T / 4
    with pytest.raises(InvalidInputError):
        select_order(series, "bic")


def test_stability_classification():
    def model_with(coeffs):
        r = np.asarray(coeffs[0]).shape[0]
        return VarSieveModel(
            p=len(coeffs),
            coeffs=tuple(np.asarray(a, dtype=float) for a in coeffs),
            residuals=np.zeros((r, 10)),
            residual_cov=np.eye(r),
            factor_mean=np.zeros(r),
            spectral_radius=float(
                np.abs(np.linalg.eigvals(companion_matrix(coeffs))).max()
            ),
        )

    assert stability_check(model_with([np.array([[0.5]])])) == "stable"
    assert stability_check(model_with([np.array([[1.0]])])) == "marginal"
    assert stability_check(model_with([np.array([[1.1]])])) == "explosive"
    # roots of z^2 - 1.2 z + 0.5: radius sqrt(0.5), stable
    model = model_with([np.array([[1.2]]), np.array([[-0.5]])])
    assert model.spectral_radius == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert stability_check(model) == "stable"
