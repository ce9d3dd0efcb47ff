"""Kernel invariance, spectral coefficients, and sampling correctness."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import chi2 as chi2_dist

from cdfam import (
    BoltzmannModel,
    DegenerateStatisticError,
    ErgmModel,
    GaussianMeanModel,
    IdentityKernel,
    InvalidInputError,
    ParamDomain,
    UnsupportedOracleError,
    alpha_sup,
    default_kernel,
    kernel_m_steps,
    kernel_step,
    make_kernel,
    mean_statistic,
    restricted_alpha,
    transition_matrix,
)

ENUMERABLE_KERNELS = [
    make_kernel(BoltzmannModel(1), "gibbs"),
    make_kernel(BoltzmannModel(2), "gibbs"),
    make_kernel(BoltzmannModel(3), "gibbs"),
    make_kernel(ErgmModel(3), "toggle"),
    make_kernel(ErgmModel(4), "toggle"),
    make_kernel(BoltzmannModel(2), "exact"),
    make_kernel(ErgmModel(3), "exact"),
    make_kernel(BoltzmannModel(2), "identity"),
]

_IDS = [f"{type(k).__name__}-p{k.model.p}" for k in ENUMERABLE_KERNELS]


def _psi_grid(p, count=9, seed=17):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(count, p))


# ---------------------------------------------------------------------------
# stationarity and reversibility


@pytest.mark.parametrize("kernel", ENUMERABLE_KERNELS, ids=_IDS)
def test_stationary_distribution_is_invariant(kernel):
    for psi in _psi_grid(kernel.model.p):
        tm = transition_matrix(kernel, psi)
        w = kernel.model.probabilities(psi)
        np.testing.assert_allclose(w @ tm.matrix, w, atol=1e-12)


@pytest.mark.parametrize(
    "kernel",
    [make_kernel(BoltzmannModel(3), "gibbs"), make_kernel(ErgmModel(3), "toggle")],
    ids=["gibbs3", "toggle3"],
)
def test_detailed_balance(kernel):
    # both kernels are reversible: diag(w) K is symmetric
    for psi in _psi_grid(kernel.model.p, count=5):
        K = transition_matrix(kernel, psi).matrix
        w = kernel.model.probabilities(psi)
        flux = w[:, None] * K
        np.testing.assert_allclose(flux, flux.T, atol=1e-13)


def test_single_site_flip_matrix_is_half_everywhere():
    kernel = make_kernel(BoltzmannModel(1), "gibbs")
    tm = transition_matrix(kernel, np.zeros(1))
    np.testing.assert_allclose(tm.matrix, 0.5 * np.ones((2, 2)), atol=1e-15)


def test_transition_matrix_unsupported_for_continuous():
    kernel = make_kernel(GaussianMeanModel(2), "gibbs")
    with pytest.raises(UnsupportedOracleError):
        transition_matrix(kernel, np.zeros(2))


def test_make_kernel_rejects_mismatches():
    with pytest.raises(InvalidInputError):
        make_kernel(ErgmModel(3), "gibbs")
    with pytest.raises(InvalidInputError):
        make_kernel(GaussianMeanModel(2), "toggle")
    with pytest.raises(InvalidInputError):
        make_kernel(BoltzmannModel(2), "frog")
    with pytest.raises(UnsupportedOracleError):
        make_kernel(BoltzmannModel(13), "exact")
    assert type(default_kernel(ErgmModel(3))).__name__ == "ErgmToggleKernel"


# ---------------------------------------------------------------------------
# chain behavior


def test_m_steps_zero_returns_copy():
    kernel = make_kernel(BoltzmannModel(3), "gibbs")
    rng = np.random.default_rng(0)
    x = np.array([1, 0, 1], dtype=np.uint8)
    y = kernel_m_steps(kernel, np.zeros(6), x, 0, rng)
    np.testing.assert_array_equal(x, y)
    assert y is not x


def test_steps_are_deterministic_given_seed():
    kernel = make_kernel(BoltzmannModel(3), "gibbs")
    psi = _psi_grid(6, count=1)[0]
    x0 = np.zeros((64, 3), dtype=np.uint8)
    a = kernel.m_steps(psi, x0, 25, np.random.default_rng(42))
    b = kernel.m_steps(psi, x0, 25, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_shared_and_tiled_parameters_agree_bitwise():
    # psi of shape (p,) and the same psi tiled per chain consume the
    # identical draw sequence, so the chains must match exactly
    kernel = make_kernel(GaussianMeanModel(2, 0.5), "gibbs")
    psi = np.array([0.3, -0.2])
    x0 = np.random.default_rng(1).standard_normal((8, 5, 2))
    a = kernel.m_steps(psi, x0, 7, np.random.default_rng(9))
    b = kernel.m_steps(np.broadcast_to(psi, (8, 5, 2)), x0, 7, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "kernel",
    [make_kernel(BoltzmannModel(3), "gibbs"), make_kernel(ErgmModel(3), "toggle")],
    ids=["gibbs3", "toggle3"],
)
def test_empirical_chain_matches_matrix_power(kernel):
    model = kernel.model
    psi = np.array([0.4, -0.3, 0.2, 0.1, -0.2, 0.3])[: model.p]
    m = 3
    n = 40_000
    start = model.states()[5]
    rng = np.random.default_rng(2024)
    X = kernel.m_steps(psi, np.tile(start, (n, 1)), m, rng)
    idx = (X.astype(np.int64) << np.arange(X.shape[1])).sum(axis=1)
    counts = np.bincount(idx, minlength=model.states().shape[0])
    Km = np.linalg.matrix_power(transition_matrix(kernel, psi).matrix, m)
    expected = n * Km[5]
    keep = expected > 0
    stat = ((counts[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert stat < chi2_dist.ppf(0.9999, keep.sum() - 1)


def test_gaussian_gibbs_preserves_stationary_moments():
    model = GaussianMeanModel(2, 0.5)
    kernel = make_kernel(model, "gibbs")
    psi = np.array([0.3, -0.2])
    rng = np.random.default_rng(7)
    X = model.sample_exact(psi, 200_000, rng)
    Y = kernel.m_steps(psi, X, 2, rng)
    se = math.sqrt(1.0 / X.shape[0])
    np.testing.assert_allclose(Y.mean(axis=0), mean_statistic(model, psi), atol=5 * se)
    np.testing.assert_allclose(np.cov(Y.T), model.sigma_matrix, atol=0.02)


def test_exact_sampler_kernel_forgets_start():
    model = BoltzmannModel(2)
    kernel = make_kernel(model, "exact")
    psi = np.array([0.5, -0.4, 0.3])
    rng = np.random.default_rng(3)
    X = kernel.step(psi, np.zeros((100_000, 2), dtype=np.uint8), rng)
    counts = np.bincount((X.astype(np.int64) << np.arange(2)).sum(axis=1), minlength=4)
    expected = 100_000 * model.probabilities(psi)
    stat = ((counts - expected) ** 2 / expected).sum()
    assert stat < chi2_dist.ppf(0.9999, 3)


def test_kernel_step_validates_input():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    with pytest.raises(InvalidInputError):
        kernel_step(kernel, np.zeros(3), [1, 2], np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        kernel_step(kernel, np.zeros(2), [1, 0], np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        kernel_m_steps(kernel, np.zeros(3), [1, 0], -1, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# restricted spectral coefficient


def test_alpha_half_for_single_site_statistic():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    val = restricted_alpha(kernel, np.zeros(3), lambda X: X[:, 0], mode="exact")
    assert val == pytest.approx(0.5, abs=1e-12)


def test_alpha_identity_is_one_exact_sampler_is_zero():
    model = BoltzmannModel(2)
    f = lambda X: X[:, 0]
    one = restricted_alpha(IdentityKernel(model), np.zeros(3), f, mode="exact")
    zero = restricted_alpha(make_kernel(model, "exact"), np.zeros(3), f, mode="exact")
    assert one == pytest.approx(1.0, abs=1e-12)
    assert zero == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize(
    "kernel",
    [
        make_kernel(BoltzmannModel(2), "gibbs"),
        make_kernel(BoltzmannModel(3), "gibbs"),
        make_kernel(ErgmModel(3), "toggle"),
    ],
    ids=["gibbs2", "gibbs3", "toggle3"],
)
def test_alpha_in_unit_interval_and_monotone_in_steps(kernel):
    f = lambda X: kernel.model.phi_batch(X)
    for psi in _psi_grid(kernel.model.p, count=5, seed=23):
        values = [
            restricted_alpha(kernel, psi, f, steps=m, mode="exact")
            for m in range(1, 6)
        ]
        for v in values:
            assert 0.0 <= v <= 1.0 + 1e-9
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-12


def test_alpha_degenerate_statistic_raises():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    with pytest.raises(DegenerateStatisticError):
        restricted_alpha(kernel, np.zeros(3), lambda X: np.ones(X.shape[0]), mode="exact")
    with pytest.raises(DegenerateStatisticError):
        restricted_alpha(
            kernel,
            np.zeros(3),
            lambda X: np.full(X.shape[0], 2.5),
            mode="mc",
            rng=0,
        )


def test_alpha_mc_matches_exact_within_three_stderr():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    psi = np.array([0.4, -0.2, 0.3])
    f = lambda X: X[:, 0]
    exact = restricted_alpha(kernel, psi, f, mode="exact")
    for seed in (0, 1, 2):
        est = restricted_alpha(kernel, psi, f, mode="mc", n_outer=10_000, rng=seed)
        assert est.stderr > 0.0
        assert abs(est.alpha - exact) <= 3.0 * est.stderr


def test_alpha_mc_matches_gaussian_closed_form():
    # random-scan Gibbs on the bivariate Gaussian: for f = x_1 the one-step
    # coefficient is sqrt(1 + 3 rho^2) / 2
    rho = 0.3
    kernel = make_kernel(GaussianMeanModel(2, rho), "gibbs")
    psi = np.array([0.2, -0.1])
    expected = math.sqrt(1.0 + 3.0 * rho * rho) / 2.0
    est = restricted_alpha(
        kernel, psi, lambda X: X[:, 0], mode="mc", n_outer=40_000, rng=11
    )
    assert abs(est.alpha - expected) <= 3.0 * est.stderr


def test_alpha_mc_two_step_is_smaller():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    psi = np.array([0.4, -0.2, 0.3])
    f = lambda X: X[:, 0]
    e1 = restricted_alpha(kernel, psi, f, steps=1, mode="exact")
    e2 = restricted_alpha(kernel, psi, f, steps=2, mode="exact")
    assert e2 == pytest.approx(e1 * e1, rel=0.05)  # near-eigenfunction here
    est = restricted_alpha(kernel, psi, f, steps=2, mode="mc", n_outer=20_000, rng=5)
    assert abs(est.alpha - e2) <= 3.0 * est.stderr


def test_restricted_alpha_rejects_bad_arguments():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    f = lambda X: X[:, 0]
    with pytest.raises(InvalidInputError):
        restricted_alpha(kernel, np.zeros(3), f, steps=0)
    with pytest.raises(InvalidInputError):
        restricted_alpha(kernel, np.zeros(3), f, mode="guess")
    with pytest.raises(InvalidInputError):
        restricted_alpha(kernel, np.zeros(3), f, mode="mc", n_outer=1, rng=0)


# ---------------------------------------------------------------------------
# worst-case sweep


def test_alpha_sup_exact_on_boltzmann():
    model = BoltzmannModel(2)
    kernel = make_kernel(model, "gibbs")
    res = alpha_sup(kernel, ParamDomain(np.zeros(3), 1.0), grid_resolution=5)
    assert 0.0 < res.alpha <= 1.0 + 1e-9
    assert res.stderr is None
    assert res.f_label.startswith("phi_")
    assert res.psi.shape == (3,)
    # the sweep dominates any single cell
    single = restricted_alpha(kernel, np.zeros(3), lambda X: X[:, 0], mode="exact")
    assert res.alpha >= single - 1e-12


def test_alpha_sup_mc_agrees_with_exact():
    model = BoltzmannModel(2)
    kernel = make_kernel(model, "gibbs")
    dom = ParamDomain(np.zeros(3), 0.8)
    exact = alpha_sup(kernel, dom, grid_resolution=3)
    mc = alpha_sup(kernel, dom, grid_resolution=3, mode="mc", n_outer=20_000, rng=1)
    assert mc.stderr is not None and mc.stderr > 0.0
    assert abs(mc.alpha - exact.alpha) <= 4.0 * mc.stderr + 0.01


def test_alpha_sup_identity_kernel_is_one():
    res = alpha_sup(IdentityKernel(BoltzmannModel(2)), ParamDomain(np.zeros(3), 0.5), 3)
    assert res.alpha == pytest.approx(1.0, abs=1e-12)


def test_alpha_sup_dimension_mismatch():
    kernel = make_kernel(BoltzmannModel(2), "gibbs")
    with pytest.raises(InvalidInputError):
        alpha_sup(kernel, ParamDomain(np.zeros(2), 1.0), 3)
