"""Desk-scale acceptance runs for the whole stack.

Each test asserts one end-to-end claim about estimator behaviour and
prints a single pass/fail line under ``pytest -v``.  All Monte Carlo
configurations are frozen, seeds included, after calibration, so the
suite is deterministic; the heavy runs are shared through module-scoped
fixtures.  Budget: about five minutes on one core.
"""

import math

import numpy as np
import pytest

from cdfam import (
    BatchSchedule,
    BoltzmannModel,
    BoundConstants,
    CdConfig,
    ErgmModel,
    EstimatorSpec,
    ExperimentConfig,
    GaussianMeanModel,
    ParamDomain,
    StepSchedule,
    alpha_sup,
    cd_gradient,
    cd_gradient_terms,
    fisher_information,
    logz_norms,
    make_kernel,
    mean_statistic,
    online_bound,
    online_cd,
    project,
    rate_fit,
    restricted_alpha,
    run_experiment,
    theory_constants,
    transition_matrix,
    varphi,
)
from cdfam.cd import _epoch_batches
from cdfam.harness import parse_report_csv, report_csv_text, report_json_dict

GAUSS_STAR = np.array([0.3, -0.2])
GAUSS_BALL = ParamDomain(np.zeros(2), 2.0)


@pytest.fixture(scope="module")
def gauss_model():
    return GaussianMeanModel(2, 0.5)


@pytest.fixture(scope="module")
def gauss_alpha(gauss_model):
    # Monte Carlo worst-case contraction coefficient of the Gibbs kernel
    # over the parameter ball; the standard error feeds the upper
    # confidence value used for chain-length selection.
    return alpha_sup(
        make_kernel(gauss_model, "gibbs"),
        GAUSS_BALL,
        5,
        steps=1,
        mode="mc",
        n_outer=20_000,
        rng=np.random.default_rng(314),
    )


@pytest.fixture(scope="module")
def online_rate_run(gauss_model, gauss_alpha):
    """Online CD at beta = 1 across four sample sizes, 200 replications.

    The chain length m is the smallest one whose bias correction keeps at
    least 90% of the strong-convexity constant under the upper confidence
    value of alpha; the step constant is then 3 / mu_tilde, comfortably
    above the 2 / mu_tilde threshold the 1/n rate requires.
    """
    tc = theory_constants(gauss_model, GAUSS_BALL, GAUSS_STAR, grid_resolution=9)
    alpha_up = gauss_alpha.alpha + 3.0 * gauss_alpha.stderr
    target = 0.1 * tc.mu / (tc.sigma * tc.chi)
    m = max(1, math.ceil(math.log(target) / math.log(alpha_up)))
    mu_tilde = tc.mu - alpha_up**m * tc.sigma * tc.chi
    assert mu_tilde >= 0.9 * tc.mu
    C = 3.0 / mu_tilde
    config = ExperimentConfig(
        model=gauss_model,
        psi_star=GAUSS_STAR,
        domain=GAUSS_BALL,
        estimators=(EstimatorSpec("online-cd", "online", C=C, beta=1.0, m=m),),
        n_grid=(256, 1024, 4096, 16384),
        replications=200,
        root_seed=42,
    )
    return {
        "report": run_experiment(config),
        "constants": tc,
        "alpha_up": alpha_up,
        "m": m,
        "C": C,
    }


def test_online_cd_error_decays_like_one_over_n(online_rate_run):
    fits = [
        f
        for f in online_rate_run["report"].fits
        if f.estimator == "online-cd" and f.stat == "mse_last"
    ]
    assert len(fits) == 1
    slope = fits[0].slope
    assert -1.2 <= slope <= -0.8, (
        f"squared-error slope {slope:.3f} outside [-1.2, -0.8] "
        f"(+- {fits[0].slope_stderr:.3f})"
    )


def test_averaged_cd_variance_within_constant_of_optimal(gauss_model, gauss_alpha):
    # Averaged iterate at beta = 0.7 with the schedule-resolved chain
    # length; n * MSE must sit between the information floor and four
    # times it, with Monte Carlo slack on both edges.
    config = ExperimentConfig(
        model=gauss_model,
        psi_star=GAUSS_STAR,
        domain=GAUSS_BALL,
        estimators=(
            EstimatorSpec(
                "avg-cd", "online", C=2.0, beta=0.7, m="auto", alpha=gauss_alpha.alpha
            ),
        ),
        n_grid=(8192,),
        replications=400,
        root_seed=43,
    )
    report = run_experiment(config)
    row = [r for r in report.rows if r.stat == "variance_ratio"][0]
    assert 0.8 <= row.value <= 4.5, (
        f"variance ratio {row.value:.3f} +- {row.stderr:.3f} outside [0.8, 4.5]"
    )


def test_exact_sampler_gradient_is_unbiased():
    # With the exact-sampler kernel the update direction has a closed
    # form given the batch: E[phi] at the current parameter minus the
    # batch mean of phi.  10 fixed parameter points per model, 1e5 draws
    # each, agreement within three standard errors coordinatewise.
    for model in (GaussianMeanModel(2, 0.5), BoltzmannModel(3)):
        kernel = make_kernel(model, "exact")
        batch = model.sample_exact(np.zeros(model.p), 8, np.random.default_rng(301))
        expected_data_term = model.phi_batch(batch).mean(axis=0)
        tiled = np.tile(batch, (12_500, 1))
        for k in range(10):
            psi = np.random.default_rng((302, k)).uniform(-0.6, 0.6, model.p)
            terms = cd_gradient_terms(
                kernel, psi, tiled, 1, np.random.default_rng((303, k))
            )
            mean = terms.mean(axis=0)
            se = terms.std(axis=0, ddof=1) / math.sqrt(terms.shape[0])
            expected = mean_statistic(model, psi) - expected_data_term
            assert np.all(np.abs(mean - expected) <= 3.0 * se), (
                f"{type(model).__name__} psi #{k}: "
                f"worst z = {(np.abs(mean - expected) / se).max():.2f}"
            )


def test_enumerable_oracles_are_exact():
    # Stationarity of every enumerable kernel on a 9-point parameter
    # grid, the hand-derived single-site contraction value, and the
    # transition-matrix prediction of the conditional update direction.
    for model in (BoltzmannModel(1), BoltzmannModel(2), BoltzmannModel(3), ErgmModel(3)):
        kind = "toggle" if isinstance(model, ErgmModel) else "gibbs"
        kernel = make_kernel(model, kind)
        for k in range(9):
            psi = np.random.default_rng((400, model.p, k)).uniform(-1.0, 1.0, model.p)
            tm = transition_matrix(kernel, psi)
            pi = model.probabilities(psi)
            residual = np.abs(pi @ tm.matrix - pi).max()
            assert residual <= 1e-12, f"{type(model).__name__} psi #{k}: {residual:.2e}"

    val = restricted_alpha(
        make_kernel(BoltzmannModel(2), "gibbs"),
        np.zeros(3),
        lambda X: X[:, 0],
        mode="exact",
    )
    assert val == pytest.approx(0.5, abs=1e-12)

    model = BoltzmannModel(2)
    kernel = make_kernel(model, "gibbs")
    psi = np.array([0.35, -0.2, 0.35])
    tm = transition_matrix(kernel, psi)
    phi_tab = model.phi_batch(tm.states)
    batch_idx = np.array([0, 2, 3, 1, 0])
    two_step = tm.matrix @ tm.matrix
    expected = (two_step[batch_idx] @ phi_tab - phi_tab[batch_idx]).mean(axis=0)
    terms = cd_gradient_terms(
        kernel,
        psi,
        tm.states[np.tile(batch_idx, 20_000)],
        2,
        np.random.default_rng(404),
    )
    se = terms.std(axis=0, ddof=1) / math.sqrt(terms.shape[0])
    assert np.all(np.abs(terms.mean(axis=0) - expected) <= 3.0 * se)


@pytest.fixture(scope="module")
def offline_run():
    """Full-batch offline CD on the 3-spin model, certified step size.

    The decrease condition mu_tilde > 4 C L^2 caps the step far below
    what the slowest Fisher mode needs in 500 epochs, so the start is
    offset along the fastest eigenvector: the transient then dies within
    budget and the measured error is the stationary level.  The offset
    sign keeps the start inside the ball either way the eigensolver
    orients the eigenvector.
    """
    model = BoltzmannModel(3)
    star = np.array([0.2, -0.1, 0.15, 0.1, -0.2, 0.05])
    dom = ParamDomain(np.zeros(6), 0.75)
    tc = theory_constants(model, dom, star, grid_resolution=5)
    sup = alpha_sup(make_kernel(model, "gibbs"), dom, 3, steps=1, mode="exact")
    target = 0.1 * tc.mu / (tc.sigma * tc.chi)
    m = max(1, math.ceil(math.log(target) / math.log(sup.alpha)))
    mu_tilde = tc.mu - sup.alpha**m * tc.sigma * tc.chi
    C = 0.9 * mu_tilde / (4.0 * tc.L**2)
    assert mu_tilde > 4.0 * C * tc.L**2

    _, vecs = np.linalg.eigh(fisher_information(model, star))
    offset = math.sqrt(0.18) * vecs[:, -1]
    psi0 = star - offset
    if np.linalg.norm(star + offset) < np.linalg.norm(psi0):
        psi0 = star + offset
    assert np.linalg.norm(psi0 - dom.center) < dom.radius

    common = dict(
        mode="offline", C=C, beta=0.0, m=m, variant="full-batch", psi0=psi0
    )
    config = ExperimentConfig(
        model=model,
        psi_star=star,
        domain=dom,
        estimators=(
            EstimatorSpec("fb-long", T=500, **common),
            EstimatorSpec("fb-short", T=10, **common),
        ),
        n_grid=(64, 256, 1024),
        replications=100,
        root_seed=5,
    )
    return run_experiment(config)


def test_offline_cd_error_falls_with_epochs_and_sample_size(offline_run):
    rows = {
        (r.estimator, r.n): r for r in offline_run.rows if r.stat == "mse_last"
    }
    long_run, short_run = rows[("fb-long", 64)], rows[("fb-short", 64)]
    assert long_run.value < short_run.value, (
        f"500 epochs gave {long_run.value:.4f}, 10 epochs gave {short_run.value:.4f}"
    )
    fit = rate_fit([(n, rows[("fb-long", n)].value) for n in (64, 256, 1024)])
    assert -1.3 <= fit.slope <= -0.7, (
        f"squared-error slope {fit.slope:.3f} outside [-1.3, -0.7]"
    )


def test_online_error_bound_dominates_measured_error(gauss_model, online_rate_run):
    # Constants computed in closed form: the Fisher matrix of the
    # Gaussian family is the data covariance, so mu and L are its
    # eigenvalues and sigma^2 its trace; the chi-square ratio is
    # maximised on the ball boundary (it grows radially along rays), so
    # a dense boundary sweep of the analytic exponent suffices.
    fisher = fisher_information(gauss_model, GAUSS_STAR)
    evals = np.linalg.eigvalsh(fisher)
    ts = np.linspace(0.0, 2.0 * math.pi, 4096, endpoint=False)
    boundary = GAUSS_BALL.radius * np.stack([np.cos(ts), np.sin(ts)], axis=1)
    deltas = boundary - GAUSS_STAR
    expo = np.einsum("ij,jk,ik->i", deltas, fisher, deltas)
    chi = float((np.sqrt(np.expm1(expo)) / np.linalg.norm(deltas, axis=1)).max())
    constants = BoundConstants(
        mu=float(evals[0]),
        L=float(evals[-1]),
        sigma=math.sqrt(float(np.trace(fisher))),
        chi=chi,
        alpha=online_rate_run["alpha_up"],
        m=online_rate_run["m"],
        norm_3=logz_norms(gauss_model, GAUSS_BALL).norm_3,
    )
    delta0 = float(((GAUSS_BALL.center - GAUSS_STAR) ** 2).sum())
    rows = [r for r in online_rate_run["report"].rows if r.stat == "mse_last"]
    assert len(rows) == 4
    for row in rows:
        bound = online_bound(constants, delta0, row.n, online_rate_run["C"], 1.0)
        assert math.isfinite(bound)
        assert bound >= row.value - 3.0 * row.stderr, (
            f"n={row.n}: bound {bound:.3e} < measured {row.value:.3e}"
        )


def test_structural_properties_hold():
    rng = np.random.default_rng(700)

    # step-weight function: increasing in t, dominated by the power term,
    # and bracketing partial power sums within a factor two
    for _ in range(1000):
        gamma = rng.uniform(-2.0, 2.0)
        t1 = rng.uniform(0.05, 50.0)
        t2 = t1 + rng.uniform(0.01, 10.0)
        assert varphi(gamma, t2) > varphi(gamma, t1)
        if gamma > 0:
            assert varphi(gamma, t2) <= t2**gamma / gamma
        elif gamma < 0:
            assert varphi(gamma, t2) <= -1.0 / gamma + 1e-15
    for _ in range(1000):
        beta = rng.uniform(0.0, 1.0)
        t1 = int(rng.integers(1, 60))
        t2 = t1 + int(rng.integers(0, 60))
        s = sum(t ** (-beta) for t in range(t1, t2 + 1))
        gap = varphi(1.0 - beta, t2 + 1) - varphi(1.0 - beta, t1)
        assert gap <= s + 1e-12
        assert s <= 2.0 * gap + 1e-12

    # projecting onto the ball never expands distances
    dom = ParamDomain(np.array([0.5, -1.0, 2.0]), 1.7)
    for _ in range(1000):
        x = rng.normal(0.0, 3.0, 3)
        y = rng.normal(0.0, 3.0, 3)
        px, py = project(x, dom), project(y, dom)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12
        assert np.linalg.norm(px - dom.center) <= dom.radius + 1e-12

    # identical reports from one worker and four
    config = ExperimentConfig(
        model=GaussianMeanModel(2, 0.3),
        psi_star=GAUSS_STAR,
        domain=GAUSS_BALL,
        estimators=(EstimatorSpec("online-cd", "online", C=0.5, beta=1.0, m=1),),
        n_grid=(8, 16),
        replications=70,
        root_seed=77,
    )
    serial = run_experiment(config, workers=1)
    parallel = run_experiment(config, workers=4)
    assert report_csv_text(serial) == report_csv_text(parallel)

    # reshuffling partitions each epoch: every index exactly once
    for _ in range(50):
        n = int(rng.integers(4, 40))
        B = int(rng.integers(1, n))
        batches = list(_epoch_batches("reshuffle", 3, n, B, rng))
        idx = np.concatenate(batches, axis=1)
        assert idx.shape == (3, n)
        assert np.array_equal(np.sort(idx, axis=1), np.tile(np.arange(n), (3, 1)))

    # m = 0 never moves the chain, so the update direction is exactly zero
    model = BoltzmannModel(2)
    kernel = make_kernel(model, "gibbs")
    batch = model.sample_exact(np.zeros(3), 16, np.random.default_rng(701))
    g = cd_gradient(
        kernel, np.array([0.2, -0.1, 0.4]), batch, 0, np.random.default_rng(702)
    )
    assert np.all(g == 0.0)

    # C = 0 keeps the whole trajectory at the start, bitwise
    data = GaussianMeanModel(2, 0.3).sample_exact(
        GAUSS_STAR, 40, np.random.default_rng(703)
    )
    psi0 = np.array([0.7, -0.3])
    traj = online_cd(
        data,
        make_kernel(GaussianMeanModel(2, 0.3), "gibbs"),
        CdConfig(
            m=1,
            schedule=StepSchedule(0.0, 1.0),
            batching=BatchSchedule.online(),
            domain=GAUSS_BALL,
            psi0=psi0,
            seed=704,
        ),
    )
    assert np.array_equal(traj.final, psi0)
    assert np.array_equal(traj.iterates, np.broadcast_to(psi0, traj.iterates.shape))

    # emitted CSV and JSON reproduce the in-memory report exactly
    assert parse_report_csv(report_csv_text(serial)) == list(serial.rows)
    blob = report_json_dict(serial)
    assert blob["schema_version"] == "1"
    import json

    assert json.loads(json.dumps(blob)) == blob
