"""End-to-end rate experiment with a theoretical bound overlay.

Builds the same kind of configuration the CLI consumes, runs seeded
replications across a grid of sample sizes, fits the log-log slope of
the squared error, and writes report.csv / summary.json / plot.svg into
``demos/out``.  The printed command reruns the identical experiment
through the command-line interface.
"""

import json
import math
import pathlib

import numpy as np

from cdfam import (
    BoundConstants,
    EstimatorSpec,
    ExperimentConfig,
    GaussianMeanModel,
    ParamDomain,
    alpha_sup,
    emit_report,
    logz_norms,
    make_kernel,
    theory_constants,
    run_experiment,
)


def main():
    model = GaussianMeanModel(2, 0.5)
    star = np.array([0.3, -0.2])
    dom = ParamDomain(np.zeros(2), 2.0)

    tc = theory_constants(model, dom, star, grid_resolution=9)
    sup = alpha_sup(make_kernel(model, "gibbs"), dom, 5, mode="mc",
                    n_outer=20_000, rng=np.random.default_rng(314))
    alpha_up = sup.alpha + 3.0 * sup.stderr
    m = max(1, math.ceil(math.log(0.1 * tc.mu / (tc.sigma * tc.chi)) / math.log(alpha_up)))
    constants = BoundConstants(
        mu=tc.mu, L=tc.L, sigma=tc.sigma, chi=tc.chi,
        alpha=alpha_up, m=m, norm_3=logz_norms(model, dom).norm_3,
    )
    C = 3.0 / constants.mu_tilde
    print(f"m = {m}, mu_tilde = {constants.mu_tilde:.4f}, C = {C:.3f}")

    config = ExperimentConfig(
        model=model,
        psi_star=star,
        domain=dom,
        estimators=(EstimatorSpec("online-cd", "online", C=C, beta=1.0, m=m),),
        n_grid=(128, 512, 2048),
        replications=40,
        root_seed=99,
        bound_constants=constants,
    )
    report = run_experiment(config)

    print()
    print(f"{'n':>6} {'mse_last':>12} {'stderr':>10} {'bound':>12}")
    bounds = {r.n: r.value for r in report.rows if r.stat == "bound_online"}
    for r in report.rows:
        if r.stat == "mse_last":
            print(f"{r.n:>6} {r.value:>12.5f} {r.stderr:>10.5f} {bounds[r.n]:>12.3e}")
    for f in report.fits:
        if f.stat == "mse_last":
            print(f"\nfitted slope: {f.slope:.3f} +- {f.slope_stderr:.3f} "
                  f"(1/n decay is slope -1)")

    out = pathlib.Path(__file__).parent / "out"
    paths = emit_report(report, out, svg=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
    print(f"\nwrote {sorted(p.split('/')[-1] for p in paths.values())} to {out}")
    print(f"CLI rerun:  cdfam rates --config {out / 'config.json'} "
          f"--out-dir {out} --svg")


if __name__ == "__main__":
    main()
