"""Tour of the model families and their small-model oracles.

All three families share one interface: a sufficient statistic phi, an
exact sampler, and closed-form or enumerated versions of the
log-partition function, the mean statistic, the Fisher information and
the chi-square divergence.  The enumerated oracles are what the test
suite trusts; this script just shows them side by side.
"""

import numpy as np

from cdfam import (
    BoltzmannModel,
    ErgmModel,
    GaussianMeanModel,
    chi2_divergence,
    fisher_information,
    log_partition,
    mean_statistic,
)


def main():
    rng = np.random.default_rng(0)

    print("=== Gaussian mean family (d=2, rho=0.5) ===")
    model = GaussianMeanModel(2, 0.5)
    psi = np.array([0.4, -0.3])
    cov = fisher_information(model, psi)
    print(f"log Z(psi)            = {log_partition(model, psi):.6f}")
    print(f"0.5 psi' Sigma psi    = {0.5 * psi @ cov @ psi:.6f}   (closed form)")
    print(f"E[phi] = Sigma psi    = {mean_statistic(model, psi)}")
    sample = model.sample_exact(psi, 200_000, rng)
    print(f"sample mean (2e5 pts) = {sample.mean(axis=0)}")

    print()
    print("=== Boltzmann machine (d=2, states enumerated) ===")
    model = BoltzmannModel(2)
    psi = np.array([0.5, -0.2, 0.3])
    probs = model.probabilities(psi)
    print(f"states:\n{model.states()}")
    print(f"probabilities sum to {probs.sum():.15f}")
    print(f"E[phi] by enumeration = {mean_statistic(model, psi)}")
    evals = np.linalg.eigvalsh(fisher_information(model, psi))
    print(f"Fisher eigenvalues    = {evals}")

    print()
    print("=== Exponential random graph (3 nodes, 3 possible edges) ===")
    model = ErgmModel(3)
    psi = np.array([0.2, -0.4])
    x = model.states()[-1]
    print(f"full graph {x} has phi = {model.phi_batch(x[None])[0]}  (edges, triangles)")
    print(f"E[phi] = {mean_statistic(model, psi)}")

    print()
    print("=== chi-square divergence grows quadratically near psi* ===")
    model = GaussianMeanModel(2, 0.5)
    star = np.array([0.3, -0.2])
    for eps in (0.4, 0.2, 0.1, 0.05):
        d = chi2_divergence(model, star, star + np.array([eps, 0.0]))
        print(f"  offset {eps:4.2f}: chi2 = {d:.6f}   chi2/eps^2 = {d / eps**2:.4f}")


if __name__ == "__main__":
    main()
