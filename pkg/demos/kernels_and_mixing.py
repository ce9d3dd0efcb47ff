"""Markov kernels, their exact oracles, and contraction coefficients.

The CD drivers only ever call ``kernel.step``; everything else here
(transition matrices, stationarity checks, spectral coefficients) exists
so that small models can certify what the samplers do.
"""

import numpy as np

from cdfam import (
    BoltzmannModel,
    GaussianMeanModel,
    ParamDomain,
    alpha_sup,
    m_schedule,
    make_kernel,
    restricted_alpha,
    transition_matrix,
)


def main():
    model = BoltzmannModel(2)
    kernel = make_kernel(model, "gibbs")
    psi = np.array([0.6, -0.3, 0.4])

    print("=== random-scan Gibbs on the 2-spin Boltzmann machine ===")
    tm = transition_matrix(kernel, psi)
    pi = model.probabilities(psi)
    print(f"stationarity residual |pi P - pi|_inf = {np.abs(pi @ tm.matrix - pi).max():.2e}")

    # the single-site statistic mixes at exactly 1/2 per step when psi=0:
    # each step resamples the watched coordinate with probability 1/2
    val = restricted_alpha(kernel, np.zeros(3), lambda X: X[:, 0], mode="exact")
    print(f"restricted alpha, f = x1, psi = 0:   {val:.12f}")

    print()
    print("=== worst case over statistics and parameters ===")
    dom = ParamDomain(np.zeros(3), 1.0)
    sup = alpha_sup(kernel, dom, 3, steps=1, mode="exact")
    print(f"alpha_sup (exact) = {sup.alpha:.4f}  attained at {sup.f_label}, psi = {sup.psi}")

    gauss = GaussianMeanModel(2, 0.5)
    gsup = alpha_sup(
        make_kernel(gauss, "gibbs"),
        ParamDomain(np.zeros(2), 2.0),
        5,
        mode="mc",
        n_outer=20_000,
        rng=np.random.default_rng(314),
    )
    print(f"alpha_sup (Gaussian, MC) = {gsup.alpha:.4f} +- {gsup.stderr:.4f}")

    print()
    print("=== recommended chain length grows logarithmically in n ===")
    for n in (100, 1_000, 10_000, 100_000):
        print(f"  n = {n:>6}: m_schedule(n, beta=0.7, alpha={gsup.alpha:.3f}) = "
              f"{m_schedule(n, 0.7, gsup.alpha)}")


if __name__ == "__main__":
    main()
