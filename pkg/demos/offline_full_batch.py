"""Offline full-batch CD with a step size certified from computed constants.

The decrease condition mu_tilde > 4 C L^2 is checkable before training:
the strong-convexity and smoothness constants come from a parameter-grid
sweep of the Fisher information, the chain-bias correction from the
exact spectral coefficient of the Gibbs kernel.  With a certified step
the per-epoch error is guaranteed to shrink until it hits the
statistical floor of the fixed dataset.
"""

import numpy as np

from cdfam import (
    BatchSchedule,
    BoltzmannModel,
    BoundConstants,
    CdConfig,
    ParamDomain,
    StepSchedule,
    alpha_sup,
    logz_norms,
    make_kernel,
    offline_cd,
    theory_constants,
)


def main():
    model = BoltzmannModel(3)
    star = np.array([0.2, -0.1, 0.15, 0.1, -0.2, 0.05])
    dom = ParamDomain(np.zeros(6), 0.75)

    tc = theory_constants(model, dom, star, grid_resolution=5)
    sup = alpha_sup(make_kernel(model, "gibbs"), dom, 3, mode="exact")
    print(f"constants over the ball: mu={tc.mu:.5f}  L={tc.L:.5f}  "
          f"sigma={tc.sigma:.4f}  chi={tc.chi:.4f}  alpha={sup.alpha:.4f}")

    constants = BoundConstants(
        mu=tc.mu, L=tc.L, sigma=tc.sigma, chi=tc.chi,
        alpha=sup.alpha, m=16, norm_3=logz_norms(model, dom, grid_resolution=5).norm_3,
    )
    C = 0.9 * constants.mu_tilde / (4.0 * tc.L**2)
    print(f"m=16 gives mu_tilde = {constants.mu_tilde:.5f}; "
          f"certified step C = {C:.5f} (mu_tilde > 4CL^2: "
          f"{constants.mu_tilde > 4 * C * tc.L**2})")

    n = 256
    data = model.sample_exact(star, n, np.random.default_rng(20))
    traj = offline_cd(
        data,
        make_kernel(model, "gibbs"),
        CdConfig(
            m=16,
            schedule=StepSchedule(C, 0.0),
            batching=BatchSchedule.full_batch(),
            domain=dom,
            psi0=np.zeros(6),
            seed=21,
            T=200,
            store="epoch_end",
        ),
    )
    print()
    print(f"full batch, n = {n}, squared distance to psi* at epoch ends:")
    sq = ((traj.iterates - star) ** 2).sum(axis=1)
    for T in (1, 5, 20, 50, 100, 200):
        print(f"  T = {T:>3}: {sq[T - 1]:.5f}")
    print()
    print("the error decreases in T as the certification guarantees; the")
    print("certified step is conservative, so the slowest directions contract")
    print("slowly and the dataset's statistical floor is still far below.")


if __name__ == "__main__":
    main()
