"""Closed-form error bounds for projected CD stochastic approximation.

The bounds are driven by a small set of constants measured over the
parameter ball Psi:

* ``mu``, ``L``: extreme eigenvalues of the cumulant Hessian over Psi;
* ``sigma``: largest root-trace of that Hessian;
* ``chi``: worst-case ratio sqrt(chi2(p_{psi*}, p_psi))/||psi - psi*||;
* ``alpha``: restricted spectral coefficient of the sampling kernel;
* derivative norms of the cumulant function (:func:`logz_norms`).

A chain of length m perturbs them into the effective constants

    mu_tilde       = mu - alpha^m sigma chi
    L_tilde        = sqrt(L^2 + alpha^(m/2))
    sigma_tilde_sq = sigma^2 (2 + 2 alpha^(2m))
                     + alpha^(m/2) norm3^2 chi^2

(:class:`BoundConstants`).  Positive ``mu_tilde`` certifies that the
chain is long enough for the CD field to remain one-point dissipative;
every bound refuses to evaluate otherwise.

:func:`online_bound` bounds the expected squared error of the online
driver after n single-point updates with steps C t^(-beta).
:func:`offline_bound` bounds the ROOT expected squared error after T
epochs of minibatch updates (N updates per epoch); its transient
prefactors are exposed separately as :func:`offline_transients`.  All
formulas use the truncated power integral

    varphi_gamma(t) = (t^gamma - 1)/gamma   (gamma != 0),   log t at 0.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from .errors import ConditionViolatedError, InvalidInputError
from .expfam import Model, ParamDomain, TheoryConstants, domain_grid


def varphi(gamma: float, t):
    """Truncated power integral (t^gamma - 1)/gamma, log t at gamma = 0.

    ``t`` may be a scalar or array, strictly positive.
    """
    gamma = float(gamma)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise InvalidInputError("varphi requires t > 0")
    if gamma == 0.0:
        out = np.log(t)
    else:
        with np.errstate(over="ignore"):
            out = (t**gamma - 1.0) / gamma
    return float(out) if out.ndim == 0 else out


class LogZNorms(NamedTuple):
    """Worst-case derivative norms of the cumulant function over a ball."""

    norm_1: float
    norm_2: float
    norm_3: float


def logz_norms(model: Model, domain: ParamDomain, grid_resolution: int = 9) -> LogZNorms:
    """Sweep the cumulant-derivative norms over a parameter lattice.

    Both norms are suprema over the lattice of coordinatewise cumulant
    combinations (kappa_k,i is the order-k cumulant of phi_i):

    * ``norm_1``: sum_i sqrt(4 k1^2 k2 + 2 k2^2 + 4 k1 k3 + k4), the
      expression under the root being the variance of phi_i^2;
    * ``norm_2``: sum_i ((15 k2^3 + 10 k3^2 + 15 k2 k4 + k6) k2)^(1/4)
      + 2 |k1| sqrt(k2), the quartic root running over the centered
      sixth moment times the variance;
    * ``norm_3`` = 2 max(norm_1, norm_2).

    Tiny negative values of the two nonnegative inner expressions are
    clipped before taking roots.
    """
    if domain.dim != model.p:
        raise InvalidInputError(
            f"domain dimension {domain.dim} does not match model.p = {model.p}"
        )
    model._require_oracle()
    grid = domain_grid(domain, grid_resolution)
    kap = model.coordinate_cumulants(grid)
    k1, k2, k3, k4 = kap[:, 0], kap[:, 1], kap[:, 2], kap[:, 3]
    k6 = kap[:, 5]
    var_sq = 4.0 * k1**2 * k2 + 2.0 * k2**2 + 4.0 * k1 * k3 + k4
    norm_1 = float(np.sqrt(np.maximum(var_sq, 0.0)).sum(axis=1).max())
    m6 = 15.0 * k2**3 + 10.0 * k3**2 + 15.0 * k2 * k4 + k6
    term = np.maximum(m6 * k2, 0.0) ** 0.25 + 2.0 * np.abs(k1) * np.sqrt(np.maximum(k2, 0.0))
    norm_2 = float(term.sum(axis=1).max())
    return LogZNorms(norm_1, norm_2, 2.0 * max(norm_1, norm_2))


@dataclasses.dataclass(frozen=True)
class BoundConstants:
    """Measured constants plus the chain length m they certify.

    ``norm_3`` is the third derivative norm of the cumulant function
    (:func:`logz_norms`); ``alpha`` the kernel's restricted spectral
    coefficient over the ball.
    """

    mu: float
    L: float
    sigma: float
    chi: float
    alpha: float
    m: int
    norm_3: float

    def __post_init__(self):
        for name in ("mu", "L", "sigma", "chi", "norm_3"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0.0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        alpha = float(self.alpha)
        if not 0.0 <= alpha <= 1.0:
            raise InvalidInputError(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "alpha", alpha)
        m = int(self.m)
        if m < 1:
            raise InvalidInputError(f"m must be >= 1, got {self.m}")
        object.__setattr__(self, "m", m)

    @classmethod
    def from_sweeps(cls, theory: TheoryConstants, alpha: float, m: int, norms: LogZNorms):
        return cls(
            mu=theory.mu,
            L=theory.L,
            sigma=theory.sigma,
            chi=theory.chi,
            alpha=alpha,
            m=m,
            norm_3=norms.norm_3,
        )

    @property
    def mu_tilde(self) -> float:
        return self.mu - self.alpha**self.m * self.sigma * self.chi

    @property
    def L_tilde(self) -> float:
        return math.sqrt(self.L**2 + self.alpha ** (self.m / 2.0))

    @property
    def sigma_tilde_sq(self) -> float:
        return (
            self.sigma**2 * (2.0 + 2.0 * self.alpha ** (2 * self.m))
            + self.alpha ** (self.m / 2.0) * self.norm_3**2 * self.chi**2
        )

    def require_dissipative(self):
        if not self.mu_tilde > 0.0:
            raise ConditionViolatedError(
                f"mu_tilde = mu - alpha^m sigma chi = {self.mu_tilde:.6g} <= 0; "
                "increase the chain length m",
                inequality="mu - alpha^m * sigma * chi > 0",
            )

    def min_chain_length(self) -> int:
        """Smallest m with positive ``mu_tilde`` for these sweeps.

        Requires alpha < 1 and mu > 0; alpha = 0 gives 1.
        """
        if not self.mu > 0.0:
            raise ConditionViolatedError(
                "mu <= 0: no chain length can certify dissipativity",
                inequality="mu > 0",
            )
        if self.alpha == 0.0 or self.sigma * self.chi == 0.0:
            return 1
        if self.alpha >= 1.0:
            raise ConditionViolatedError(
                "alpha = 1: the kernel does not mix",
                inequality="alpha < 1",
            )
        thresh = self.mu / (self.sigma * self.chi)
        if thresh > 1.0:
            return 1
        return max(1, math.floor(math.log(thresh) / math.log(self.alpha)) + 1)


def _check_step(C: float, beta: float):
    if not (math.isfinite(C) and C > 0.0):
        raise InvalidInputError(f"C must be positive, got {C}")
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError(f"beta must lie in [0, 1], got {beta}")


def online_bound_terms(
    constants: BoundConstants, delta0: float, n: int, C: float, beta: float
) -> tuple[float, float]:
    """Transient and stationary addends of :func:`online_bound`."""
    n = int(n)
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    delta0 = float(delta0)
    if delta0 < 0.0:
        raise InvalidInputError(f"delta0 must be >= 0, got {delta0}")
    _check_step(C, beta)
    constants.require_dissipative()
    mu_t = constants.mu_tilde
    L_t = constants.L_tilde
    s2 = constants.sigma_tilde_sq
    start = delta0 + s2 / L_t**2
    # products of exponentials are combined into one exponent so float
    # overflow saturates to inf instead of forming inf * 0
    with np.errstate(over="ignore"):
        if start == 0.0:
            # start = 0 forces sigma_tilde_sq = 0, so both terms vanish
            return 0.0, 0.0
        if beta < 1.0:
            exponent = 4.0 * L_t * C * C * varphi(1.0 - 2.0 * beta, n) - (
                mu_t * C / 4.0
            ) * n ** (1.0 - beta)
            transient = 2.0 * float(np.exp(exponent)) * start
            stationary = 4.0 * C * s2 / (mu_t * n**beta)
        else:
            exponent = 2.0 * L_t**2 * C * C - mu_t * C * math.log(n)
            transient = float(np.exp(exponent)) * start
            stationary = (
                2.0 * s2 * C * C * varphi(mu_t * C / 2.0 - 1.0, n) / n ** (mu_t * C / 2.0)
            )
    return float(transient), float(stationary)


def online_bound(
    constants: BoundConstants, delta0: float, n: int, C: float, beta: float
) -> float:
    """Bound on the expected squared error after n online updates.

    ``delta0`` is the squared distance of the start to the target; steps
    are C t^(-beta).  Raises :class:`ConditionViolatedError` when the
    constants fail ``mu_tilde > 0``.  The bound may be astronomically
    loose (it is a worst-case certificate), but it is finite whenever the
    exponentials stay in float range; overflow saturates to inf.
    """
    transient, stationary = online_bound_terms(constants, delta0, n, C, beta)
    return transient + stationary


def offline_transients(
    mu_tilde: float, L: float, C: float, beta: float, T: int, N: int
) -> tuple[float, float]:
    """Epoch-level transient prefactors of the offline bound.

    Both are exponentials in the accumulated step mass over T epochs of
    N updates; T = 0 gives (e, 1).
    """
    mu_tilde = float(mu_tilde)
    L = float(L)
    C = float(C)
    if mu_tilde <= 0.0 or L <= 0.0 or C <= 0.0:
        raise InvalidInputError("mu_tilde, L and C must be positive")
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError(f"beta must lie in [0, 1], got {beta}")
    T = int(T)
    if T < 0:
        raise InvalidInputError(f"T must be >= 0, got {T}")
    N = int(N)
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    v1 = varphi(1.0 - beta, T + 1)
    v2 = varphi(1.0 - 2.0 * beta, T + 1)
    with np.errstate(over="ignore"):
        e1 = float(np.exp(1.0 - N * mu_tilde * C * v1 + (N * L * L * C * C / 2.0) * v2))
        e2 = float(np.exp(-(N * mu_tilde * C / 2.0) * v1 + 2.0 * N * L * L * C * C * v2))
    return e1, e2


def offline_bound(
    constants: BoundConstants,
    delta00: float,
    sigma_offline: float,
    n: int,
    B: int,
    T: int,
    C: float,
    beta: float,
) -> float:
    """Bound on the ROOT expected squared error after T offline epochs.

    ``delta00`` is the squared start distance, ``sigma_offline`` the
    per-update noise scale of size-B minibatches, and N = ceil(n/B) the
    updates per epoch.  Zero noise and a zero start give exactly zero.
    """
    n = int(n)
    B = int(B)
    T = int(T)
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if B < 1 or B > n:
        raise InvalidInputError(f"B must lie in [1, n], got {B}")
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    delta00 = float(delta00)
    sigma_offline = float(sigma_offline)
    if delta00 < 0.0 or sigma_offline < 0.0:
        raise InvalidInputError("delta00 and sigma_offline must be >= 0")
    _check_step(C, beta)
    constants.require_dissipative()
    mu_t = constants.mu_tilde
    L = constants.L
    N = -(-n // B)
    E1, E2 = offline_transients(mu_t, L, C, beta, T, N)

    total = 0.0
    if delta00 > 0.0:
        total += E1 * math.sqrt(delta00)
    if sigma_offline > 0.0:
        with np.errstate(over="ignore"):
            if beta == 0.5:
                noise = 4.0 * float(np.exp(mu_t * C * N / math.sqrt(T + 1.0))) / (
                    mu_t * C
                ) + 2.0 * N * (1.0 + mu_t * C) ** (N - 1) * varphi(
                    0.5 - L * L * C * C * N, T + 1
                ) * E2
            elif beta == 1.0:
                noise = 4.0 / (mu_t * C) + 3.0 * N * (1.0 + L * L * C * C / 2.0) ** (
                    N - 1
                ) * float(np.exp(2.0 * L * L * C * C * N)) * math.log(T + 1.0) / (
                    T + 1.0
                ) ** (mu_t * C * N / 2.0)
            else:
                noise = 2.0 ** (2.0 * beta + 1.0) / (mu_t * C) * float(
                    np.exp((mu_t * C / (2.0 * (1.0 - beta))) * N / (T + 1.0) ** beta)
                ) + 3.0**beta * (1.0 + mu_t * C) ** (N - 1) * (T + 2.0) ** beta / (
                    L * L * C * C
                ) * E2
        total += C * sigma_offline * noise
    return float(total)


def offline_noise_scale(epsilon: float, sigma: float, kappa: float, B: int) -> float:
    """Per-update noise scale of size-B minibatches: eps + (5 sigma + 5 kappa)/sqrt(B).

    ``kappa`` is a bound on the chain-start coupling term; ``epsilon``
    covers tail truncation and may be zero when the caller absorbs it.
    """
    epsilon = float(epsilon)
    sigma = float(sigma)
    kappa = float(kappa)
    B = int(B)
    if epsilon < 0.0 or sigma < 0.0 or kappa < 0.0:
        raise InvalidInputError("epsilon, sigma and kappa must be >= 0")
    if B < 1:
        raise InvalidInputError(f"B must be >= 1, got {B}")
    return epsilon + (5.0 * sigma + 5.0 * kappa) / math.sqrt(B)
