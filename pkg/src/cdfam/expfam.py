"""Unnormalized exponential families with exact small-model oracles.

A model here is a family of probability measures

    p_psi(dx) = exp(psi . phi(x) - log Z(psi)) c(dx),

where ``phi`` maps a point of the sample space to a vector of sufficient
statistics in R^p, ``psi`` is the natural parameter, ``c`` is a fixed
carrier measure and ``log Z`` is the cumulant function.  Its gradient is
the mean statistic E[phi(X)] and its Hessian is the covariance of phi,
which equals the Fisher information in the natural parametrization.

Three concrete families are provided:

* :class:`GaussianMeanModel` -- x in R^d, phi(x) = x, carrier N(0, Sigma)
  with equicorrelated unit-variance Sigma, so p_psi = N(Sigma psi, Sigma).
  All oracles are closed-form ("analytic").
* :class:`BoltzmannModel` -- x in {0,1}^d with singleton and pairwise
  product statistics and counting carrier.  Oracles by full enumeration
  of the 2^d states for d <= 12 ("enumerable").
* :class:`ErgmModel` -- undirected simple graphs on k labelled nodes,
  encoded as edge-indicator vectors, with statistics (edge count,
  triangle count).  Enumerable for k <= 6.

Natural parameters are plain 1-D float arrays of length ``model.p``;
:func:`check_parameter` performs the validation used by every public
operation.  Module-level functions (:func:`phi`, :func:`log_partition`,
:func:`mean_statistic`, :func:`fisher_information`,
:func:`chi2_divergence`, :func:`theory_constants`) validate their inputs
and dispatch to the model oracles.
"""

from __future__ import annotations

import dataclasses
import itertools
import warnings

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ChiSquareOverflowWarning,
    InvalidInputError,
    UnsupportedOracleError,
)

# Largest lattice the constant sweeps will materialize.
MAX_GRID_POINTS = 4_194_304

# float64 exp overflows just above this exponent.
_EXP_OVERFLOW = 709.0

_CHUNK = 65_536


def _as_float_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must have finite entries")
    return arr


def check_parameter(model: "Model", psi) -> np.ndarray:
    """Validate ``psi`` as a natural parameter for ``model``.

    Returns the parameter as a float array of shape ``(model.p,)``.
    """
    arr = _as_float_vector(psi, "psi")
    if arr.shape[0] != model.p:
        raise InvalidInputError(
            f"psi has dimension {arr.shape[0]}, model expects {model.p}"
        )
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class ParamDomain:
    """Closed Euclidean ball of admissible natural parameters.

    ``center`` is a point of R^p and ``radius`` is strictly positive.
    """

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = _as_float_vector(self.center, "center")
        center.flags.writeable = False
        object.__setattr__(self, "center", center)
        radius = float(self.radius)
        if not np.isfinite(radius) or radius <= 0.0:
            raise InvalidInputError(f"radius must be positive, got {radius}")
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, psi, tol: float = 0.0) -> bool:
        psi = np.asarray(psi, dtype=float)
        return bool(np.linalg.norm(psi - self.center) <= self.radius + tol)


@dataclasses.dataclass(frozen=True)
class SampleSpace:
    """Shape of the points a model operates on.

    ``kind`` is ``"continuous"``, ``"binary"`` or ``"graph"``; ``dim`` is
    the length of a state vector (edge-slot count for graphs).
    """

    kind: str
    dim: int


@dataclasses.dataclass(frozen=True)
class TheoryConstants:
    """Worst-case curvature and divergence constants over a parameter ball.

    ``mu``/``L`` bound the cumulant Hessian spectrum from below/above,
    ``sigma`` is the largest root-trace of that Hessian, and ``chi`` is
    the largest ratio sqrt(chi2(p_ref, p_psi)) / ||psi - psi_ref||.
    """

    mu: float
    L: float
    sigma: float
    chi: float


class Model:
    """Base class for unnormalized exponential families.

    Subclasses set ``p`` (statistic dimension), ``sample_space`` and
    ``exactness`` (one of ``"analytic"``, ``"enumerable"``, ``"none"``)
    and implement ``phi_batch``.  Models with ``exactness != "none"``
    implement the cumulant oracles; enumerable models additionally expose
    ``states`` and ``phi_table``.
    """

    p: int
    sample_space: SampleSpace
    exactness: str

    # -- statistics -------------------------------------------------------

    def phi_batch(self, X: np.ndarray) -> np.ndarray:
        """Sufficient statistics of ``X`` with shape ``(..., state_dim)``.

        No validation; returns shape ``(..., p)`` float64.
        """
        raise NotImplementedError

    def validate_point(self, x) -> np.ndarray:
        """Check one point of the sample space, returning it as an array."""
        x = np.asarray(x)
        if x.ndim != 1 or x.shape[0] != self.sample_space.dim:
            raise InvalidInputError(
                f"point has shape {x.shape}, expected ({self.sample_space.dim},)"
            )
        if self.sample_space.kind == "continuous":
            x = x.astype(float)
            if not np.all(np.isfinite(x)):
                raise InvalidInputError("point must have finite entries")
        else:
            vals = np.asarray(x)
            if not np.isin(vals, (0, 1)).all():
                raise InvalidInputError("binary state entries must be 0 or 1")
            x = vals.astype(np.uint8)
        return x

    # -- exact oracles ----------------------------------------------------

    def _require_oracle(self):
        if self.exactness == "none":
            raise UnsupportedOracleError(
                f"{type(self).__name__} has no exact oracle at this size"
            )

    def log_partition_many(self, Psi: np.ndarray) -> np.ndarray:
        """log Z at each row of ``Psi`` (shape ``(G, p)``)."""
        raise NotImplementedError

    def mean_statistic(self, psi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fisher_information_many(self, Psi: np.ndarray) -> np.ndarray:
        """Cumulant Hessians at each row of ``Psi``, shape ``(G, p, p)``."""
        raise NotImplementedError

    def coordinate_cumulants(self, Psi: np.ndarray) -> np.ndarray:
        """Coordinatewise cumulants of phi, orders 1..6.

        Shape ``(G, 6, p)``; row j holds the order-(j+1) cumulant of
        phi_i(X) under p_psi for each coordinate i.
        """
        raise NotImplementedError

    def sample_exact(self, psi: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` independent draws from p_psi, shape ``(size, state_dim)``."""
        raise NotImplementedError

    # -- enumeration (discrete models only) -------------------------------

    def states(self) -> np.ndarray:
        raise UnsupportedOracleError(f"{type(self).__name__} is not enumerable")

    def phi_table(self) -> np.ndarray:
        raise UnsupportedOracleError(f"{type(self).__name__} is not enumerable")

    def probabilities(self, psi: np.ndarray) -> np.ndarray:
        """Probability of every enumerated state under p_psi."""
        logits = self.phi_table() @ psi
        logits -= logits.max()
        w = np.exp(logits)
        return w / w.sum()

    def state_index(self, x: np.ndarray) -> int:
        """Row index of ``x`` in ``states()`` (bit i of the index is x[i])."""
        x = np.asarray(x).astype(np.int64)
        return int((x << np.arange(x.shape[0])).sum())


def _enumerate_binary(dim: int) -> np.ndarray:
    idx = np.arange(1 << dim, dtype=np.int64)
    return ((idx[:, None] >> np.arange(dim)) & 1).astype(np.uint8)


class _EnumerableMixin:
    """Shared enumeration-based oracles; relies on states()/phi_table()."""

    def log_partition_many(self, Psi):
        return logsumexp(Psi @ self.phi_table().T, axis=-1)

    def mean_statistic(self, psi):
        return self.probabilities(psi) @ self.phi_table()

    def fisher_information_many(self, Psi):
        Psi = np.atleast_2d(Psi)
        E = self.phi_table()
        out = np.empty((Psi.shape[0], self.p, self.p))
        for lo in range(0, Psi.shape[0], _CHUNK):
            W = _softmax_rows(Psi[lo:lo + _CHUNK] @ E.T)
            means = W @ E
            M2 = np.einsum("gs,si,sj->gij", W, E, E, optimize=True)
            cov = M2 - means[:, :, None] * means[:, None, :]
            out[lo:lo + _CHUNK] = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        return out

    def coordinate_cumulants(self, Psi):
        Psi = np.atleast_2d(Psi)
        E = self.phi_table()
        out = np.empty((Psi.shape[0], 6, self.p))
        for lo in range(0, Psi.shape[0], _CHUNK):
            W = _softmax_rows(Psi[lo:lo + _CHUNK] @ E.T)
            means = W @ E
            X = E[None, :, :] - means[:, None, :]
            pw = X * X
            mu2 = np.einsum("gs,gsi->gi", W, pw)
            pw = pw * X
            mu3 = np.einsum("gs,gsi->gi", W, pw)
            pw = pw * X
            mu4 = np.einsum("gs,gsi->gi", W, pw)
            pw = pw * X
            mu5 = np.einsum("gs,gsi->gi", W, pw)
            pw = pw * X
            mu6 = np.einsum("gs,gsi->gi", W, pw)
            blk = out[lo:lo + _CHUNK]
            blk[:, 0] = means
            blk[:, 1] = mu2
            blk[:, 2] = mu3
            blk[:, 3] = mu4 - 3.0 * mu2 ** 2
            blk[:, 4] = mu5 - 10.0 * mu3 * mu2
            blk[:, 5] = mu6 - 15.0 * mu4 * mu2 - 10.0 * mu3 ** 2 + 30.0 * mu2 ** 3
        return out

    def sample_exact(self, psi, size, rng):
        size = int(size)
        if size < 0:
            raise InvalidInputError("size must be nonnegative")
        cum = np.cumsum(self.probabilities(psi))
        idx = np.searchsorted(cum, rng.random(size), side="right")
        idx = np.minimum(idx, cum.shape[0] - 1)
        return self.states()[idx]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


@dataclasses.dataclass(frozen=True, eq=False)
class GaussianMeanModel(Model):
    """Gaussian location family in natural form.

    The carrier is N(0, Sigma) with Sigma the equicorrelation matrix
    (unit diagonal, off-diagonal ``rho``), so p_psi = N(Sigma psi, Sigma),
    phi(x) = x, log Z(psi) = psi . Sigma psi / 2 and the Fisher
    information is Sigma at every psi.
    """

    d: int = 2
    rho: float = 0.0

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise InvalidInputError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "d", d)
        rho = float(self.rho)
        sigma = (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))
        if np.linalg.eigvalsh(sigma).min() <= 1e-12:
            raise InvalidInputError(
                f"equicorrelation rho={rho} is not positive definite at d={d}"
            )
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "p", d)
        object.__setattr__(self, "sample_space", SampleSpace("continuous", d))
        object.__setattr__(self, "exactness", "analytic")
        object.__setattr__(self, "sigma_matrix", sigma)
        object.__setattr__(self, "_chol", np.linalg.cholesky(sigma))
        # Per-coordinate conditional law given the rest: regression
        # coefficients against the centered remaining coordinates.
        coef = np.zeros((d, d))
        csd = np.empty(d)
        for i in range(d):
            rest = [j for j in range(d) if j != i]
            if rest:
                b = np.linalg.solve(sigma[np.ix_(rest, rest)], sigma[rest, i])
                coef[i, rest] = b
                var = sigma[i, i] - sigma[i, rest] @ b
            else:
                var = sigma[i, i]
            csd[i] = np.sqrt(var)
        coef.flags.writeable = False
        csd.flags.writeable = False
        object.__setattr__(self, "cond_coef", coef)
        object.__setattr__(self, "cond_sd", csd)

    def phi_batch(self, X):
        return np.asarray(X, dtype=float)

    def log_partition_many(self, Psi):
        Psi = np.asarray(Psi, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", Psi, self.sigma_matrix, Psi)

    def mean_statistic(self, psi):
        return self.sigma_matrix @ psi

    def fisher_information_many(self, Psi):
        Psi = np.atleast_2d(Psi)
        return np.broadcast_to(self.sigma_matrix, (Psi.shape[0], self.p, self.p)).copy()

    def coordinate_cumulants(self, Psi):
        Psi = np.atleast_2d(Psi)
        out = np.zeros((Psi.shape[0], 6, self.p))
        out[:, 0] = Psi @ self.sigma_matrix
        out[:, 1] = np.diag(self.sigma_matrix)
        return out

    def sample_exact(self, psi, size, rng):
        size = int(size)
        if size < 0:
            raise InvalidInputError("size must be nonnegative")
        mean = self.sigma_matrix @ psi
        return mean + rng.standard_normal((size, self.d)) @ self._chol.T


def _pair_index_matrix(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = np.array(list(itertools.combinations(range(d), 2)), dtype=np.int64)
    pairs = pairs.reshape(-1, 2)
    pim = np.zeros((d, d), dtype=np.int64)
    for k, (i, j) in enumerate(pairs):
        pim[i, j] = pim[j, i] = d + k
    return pairs[:, 0], pairs[:, 1], pim


@dataclasses.dataclass(frozen=True, eq=False)
class BoltzmannModel(_EnumerableMixin, Model):
    """Fully-connected binary pairwise model (Boltzmann machine).

    States are x in {0,1}^d; statistics are the d singletons x_i followed
    by the d(d-1)/2 products x_i x_j for i < j in lexicographic order,
    with counting carrier.  Enumerable up to d = 12.
    """

    d: int = 2

    def __post_init__(self):
        d = int(self.d)
        if d < 1:
            raise InvalidInputError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p", d + d * (d - 1) // 2)
        object.__setattr__(self, "sample_space", SampleSpace("binary", d))
        object.__setattr__(self, "exactness", "enumerable" if d <= 12 else "none")
        pi, pj, pim = _pair_index_matrix(d)
        object.__setattr__(self, "pair_i", pi)
        object.__setattr__(self, "pair_j", pj)
        object.__setattr__(self, "pair_index", pim)
        if self.exactness == "enumerable":
            st = _enumerate_binary(d)
            tbl = self.phi_batch(st)
            st.flags.writeable = False
            tbl.flags.writeable = False
            object.__setattr__(self, "_states", st)
            object.__setattr__(self, "_phi_table", tbl)

    def phi_batch(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (self.p,))
        out[..., : self.d] = X
        out[..., self.d:] = X[..., self.pair_i] * X[..., self.pair_j]
        return out

    def states(self):
        self._require_oracle()
        return self._states

    def phi_table(self):
        self._require_oracle()
        return self._phi_table


def _edge_slots(k: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.array(list(itertools.combinations(range(k), 2)), dtype=np.int64)
    return pairs[:, 0], pairs[:, 1]


@dataclasses.dataclass(frozen=True, eq=False)
class ErgmModel(_EnumerableMixin, Model):
    """Exponential random graph model with edge and triangle statistics.

    Graphs on ``k`` labelled nodes are encoded as indicator vectors over
    the k(k-1)/2 node pairs in lexicographic order; phi(g) = (number of
    edges, number of triangles).  Enumerable up to k = 6.
    """

    k: int = 3

    def __post_init__(self):
        k = int(self.k)
        if k < 3:
            raise InvalidInputError(f"k must be >= 3, got {self.k}")
        object.__setattr__(self, "k", k)
        n_slots = k * (k - 1) // 2
        object.__setattr__(self, "n_slots", n_slots)
        object.__setattr__(self, "p", 2)
        object.__setattr__(self, "sample_space", SampleSpace("graph", n_slots))
        object.__setattr__(self, "exactness", "enumerable" if k <= 6 else "none")
        ea, eb = _edge_slots(k)
        slot = {(int(a), int(b)): s for s, (a, b) in enumerate(zip(ea, eb))}
        triples = np.array(
            [
                (slot[(a, b)], slot[(a, c)], slot[(b, c)])
                for a, b, c in itertools.combinations(range(k), 3)
            ],
            dtype=np.int64,
        )
        object.__setattr__(self, "triangle_slots", triples)
        # For each edge slot (a, b): the slot pairs joining a and b to
        # every third node, used for common-neighbor counts.
        cn_a = np.empty((n_slots, k - 2), dtype=np.int64)
        cn_b = np.empty((n_slots, k - 2), dtype=np.int64)
        for s, (a, b) in enumerate(zip(ea, eb)):
            others = [c for c in range(k) if c != a and c != b]
            cn_a[s] = [slot[tuple(sorted((a, c)))] for c in others]
            cn_b[s] = [slot[tuple(sorted((b, c)))] for c in others]
        object.__setattr__(self, "cn_slots_a", cn_a)
        object.__setattr__(self, "cn_slots_b", cn_b)
        if self.exactness == "enumerable":
            st = _enumerate_binary(n_slots)
            tbl = self.phi_batch(st)
            st.flags.writeable = False
            tbl.flags.writeable = False
            object.__setattr__(self, "_states", st)
            object.__setattr__(self, "_phi_table", tbl)

    def phi_batch(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (2,))
        out[..., 0] = X.sum(axis=-1)
        t = self.triangle_slots
        out[..., 1] = (X[..., t[:, 0]] * X[..., t[:, 1]] * X[..., t[:, 2]]).sum(axis=-1)
        return out

    def states(self):
        self._require_oracle()
        return self._states

    def phi_table(self):
        self._require_oracle()
        return self._phi_table


# ---------------------------------------------------------------------------
# module-level operations


def phi(model: Model, x) -> np.ndarray:
    """Sufficient statistic of a single validated point."""
    x = model.validate_point(x)
    return model.phi_batch(x[None])[0]


def log_partition(model: Model, psi) -> float:
    """Cumulant function log Z(psi)."""
    psi = check_parameter(model, psi)
    model._require_oracle()
    return float(model.log_partition_many(psi[None])[0])


def mean_statistic(model: Model, psi) -> np.ndarray:
    """E[phi(X)] under p_psi, the gradient of log Z."""
    psi = check_parameter(model, psi)
    model._require_oracle()
    return model.mean_statistic(psi)


def fisher_information(model: Model, psi) -> np.ndarray:
    """Cov[phi(X)] under p_psi, the Hessian of log Z."""
    psi = check_parameter(model, psi)
    model._require_oracle()
    return model.fisher_information_many(psi[None])[0]


def _chi2_exponents(model: Model, Psi: np.ndarray, psi_ref: np.ndarray) -> np.ndarray:
    # chi2(p_ref, p_psi) = exp(logZ(2 psi - ref) - 2 logZ(psi) + logZ(ref)) - 1
    a = model.log_partition_many(2.0 * Psi - psi_ref)
    b = model.log_partition_many(Psi)
    c = model.log_partition_many(psi_ref[None])[0]
    return a - 2.0 * b + c


def chi2_divergence(model: Model, psi_ref, psi) -> float:
    """chi-square divergence chi2(p_{psi_ref}, p_psi).

    Returns +inf with a :class:`ChiSquareOverflowWarning` when the value
    exceeds float64 range.
    """
    psi_ref = check_parameter(model, psi_ref)
    psi = check_parameter(model, psi)
    model._require_oracle()
    e = float(_chi2_exponents(model, psi[None], psi_ref)[0])
    if e > _EXP_OVERFLOW:
        warnings.warn(
            f"chi-square exponent {e:.3g} exceeds float64 range; returning inf",
            ChiSquareOverflowWarning,
            stacklevel=2,
        )
        return float("inf")
    return max(float(np.expm1(e)), 0.0)


def domain_grid(
    domain: ParamDomain,
    grid_resolution: int,
    extra_points: tuple = (),
) -> np.ndarray:
    """Deterministic sweep lattice over a parameter ball.

    An axis-aligned lattice with ``grid_resolution`` points per axis spans
    the bounding cube of the ball; points outside the ball are dropped and
    the ball center plus any ``extra_points`` are appended.
    """
    res = int(grid_resolution)
    if res < 2:
        raise InvalidInputError(f"grid_resolution must be >= 2, got {grid_resolution}")
    p = domain.dim
    if res ** p > MAX_GRID_POINTS:
        raise InvalidInputError(
            f"grid of {res}^{p} points exceeds the cap of {MAX_GRID_POINTS}; "
            "lower grid_resolution"
        )
    axes = [
        np.linspace(domain.center[i] - domain.radius, domain.center[i] + domain.radius, res)
        for i in range(p)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    dist = np.linalg.norm(pts - domain.center, axis=1)
    pts = pts[dist <= domain.radius * (1.0 + 1e-12)]
    tail = [domain.center[None]]
    tail += [_as_float_vector(q, "extra point")[None] for q in extra_points]
    return np.concatenate([pts] + tail, axis=0)


def theory_constants(
    model: Model,
    domain: ParamDomain,
    psi_star,
    grid_resolution: int = 9,
) -> TheoryConstants:
    """Curvature and chi-square constants swept over a parameter ball.

    ``mu`` and ``L`` are the extreme eigenvalues of the cumulant Hessian
    over the sweep lattice, ``sigma`` the largest root-trace, and ``chi``
    the largest sqrt(chi2(p_{psi_star}, p_psi)) / ||psi - psi_star||
    with psi = psi_star excluded.  The lattice always contains the ball
    center and psi_star.

    Lattice points within 1e-7 radius of psi_star are skipped in the
    ``chi`` sweep: there the exponent of the divergence cancels to float
    noise and the ratio is meaningless.
    """
    psi_star = check_parameter(model, psi_star)
    if domain.dim != model.p:
        raise InvalidInputError(
            f"domain dimension {domain.dim} does not match model.p = {model.p}"
        )
    model._require_oracle()
    grid = domain_grid(domain, grid_resolution, extra_points=(psi_star,))

    mu = np.inf
    L = -np.inf
    sigma_sq = -np.inf
    for lo in range(0, grid.shape[0], _CHUNK):
        fish = model.fisher_information_many(grid[lo:lo + _CHUNK])
        eig = np.linalg.eigvalsh(fish)
        mu = min(mu, float(eig[:, 0].min()))
        L = max(L, float(eig[:, -1].max()))
        sigma_sq = max(sigma_sq, float(np.trace(fish, axis1=1, axis2=2).max()))
    sigma = float(np.sqrt(sigma_sq))

    dist = np.linalg.norm(grid - psi_star, axis=1)
    keep = dist > 1e-7 * domain.radius
    exponents = _chi2_exponents(model, grid[keep], psi_star)
    if np.any(exponents > _EXP_OVERFLOW):
        warnings.warn(
            "chi-square overflowed on the sweep lattice; chi constant is inf",
            ChiSquareOverflowWarning,
            stacklevel=2,
        )
        chi = float("inf")
    else:
        chi2 = np.maximum(np.expm1(exponents), 0.0)
        chi = float(np.max(np.sqrt(chi2) / dist[keep]))

    assert mu <= L + 1e-12
    assert sigma_sq <= model.p * L + 1e-9 * max(1.0, abs(L))
    return TheoryConstants(mu=mu, L=L, sigma=sigma, chi=chi)
