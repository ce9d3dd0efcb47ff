"""Contrastive divergence stochastic-approximation drivers.

The CD update replaces the intractable model expectation in the
cross-entropy gradient with statistics of short Markov chains started at
the data.  For a batch x_1..x_B and chains X~_i obtained by m kernel
steps from x_i under the current parameter,

    h = (1/B) sum_i (phi(X~_i) - phi(x_i)),

whose conditional expectation approaches the cross-entropy gradient
-mean phi(data) + E_psi[phi] as m grows.  Parameters evolve by

    psi <- Proj_Psi(psi - eta_t h)

with Proj_Psi the Euclidean projection onto a parameter ball and
eta_t = C t^(-beta) a polynomial step schedule.

Two drivers are provided.  :func:`online_cd` consumes each data point
exactly once, in order, one update per point (data may be any indexable
sequence; point t is fetched only at update t).  :func:`offline_cd`
makes T epochs over a dataset with one of four batching rules: the full
batch every update, independent uniform size-B subsets, or a fresh
uniform reshuffle partitioned into consecutive batches each epoch (the
final shorter batch is averaged over its true size).  The step size is
constant within an epoch.  With B = n all three non-online rules
coincide: the only size-n subset is the whole dataset, so no batch
randomness is consumed and the trajectories agree bitwise for equal
seeds.

Randomness: each run owns one ``numpy.random.Generator`` seeded from the
config.  Draws occur in a fixed documented order (per epoch: the
reshuffle permutation if any; per update: the subset draw if any, then
the kernel's per-step draws), so equal seeds give bitwise equal
trajectories.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import InvalidInputError
from .expfam import Model, ParamDomain, check_parameter
from .kernels import MarkovKernel, _as_generator

_ONLINE = "online"
_FULL = "full-batch"
_WITH_REPLACEMENT = "with-replacement"
_RESHUFFLE = "reshuffle"


@dataclasses.dataclass(frozen=True)
class StepSchedule:
    """Polynomial step sizes eta_t = C t^(-beta), t = 1, 2, ...

    C = 0 is allowed as a degenerate schedule (the iterate never moves).
    """

    C: float
    beta: float

    def __post_init__(self):
        C = float(self.C)
        beta = float(self.beta)
        if not math.isfinite(C) or C < 0.0:
            raise InvalidInputError(f"C must be >= 0 and finite, got {self.C}")
        if not 0.0 <= beta <= 1.0:
            raise InvalidInputError(f"beta must lie in [0, 1], got {self.beta}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", beta)

    def rate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.C * t ** (-self.beta)


@dataclasses.dataclass(frozen=True)
class BatchSchedule:
    """Which points feed each update; construct via the factory methods."""

    variant: str
    B: int | None = None

    def __post_init__(self):
        if self.variant not in (_ONLINE, _FULL, _WITH_REPLACEMENT, _RESHUFFLE):
            raise InvalidInputError(f"unknown batching variant {self.variant!r}")
        if self.variant in (_WITH_REPLACEMENT, _RESHUFFLE):
            if self.B is None or int(self.B) < 1:
                raise InvalidInputError(f"batch size must be >= 1, got {self.B}")
            object.__setattr__(self, "B", int(self.B))
        elif self.B is not None:
            raise InvalidInputError(f"{self.variant} batching takes no batch size")

    @classmethod
    def online(cls):
        return cls(_ONLINE)

    @classmethod
    def full_batch(cls):
        return cls(_FULL)

    @classmethod
    def with_replacement(cls, B: int):
        return cls(_WITH_REPLACEMENT, B)

    @classmethod
    def reshuffle(cls, B: int):
        return cls(_RESHUFFLE, B)


@dataclasses.dataclass(frozen=True, eq=False)
class CdConfig:
    """Everything a driver run needs besides the data and the kernel.

    ``store`` controls trajectory storage: ``"all"`` keeps every iterate,
    ``"epoch_end"`` keeps one per epoch (offline only), ``"none"`` keeps
    only the final iterate and the running average.
    """

    m: int
    schedule: StepSchedule
    batching: BatchSchedule
    domain: ParamDomain
    psi0: np.ndarray
    seed: object
    T: int | None = None
    store: str = "all"

    def __post_init__(self):
        m = int(self.m)
        if m < 0:
            raise InvalidInputError(f"m must be >= 0, got {self.m}")
        object.__setattr__(self, "m", m)
        psi0 = np.asarray(self.psi0, dtype=float)
        if psi0.ndim != 1 or psi0.shape[0] != self.domain.dim:
            raise InvalidInputError(
                f"psi0 has shape {psi0.shape}, domain expects ({self.domain.dim},)"
            )
        if not self.domain.contains(psi0, tol=1e-12 * (1.0 + self.domain.radius)):
            raise InvalidInputError("psi0 must lie in the parameter domain")
        psi0 = psi0.copy()
        psi0.flags.writeable = False
        object.__setattr__(self, "psi0", psi0)
        if self.T is not None:
            T = int(self.T)
            if T < 1:
                raise InvalidInputError(f"T must be >= 1, got {self.T}")
            object.__setattr__(self, "T", T)
        if self.store not in ("all", "epoch_end", "none"):
            raise InvalidInputError(f"unknown store mode {self.store!r}")


@dataclasses.dataclass(frozen=True, eq=False)
class Trajectory:
    """Result of a driver run.

    ``iterates`` holds the stored post-update parameters (possibly
    thinned or None per the config), ``final`` the last iterate,
    ``average`` the arithmetic mean over all updates, and
    ``projection_hits`` the number of updates clipped by the projection.
    """

    iterates: np.ndarray | None
    final: np.ndarray
    average: np.ndarray
    update_count: int
    projection_hits: int = 0


# ---------------------------------------------------------------------------
# projection


def project(psi, domain: ParamDomain) -> np.ndarray:
    """Euclidean projection onto the parameter ball.

    Points inside are returned unchanged; points outside map to
    center + radius (psi - center)/||psi - center||.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (domain.dim,):
        raise InvalidInputError(
            f"psi has shape {psi.shape}, domain expects ({domain.dim},)"
        )
    dist = float(np.linalg.norm(psi - domain.center))
    if dist <= domain.radius:
        return psi
    return domain.center + (psi - domain.center) * (domain.radius / dist)


def _project_rows(Psi: np.ndarray, domain: ParamDomain):
    """In-place row projection; returns (Psi, outside mask)."""
    dist = np.linalg.norm(Psi - domain.center, axis=-1)
    outside = dist > domain.radius
    if np.any(outside):
        scale = (domain.radius / dist[outside])[:, None]
        Psi[outside] = domain.center + (Psi[outside] - domain.center) * scale
    return Psi, outside


# ---------------------------------------------------------------------------
# the CD statistic


def cd_gradient_terms(kernel: MarkovKernel, psi, batch, m: int, rng) -> np.ndarray:
    """Per-point contributions phi(X~_i) - phi(x_i), shape (B, p).

    Chains start at the batch points and run m steps under psi; m = 0
    gives exactly zero.
    """
    psi = check_parameter(kernel.model, psi)
    batch = np.asarray(batch)
    if batch.ndim != 2 or batch.shape[1] != kernel.model.sample_space.dim:
        raise InvalidInputError(
            f"batch has shape {batch.shape}, expected (B, {kernel.model.sample_space.dim})"
        )
    if batch.shape[0] == 0:
        raise InvalidInputError("batch must contain at least one point")
    m = int(m)
    if m < 0:
        raise InvalidInputError(f"m must be >= 0, got {m}")
    tilde = kernel.m_steps(psi, batch, m, _as_generator(rng))
    return kernel.model.phi_batch(tilde) - kernel.model.phi_batch(batch)


def cd_gradient(kernel: MarkovKernel, psi, batch, m: int, rng) -> np.ndarray:
    """Batch-averaged CD update direction, shape (p,)."""
    return cd_gradient_terms(kernel, psi, batch, m, rng).mean(axis=0)


# ---------------------------------------------------------------------------
# drivers


def _online_loop(fetch, n, E, kernel, config, rng, record):
    """Single-pass loop over an ensemble of E independent runs.

    ``fetch(t)`` returns the points for update t+1 with shape (E,
    state_dim) and is called exactly once per update, in order, so a
    streaming source can hand points out as they arrive.
    """
    model = kernel.model
    psi = np.tile(config.psi0, (E, 1))
    psi_sum = np.zeros_like(psi)
    iterates = np.empty((n, E, model.p)) if record else None
    hits = np.zeros(E, dtype=np.int64)
    eta = config.schedule.rate(np.arange(1, n + 1))
    for t in range(n):
        x = fetch(t)
        tilde = kernel.m_steps(psi[:, None, :], x[:, None, :], config.m, rng)
        h = model.phi_batch(tilde[:, 0]) - model.phi_batch(x)
        psi, outside = _project_rows(psi - eta[t] * h, config.domain)
        hits += outside
        psi_sum += psi
        if record:
            iterates[t] = psi
    average = iterates.mean(axis=0) if record else psi_sum / n
    return iterates, psi, average, hits


def online_cd(data, kernel: MarkovKernel, config: CdConfig) -> Trajectory:
    """One pass of single-point CD updates over ``data``.

    ``data`` is any indexable sequence of sample-space points; point t is
    accessed exactly once, at update t.  Returns the trajectory after
    n = len(data) updates.
    """
    if config.batching.variant != _ONLINE:
        raise InvalidInputError("online_cd requires online batching")
    if config.store == "epoch_end":
        raise InvalidInputError("epoch_end storage is offline-only")
    n = len(data)
    if n < 1:
        raise InvalidInputError("data must contain at least one point")
    model = kernel.model
    rng = _as_generator(config.seed)
    record = config.store == "all"

    def fetch(t):
        return model.validate_point(data[t])[None]

    iterates, psi, average, hits = _online_loop(fetch, n, 1, kernel, config, rng, record)
    return Trajectory(
        iterates=None if iterates is None else iterates[:, 0, :].copy(),
        final=psi[0].copy(),
        average=average[0].copy(),
        update_count=n,
        projection_hits=int(hits[0]),
    )


def _epoch_batches(variant, E, n, B, rng):
    """Batch index arrays for one epoch, in update order.

    Yields None for the full dataset (no gather, no randomness); B = n
    subsets and reshuffles degenerate to this.  Index draws are per
    ensemble member: one uniform scoring draw per update (subsets) or per
    epoch (reshuffle), converted to subsets or a permutation by ranking.
    """
    if variant == _FULL or B == n:
        yield None
        return
    if variant == _WITH_REPLACEMENT:
        for _ in range(-(-n // B)):
            u = rng.random((E, n))
            yield np.argpartition(u, B, axis=1)[:, :B]
        return
    perm = np.argsort(rng.random((E, n)), axis=1)
    for j in range(-(-n // B)):
        yield perm[:, j * B : (j + 1) * B]


def _offline_loop(data3, kernel, config, rng):
    """Epoch/batch loop over an ensemble; data3 has shape (E, n, sdim)."""
    model = kernel.model
    E, n, _ = data3.shape
    variant = config.batching.variant
    B = n if variant == _FULL else config.batching.B
    if B > n:
        raise InvalidInputError(f"batch size {B} exceeds dataset size {n}")
    T = config.T
    if T is None:
        raise InvalidInputError("offline_cd requires T (number of epochs)")
    N = -(-n // B)
    p = model.p
    psi = np.tile(config.psi0, (E, 1))
    psi_sum = np.zeros_like(psi)
    rows = T * N if config.store == "all" else (T if config.store == "epoch_end" else 0)
    iterates = np.empty((rows, E, p)) if rows else None
    hits = np.zeros(E, dtype=np.int64)
    arange_e = np.arange(E)[:, None]
    u = 0
    for t in range(1, T + 1):
        eta = float(config.schedule.rate(t))
        for idx in _epoch_batches(variant, E, n, B, rng):
            pts = data3 if idx is None else data3[arange_e, idx]
            tilde = kernel.m_steps(psi[:, None, :], pts, config.m, rng)
            h = (model.phi_batch(tilde) - model.phi_batch(pts)).mean(axis=1)
            psi, outside = _project_rows(psi - eta * h, config.domain)
            hits += outside
            psi_sum += psi
            if config.store == "all":
                iterates[u] = psi
            u += 1
        if config.store == "epoch_end":
            iterates[t - 1] = psi
    return iterates, psi, psi_sum / u, hits, u


def _validate_dataset(model: Model, data) -> np.ndarray:
    sdim = model.sample_space.dim
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[1] != sdim:
        raise InvalidInputError(f"data has shape {arr.shape}, expected (n, {sdim})")
    if arr.shape[0] < 1:
        raise InvalidInputError("data must contain at least one point")
    if model.sample_space.kind == "continuous":
        arr = arr.astype(float)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("data must have finite entries")
    else:
        if not np.isin(arr, (0, 1)).all():
            raise InvalidInputError("binary state entries must be 0 or 1")
        arr = arr.astype(np.uint8)
    return arr


def offline_cd(data, kernel: MarkovKernel, config: CdConfig) -> Trajectory:
    """T epochs of minibatch CD over a fixed dataset.

    The batching rule comes from ``config.batching`` (full-batch,
    with-replacement subsets, or reshuffle); the step size is constant
    within each epoch.  The average is taken over every update; with
    ``store="epoch_end"`` the stored iterates are the epoch-boundary
    parameters only.
    """
    if config.batching.variant == _ONLINE:
        raise InvalidInputError("offline_cd requires a non-online batching rule")
    data3 = _validate_dataset(kernel.model, data)[None]
    rng = _as_generator(config.seed)
    iterates, psi, average, hits, count = _offline_loop(data3, kernel, config, rng)
    stored = None if iterates is None else iterates[:, 0, :].copy()
    if config.store == "all":
        avg = stored.mean(axis=0)
    else:
        avg = average[0].copy()
    return Trajectory(
        iterates=stored,
        final=psi[0].copy(),
        average=avg,
        update_count=count,
        projection_hits=int(hits[0]),
    )


def polyak_average(trajectory: Trajectory, burn_in: float = 0.0) -> np.ndarray:
    """Mean iterate after discarding a leading fraction of the stored ones.

    ``burn_in = 0`` returns the running average over all updates and
    works for any storage mode; a positive fraction needs stored
    iterates and averages the stored tail (for thinned storage, the tail
    of the epoch-end parameters).
    """
    burn_in = float(burn_in)
    if not 0.0 <= burn_in < 1.0:
        raise InvalidInputError(f"burn_in must lie in [0, 1), got {burn_in}")
    if burn_in == 0.0:
        return trajectory.average
    if trajectory.iterates is None:
        raise InvalidInputError("burn-in averaging needs stored iterates")
    k = int(burn_in * trajectory.iterates.shape[0])
    return trajectory.iterates[k:].mean(axis=0)


def m_schedule(n: int, beta: float, alpha: float) -> int:
    """Chain length for the averaged estimator at sample size n.

    The smallest integer strictly exceeding
    (1 - beta) ln n / (2 |ln alpha|); requires beta in (1/2, 1) and a
    kernel coefficient alpha in (0, 1).
    """
    n = int(n)
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    beta = float(beta)
    if not 0.5 < beta < 1.0:
        raise InvalidInputError(f"beta must lie in (1/2, 1), got {beta}")
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return int(math.floor((1.0 - beta) * math.log(n) / (2.0 * abs(math.log(alpha))))) + 1
