"""Seeded Monte Carlo experiments over a grid of sample sizes.

``run_experiment`` draws fresh datasets from the true parameter, runs the
configured estimators, and aggregates squared errors into a report with
rate fits, Cramer-Rao variance ratios, and theoretical bound values.
``emit_report`` serializes a report to CSV / JSON / SVG.

Reproducibility contract: every random stream is derived from the root
seed through ``numpy.random.SeedSequence`` spawn keys,

* ``(0, n_index, r)`` for the dataset of replication ``r`` at the
  ``n_index``-th grid size,
* ``(1, n_index, estimator_index, block_index)`` for the kernel noise of
  one replication block,
* ``(2, m)`` for the empirical noise-constant probe at chain length m,

so results are bitwise identical for any worker count and any scheduling
order.  Replications are processed in fixed blocks of
``REPLICATION_BLOCK`` lockstep runs; the block partition is part of the
stream layout, not a tuning knob.
"""

from __future__ import annotations

import dataclasses
import json
import math
import multiprocessing
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import NamedTuple

import numpy as np

from .bounds import BoundConstants, offline_bound, offline_noise_scale, online_bound
from .cd import (
    BatchSchedule,
    CdConfig,
    StepSchedule,
    _offline_loop,
    _online_loop,
    m_schedule,
)
from .errors import (
    ConditionViolatedError,
    InvalidInputError,
    ProjectionBoundaryWarning,
)
from .expfam import (
    BoltzmannModel,
    ErgmModel,
    GaussianMeanModel,
    Model,
    ParamDomain,
    domain_grid,
    fisher_information,
)
from .kernels import make_kernel

REPLICATION_BLOCK = 64

# fraction of boundary-clipped updates above which a run is flagged
_HIT_FLAG_LEVEL = 0.10

_OFFLINE_VARIANTS = ("full-batch", "with-replacement", "reshuffle")

SCHEMA_VERSION = "1"

CSV_HEADER = "n,estimator,stat,value,stderr,replications,seed"


# ---------------------------------------------------------------------------
# configuration


@dataclasses.dataclass(frozen=True)
class EstimatorSpec:
    """One estimator to run at every grid size.

    ``m`` may be the string ``"auto"``, in which case the chain length is
    resolved per sample size as ``m_schedule(n, beta, alpha)`` (requiring
    ``alpha`` and ``beta`` in the schedule's admissible range).  ``psi0``
    defaults to the domain center.  ``burn_in`` is the leading fraction
    of iterates discarded before averaging.
    """

    label: str
    mode: str
    C: float
    beta: float
    m: object = 1
    alpha: float | None = None
    variant: str | None = None
    T: int | None = None
    B: int | None = None
    burn_in: float = 0.0
    psi0: object = None

    def __post_init__(self):
        if not self.label or any(c in self.label for c in ',\r\n"'):
            raise InvalidInputError(
                f"estimator label {self.label!r} must be nonempty and CSV-safe"
            )
        if self.mode not in ("online", "offline"):
            raise InvalidInputError(f"mode must be online or offline, got {self.mode!r}")
        object.__setattr__(self, "C", float(self.C))
        object.__setattr__(self, "beta", float(self.beta))
        if self.C < 0.0 or not math.isfinite(self.C):
            raise InvalidInputError(f"C must be finite and >= 0, got {self.C}")
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidInputError(f"beta must lie in [0, 1], got {self.beta}")
        if self.m == "auto":
            if self.alpha is None:
                raise InvalidInputError('m = "auto" needs the kernel coefficient alpha')
            object.__setattr__(self, "alpha", float(self.alpha))
        else:
            m = int(self.m)
            if m < 0:
                raise InvalidInputError(f"m must be >= 0, got {self.m}")
            object.__setattr__(self, "m", m)
        if self.mode == "online":
            if self.variant is not None or self.T is not None or self.B is not None:
                raise InvalidInputError("online estimators take no variant, T, or B")
        else:
            if self.variant not in _OFFLINE_VARIANTS:
                raise InvalidInputError(
                    f"offline variant must be one of {_OFFLINE_VARIANTS}, got {self.variant!r}"
                )
            if self.T is None or int(self.T) < 1:
                raise InvalidInputError("offline estimators need T >= 1 epochs")
            object.__setattr__(self, "T", int(self.T))
            if self.variant == "full-batch":
                if self.B is not None:
                    raise InvalidInputError("full-batch fixes B = n; leave B unset")
            else:
                if self.B is None or int(self.B) < 1:
                    raise InvalidInputError(f"variant {self.variant} needs B >= 1")
                object.__setattr__(self, "B", int(self.B))
        burn = float(self.burn_in)
        if not 0.0 <= burn < 1.0:
            raise InvalidInputError(f"burn_in must lie in [0, 1), got {self.burn_in}")
        object.__setattr__(self, "burn_in", burn)
        if self.psi0 is not None:
            psi0 = np.asarray(self.psi0, dtype=float)
            if psi0.ndim != 1:
                raise InvalidInputError("psi0 must be a 1-d vector")
            psi0 = psi0.copy()
            psi0.flags.writeable = False
            object.__setattr__(self, "psi0", psi0)

    def resolve_m(self, n: int) -> int:
        if self.m == "auto":
            return m_schedule(n, self.beta, self.alpha)
        return self.m

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "mode": self.mode,
            "C": self.C,
            "beta": self.beta,
            "m": self.m,
            "burn_in": self.burn_in,
        }
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.mode == "offline":
            d["variant"] = self.variant
            d["T"] = self.T
            if self.B is not None:
                d["B"] = self.B
        if self.psi0 is not None:
            d["psi0"] = [float(v) for v in self.psi0]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown estimator fields {sorted(extra)}")
        return cls(**d)


def model_to_dict(model: Model) -> dict:
    if isinstance(model, GaussianMeanModel):
        return {"family": "gaussian", "d": model.d, "rho": model.rho}
    if isinstance(model, BoltzmannModel):
        return {"family": "boltzmann", "d": model.d}
    if isinstance(model, ErgmModel):
        return {"family": "ergm", "k": model.k}
    raise InvalidInputError(f"no serialization for model type {type(model).__name__}")


def model_from_dict(d: dict) -> Model:
    fam = d.get("family")
    if fam == "gaussian":
        return GaussianMeanModel(int(d["d"]), float(d.get("rho", 0.0)))
    if fam == "boltzmann":
        return BoltzmannModel(int(d["d"]))
    if fam == "ergm":
        return ErgmModel(int(d["k"]))
    raise InvalidInputError(f"unknown model family {fam!r}")


@dataclasses.dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Full description of one Monte Carlo experiment.

    The true parameter must sit strictly inside the domain (margin at
    least 1e-6 of the radius) and the sample-size grid must be strictly
    increasing.  ``bound_constants``, when given, adds theoretical bound
    values to the report; their chain length is re-resolved to each
    estimator's m before evaluation.
    """

    model: Model
    psi_star: np.ndarray
    domain: ParamDomain
    estimators: tuple
    n_grid: tuple
    replications: int
    root_seed: int
    kernel_kind: str = "gibbs"
    bound_constants: BoundConstants | None = None
    out_dir: str | None = None
    svg: bool = False

    def __post_init__(self):
        psi = np.asarray(self.psi_star, dtype=float)
        if psi.ndim != 1 or psi.shape[0] != self.model.p:
            raise InvalidInputError(
                f"psi_star has shape {psi.shape}, model expects ({self.model.p},)"
            )
        if self.domain.dim != self.model.p:
            raise InvalidInputError("domain dimension does not match the model")
        gap = self.domain.radius - float(np.linalg.norm(psi - self.domain.center))
        if gap < 1e-6 * self.domain.radius:
            raise InvalidInputError(
                "psi_star must lie strictly inside the domain "
                f"(margin {gap:.3g} < 1e-6 * radius)"
            )
        psi = psi.copy()
        psi.flags.writeable = False
        object.__setattr__(self, "psi_star", psi)
        ests = tuple(self.estimators)
        if not ests or not all(isinstance(e, EstimatorSpec) for e in ests):
            raise InvalidInputError("estimators must be a nonempty tuple of EstimatorSpec")
        labels = [e.label for e in ests]
        if len(set(labels)) != len(labels):
            raise InvalidInputError(f"estimator labels must be unique, got {labels}")
        object.__setattr__(self, "estimators", ests)
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidInputError(f"n_grid must be strictly increasing and >= 1, got {grid}")
        object.__setattr__(self, "n_grid", grid)
        reps = int(self.replications)
        if reps < 1:
            raise InvalidInputError(f"replications must be >= 1, got {self.replications}")
        object.__setattr__(self, "replications", reps)
        seed = int(self.root_seed)
        if not 0 <= seed < 2**64:
            raise InvalidInputError("root_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "root_seed", seed)
        # fails early on a kernel/model mismatch
        make_kernel(self.model, self.kernel_kind)
        for e in ests:
            if e.psi0 is not None and e.psi0.shape[0] != self.model.p:
                raise InvalidInputError(f"estimator {e.label!r}: psi0 dimension mismatch")

    def to_dict(self) -> dict:
        d = {
            "model": model_to_dict(self.model),
            "psi_star": [float(v) for v in self.psi_star],
            "domain": {
                "center": [float(v) for v in self.domain.center],
                "radius": float(self.domain.radius),
            },
            "kernel_kind": self.kernel_kind,
            "estimators": [e.to_dict() for e in self.estimators],
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "root_seed": self.root_seed,
        }
        if self.bound_constants is not None:
            c = self.bound_constants
            d["bound_constants"] = {
                "mu": c.mu, "L": c.L, "sigma": c.sigma, "chi": c.chi,
                "alpha": c.alpha, "m": c.m, "norm_3": c.norm_3,
            }
        if self.out_dir is not None:
            d["out_dir"] = self.out_dir
        if self.svg:
            d["svg"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {
            "model", "psi_star", "domain", "kernel_kind", "estimators",
            "n_grid", "replications", "root_seed", "bound_constants",
            "out_dir", "svg",
        }
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown config fields {sorted(extra)}")
        try:
            dom = d["domain"]
            kwargs = dict(
                model=model_from_dict(d["model"]),
                psi_star=np.asarray(d["psi_star"], dtype=float),
                domain=ParamDomain(np.asarray(dom["center"], dtype=float), float(dom["radius"])),
                estimators=tuple(EstimatorSpec.from_dict(e) for e in d["estimators"]),
                n_grid=tuple(d["n_grid"]),
                replications=d["replications"],
                root_seed=d["root_seed"],
            )
        except KeyError as missing:
            raise InvalidInputError(f"config is missing field {missing}") from None
        if "kernel_kind" in d:
            kwargs["kernel_kind"] = d["kernel_kind"]
        if "bound_constants" in d and d["bound_constants"] is not None:
            kwargs["bound_constants"] = BoundConstants(**d["bound_constants"])
        kwargs["out_dir"] = d.get("out_dir")
        kwargs["svg"] = bool(d.get("svg", False))
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# statistics


class RateFit(NamedTuple):
    slope: float
    intercept: float
    slope_stderr: float


def rate_fit(points) -> RateFit:
    """Least squares of ln(delta_hat) on ln(n) over >= 3 positive points.

    The slope standard error comes from the residual variance with k - 2
    degrees of freedom.
    """
    pts = [(float(n), float(d)) for n, d in points]
    if len(pts) < 3:
        raise InvalidInputError(f"rate_fit needs at least 3 points, got {len(pts)}")
    if any(n <= 0.0 or d <= 0.0 for n, d in pts):
        raise InvalidInputError("rate_fit needs strictly positive n and delta_hat")
    x = np.log([n for n, _ in pts])
    y = np.log([d for _, d in pts])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise InvalidInputError("rate_fit needs at least two distinct n values")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - slope * x - intercept
    s2 = float(resid @ resid) / (len(pts) - 2)
    return RateFit(slope, intercept, math.sqrt(s2 / sxx))


def variance_ratio(n: int, delta_hat_avg: float, fisher: np.ndarray) -> float:
    """n * delta_hat over the Cramer-Rao trace tr(inverse Fisher)."""
    n = int(n)
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    delta = float(delta_hat_avg)
    if delta < 0.0:
        raise InvalidInputError(f"delta_hat_avg must be >= 0, got {delta}")
    fisher = np.asarray(fisher, dtype=float)
    trace_inv = float(np.trace(np.linalg.inv(fisher)))
    return n * delta / trace_inv


def kappa_hat(kernel, domain: ParamDomain, psi_star, m: int, *,
              grid_resolution: int = 2, n_starts: int = 8,
              n_chains: int = 256, rng=None) -> float:
    """Empirical stand-in for the chain-noise constant.

    The exact constant is a supremum over all (psi, x) of the L2
    deviation of the statistic after m kernel steps; it is not
    observable.  This probes a coarse parameter lattice and a few starts
    drawn from the true distribution, runs ``n_chains`` independent
    chains per probe, and returns the largest sample deviation.  A
    finite probe set and nu = 2 make this an approximation from below;
    reports that use it must say so.
    """
    model = kernel.model
    m = int(m)
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    if rng is None:
        rng = np.random.default_rng()
    grid = domain_grid(domain, grid_resolution, extra_points=np.asarray(psi_star, float)[None])
    G = grid.shape[0]
    starts = model.sample_exact(np.asarray(psi_star, dtype=float), n_starts, rng)
    x0 = np.broadcast_to(
        starts[None, :, None, :], (G, n_starts, n_chains, model.sample_space.dim)
    ).reshape(G, n_starts * n_chains, -1).copy()
    out = kernel.m_steps(grid[:, None, :], x0, m, rng)
    stats = model.phi_batch(out).reshape(G, n_starts, n_chains, model.p)
    dev = stats - stats.mean(axis=2, keepdims=True)
    # ddof-1 mean squared deviation per (psi, start) probe
    msd = (dev**2).sum(axis=3).sum(axis=2) / (n_chains - 1)
    return float(np.sqrt(msd.max()))


# ---------------------------------------------------------------------------
# replication blocks


@dataclasses.dataclass(frozen=True)
class _BlockTask:
    kernel: object
    psi_star: tuple
    domain: ParamDomain
    spec: EstimatorSpec
    m: int
    n: int
    n_index: int
    est_index: int
    r0: int
    r1: int
    root_seed: int


def _ensemble_average(iterates, burn_in):
    k = int(burn_in * iterates.shape[0])
    return iterates[k:].mean(axis=0)


def _run_block(task: _BlockTask):
    """One lockstep ensemble of replications r0..r1-1; pure function of the task."""
    kernel = task.kernel
    model = kernel.model
    spec = task.spec
    E = task.r1 - task.r0
    psi_star = np.asarray(task.psi_star, dtype=float)
    data = np.empty((E, task.n, model.sample_space.dim))
    for j, r in enumerate(range(task.r0, task.r1)):
        seq = np.random.SeedSequence(task.root_seed, spawn_key=(0, task.n_index, r))
        data[j] = model.sample_exact(psi_star, task.n, np.random.default_rng(seq))
    noise_seq = np.random.SeedSequence(
        task.root_seed,
        spawn_key=(1, task.n_index, task.est_index, task.r0 // REPLICATION_BLOCK),
    )
    noise = np.random.default_rng(noise_seq)
    psi0 = spec.psi0 if spec.psi0 is not None else task.domain.center
    record = spec.burn_in > 0.0
    if spec.mode == "online":
        config = CdConfig(
            m=task.m, schedule=StepSchedule(spec.C, spec.beta),
            batching=BatchSchedule.online(), domain=task.domain,
            psi0=psi0, seed=0, store="all" if record else "none",
        )
        iterates, final, average, hits = _online_loop(
            lambda t: data[:, t], task.n, E, kernel, config, noise, record
        )
        updates = task.n
    else:
        if spec.variant == "full-batch":
            batching = BatchSchedule.full_batch()
        elif spec.variant == "with-replacement":
            batching = BatchSchedule.with_replacement(spec.B)
        else:
            batching = BatchSchedule.reshuffle(spec.B)
        config = CdConfig(
            m=task.m, schedule=StepSchedule(spec.C, spec.beta),
            batching=batching, domain=task.domain, psi0=psi0, seed=0,
            T=spec.T, store="all" if record else "none",
        )
        iterates, final, average, hits, updates = _offline_loop(data, kernel, config, noise)
    if record:
        average = _ensemble_average(iterates, spec.burn_in)
    sq_last = ((final - psi_star) ** 2).sum(axis=1)
    sq_avg = ((average - psi_star) ** 2).sum(axis=1)
    return sq_last, sq_avg, hits, updates


# ---------------------------------------------------------------------------
# report


class StatRow(NamedTuple):
    n: int
    estimator: str
    stat: str
    value: float
    stderr: float
    replications: int
    seed: int


class FitRow(NamedTuple):
    estimator: str
    stat: str
    slope: float
    intercept: float
    slope_stderr: float


@dataclasses.dataclass(frozen=True)
class ExperimentReport:
    rows: tuple
    fits: tuple
    trace_inv_fisher: float
    config_echo: dict
    resolved_m: tuple
    notes: tuple
    wall_seconds: float


def _mean_and_stderr(values: np.ndarray):
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def _bound_rows(config: ExperimentConfig, est_index, spec, resolved, kappa_cache,
                notes, rows):
    """Append theoretical-bound rows for one estimator, or note why not."""
    bc = config.bound_constants
    psi0 = spec.psi0 if spec.psi0 is not None else config.domain.center
    delta0 = float(((psi0 - config.psi_star) ** 2).sum())
    if spec.C <= 0.0:
        notes.append(f"{spec.label}: bound skipped (C = 0 has no bound form)")
        return
    for n in config.n_grid:
        m = resolved[(n, est_index)]
        constants = dataclasses.replace(bc, m=m) if m != bc.m else bc
        try:
            if spec.mode == "online":
                value = online_bound(constants, delta0, n, spec.C, spec.beta)
                stat = "bound_online"
            else:
                B = n if spec.variant == "full-batch" else spec.B
                if m not in kappa_cache:
                    seq = np.random.SeedSequence(config.root_seed, spawn_key=(2, m))
                    kernel = make_kernel(config.model, config.kernel_kind)
                    kappa_cache[m] = kappa_hat(
                        kernel, config.domain, config.psi_star, m,
                        rng=np.random.default_rng(seq),
                    )
                    notes.append(
                        f"kappa_hat(m={m}) = {kappa_cache[m]:.6g}: empirical probe "
                        "approximation of the chain-noise constant (not a certified bound)"
                    )
                sigma_off = offline_noise_scale(0.0, constants.sigma, kappa_cache[m], B)
                value = offline_bound(
                    constants, delta0, sigma_off, n, B, spec.T, spec.C, spec.beta
                )
                stat = "bound_offline_root"
        except ConditionViolatedError as err:
            warnings.warn(str(err), RuntimeWarning, stacklevel=3)
            notes.append(f"{spec.label}, n={n}: {err}")
            continue
        rows.append(StatRow(
            n, spec.label, stat, value, 0.0, config.replications, config.root_seed
        ))


def run_experiment(config: ExperimentConfig, *, workers: int = 1) -> ExperimentReport:
    """Execute every (n, estimator, replication) cell and aggregate.

    ``workers`` only distributes replication blocks across processes;
    any value, including 1, yields the identical report.  Writes files
    when the config carries an ``out_dir``.
    """
    workers = int(workers)
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")
    start = time.perf_counter()
    kernel = make_kernel(config.model, config.kernel_kind)
    fisher = fisher_information(config.model, config.psi_star)
    trace_inv = float(np.trace(np.linalg.inv(fisher)))

    resolved = {}
    tasks = []
    for n_index, n in enumerate(config.n_grid):
        for est_index, spec in enumerate(config.estimators):
            m = spec.resolve_m(n)
            resolved[(n, est_index)] = m
            for r0 in range(0, config.replications, REPLICATION_BLOCK):
                r1 = min(r0 + REPLICATION_BLOCK, config.replications)
                tasks.append(_BlockTask(
                    kernel=kernel, psi_star=tuple(config.psi_star),
                    domain=config.domain, spec=spec, m=m, n=n,
                    n_index=n_index, est_index=est_index, r0=r0, r1=r1,
                    root_seed=config.root_seed,
                ))

    if workers == 1 or len(tasks) == 1:
        outputs = [_run_block(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(_run_block, t) for t in tasks]
            # collection in submission order keeps the reduction deterministic
            outputs = [f.result() for f in futures]

    cells = {}
    for task, (sq_last, sq_avg, hits, updates) in zip(tasks, outputs):
        key = (task.n_index, task.est_index)
        cells.setdefault(key, []).append((sq_last, sq_avg, hits, updates))

    rows = []
    notes = []
    mse_last_points = {e.label: [] for e in config.estimators}
    mse_avg_points = {e.label: [] for e in config.estimators}
    for n_index, n in enumerate(config.n_grid):
        for est_index, spec in enumerate(config.estimators):
            parts = cells[(n_index, est_index)]
            sq_last = np.concatenate([p[0] for p in parts])
            sq_avg = np.concatenate([p[1] for p in parts])
            hits = np.concatenate([p[2] for p in parts])
            updates = parts[0][3]
            R = config.replications
            v_last, se_last = _mean_and_stderr(sq_last)
            v_avg, se_avg = _mean_and_stderr(sq_avg)
            hit_frac = float(hits.sum()) / (R * updates)
            if hit_frac > _HIT_FLAG_LEVEL:
                warnings.warn(
                    f"{spec.label} at n={n}: {hit_frac:.1%} of updates hit the "
                    "projection boundary; step size or domain may be mismatched",
                    ProjectionBoundaryWarning,
                    stacklevel=2,
                )
            rows.append(StatRow(n, spec.label, "mse_last", v_last, se_last, R, config.root_seed))
            rows.append(StatRow(n, spec.label, "mse_avg", v_avg, se_avg, R, config.root_seed))
            rows.append(StatRow(
                n, spec.label, "variance_ratio",
                n * v_avg / trace_inv, n * se_avg / trace_inv, R, config.root_seed,
            ))
            rows.append(StatRow(
                n, spec.label, "projection_hit_fraction", hit_frac, 0.0, R, config.root_seed
            ))
            mse_last_points[spec.label].append((n, v_last))
            mse_avg_points[spec.label].append((n, v_avg))

    if config.bound_constants is not None:
        kappa_cache = {}
        for est_index, spec in enumerate(config.estimators):
            _bound_rows(config, est_index, spec, resolved, kappa_cache, notes, rows)

    fits = []
    if len(config.n_grid) >= 3:
        for spec in config.estimators:
            for stat, pts in (("mse_last", mse_last_points[spec.label]),
                              ("mse_avg", mse_avg_points[spec.label])):
                if all(d > 0.0 for _, d in pts):
                    f = rate_fit(pts)
                    fits.append(FitRow(spec.label, stat, f.slope, f.intercept, f.slope_stderr))
                else:
                    notes.append(f"{spec.label}/{stat}: zero error, no rate fit")

    report = ExperimentReport(
        rows=tuple(rows),
        fits=tuple(fits),
        trace_inv_fisher=trace_inv,
        config_echo=config.to_dict(),
        resolved_m=tuple(
            (spec.label, n, resolved[(n, i)])
            for n in config.n_grid
            for i, spec in enumerate(config.estimators)
        ),
        notes=tuple(notes),
        wall_seconds=time.perf_counter() - start,
    )
    if config.out_dir is not None:
        emit_report(report, config.out_dir, svg=config.svg)
    return report


# ---------------------------------------------------------------------------
# serialization


def _g17(x: float) -> str:
    return format(float(x), ".17g")


def report_csv_text(report: ExperimentReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            f"{r.n},{r.estimator},{r.stat},{_g17(r.value)},{_g17(r.stderr)},"
            f"{r.replications},{r.seed}"
        )
    return "\n".join(lines) + "\n"


def report_json_dict(report: ExperimentReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": report.config_echo,
        "rows": [r._asdict() for r in report.rows],
        "fits": [f._asdict() for f in report.fits],
        "variance_ratios": [
            {"n": r.n, "estimator": r.estimator, "value": r.value, "stderr": r.stderr}
            for r in report.rows if r.stat == "variance_ratio"
        ],
        "bounds": [
            {"n": r.n, "estimator": r.estimator, "stat": r.stat, "value": r.value}
            for r in report.rows if r.stat.startswith("bound_")
        ],
        "trace_inv_fisher": report.trace_inv_fisher,
        "resolved_m": [list(t) for t in report.resolved_m],
        "notes": list(report.notes),
        "wall_seconds": report.wall_seconds,
    }


def _plot_report(report: ExperimentReport, path):
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    by_est = {}
    for r in report.rows:
        if r.stat in ("mse_last", "mse_avg", "bound_online"):
            by_est.setdefault((r.estimator, r.stat), []).append((r.n, r.value, r.stderr))
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    styles = {"mse_last": "o-", "mse_avg": "s--", "bound_online": ":"}
    for (label, stat), pts in sorted(by_est.items()):
        pts.sort()
        ns = [p[0] for p in pts]
        vals = [p[1] for p in pts]
        if all(v > 0 for v in vals) and len(ns) >= 1:
            ax.plot(ns, vals, styles[stat], label=f"{label} {stat}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("squared error / bound")
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_report(report: ExperimentReport, out_dir, *, svg: bool = False) -> dict:
    """Write report.csv and summary.json (and optionally plot.svg); returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as fh:
        fh.write(report_csv_text(report))
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w") as fh:
        json.dump(report_json_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths = {"csv": csv_path, "json": json_path}
    if svg:
        svg_path = os.path.join(out_dir, "plot.svg")
        _plot_report(report, svg_path)
        paths["svg"] = svg_path
    return paths


def parse_report_csv(text: str):
    """Rows of an emitted CSV, exactly inverse to ``report_csv_text``."""
    lines = text.strip("\n").split("\n")
    if lines[0] != CSV_HEADER:
        raise InvalidInputError(f"unexpected CSV header {lines[0]!r}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 7:
            raise InvalidInputError(f"malformed CSV row {line!r}")
        rows.append(StatRow(
            int(parts[0]), parts[1], parts[2], float(parts[3]), float(parts[4]),
            int(parts[5]), int(parts[6]),
        ))
    return rows
