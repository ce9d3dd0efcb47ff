"""Markov transition kernels targeting exponential-family laws.

Each kernel leaves p_psi invariant for every admissible psi and exposes a
vectorized ``step``: states ``x`` of shape ``(..., state_dim)`` advance in
parallel, with ``psi`` either shared (shape ``(p,)``) or broadcastable to
the leading batch shape (for example ``(E, 1, p)`` against ``(E, B, d)``
states).  Randomness comes from a single ``numpy.random.Generator``; each
step consumes a documented, fixed sequence of draws (first one integer
draw of coordinate or slot indices over the full leading shape, then one
auxiliary uniform or normal draw), so equal seeds give bitwise equal
chains regardless of batch layout.

Kernels
-------
* :class:`GaussianGibbsKernel` -- random-scan Gibbs; resamples one
  coordinate from its exact Gaussian conditional.
* :class:`BoltzmannGibbsKernel` -- random-scan Gibbs on binary units via
  the logistic conditional.
* :class:`ErgmToggleKernel` -- Metropolis-Hastings single-edge toggle
  with the exact exchange ratio.
* :class:`ExactSamplerKernel` -- draws a fresh point from p_psi itself
  (an idealized kernel whose restricted spectral coefficient is zero).
* :class:`IdentityKernel` -- never moves (coefficient one); useful as a
  boundary case.

The restricted spectral coefficient of a kernel P at psi for a statistic
f is

    alpha(f, psi) = || P (f - E f) || / || f - E f ||

with norms in L2(p_psi); for vector f the maximum over components is
taken.  :func:`restricted_alpha` computes it exactly from the transition
matrix (enumerable models) or by Monte Carlo with a reported standard
error; :func:`alpha_sup` sweeps statistics (all phi_i and products
phi_i phi_j) and a parameter lattice and returns the argmax.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import (
    DegenerateStatisticError,
    InvalidInputError,
    UnsupportedOracleError,
)
from .expfam import (
    BoltzmannModel,
    ErgmModel,
    GaussianMeanModel,
    Model,
    ParamDomain,
    check_parameter,
    domain_grid,
)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _broadcast_param(psi: np.ndarray, lead: tuple, p: int) -> np.ndarray:
    return np.broadcast_to(psi, lead + (p,))


@dataclasses.dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """One-step transition matrix over the enumerated state space.

    ``matrix[s, t]`` is the probability of moving from ``states[s]`` to
    ``states[t]``; rows sum to one within 1e-12.
    """

    states: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.states.shape[0]:
            raise InvalidInputError(f"transition matrix has shape {m.shape}")
        if m.min() < -1e-15:
            raise InvalidInputError("transition matrix has a negative entry")
        if np.abs(m.sum(axis=1) - 1.0).max() > 1e-12:
            raise InvalidInputError("transition matrix rows must sum to one")
        object.__setattr__(self, "matrix", m)


class MarkovKernel:
    """Base class; subclasses implement ``step`` and transition matrices."""

    model: Model

    def step(self, psi: np.ndarray, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def m_steps(self, psi, x, m: int, rng) -> np.ndarray:
        """Apply ``step`` m times; m = 0 returns a copy of ``x``."""
        if m == 0:
            return np.array(x, copy=True)
        for _ in range(m):
            x = self.step(psi, x, rng)
        return x

    def transition_matrix(self, psi: np.ndarray) -> TransitionMatrix:
        raise UnsupportedOracleError(
            f"{type(self).__name__} on {type(self.model).__name__} has no "
            "enumerable transition matrix"
        )


@dataclasses.dataclass(frozen=True, eq=False)
class GaussianGibbsKernel(MarkovKernel):
    """Random-scan Gibbs for the Gaussian location family.

    Picks a coordinate uniformly and redraws it from its conditional
    N(m_i + b_i . (x_{-i} - m_{-i}), v_i) given the rest, where m is the
    stationary mean Sigma psi.  Draws per step: one ``integers`` call for
    the coordinates, one ``standard_normal`` call.
    """

    model: GaussianMeanModel

    def __post_init__(self):
        if not isinstance(self.model, GaussianMeanModel):
            raise InvalidInputError("GaussianGibbsKernel requires a GaussianMeanModel")

    def step(self, psi, x, rng):
        d = self.model.d
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        coords = rng.integers(d, size=lead)
        z = rng.standard_normal(lead)
        mean = np.broadcast_to(np.matmul(psi, self.model.sigma_matrix), x.shape)
        resid = x - mean
        idx = coords[..., None]
        cm = np.take_along_axis(mean, idx, axis=-1)[..., 0]
        cm = cm + (self.model.cond_coef[coords] * resid).sum(axis=-1)
        newval = cm + self.model.cond_sd[coords] * z
        out = x.copy()
        np.put_along_axis(out, idx, newval[..., None], axis=-1)
        return out


@dataclasses.dataclass(frozen=True, eq=False)
class BoltzmannGibbsKernel(MarkovKernel):
    """Random-scan Gibbs for the binary pairwise model.

    Picks a unit uniformly and redraws it from the logistic conditional
    P(x_i = 1 | rest) = expit(psi_i + sum_{j != i} psi_{pair(i,j)} x_j).
    Draws per step: one ``integers`` call, one ``random`` call.
    """

    model: BoltzmannModel

    def __post_init__(self):
        if not isinstance(self.model, BoltzmannModel):
            raise InvalidInputError("BoltzmannGibbsKernel requires a BoltzmannModel")

    def step(self, psi, x, rng):
        d = self.model.d
        x = np.asarray(x)
        lead = x.shape[:-1]
        coords = rng.integers(d, size=lead)
        u = rng.random(lead)
        psi_full = _broadcast_param(psi, lead, self.model.p)
        idx = coords[..., None]
        theta = np.take_along_axis(psi_full, idx, axis=-1)[..., 0]
        pair_rows = self.model.pair_index[coords]
        w = np.take_along_axis(psi_full, pair_rows, axis=-1)
        xf = x.astype(float)
        np.put_along_axis(xf, idx, 0.0, axis=-1)
        act = theta + (w * xf).sum(axis=-1)
        newbit = (u < expit(act)).astype(np.uint8)
        out = x.copy()
        np.put_along_axis(out, idx, newbit[..., None], axis=-1)
        return out

    def transition_matrix(self, psi):
        self.model._require_oracle()
        psi = np.asarray(psi, dtype=float)
        d = self.model.d
        states = self.model.states()
        S = states.shape[0]
        sf = states.astype(float)
        idx = np.arange(S)
        K = np.zeros((S, S))
        for i in range(d):
            w = psi[self.model.pair_index[i]].copy()
            w[i] = 0.0
            p1 = expit(psi[i] + sf @ w)
            up = idx | (1 << i)
            down = idx & ~(1 << i)
            K[idx, up] += p1 / d
            K[idx, down] += (1.0 - p1) / d
        return TransitionMatrix(states, K)


@dataclasses.dataclass(frozen=True, eq=False)
class ErgmToggleKernel(MarkovKernel):
    """Metropolis-Hastings single-edge toggle for the graph model.

    Picks an edge slot uniformly, proposes flipping it, and accepts with
    probability min(1, exp(psi . delta_phi)); delta_phi is (+-1, +- the
    number of common neighbors of the endpoints).  Draws per step: one
    ``integers`` call, one ``random`` call.
    """

    model: ErgmModel

    def __post_init__(self):
        if not isinstance(self.model, ErgmModel):
            raise InvalidInputError("ErgmToggleKernel requires an ErgmModel")

    def step(self, psi, x, rng):
        n_slots = self.model.n_slots
        x = np.asarray(x)
        lead = x.shape[:-1]
        slots = rng.integers(n_slots, size=lead)
        u = rng.random(lead)
        psi_full = _broadcast_param(psi, lead, 2)
        xa = np.take_along_axis(x, self.model.cn_slots_a[slots], axis=-1)
        xb = np.take_along_axis(x, self.model.cn_slots_b[slots], axis=-1)
        cn = (xa * xb).sum(axis=-1)
        idx = slots[..., None]
        cur = np.take_along_axis(x, idx, axis=-1)[..., 0]
        sgn = 1.0 - 2.0 * cur
        dlog = psi_full[..., 0] * sgn + psi_full[..., 1] * (sgn * cn)
        accept = u < np.exp(np.minimum(dlog, 0.0))
        newval = np.where(accept, 1 - cur, cur).astype(np.uint8)
        out = x.copy()
        np.put_along_axis(out, idx, newval[..., None], axis=-1)
        return out

    def transition_matrix(self, psi):
        self.model._require_oracle()
        psi = np.asarray(psi, dtype=float)
        states = self.model.states()
        tbl = self.model.phi_table()
        S = states.shape[0]
        idx = np.arange(S)
        K = np.zeros((S, S))
        for e in range(self.model.n_slots):
            tgt = idx ^ (1 << e)
            acc = np.exp(np.minimum((tbl[tgt] - tbl[idx]) @ psi, 0.0))
            K[idx, tgt] += acc / self.model.n_slots
            K[idx, idx] += (1.0 - acc) / self.model.n_slots
        return TransitionMatrix(states, K)


@dataclasses.dataclass(frozen=True, eq=False)
class ExactSamplerKernel(MarkovKernel):
    """Kernel that ignores the current state and redraws from p_psi.

    Its restricted spectral coefficient is exactly zero.  Draws per step:
    one ``standard_normal`` call (continuous) or one ``random`` call
    (discrete, via inverse CDF over the enumerated states).
    """

    model: Model

    def __post_init__(self):
        if self.model.exactness == "none":
            raise UnsupportedOracleError("exact sampling needs an exact oracle")

    def step(self, psi, x, rng):
        x = np.asarray(x)
        lead = x.shape[:-1]
        if isinstance(self.model, GaussianMeanModel):
            mean = np.broadcast_to(np.matmul(psi, self.model.sigma_matrix), x.shape)
            z = rng.standard_normal(x.shape)
            return mean + z @ self.model._chol.T
        tbl = self.model.phi_table()
        psi_full = _broadcast_param(psi, lead, self.model.p)
        logits = np.matmul(psi_full, tbl.T)
        logits = logits - logits.max(axis=-1, keepdims=True)
        w = np.exp(logits)
        cum = np.cumsum(w, axis=-1)
        cum /= cum[..., -1:]
        u = rng.random(lead + (1,))
        idx = (cum < u).sum(axis=-1)
        return self.model.states()[idx]

    def transition_matrix(self, psi):
        probs = self.model.probabilities(np.asarray(psi, dtype=float))
        S = probs.shape[0]
        return TransitionMatrix(self.model.states(), np.tile(probs, (S, 1)))


@dataclasses.dataclass(frozen=True, eq=False)
class IdentityKernel(MarkovKernel):
    """Kernel that never moves; spectral coefficient one.  No draws."""

    model: Model

    def step(self, psi, x, rng):
        return np.array(x, copy=True)

    def transition_matrix(self, psi):
        states = self.model.states()
        return TransitionMatrix(states, np.eye(states.shape[0]))


_KERNEL_KINDS = ("gibbs", "toggle", "exact", "identity")


def make_kernel(model: Model, kind: str = "gibbs") -> MarkovKernel:
    """Construct a kernel for ``model``.

    ``kind`` is ``"gibbs"`` (Gaussian or Boltzmann), ``"toggle"`` (graph
    model), ``"exact"`` or ``"identity"``.
    """
    if kind == "gibbs":
        if isinstance(model, GaussianMeanModel):
            return GaussianGibbsKernel(model)
        if isinstance(model, BoltzmannModel):
            return BoltzmannGibbsKernel(model)
        raise InvalidInputError(f"no Gibbs kernel for {type(model).__name__}")
    if kind == "toggle":
        if isinstance(model, ErgmModel):
            return ErgmToggleKernel(model)
        raise InvalidInputError(f"no toggle kernel for {type(model).__name__}")
    if kind == "exact":
        return ExactSamplerKernel(model)
    if kind == "identity":
        return IdentityKernel(model)
    raise InvalidInputError(f"unknown kernel kind {kind!r}; choose from {_KERNEL_KINDS}")


def default_kernel(model: Model) -> MarkovKernel:
    """The natural sampling kernel for each family."""
    if isinstance(model, ErgmModel):
        return ErgmToggleKernel(model)
    return make_kernel(model, "gibbs")


# ---------------------------------------------------------------------------
# module-level operations


def kernel_step(kernel: MarkovKernel, psi, x, rng) -> np.ndarray:
    """Advance one validated point by one step."""
    psi = check_parameter(kernel.model, psi)
    x = kernel.model.validate_point(x)
    return kernel.step(psi, x, _as_generator(rng))


def kernel_m_steps(kernel: MarkovKernel, psi, x, m: int, rng) -> np.ndarray:
    """Advance one validated point by ``m`` steps (m = 0 returns x)."""
    psi = check_parameter(kernel.model, psi)
    x = kernel.model.validate_point(x)
    m = int(m)
    if m < 0:
        raise InvalidInputError(f"m must be >= 0, got {m}")
    return kernel.m_steps(psi, x, m, _as_generator(rng))


def transition_matrix(kernel: MarkovKernel, psi) -> TransitionMatrix:
    """Exact one-step transition matrix (enumerable models only)."""
    psi = check_parameter(kernel.model, psi)
    return kernel.transition_matrix(psi)


@dataclasses.dataclass(frozen=True)
class AlphaEstimate:
    """Monte Carlo estimate of a restricted spectral coefficient."""

    alpha: float
    stderr: float

    def __float__(self):
        return self.alpha


@dataclasses.dataclass(frozen=True, eq=False)
class AlphaSupResult:
    """Largest restricted spectral coefficient over statistics and grid."""

    alpha: float
    f_label: str
    psi: np.ndarray
    stderr: float | None


def _column_values(f, X: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(X), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.ndim != 2 or vals.shape[0] != X.shape[0]:
        raise InvalidInputError(
            f"statistic returned shape {vals.shape} for {X.shape[0]} points"
        )
    return vals


_DEGENERATE_TOL = 1e-13


def _check_degenerate(den2: np.ndarray, vals: np.ndarray):
    scale = np.maximum(1.0, np.abs(vals).max(axis=0) ** 2)
    if np.any(den2 <= _DEGENERATE_TOL * scale):
        raise DegenerateStatisticError(
            "statistic is almost surely constant under p_psi"
        )


def _alpha_exact(kernel, psi, vals_fn, steps):
    tm = kernel.transition_matrix(psi)
    K = tm.matrix if steps == 1 else np.linalg.matrix_power(tm.matrix, steps)
    w = kernel.model.probabilities(psi)
    vals = vals_fn(tm.states)
    means = w @ vals
    centered = vals - means
    den2 = w @ centered ** 2
    _check_degenerate(den2, vals)
    num2 = w @ (K @ centered) ** 2
    return np.sqrt(num2 / den2)


def _alpha_mc(kernel, psi, vals_fn, steps, n_outer, rng):
    """Product-form estimator from two independent inner chains.

    For each outer draw x ~ p_psi two independent ``steps``-step chains
    started at x give y, y'; E[(f(y) - Ef)(f(y') - Ef)] = ||P^steps
    (f - Ef)||^2, so the numerator estimate is unbiased given exact
    centering (the plug-in mean adds O(1/n_outer) bias).  Draw order:
    outer sample, chain one, chain two.
    """
    model = kernel.model
    x = model.sample_exact(psi, n_outer, rng)
    y1 = kernel.m_steps(psi, x, steps, rng)
    y2 = kernel.m_steps(psi, x, steps, rng)
    fx = vals_fn(x)
    mu = fx.mean(axis=0)
    a = (vals_fn(y1) - mu) * (vals_fn(y2) - mu)
    b = (fx - mu) ** 2
    A = a.mean(axis=0)
    B = b.mean(axis=0)
    _check_degenerate(B, fx)
    ratio = A / B
    var_a = a.var(axis=0, ddof=1)
    var_b = b.var(axis=0, ddof=1)
    cov_ab = ((a - A) * (b - B)).sum(axis=0) / (n_outer - 1)
    var_r = (var_a / B**2 + A**2 * var_b / B**4 - 2 * A * cov_ab / B**3) / n_outer
    se_r = np.sqrt(np.maximum(var_r, 0.0))
    alpha = np.sqrt(np.maximum(ratio, 0.0))
    # near zero the sqrt delta method degenerates; floor conservatively
    se = np.where(alpha**2 > se_r, se_r / np.maximum(2 * alpha, 1e-300), np.sqrt(se_r))
    return alpha, se


def restricted_alpha(
    kernel: MarkovKernel,
    psi,
    f: Callable[[np.ndarray], np.ndarray],
    *,
    steps: int = 1,
    mode: str = "exact",
    n_outer: int = 10_000,
    rng=None,
):
    """Restricted spectral coefficient of the ``steps``-step kernel at psi.

    ``f`` receives an ``(N, state_dim)`` array and returns ``(N,)`` or
    ``(N, q)`` statistic values; for vector statistics the maximum
    coefficient over components is returned.  ``mode="exact"`` uses the
    transition matrix and returns a float; ``mode="mc"`` uses ``n_outer``
    stationary draws with two independent inner chains each and returns
    an :class:`AlphaEstimate` with a standard error.
    """
    psi = check_parameter(kernel.model, psi)
    steps = int(steps)
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    vals_fn = lambda X: _column_values(f, X)
    if mode == "exact":
        return float(_alpha_exact(kernel, psi, vals_fn, steps).max())
    if mode == "mc":
        n_outer = int(n_outer)
        if n_outer < 2:
            raise InvalidInputError(f"n_outer must be >= 2, got {n_outer}")
        alpha, se = _alpha_mc(kernel, psi, vals_fn, steps, n_outer, _as_generator(rng))
        j = int(np.argmax(alpha))
        return AlphaEstimate(float(alpha[j]), float(se[j]))
    raise InvalidInputError(f"mode must be 'exact' or 'mc', got {mode!r}")


def _product_labels(p: int) -> list[str]:
    labels = [f"phi_{i + 1}" for i in range(p)]
    labels += [
        f"phi_{i + 1}*phi_{j + 1}" for i in range(p) for j in range(i, p)
    ]
    return labels


def _product_features(model: Model):
    p = model.p
    ii, jj = np.triu_indices(p)

    def vals_fn(X):
        ph = model.phi_batch(X)
        return np.concatenate([ph, ph[..., ii] * ph[..., jj]], axis=-1)

    return vals_fn, _product_labels(p)


def alpha_sup(
    kernel: MarkovKernel,
    domain: ParamDomain,
    grid_resolution: int = 5,
    *,
    steps: int = 1,
    mode: str = "exact",
    n_outer: int = 10_000,
    rng=None,
) -> AlphaSupResult:
    """Worst-case restricted spectral coefficient over a parameter ball.

    Sweeps every statistic phi_i and product phi_i phi_j (i <= j) over
    the :func:`domain_grid` lattice and reports the maximum with its
    argmax statistic and parameter.  In ``mode="mc"`` the outer sample
    and both inner chains are drawn once per lattice point (lattice
    order, statistics share the draws) and the standard error of the
    winning cell is reported.  Components whose variance degenerates at
    some lattice point are skipped at that point.
    """
    model = kernel.model
    if domain.dim != model.p:
        raise InvalidInputError(
            f"domain dimension {domain.dim} does not match model.p = {model.p}"
        )
    steps = int(steps)
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    if mode not in ("exact", "mc"):
        raise InvalidInputError(f"mode must be 'exact' or 'mc', got {mode!r}")
    vals_fn, labels = _product_features(model)
    grid = domain_grid(domain, grid_resolution)
    rng = _as_generator(rng)

    best = (-np.inf, "", None, None)
    for psi in grid:
        if mode == "exact":
            tm = kernel.transition_matrix(psi)
            w = model.probabilities(psi)
            vals = vals_fn(tm.states)
            means = w @ vals
            centered = vals - means
            den2 = w @ centered**2
            scale = np.maximum(1.0, np.abs(vals).max(axis=0) ** 2)
            ok = den2 > _DEGENERATE_TOL * scale
            K = tm.matrix if steps == 1 else np.linalg.matrix_power(tm.matrix, steps)
            num2 = w @ (K @ centered) ** 2
            alpha = np.where(ok, np.sqrt(num2 / np.where(ok, den2, 1.0)), -np.inf)
            se = None
        else:
            x = model.sample_exact(psi, n_outer, rng)
            y1 = kernel.m_steps(psi, x, steps, rng)
            y2 = kernel.m_steps(psi, x, steps, rng)
            fx = vals_fn(x)
            mu = fx.mean(axis=0)
            a = (vals_fn(y1) - mu) * (vals_fn(y2) - mu)
            b = (fx - mu) ** 2
            A = a.mean(axis=0)
            B = b.mean(axis=0)
            scale = np.maximum(1.0, np.abs(fx).max(axis=0) ** 2)
            ok = B > _DEGENERATE_TOL * scale
            Bs = np.where(ok, B, 1.0)
            ratio = A / Bs
            var_a = a.var(axis=0, ddof=1)
            var_b = b.var(axis=0, ddof=1)
            cov_ab = ((a - A) * (b - B)).sum(axis=0) / (n_outer - 1)
            var_r = (var_a / Bs**2 + A**2 * var_b / Bs**4 - 2 * A * cov_ab / Bs**3) / n_outer
            se_r = np.sqrt(np.maximum(var_r, 0.0))
            alpha = np.where(ok, np.sqrt(np.maximum(ratio, 0.0)), -np.inf)
            se = np.where(alpha**2 > se_r, se_r / np.maximum(2 * alpha, 1e-300), np.sqrt(se_r))
        j = int(np.argmax(alpha))
        if alpha[j] > best[0]:
            best = (float(alpha[j]), labels[j], psi.copy(), None if se is None else float(se[j]))
    if not np.isfinite(best[0]):
        raise DegenerateStatisticError("all statistics degenerate on the lattice")
    return AlphaSupResult(alpha=best[0], f_label=best[1], psi=best[2], stderr=best[3])
