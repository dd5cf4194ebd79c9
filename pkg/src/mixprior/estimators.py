"""Mixing-weight estimators on a fixed atom set.

Three estimators share one data structure, the (M, K) log-likelihood matrix:

* the multiplicative self-consistency update, an EM step whose fixed points
  are exactly the stationary points of the discretized log-likelihood and
  whose objective never decreases (``npmle_step`` / ``npmle_run``);
* the same update on kernel-smoothed data against kernel-smoothed noise
  (``dsmle_prepare`` feeds ``npmle_run``);
* projected gradient ascent on the log-likelihood plus an observable-space
  entropy penalty (``mple_run``), whose data-free limit is the
  maximum-entropy reference prior (``reference_prior_run``).

The entropy of the predicted measurement density has no closed form, so it
is estimated by Monte Carlo with points drawn from the current mixture;
``z_entropy_quadrature`` provides the deterministic quadrature analogue
used in tests and diagnostics.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .core import (
    AtomSet,
    ForwardModel,
    GaussianNoise,
    LikelihoodMatrix,
    MeasurementSet,
    NoiseModel,
    WeightVector,
    forward_values,
    likelihood_matrix,
    log_likelihood_dd,
    log_marginal_likelihood,
)
from .errors import NumericalError, ValidationError

ARMIJO_SLOPE = 1e-4
MIN_STEP = 1e-20

TERMINATION_REASONS = ("max-iter", "tol", "error")


# ---------------------------------------------------------------------------
# iteration trace


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    w_delta_l1: float


@dataclass(frozen=True)
class IterationTrace:
    """Per-iteration objective and weight movement, with the final weights
    and the termination reason ("max-iter", "tol", or "error")."""

    records: tuple
    final: WeightVector
    reason: str

    def __post_init__(self):
        if self.reason not in TERMINATION_REASONS:
            raise ValidationError(f"unknown termination reason {self.reason!r}")
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def iterations(self) -> int:
        return len(self.records)

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def write_csv(self, path):
        from .core import format_float

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "w_delta_l1"])
            for r in self.records:
                writer.writerow(
                    [r.iteration, format_float(r.objective), format_float(r.w_delta_l1)]
                )


# ---------------------------------------------------------------------------
# self-consistency (EM) updates


def npmle_step(
    matrix: LikelihoodMatrix,
    weights: WeightVector,
    measurement_weights=None,
) -> WeightVector:
    """One multiplicative self-consistency update.

    ``w_k  <-  w_k * sum_m b_m L[m,k] / (sum_j w_j L[m,j])`` with uniform
    ``b_m = 1/M`` by default.  ``measurement_weights`` admits a non-uniform
    empirical measure over the records (they must sum to one); the image
    deconvolution iteration is this update with pixel masses as ``b``.

    Atoms with zero weight stay at exactly zero.
    """
    if weights.count != matrix.atoms.count:
        raise ValidationError("weight count does not match atom count")
    m_count = matrix.data.count
    if measurement_weights is None:
        log_b = np.full(m_count, -np.log(m_count))
    else:
        b = np.asarray(measurement_weights, dtype=float)
        if b.shape != (m_count,):
            raise ValidationError("measurement weights must have one entry per record")
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValidationError("measurement weights must be finite and non-negative")
        if abs(float(np.sum(b)) - 1.0) > 1e-9:
            raise ValidationError("measurement weights must sum to 1")
        with np.errstate(divide="ignore"):
            log_b = np.log(b)
    log_marg = log_marginal_likelihood(matrix, weights)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights.w)
    log_new = log_w + logsumexp(
        matrix.log_values + (log_b - log_marg)[:, None], axis=0
    )
    new = np.exp(log_new)
    return WeightVector.normalized(new)


def npmle_run(
    matrix: LikelihoodMatrix,
    w0: WeightVector,
    max_iter: int = 500,
    tol: float = 1e-9,
) -> IterationTrace:
    """Iterate the self-consistency update until the L1 weight movement
    falls below ``tol`` or ``max_iter`` steps have run.

    The trace objective is the summed log-likelihood (M times the average
    log marginal); the EM property makes it non-decreasing.
    """
    if max_iter < 0:
        raise ValidationError("max_iter must be >= 0")
    if not tol >= 0:
        raise ValidationError("tol must be >= 0")
    m_count = matrix.data.count
    w = w0
    records = []
    reason = "max-iter"
    for iteration in range(1, max_iter + 1):
        w_next = npmle_step(matrix, w)
        delta = float(np.sum(np.abs(w_next.w - w.w)))
        w = w_next
        objective = m_count * log_likelihood_dd(matrix, w)
        records.append(TraceRecord(iteration, objective, delta))
        if delta < tol:
            reason = "tol"
            break
    return IterationTrace(records=tuple(records), final=w, reason=reason)


def npmle_step_density(
    grid_matrix: LikelihoodMatrix,
    density_values,
    cell_volume: float,
    weights: WeightVector,
) -> WeightVector:
    """Self-consistency update driven by a target measurement density.

    Replaces the empirical sum over records with quadrature of
    ``density(z) * L(z, x_k) / (sum_j w_j L(z, x_j))`` over the grid the
    matrix was built on.  A weight vector whose pushforward equals the
    target density is a fixed point.  Test and diagnostic use.
    """
    dens = np.asarray(density_values, dtype=float)
    if dens.shape != (grid_matrix.data.count,):
        raise ValidationError("density values must have one entry per grid node")
    if np.any(dens < 0) or not np.all(np.isfinite(dens)):
        raise ValidationError("density values must be finite and non-negative")
    if not (cell_volume > 0):
        raise ValidationError("cell volume must be positive")
    if weights.count != grid_matrix.atoms.count:
        raise ValidationError("weight count does not match atom count")
    log_marg = log_marginal_likelihood(grid_matrix, weights)
    ratio = np.exp(grid_matrix.log_values - log_marg[:, None])
    integral = cell_volume * np.sum(dens[:, None] * ratio, axis=0)
    return WeightVector.normalized(weights.w * integral)


# ---------------------------------------------------------------------------
# data/model smoothing


@dataclass(frozen=True)
class DsmleConfig:
    """Data augmentation settings: kernel bandwidth, draws per record, seed."""

    bandwidth: float
    samples_per_measurement: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth >= 0):
            raise ValidationError("bandwidth must be finite and >= 0")
        if self.samples_per_measurement < 1:
            raise ValidationError("need at least one sample per measurement")


def dsmle_prepare(
    data: MeasurementSet, noise: NoiseModel, cfg: DsmleConfig
) -> tuple:
    """Kernel-smooth the data and the noise consistently.

    Each record is replaced by ``S`` draws ``z + bandwidth * eps`` with
    standard-normal ``eps``, and the noise gains the same kernel in closed
    form (Gaussian only: the convolution of two Gaussians is Gaussian).
    Returns the augmented measurement set and the smoothed noise model.
    Masks and groups are inherited; augmented ids are ``"<id>#<j>"``.
    """
    if not isinstance(noise, GaussianNoise):
        raise ValidationError(
            "data/model smoothing needs Gaussian noise; the smoothed noise "
            "density has no closed form otherwise"
        )
    rng = np.random.default_rng(cfg.seed)
    s = cfg.samples_per_measurement
    m, n = data.count, data.dim
    eps = rng.standard_normal((m, s, n))
    zeta = data.z[:, None, :] + cfg.bandwidth * eps
    ids = tuple(f"{rid}#{j}" for rid in data.ids for j in range(s))
    groups = tuple(g for g in data.groups for _ in range(s))
    mask = np.repeat(data.mask, s, axis=0)
    augmented = MeasurementSet(
        ids=ids, z=zeta.reshape(m * s, n), mask=mask, groups=groups
    )
    return augmented, noise.smoothed(cfg.bandwidth)


# ---------------------------------------------------------------------------
# entropy of the predicted measurement density


class EntropyEstimate(NamedTuple):
    """Monte-Carlo entropy value together with its sample count."""

    value: float
    sample_count: int


def z_entropy(ent_matrix: LikelihoodMatrix, weights: WeightVector) -> EntropyEstimate:
    """Monte-Carlo estimate of the entropy of the predicted measurement
    density, from a likelihood matrix over points drawn from that density:
    ``-(1/J) sum_j log rho(z_j | w)``."""
    j_count = ent_matrix.data.count
    value = -float(np.mean(log_marginal_likelihood(ent_matrix, weights)))
    return EntropyEstimate(value=value, sample_count=j_count)


def z_entropy_quadrature(
    grid_matrix: LikelihoodMatrix, weights: WeightVector, cell_volume: float
) -> float:
    """Quadrature evaluation of the predicted-density entropy over the grid
    the matrix was built on."""
    if not (cell_volume > 0):
        raise ValidationError("cell volume must be positive")
    log_rho = log_marginal_likelihood(grid_matrix, weights)
    rho = np.exp(log_rho)
    return -float(cell_volume * np.sum(rho * log_rho))


# ---------------------------------------------------------------------------
# penalized ascent


@dataclass(frozen=True)
class MpleConfig:
    """Settings for entropy-penalized ascent.

    ``gamma`` weighs the entropy term and must be given explicitly; there
    is no universal default.  ``importance_samples`` defaults to 64 K.
    """

    gamma: float
    importance_samples: int | None = None
    step: float = 1.0
    backtrack: float = 0.5
    max_iter: int = 200
    tol: float = 1e-9

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValidationError("gamma must be finite and >= 0")
        if self.importance_samples is not None and self.importance_samples < 1:
            raise ValidationError("importance sample count must be >= 1")
        if not (self.step > 0):
            raise ValidationError("step must be positive")
        if not (0 < self.backtrack < 1):
            raise ValidationError("backtrack factor must lie in (0, 1)")
        if self.max_iter < 0:
            raise ValidationError("max_iter must be >= 0")
        if not (self.tol >= 0):
            raise ValidationError("tol must be >= 0")


def mple_gradient(
    data_matrix: LikelihoodMatrix | None,
    ent_matrix: LikelihoodMatrix | None,
    weights: WeightVector,
    gamma: float,
    cell_volume: float | None = None,
) -> np.ndarray:
    """Gradient of the penalized objective
    ``sum_m log rho(z_m | w) + gamma * H_Z(w)`` with respect to the weights:

    ``grad_k = sum_m L[m,k] / rho_m - gamma * I_k - gamma``

    where ``I_k`` integrates ``rho(z | x_k) log rho(z | w)``.  With
    ``cell_volume`` unset, ``ent_matrix`` rows are importance points drawn
    from ``rho(. | w)`` and ``I_k`` is the importance-sampling average
    ``(1/J) sum_j (L_ent[j,k] / rho_j) log rho_j``; with ``cell_volume``
    set, the rows are quadrature nodes and ``I_k`` is evaluated exactly.
    The trailing ``-gamma`` is constant across components, so it drops out
    of any simplex-projected step; it is kept for exactness off the simplex.
    """
    grad = np.zeros(weights.count)
    if data_matrix is not None:
        if data_matrix.atoms.count != weights.count:
            raise ValidationError("data matrix does not match weight count")
        log_marg = log_marginal_likelihood(data_matrix, weights)
        grad += np.sum(np.exp(data_matrix.log_values - log_marg[:, None]), axis=0)
    if gamma != 0.0:
        if ent_matrix is None:
            raise ValidationError("entropy term requires an entropy matrix")
        if ent_matrix.atoms.count != weights.count:
            raise ValidationError("entropy matrix does not match weight count")
        log_rho = log_marginal_likelihood(ent_matrix, weights)
        if cell_volume is None:
            j_count = ent_matrix.data.count
            ratio = np.exp(ent_matrix.log_values - log_rho[:, None])
            integral = np.sum(ratio * log_rho[:, None], axis=0) / j_count
        else:
            if not (cell_volume > 0):
                raise ValidationError("cell volume must be positive")
            dens = np.exp(ent_matrix.log_values)
            integral = cell_volume * np.sum(dens * log_rho[:, None], axis=0)
        grad += -gamma * integral - gamma
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    return grad


def simplex_project(values) -> WeightVector:
    """Euclidean projection onto the probability simplex.

    Sort-and-threshold: with ``u`` the values sorted descending and
    ``rho`` the largest index where ``u_rho + (1 - cumsum(u)_rho) / rho``
    stays positive, the projection is ``max(v - theta, 0)`` with
    ``theta = (cumsum(u)_rho - 1) / rho``.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError("expected a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot project non-finite values")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    positive = u + (1.0 - css) / j > 0
    rho = int(np.nonzero(positive)[0][-1])
    theta = (css[rho] - 1.0) / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    return WeightVector.normalized(w)


def _penalized_ascent(
    data_matrix: LikelihoodMatrix | None,
    atoms: AtomSet,
    model: ForwardModel,
    noise: NoiseModel,
    w0: WeightVector,
    cfg: MpleConfig,
    seed: int,
) -> IterationTrace:
    gamma = cfg.gamma
    if data_matrix is None and gamma <= 0:
        raise ValidationError("entropy-only ascent needs gamma > 0")
    if w0.count != atoms.count:
        raise ValidationError("weight count does not match atom count")
    k_count = atoms.count
    j_count = cfg.importance_samples or 64 * k_count
    m_count = data_matrix.data.count if data_matrix is not None else 0
    rng = np.random.default_rng(seed)
    phi = forward_values(model, atoms)

    def surrogate(wv: WeightVector, ent_matrix, log_rho0) -> float:
        # deterministic objective on the iteration's frozen importance
        # sample: data term plus importance-weighted entropy estimate
        value = 0.0
        if data_matrix is not None:
            value += m_count * log_likelihood_dd(data_matrix, wv)
        if gamma != 0.0:
            log_rho = log_marginal_likelihood(ent_matrix, wv)
            with np.errstate(over="ignore"):
                ratio = np.exp(log_rho - log_rho0)
            value += gamma * (-float(np.sum(ratio * log_rho)) / j_count)
        return value

    w = w0
    records = []
    reason = "max-iter"
    trial = cfg.step
    for iteration in range(1, cfg.max_iter + 1):
        ent_matrix = None
        log_rho0 = None
        if gamma != 0.0:
            idx = rng.choice(k_count, size=j_count, p=w.w)
            pts = phi[idx] + noise.sample(rng, j_count)
            ent_data = MeasurementSet.from_points(pts, id_prefix="q")
            ent_matrix = likelihood_matrix(
                model, noise, atoms, ent_data, forward_cache=phi
            )
            log_rho0 = log_marginal_likelihood(ent_matrix, w)
        grad = mple_gradient(data_matrix, ent_matrix, w, gamma)
        base = surrogate(w, ent_matrix, log_rho0)
        if not np.isfinite(base):
            raise NumericalError("non-finite objective")
        step = trial
        accepted = None
        while step > MIN_STEP:
            cand = simplex_project(w.w + step * grad)
            value = surrogate(cand, ent_matrix, log_rho0)
            gain = ARMIJO_SLOPE * float(np.sum(grad * (cand.w - w.w)))
            if np.isfinite(value) and value >= base + gain:
                accepted = (cand, value)
                break
            step *= cfg.backtrack
        if accepted is None:
            # no admissible step: the iterate is (numerically) stationary
            records.append(TraceRecord(iteration, base, 0.0))
            reason = "tol"
            break
        w_next, objective = accepted
        delta = float(np.sum(np.abs(w_next.w - w.w)))
        w = w_next
        trial = min(cfg.step, step / cfg.backtrack)
        records.append(TraceRecord(iteration, objective, delta))
        if delta < cfg.tol:
            reason = "tol"
            break
    return IterationTrace(records=tuple(records), final=w, reason=reason)


def mple_run(
    data_matrix: LikelihoodMatrix,
    atoms: AtomSet,
    model: ForwardModel,
    noise: NoiseModel,
    w0: WeightVector,
    cfg: MpleConfig,
    seed: int = 0,
) -> IterationTrace:
    """Projected gradient ascent on the entropy-penalized log-likelihood.

    Each iteration draws a fresh importance sample from the current
    mixture, freezes it, and runs a backtracking (Armijo) line search on
    the frozen surrogate objective, so every iteration is internally
    deterministic and the whole run is reproducible from ``seed``.  The
    trace objective is the surrogate value, which carries Monte-Carlo
    noise across iterations; it is not guaranteed monotone.
    """
    if data_matrix.atoms.count != atoms.count:
        raise ValidationError("data matrix does not match atom set")
    return _penalized_ascent(data_matrix, atoms, model, noise, w0, cfg, seed)


def reference_prior_run(
    atoms: AtomSet,
    model: ForwardModel,
    noise: NoiseModel,
    w0: WeightVector,
    cfg: MpleConfig,
    seed: int = 0,
) -> IterationTrace:
    """Maximum-entropy reference weights: the penalized ascent with the
    data term dropped, i.e. ascent on ``gamma * H_Z(w)`` alone."""
    return _penalized_ascent(None, atoms, model, noise, w0, cfg, seed)


# ---------------------------------------------------------------------------
# estimator configuration files


@dataclass(frozen=True)
class EstimatorSettings:
    """Parsed estimator sections of a run configuration file.

    Fields left as None take method defaults downstream: the smoothing
    bandwidth falls back to the noise scale, the smoothing seed to the run
    seed, and gamma must be given explicitly before the penalized ascent
    can run.
    """

    npmle_max_iter: int = 500
    npmle_tol: float = 1e-9
    dsmle_bandwidth: float | None = None
    dsmle_samples: int = 8
    dsmle_seed: int | None = None
    mple_gamma: float | None = None
    mple_samples: int | None = None
    mple_step: float = 1.0
    mple_backtrack: float = 0.5
    mple_max_iter: int = 200
    mple_tol: float = 1e-9


_CONFIG_FIELDS = {
    "npmle": {"max_iter": int, "tol": float},
    "dsmle": {"bandwidth": float, "samples": int, "seed": int},
    "mple": {
        "gamma": float,
        "samples": int,
        "step": float,
        "backtrack": float,
        "max_iter": int,
        "tol": float,
    },
}

_CONFIG_TARGETS = {
    ("npmle", "max_iter"): "npmle_max_iter",
    ("npmle", "tol"): "npmle_tol",
    ("dsmle", "bandwidth"): "dsmle_bandwidth",
    ("dsmle", "samples"): "dsmle_samples",
    ("dsmle", "seed"): "dsmle_seed",
    ("mple", "gamma"): "mple_gamma",
    ("mple", "samples"): "mple_samples",
    ("mple", "step"): "mple_step",
    ("mple", "backtrack"): "mple_backtrack",
    ("mple", "max_iter"): "mple_max_iter",
    ("mple", "tol"): "mple_tol",
}


def load_estimator_config(path) -> EstimatorSettings:
    """Read the [npmle], [dsmle], and [mple] sections of an INI file.

    Unknown keys inside those sections are errors.  Other sections are
    left to the caller (the command-line front end keeps model and noise
    settings in the same file).
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"cannot read config file {path}")
    values = {}
    for section, fields in _CONFIG_FIELDS.items():
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in fields:
                raise ValidationError(
                    f"unknown key '{key}' in config section [{section}]"
                )
            try:
                values[_CONFIG_TARGETS[(section, key)]] = fields[key](raw)
            except ValueError as exc:
                raise ValidationError(
                    f"bad value for {section}.{key}: {raw!r}"
                ) from exc
    return EstimatorSettings(**values)
