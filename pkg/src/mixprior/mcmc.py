"""Posterior sampling and posterior-merge atom generation.

Atoms need not come from a grid: running one Markov chain per measurement
against the first-stage posterior and merging thinned draws yields a
parameter-space point cloud already concentrated where the data lives.
Two samplers are provided: a fixed-covariance random-walk
Metropolis-Hastings and an adaptive mixture variant whose main proposal
component tracks the empirical covariance of the chain history.

Every chain owns a private random stream derived from (master seed,
record id), so the merged atom set is independent of scheduling.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .core import AtomSet, MeasurementSet, format_float, log_likelihood_at
from .errors import NumericalError, ValidationError

SMALL_PROPOSAL_STD = 0.01  # pre-adaptation scale, as 0.01^2/d covariance
ADAPTIVE_SCALE = 2.38**2  # optimal random-walk scaling, as scale/d
COV_REGULARIZATION = 1e-10
INIT_RETRIES = 100


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings: length, burn-in, thinning, proposal scale, adaptivity.

    ``burn_in`` defaults to half the steps.  ``beta`` is the probability of
    proposing from the fixed small component once adaptation is active.
    ``proposal_scale`` is the isotropic proposal std of the fixed-covariance
    sampler; the adaptive sampler's components are pinned by convention
    (2.38^2/d times the empirical covariance, 0.01^2/d identity).
    """

    steps: int
    burn_in: int | None = None
    thinning: int = 1
    proposal_scale: float = 1.0
    adaptive: bool = False
    beta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("need at least one step")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.steps // 2)
        if not (0 <= self.burn_in < self.steps):
            raise ValidationError("burn-in must satisfy 0 <= burn_in < steps")
        if self.thinning < 1:
            raise ValidationError("thinning must be >= 1")
        if not (self.proposal_scale >= 0):
            raise ValidationError("proposal scale must be >= 0")
        if not (0 <= self.beta <= 1):
            raise ValidationError("beta must lie in [0, 1]")

    @property
    def retained(self) -> int:
        return (self.steps - self.burn_in) // self.thinning


@dataclass(frozen=True)
class Chain:
    """Retained samples of one chain with bookkeeping.

    ``accepted`` flags whether the proposal at each retained step was
    accepted; ``acceptance_count`` counts acceptances over all steps.
    """

    samples: np.ndarray
    log_density: np.ndarray
    step_index: np.ndarray
    accepted: np.ndarray
    acceptance_count: int
    total_steps: int
    seed: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValidationError("samples must form an (R, d) array")
        if not np.all(np.isfinite(s)):
            raise ValidationError("samples must be finite")
        if not (0 <= self.acceptance_count <= self.total_steps):
            raise ValidationError("acceptance count must lie in [0, steps]")
        for name, arr in (("log_density", self.log_density),
                          ("step_index", self.step_index),
                          ("accepted", self.accepted)):
            if np.asarray(arr).shape != (s.shape[0],):
                raise ValidationError(f"{name} length must match sample count")

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["step"] + [f"x_{i}" for i in range(self.dim)] + ["log_target", "accepted"]
            )
            for r in range(self.count):
                writer.writerow(
                    [int(self.step_index[r])]
                    + [format_float(v) for v in self.samples[r]]
                    + [format_float(self.log_density[r]), "1" if self.accepted[r] else "0"]
                )


def _check_log_target(value, where) -> float:
    value = float(value)
    if np.isnan(value) or value == np.inf:
        raise NumericalError(f"log target is {value!r} {where}")
    return value


def _run_chain(log_target, x_init, cfg: SamplerConfig, propose) -> Chain:
    x = np.array(x_init, dtype=float).reshape(-1)
    lp = _check_log_target(log_target(x), "at the initial point")
    if lp == -np.inf:
        raise ValidationError("initial point has zero posterior density")
    rng = np.random.default_rng(cfg.seed)
    retained = cfg.retained
    samples = np.empty((retained, x.size))
    log_dens = np.empty(retained)
    steps_idx = np.empty(retained, dtype=int)
    flags = np.empty(retained, dtype=bool)
    kept = 0
    accepted_total = 0
    for t in range(cfg.steps):
        prop = propose(rng, x, t)
        lp_prop = _check_log_target(log_target(prop), f"at step {t}")
        log_alpha = lp_prop - lp
        u = rng.uniform()
        if log_alpha >= 0 or u < np.exp(log_alpha):
            x = prop
            lp = lp_prop
            accepted_total += 1
            was_accepted = True
        else:
            was_accepted = False
        post = t - cfg.burn_in
        if post >= 0 and (post + 1) % cfg.thinning == 0 and kept < retained:
            samples[kept] = x
            log_dens[kept] = lp
            steps_idx[kept] = t
            flags[kept] = was_accepted
            kept += 1
        yield_state = getattr(propose, "observe", None)
        if yield_state is not None:
            yield_state(x)
    return Chain(
        samples=samples[:kept],
        log_density=log_dens[:kept],
        step_index=steps_idx[:kept],
        accepted=flags[:kept],
        acceptance_count=accepted_total,
        total_steps=cfg.steps,
        seed=cfg.seed,
    )


def metropolis_hastings(log_target, x_init, cfg: SamplerConfig) -> Chain:
    """Random-walk Metropolis-Hastings with fixed isotropic Gaussian
    proposals of std ``cfg.proposal_scale``.

    Retains exactly ``(steps - burn_in) // thinning`` samples.  With
    proposal scale zero the chain never moves yet accepts every proposal.
    """

    def propose(rng, x, t):
        return x + cfg.proposal_scale * rng.standard_normal(x.size)

    return _run_chain(log_target, x_init, cfg, propose)


class _AdaptiveProposal:
    """Mixture proposal tracking the running covariance of the history."""

    def __init__(self, dim: int, beta: float, x0: np.ndarray):
        self.dim = dim
        self.beta = beta
        self.n = 1
        self.mean = x0.astype(float).copy()
        self.m2 = np.zeros((dim, dim))
        self.small_std = SMALL_PROPOSAL_STD / np.sqrt(dim)

    def observe(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += np.outer(delta, x - self.mean)

    def __call__(self, rng, x, t):
        adapted = self.n >= max(2, 2 * self.dim)
        if adapted and 0 < self.beta < 1:
            use_small = rng.uniform() < self.beta
        elif self.beta == 1 or not adapted:
            use_small = True
        else:
            use_small = False
        z = rng.standard_normal(self.dim)
        if use_small:
            return x + self.small_std * z
        cov = self.m2 / (self.n - 1) + COV_REGULARIZATION * np.eye(self.dim)
        try:
            chol = np.linalg.cholesky((ADAPTIVE_SCALE / self.dim) * cov)
        except np.linalg.LinAlgError:
            return x + self.small_std * z
        # elementwise product + pairwise sum keeps the draw independent of
        # the BLAS thread count
        return x + np.sum(chol * z[np.newaxis, :], axis=1)


def adaptive_mixture_metropolis(log_target, x_init, cfg: SamplerConfig) -> Chain:
    """Adaptive-mixture random walk: with probability ``1 - beta`` propose
    from a Gaussian scaled to the running sample covariance of the chain
    history (once at least 2 d states exist), otherwise from a fixed small
    isotropic component of covariance ``0.01^2/d I``.

    With ``beta = 1`` this reduces exactly to ``metropolis_hastings`` with
    proposal std ``0.01 / sqrt(d)``.
    """
    x0 = np.array(x_init, dtype=float).reshape(-1)
    proposal = _AdaptiveProposal(x0.size, cfg.beta, x0)
    return _run_chain(log_target, x_init, cfg, proposal)


def gelman_rubin(chains) -> np.ndarray:
    """Potential scale reduction factor per coordinate.

    Needs at least two chains of equal length >= 10.  Identical chains
    give exactly 1.0; constant chains stuck at different points give the
    +inf sentinel.
    """
    if len(chains) < 2:
        raise ValidationError("need at least two chains")
    lengths = {c.count for c in chains}
    dims = {c.dim for c in chains}
    if len(lengths) != 1 or len(dims) != 1:
        raise ValidationError("chains must have equal lengths and dimensions")
    n = lengths.pop()
    if n < 10:
        raise ValidationError("chains must have length >= 10")
    x = np.stack([c.samples for c in chains])  # (m, n, d)
    m = x.shape[0]
    chain_means = x.mean(axis=1)  # (m, d)
    within = np.mean(np.var(x, axis=1, ddof=1), axis=0)  # (d,)
    between_over_n = np.var(chain_means, axis=0, ddof=1)  # (d,)
    psrf = np.empty(x.shape[2])
    for i in range(x.shape[2]):
        if between_over_n[i] == 0.0:
            psrf[i] = 1.0
        elif within[i] == 0.0:
            psrf[i] = np.inf
        else:
            v_hat = (n - 1) / n * within[i] + between_over_n[i]
            psrf[i] = np.sqrt(v_hat / within[i])
    return psrf


# ---------------------------------------------------------------------------
# first-stage priors for chain targets


@dataclass(frozen=True)
class BoxUniformPrior:
    """Uniform density over an axis-aligned box; the usual first-stage prior."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lows = np.atleast_1d(np.asarray(self.lows, dtype=float))
        highs = np.atleast_1d(np.asarray(self.highs, dtype=float))
        if lows.shape != highs.shape or lows.ndim != 1:
            raise ValidationError("box bounds must be matching 1-D arrays")
        if not np.all(np.isfinite(lows)) or not np.all(np.isfinite(highs)):
            raise ValidationError("box bounds must be finite")
        if np.any(highs <= lows):
            raise ValidationError("box needs lo < hi in every dimension")
        lows = lows.copy()
        highs = highs.copy()
        lows.setflags(write=False)
        highs.setflags(write=False)
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "_log_vol", float(np.sum(np.log(highs - lows))))

    @property
    def dim(self) -> int:
        return self.lows.size

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if np.all((x >= self.lows) & (x <= self.highs)):
            return -self._log_vol
        return -np.inf

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lows, self.highs)


def _record_seed(master_seed: int, record_id: str, role: str) -> int:
    material = f"{int(master_seed)}|{record_id}|{role}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def build_atom_set(
    model,
    noise,
    prior,
    data: MeasurementSet,
    per_measurement: int,
    cfg: SamplerConfig,
) -> AtomSet:
    """Posterior-merge atoms: one chain per record targeting the
    first-stage posterior, thinned to ``per_measurement`` draws each, all
    draws merged.  Returns ``M * per_measurement`` atoms tagged
    "posterior-merge"; the natural companion weights are uniform.

    Burn-in is half the steps and thinning is derived so that at least
    ``per_measurement`` samples are retained; the last ``per_measurement``
    retained samples of each chain survive.  Chains are initialized from
    the prior with up to 100 retries to find a point of finite target.
    """
    if per_measurement < 1:
        raise ValidationError("per-measurement sample count must be >= 1")
    burn_in = cfg.steps // 2
    available = cfg.steps - burn_in
    if available < per_measurement:
        raise ValidationError(
            f"{cfg.steps} steps cannot retain {per_measurement} samples per record"
        )
    thinning = max(1, available // per_measurement)
    points = []
    sampler = adaptive_mixture_metropolis if cfg.adaptive else metropolis_hastings
    for m in range(data.count):
        rid = data.ids[m]
        z_m, mask_m = data.z[m], data.mask[m]

        def log_target(x, z_m=z_m, mask_m=mask_m):
            lp = prior.log_density(x)
            if lp == -np.inf:
                return -np.inf
            return lp + log_likelihood_at(model, noise, z_m, mask_m, x)

        init_rng = np.random.default_rng(_record_seed(cfg.seed, rid, "init"))
        x0 = None
        for _ in range(INIT_RETRIES):
            candidate = prior.sample(init_rng)
            if np.isfinite(log_target(candidate)):
                x0 = candidate
                break
        if x0 is None:
            raise NumericalError(
                f"could not initialize the chain for record '{rid}' "
                f"after {INIT_RETRIES} prior draws"
            )
        chain_cfg = replace(
            cfg,
            burn_in=burn_in,
            thinning=thinning,
            seed=_record_seed(cfg.seed, rid, "chain"),
        )
        chain = sampler(log_target, x0, chain_cfg)
        points.append(chain.samples[-per_measurement:])
    return AtomSet(np.concatenate(points, axis=0), provenance="posterior-merge")
