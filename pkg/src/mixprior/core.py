"""Probabilistic data model shared by all estimators.

A population measurement ``z`` is modeled as ``z = phi(x) + e`` where ``phi``
is a known deterministic forward map, ``x`` the unknown per-individual
parameter, and ``e`` additive noise with known density.  Priors over ``x``
are discretized as weighted atom sets; everything downstream works on the
M x K matrix of per-measurement, per-atom log-likelihoods.

All likelihood algebra is carried out in log space with log-sum-exp
reductions.  Matrix entries are floored at ``LOG_LIKELIHOOD_FLOOR`` so a
multiplicative weight update can never freeze an atom through an exact zero.
Reductions use numpy's pairwise summation, which is deterministic and
independent of threading, so repeated runs are bit-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ValidationError

LOG_LIKELIHOOD_FLOOR = -700.0
SIMPLEX_TOL = 1e-12

ATOM_PROVENANCES = ("grid", "posterior-merge", "file")


def format_float(x: float) -> str:
    """Decimal text that round-trips float64 exactly (17 significant digits)."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# forward models


@dataclass(frozen=True)
class ForwardModel:
    """Deterministic map from a parameter vector to a noise-free observation.

    Parameters
    ----------
    dim_param : int
        Dimension of the parameter space.
    dim_obs : int
        Dimension of the observation space.
    eval : callable
        Maps a ``(dim_param,)`` array to a ``(dim_obs,)`` array.  Must be
        pure: identical inputs yield bit-identical outputs.
    """

    dim_param: int
    dim_obs: int
    eval: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.dim_param < 1:
            raise ValidationError("forward model needs dim_param >= 1")
        if self.dim_obs < 1:
            raise ValidationError("forward model needs dim_obs >= 1")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)


def forward_values(model: ForwardModel, atoms: "AtomSet") -> np.ndarray:
    """Evaluate the forward map at every atom, as a (K, dim_obs) array.

    Raises
    ------
    NumericalError
        If the model output at any atom is non-finite; the message names
        the offending atom index.
    """
    if atoms.dim != model.dim_param:
        raise ValidationError(
            f"atom dimension {atoms.dim} does not match model "
            f"parameter dimension {model.dim_param}"
        )
    out = np.empty((atoms.count, model.dim_obs))
    with np.errstate(all="ignore"):
        for k in range(atoms.count):
            y = np.asarray(model.eval(atoms.points[k]), dtype=float).reshape(-1)
            if y.shape != (model.dim_obs,):
                raise ValidationError(
                    f"forward model returned shape {y.shape} at atom {k}, "
                    f"expected ({model.dim_obs},)"
                )
            if not np.all(np.isfinite(y)):
                raise NumericalError(
                    f"forward model output is non-finite at atom {k} "
                    f"(x = {atoms.points[k]!r})"
                )
            out[k] = y
    return out


# ---------------------------------------------------------------------------
# noise models


class NoiseModel:
    """Additive measurement-noise density.

    Subclasses provide the log density and a seeded sampler.  A model whose
    density factorizes per coordinate sets ``mask_support`` and implements
    ``coord_log_density``, which lets records with missing coordinates
    contribute through the joint density of their observed coordinates only.
    """

    dim: int
    mask_support: bool = False

    def log_density(self, e) -> np.ndarray:
        """Log density of noise vectors; vectorized over leading axes."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` noise vectors as a (size, dim) array."""
        raise NotImplementedError

    def coord_log_density(self, e, coords) -> np.ndarray:
        raise ValidationError(
            "noise density does not factorize per coordinate; "
            "masked records are unsupported"
        )


class GaussianNoise(NoiseModel):
    """Centered Gaussian noise with diagonal covariance.

    Parameters
    ----------
    sigma : float or array_like
        Per-coordinate standard deviation; a scalar is broadcast to ``dim``.
    dim : int, optional
        Observation dimension; defaults to ``len(sigma)``.
    """

    mask_support = True

    def __init__(self, sigma, dim: int | None = None):
        sig = np.atleast_1d(np.asarray(sigma, dtype=float))
        if dim is None:
            dim = sig.size
        if sig.size == 1:
            sig = np.full(dim, sig[0])
        if sig.shape != (dim,):
            raise ValidationError(
                f"sigma shape {sig.shape} does not match dim {dim}"
            )
        if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
            raise ValidationError("sigma must be finite and positive")
        self.dim = int(dim)
        self.sigma = sig
        self.sigma.setflags(write=False)
        self._log_norm = -np.log(self.sigma * np.sqrt(2.0 * np.pi))

    def log_density(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        if e.shape[-1] != self.dim:
            raise ValidationError(
                f"noise vector has {e.shape[-1]} coordinates, expected {self.dim}"
            )
        return np.sum(-0.5 * (e / self.sigma) ** 2 + self._log_norm, axis=-1)

    def coord_log_density(self, e, coords) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        coords = np.asarray(coords, dtype=int)
        sig = self.sigma[coords]
        return np.sum(-0.5 * (e / sig) ** 2 + self._log_norm[coords], axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((int(size), self.dim)) * self.sigma

    def smoothed(self, bandwidth: float) -> "GaussianNoise":
        """Noise after convolution with a Gaussian kernel of std ``bandwidth``."""
        if bandwidth < 0:
            raise ValidationError("bandwidth must be >= 0")
        return GaussianNoise(np.sqrt(self.sigma**2 + float(bandwidth) ** 2))


# ---------------------------------------------------------------------------
# discretized priors


@dataclass(frozen=True)
class AtomSet:
    """K support points of a discretized prior, as a (K, d) array."""

    points: np.ndarray
    provenance: str = "grid"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValidationError("atom set must be a non-empty (K, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("atom coordinates must be finite")
        if self.provenance not in ATOM_PROVENANCES:
            raise ValidationError(
                f"unknown atom provenance {self.provenance!r}; "
                f"expected one of {ATOM_PROVENANCES}"
            )
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @staticmethod
    def grid_1d(lo: float, hi: float, count: int) -> "AtomSet":
        """Equidistant one-dimensional grid with endpoints included."""
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValidationError("grid needs finite lo < hi")
        if count < 1:
            raise ValidationError("grid needs count >= 1")
        return AtomSet(np.linspace(lo, hi, count)[:, None], provenance="grid")


@dataclass(frozen=True)
class WeightVector:
    """Mixing weights on an atom set: non-negative, summing to one."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite")
        if np.any(w < 0):
            raise ValidationError("weights must be non-negative")
        if abs(float(np.sum(w)) - 1.0) > SIMPLEX_TOL:
            raise ValidationError(
                f"weights must sum to 1 within {SIMPLEX_TOL}, got {np.sum(w)!r}"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def count(self) -> int:
        return self.w.size

    @staticmethod
    def uniform(count: int) -> "WeightVector":
        if count < 1:
            raise ValidationError("need at least one atom")
        return WeightVector(np.full(count, 1.0 / count))

    @staticmethod
    def normalized(values) -> "WeightVector":
        """Non-negative values scaled to unit total."""
        v = np.asarray(values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValidationError("values must be finite and non-negative")
        total = float(np.sum(v))
        if total <= 0:
            raise ValidationError("values must have positive total")
        return WeightVector(v / total)


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class MeasurementSet:
    """M measurement records: id, optional group label, observation, mask.

    ``mask[m, i]`` is True where coordinate ``i`` of record ``m`` was
    observed.  Unobserved entries of ``z`` are ignored everywhere.
    """

    ids: tuple
    z: np.ndarray
    mask: np.ndarray
    groups: tuple

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise ValidationError("measurements must form a non-empty (M, n) array")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != z.shape:
            raise ValidationError("mask shape must match measurement shape")
        ids = tuple(str(i) for i in self.ids)
        groups = tuple(self.groups)
        if len(ids) != z.shape[0] or len(groups) != z.shape[0]:
            raise ValidationError("ids/groups length must match measurement count")
        if len(set(ids)) != len(ids):
            raise ValidationError("measurement ids must be unique")
        if not np.all(np.isfinite(z[mask])):
            raise ValidationError("observed measurement values must be finite")
        z = z.copy()
        z.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "groups", groups)

    @property
    def count(self) -> int:
        return self.z.shape[0]

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    @staticmethod
    def from_points(z, ids=None, groups=None, mask=None, id_prefix="m") -> "MeasurementSet":
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        m = z.shape[0]
        if ids is None:
            width = max(4, len(str(m)))
            ids = tuple(f"{id_prefix}{i:0{width}d}" for i in range(m))
        if groups is None:
            groups = (None,) * m
        if mask is None:
            mask = np.ones(z.shape, dtype=bool)
        return MeasurementSet(ids=tuple(ids), z=z, mask=mask, groups=tuple(groups))

    def subset(self, indices) -> "MeasurementSet":
        idx = np.asarray(indices, dtype=int)
        return MeasurementSet(
            ids=tuple(self.ids[i] for i in idx),
            z=self.z[idx],
            mask=self.mask[idx],
            groups=tuple(self.groups[i] for i in idx),
        )

    def split_by_group(self) -> dict:
        """Partition records by group label, preserving record order.

        Raises if any record lacks a label.
        """
        missing = [i for i, g in zip(self.ids, self.groups) if g is None]
        if missing:
            raise ValidationError(
                f"records without group label: {', '.join(missing[:5])}"
            )
        order: dict = {}
        for i, g in enumerate(self.groups):
            order.setdefault(g, []).append(i)
        return {g: self.subset(ix) for g, ix in order.items()}


# ---------------------------------------------------------------------------
# likelihood matrix and operations on it


@dataclass(frozen=True)
class LikelihoodMatrix:
    """(M, K) matrix of log rho(z_m | x_k) entries, floored, with the atom
    set and measurement set it was built from."""

    log_values: np.ndarray
    atoms: AtomSet
    data: MeasurementSet

    def __post_init__(self):
        lv = np.asarray(self.log_values, dtype=float)
        if lv.shape != (self.data.count, self.atoms.count):
            raise ValidationError(
                f"log-likelihood shape {lv.shape} does not match "
                f"(M, K) = ({self.data.count}, {self.atoms.count})"
            )
        if not np.all(np.isfinite(lv)):
            raise NumericalError("log-likelihood entries must be finite")
        if np.any(lv < LOG_LIKELIHOOD_FLOOR):
            raise ValidationError("log-likelihood entries below the floor")
        lv = lv.copy()
        lv.setflags(write=False)
        object.__setattr__(self, "log_values", lv)

    @property
    def shape(self):
        return self.log_values.shape


_ROW_BLOCK_BUDGET = 4_000_000  # entries per block when batching residuals


def likelihood_matrix(
    model: ForwardModel,
    noise: NoiseModel,
    atoms: AtomSet,
    data: MeasurementSet,
    forward_cache: np.ndarray | None = None,
) -> LikelihoodMatrix:
    """Build the (M, K) log-likelihood matrix.

    Records with missing coordinates contribute the joint density over the
    observed coordinates only; this requires a noise density that
    factorizes per coordinate.  Rows whose mask hides every coordinate are
    rejected.  ``forward_cache`` allows reuse of ``forward_values(model,
    atoms)`` across repeated builds against the same atoms.
    """
    if data.dim != model.dim_obs:
        raise ValidationError(
            f"measurement dimension {data.dim} does not match model "
            f"observation dimension {model.dim_obs}"
        )
    empty_rows = ~data.mask.any(axis=1)
    if empty_rows.any():
        bad = data.ids[int(np.argmax(empty_rows))]
        raise ValidationError(f"record '{bad}' has no observed coordinates")
    phi = forward_values(model, atoms) if forward_cache is None else forward_cache
    if phi.shape != (atoms.count, model.dim_obs):
        raise ValidationError("forward cache shape mismatch")

    m_count, k_count = data.count, atoms.count
    log_l = np.empty((m_count, k_count))
    all_observed = bool(data.mask.all())
    if not all_observed and not noise.mask_support:
        raise ValidationError(
            "measurement set has missing coordinates but the noise density "
            "does not factorize per coordinate"
        )

    if all_observed:
        block = max(1, _ROW_BLOCK_BUDGET // max(1, k_count * data.dim))
        for start in range(0, m_count, block):
            stop = min(start + block, m_count)
            resid = data.z[start:stop, None, :] - phi[None, :, :]
            log_l[start:stop] = noise.log_density(resid)
    else:
        # group rows sharing a mask pattern so each group vectorizes
        patterns: dict = {}
        for m in range(m_count):
            patterns.setdefault(data.mask[m].tobytes(), []).append(m)
        for key, rows in patterns.items():
            coords = np.nonzero(np.frombuffer(key, dtype=bool))[0]
            rows = np.asarray(rows, dtype=int)
            resid = data.z[np.ix_(rows, coords)][:, None, :] - phi[None, :, :][:, :, coords]
            log_l[rows] = noise.coord_log_density(resid, coords)

    if np.any(np.isnan(log_l)) or np.any(log_l == np.inf):
        raise NumericalError("noise density produced a non-finite log-likelihood")
    np.maximum(log_l, LOG_LIKELIHOOD_FLOOR, out=log_l)
    return LikelihoodMatrix(log_values=log_l, atoms=atoms, data=data)


def log_likelihood_at(model, noise, z, mask, x) -> float:
    """Log-likelihood of one record at one parameter point (no flooring).

    Used by samplers, where the unfloored posterior density is wanted.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        y = np.asarray(model.eval(x), dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"forward model output is non-finite at x = {x!r}")
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return float(noise.log_density(np.asarray(z, dtype=float) - y))
    coords = np.nonzero(mask)[0]
    if coords.size == 0:
        raise ValidationError("record has no observed coordinates")
    resid = np.asarray(z, dtype=float)[coords] - y[coords]
    return float(noise.coord_log_density(resid, coords))


def log_marginal_likelihood(matrix: LikelihoodMatrix, weights: WeightVector) -> np.ndarray:
    """Per-record log of sum_k w_k rho(z_m | x_k), via log-sum-exp."""
    if weights.count != matrix.atoms.count:
        raise ValidationError("weight count does not match atom count")
    with np.errstate(divide="ignore"):
        log_w = np.log(weights.w)
    return logsumexp(matrix.log_values + log_w[None, :], axis=1)


def marginal_likelihood(matrix: LikelihoodMatrix, weights: WeightVector) -> np.ndarray:
    """Per-record mixture likelihood sum_k w_k rho(z_m | x_k); strictly positive."""
    return np.exp(log_marginal_likelihood(matrix, weights))


def log_likelihood_dd(matrix: LikelihoodMatrix, weights: WeightVector) -> float:
    """Average log marginal likelihood over the records."""
    return float(np.mean(log_marginal_likelihood(matrix, weights)))


def posterior_weights(log_likelihood_row, weights: WeightVector) -> WeightVector:
    """Per-measurement posterior over atoms by Bayes' rule.

    Parameters
    ----------
    log_likelihood_row : array_like
        K log-likelihood values for one record (a row of a
        ``LikelihoodMatrix``).
    weights : WeightVector
        Prior weights.

    Atoms with zero prior weight keep exactly zero posterior weight.
    """
    row = np.asarray(log_likelihood_row, dtype=float)
    if row.ndim != 1 or row.size != weights.count:
        raise ValidationError("row length does not match weight count")
    if np.any(np.isnan(row)) or np.any(row == np.inf):
        raise ValidationError("log-likelihood row must be nan-free and < +inf")
    with np.errstate(divide="ignore"):
        log_post = row + np.log(weights.w)
    top = np.max(log_post)
    if not np.isfinite(top):
        raise NumericalError("measurement unsupported by prior")
    v = np.exp(log_post - top)
    return WeightVector(v / np.sum(v))


# ---------------------------------------------------------------------------
# quadrature over measurement space (test and diagnostic use)


def measurement_grid(lows, highs, counts) -> tuple:
    """Midpoint-rule quadrature grid over a box in measurement space.

    Returns the (N, n) node array and the cell volume.
    """
    lows = np.atleast_1d(np.asarray(lows, dtype=float))
    highs = np.atleast_1d(np.asarray(highs, dtype=float))
    counts = np.atleast_1d(np.asarray(counts, dtype=int))
    if not (lows.shape == highs.shape == counts.shape):
        raise ValidationError("lows/highs/counts must have matching shapes")
    if np.any(counts < 1):
        raise ValidationError("empty quadrature grid")
    if np.any(highs <= lows):
        raise ValidationError("grid needs lo < hi in every dimension")
    steps = (highs - lows) / counts
    axes = [lo + (np.arange(c) + 0.5) * h for lo, c, h in zip(lows, counts, steps)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return nodes, float(np.prod(steps))


def pushforward_l1(grid_matrix: LikelihoodMatrix, f, cell_volume: float) -> float:
    """L1 norm of the measurement-space pushforward of signed atom weights.

    ``grid_matrix`` must have been built over quadrature nodes; the result
    approximates the integral of |sum_k f_k rho(z | x_k)| dz.  Diagnostic
    use only; no estimator calls this.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size != grid_matrix.atoms.count:
        raise ValidationError("f length does not match atom count")
    if not np.all(np.isfinite(f)):
        raise ValidationError("f must be finite")
    if not (cell_volume > 0):
        raise ValidationError("cell volume must be positive")
    dens = np.sum(np.exp(grid_matrix.log_values) * f[None, :], axis=1)
    return float(cell_volume * np.sum(np.abs(dens)))


def sample_mixture(
    model: ForwardModel,
    noise: NoiseModel,
    atoms: AtomSet,
    weights: WeightVector,
    count: int,
    rng: np.random.Generator,
    forward_cache: np.ndarray | None = None,
) -> np.ndarray:
    """Draw measurement-space points distributed as the weighted mixture."""
    if count < 1:
        raise ValidationError("sample count must be >= 1")
    phi = forward_values(model, atoms) if forward_cache is None else forward_cache
    idx = rng.choice(atoms.count, size=int(count), p=weights.w)
    return phi[idx] + noise.sample(rng, int(count))


# ---------------------------------------------------------------------------
# CSV interfaces


def write_measurements_csv(path, data: MeasurementSet, include_mask: bool | None = None):
    """Measurement CSV: id,group,z_0..z_{n-1}[,mask_0..mask_{n-1}]."""
    if include_mask is None:
        include_mask = not bool(data.mask.all())
    n = data.dim
    header = ["id", "group"] + [f"z_{i}" for i in range(n)]
    if include_mask:
        header += [f"mask_{i}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in range(data.count):
            row = [data.ids[m], data.groups[m] if data.groups[m] is not None else ""]
            row += [format_float(v) for v in data.z[m]]
            if include_mask:
                row += ["1" if b else "0" for b in data.mask[m]]
            writer.writerow(row)


def read_measurements_csv(path) -> MeasurementSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty measurement file") from None
        rows = list(reader)
    if len(header) < 3 or header[0] != "id" or header[1] != "group":
        raise ValidationError(f"{path}: header must start with id,group,z_0,...")
    z_cols = [i for i, name in enumerate(header) if name.startswith("z_")]
    mask_cols = [i for i, name in enumerate(header) if name.startswith("mask_")]
    n = len(z_cols)
    expected = ["id", "group"] + [f"z_{i}" for i in range(n)]
    if mask_cols:
        expected += [f"mask_{i}" for i in range(n)]
    if header != expected:
        raise ValidationError(f"{path}: malformed header {header!r}")
    if not rows:
        raise ValidationError(f"{path}: no measurement records")
    ids, groups, zs, masks = [], [], [], []
    for row in rows:
        if len(row) != len(header):
            raise ValidationError(f"{path}: row with {len(row)} fields, expected {len(header)}")
        ids.append(row[0])
        groups.append(row[1] if row[1] != "" else None)
        mask = (
            np.array([c == "1" for c in row[2 + n:2 + 2 * n]], dtype=bool)
            if mask_cols
            else np.ones(n, dtype=bool)
        )
        vals = np.array(
            [float(c) if mask[i] and c != "" else np.nan for i, c in enumerate(row[2:2 + n])]
        )
        vals[~mask] = 0.0
        zs.append(vals)
        masks.append(mask)
    return MeasurementSet(
        ids=tuple(ids), z=np.array(zs), mask=np.array(masks), groups=tuple(groups)
    )


def write_weighted_atoms_csv(path, atoms: AtomSet, weights: WeightVector):
    """Weighted-atom CSV: x_0..x_{d-1},w with full float64 precision."""
    if weights.count != atoms.count:
        raise ValidationError("weight count does not match atom count")
    header = [f"x_{i}" for i in range(atoms.dim)] + ["w"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(atoms.count):
            writer.writerow(
                [format_float(v) for v in atoms.points[k]] + [format_float(weights.w[k])]
            )


def read_weighted_atoms_csv(path) -> tuple:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty atom file") from None
        rows = list(reader)
    d = len(header) - 1
    if d < 1 or header != [f"x_{i}" for i in range(d)] + ["w"]:
        raise ValidationError(f"{path}: header must be x_0..x_{{d-1}},w")
    if not rows:
        raise ValidationError(f"{path}: no atoms")
    vals = np.array([[float(c) for c in row] for row in rows])
    atoms = AtomSet(vals[:, :d], provenance="file")
    raw = vals[:, d]
    if abs(float(np.sum(raw)) - 1.0) <= SIMPLEX_TOL:
        weights = WeightVector(raw)  # bit-exact round trip
    else:
        weights = WeightVector.normalized(raw)
    return atoms, weights
