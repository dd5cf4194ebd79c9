"""Spring bench study: harmonic-oscillator models, pulsed treatment, success rates.

A population of springs (two boxes of nominally identical stiffness) stands
in for a patient cohort.  Measuring the free oscillation at one or two fixed
times gives the forward model; a pulsed force applied to the mass is the
treatment, and the treatment succeeds when the mass reaches a bell mounted
at a fixed position.  Everything here works in SI units; converting to
centimeters is left to the I/O boundary.
"""

import configparser
from dataclasses import dataclass

import numpy as np

from .core import (
    AtomSet,
    ForwardModel,
    LikelihoodMatrix,
    MeasurementSet,
    WeightVector,
    format_float,
    forward_values,
    posterior_weights,
)
from .errors import ValidationError
from .rng import substream

DEFAULT_MASS = 0.7
DEFAULT_INITIAL_DISPLACEMENT = -0.10
DEFAULT_MEASUREMENT_STD = 0.01
FIRST_MEASUREMENT_TIME = 1.0
SECOND_MEASUREMENT_TIME = 1.7

STIFFNESS_LOW = 1.0
STIFFNESS_HIGH = 50.0
STIFFNESS_GRID_SIZE = 200

DEFAULT_BOX_STIFFNESS = (15.0, 30.0)
DEFAULT_BOX_COUNT = 150
DEFAULT_RELATIVE_STD = 0.15

BELL_POSITION = 0.13
TREATMENT_HORIZON = 10.0
MAX_STEP = 1e-3

# entropy weight preset for the shipped spring study (not a CLI default)
PRESET_ENTROPY_WEIGHT = 49.0


def meters_to_centimeters(values):
    return np.asarray(values, dtype=float) * 100.0


def centimeters_to_meters(values):
    return np.asarray(values, dtype=float) / 100.0


# ---------------------------------------------------------------------------
# free oscillation


def spring_response(stiffness, mass, t, x0=DEFAULT_INITIAL_DISPLACEMENT):
    """Displacement of the undamped oscillator, x0 * cos(sqrt(K/m) * t)."""
    stiffness = np.asarray(stiffness, dtype=float)
    if np.any(stiffness <= 0):
        raise ValidationError("stiffness must be > 0")
    if mass <= 0:
        raise ValidationError("mass must be > 0")
    return x0 * np.cos(np.sqrt(stiffness / mass) * np.asarray(t, dtype=float))


def one_time_model(
    mass: float = DEFAULT_MASS,
    time: float = FIRST_MEASUREMENT_TIME,
    x0: float = DEFAULT_INITIAL_DISPLACEMENT,
) -> ForwardModel:
    """Observe the free oscillation at a single time.

    The closure does not guard the stiffness sign; a non-positive atom
    produces NaN and is reported by the likelihood layer.
    """

    def evaluate(x):
        with np.errstate(invalid="ignore"):
            return np.array([x0 * np.cos(np.sqrt(x[0] / mass) * time)])

    return ForwardModel(dim_param=1, dim_obs=1, eval=evaluate)


def two_time_model(
    mass: float = DEFAULT_MASS,
    times: tuple[float, float] = (FIRST_MEASUREMENT_TIME, SECOND_MEASUREMENT_TIME),
    x0: float = DEFAULT_INITIAL_DISPLACEMENT,
) -> ForwardModel:
    """Observe the free oscillation at two times."""
    t = np.asarray(times, dtype=float)

    def evaluate(x):
        with np.errstate(invalid="ignore"):
            return x0 * np.cos(np.sqrt(x[0] / mass) * t)

    return ForwardModel(dim_param=1, dim_obs=len(t), eval=evaluate)


# ---------------------------------------------------------------------------
# population


@dataclass(frozen=True)
class SpringPopulation:
    """Springs with known true stiffness and a box label each."""

    ids: tuple[str, ...]
    boxes: tuple[str, ...]
    stiffness: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.stiffness, dtype=float)
        object.__setattr__(self, "stiffness", k)
        if k.ndim != 1:
            raise ValidationError("stiffness must be one-dimensional")
        if not (len(self.ids) == len(self.boxes) == k.shape[0]):
            raise ValidationError("ids, boxes and stiffness lengths differ")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("spring ids must be unique")
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise ValidationError("stiffness values must be finite and > 0")

    @property
    def count(self) -> int:
        return self.stiffness.shape[0]


def generate_population(
    nominal=DEFAULT_BOX_STIFFNESS,
    counts=(DEFAULT_BOX_COUNT, DEFAULT_BOX_COUNT),
    relative_std: float = DEFAULT_RELATIVE_STD,
    seed: int = 0,
) -> SpringPopulation:
    """Draw box-wise normal stiffness values, redrawing non-positive values."""
    if len(nominal) != len(counts) or not nominal:
        raise ValidationError("nominal and counts must have equal nonzero length")
    if any(k <= 0 for k in nominal) or any(c < 1 for c in counts):
        raise ValidationError("nominal stiffness and counts must be positive")
    if relative_std < 0:
        raise ValidationError("relative_std must be >= 0")
    rng = substream(seed, "population")
    ids: list[str] = []
    boxes: list[str] = []
    values: list[np.ndarray] = []
    total = int(sum(counts))
    width = max(3, len(str(total - 1)))
    offset = 0
    for box_index, (center, count) in enumerate(zip(nominal, counts)):
        draws = center + relative_std * center * rng.standard_normal(int(count))
        bad = draws <= 0
        while np.any(bad):
            draws[bad] = center + relative_std * center * rng.standard_normal(
                int(bad.sum())
            )
            bad = draws <= 0
        label = f"box{box_index + 1}"
        for j in range(int(count)):
            ids.append(f"spring_{offset + j:0{width}d}")
            boxes.append(label)
        values.append(draws)
        offset += int(count)
    return SpringPopulation(
        ids=tuple(ids), boxes=tuple(boxes), stiffness=np.concatenate(values)
    )


def write_population_csv(population: SpringPopulation, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,box,K_true\n")
        for spring_id, box, k in zip(
            population.ids, population.boxes, population.stiffness
        ):
            fh.write(f"{spring_id},{box},{format_float(k)}\n")


def read_population_csv(path) -> SpringPopulation:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,box,K_true":
            raise ValidationError(f"unexpected population header: {header!r}")
        ids: list[str] = []
        boxes: list[str] = []
        values: list[float] = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"malformed population row: {line!r}")
            ids.append(parts[0])
            boxes.append(parts[1])
            values.append(float(parts[2]))
    return SpringPopulation(ids=tuple(ids), boxes=tuple(boxes), stiffness=values)


# ---------------------------------------------------------------------------
# measurement


def measure(
    model: ForwardModel,
    stiffness,
    noise_std: float,
    seed: int,
    ids=None,
    groups=None,
) -> MeasurementSet:
    """Evaluate the model at each true stiffness and add Gaussian noise."""
    stiffness = np.atleast_1d(np.asarray(stiffness, dtype=float))
    if noise_std < 0:
        raise ValidationError("noise_std must be >= 0")
    clean = forward_values(model, AtomSet(stiffness[:, None]))
    rng = substream(seed, "measure")
    eps = noise_std * rng.standard_normal(clean.shape)
    return MeasurementSet.from_points(clean + eps, ids=ids, groups=groups)


def measure_population(
    model: ForwardModel,
    population: SpringPopulation,
    noise_std: float,
    seed: int,
) -> MeasurementSet:
    """One noisy measurement per spring; box labels become group labels."""
    return measure(
        model,
        population.stiffness,
        noise_std,
        seed,
        ids=population.ids,
        groups=population.boxes,
    )


# ---------------------------------------------------------------------------
# treatment


@dataclass(frozen=True)
class Pulse:
    """Rectangular force pulse: amplitude (m/s^2) on [time, time + width)."""

    time: float
    amplitude: float
    width: float


@dataclass(frozen=True)
class TreatmentSpec:
    """Pulsed-force treatment and the success threshold."""

    pulses: tuple[Pulse, ...]
    horizon: float = TREATMENT_HORIZON
    bell_position: float = BELL_POSITION
    mass: float = DEFAULT_MASS
    initial_displacement: float = DEFAULT_INITIAL_DISPLACEMENT

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError("horizon must be > 0")
        if self.mass <= 0:
            raise ValidationError("mass must be > 0")
        for p in self.pulses:
            if p.width <= 0:
                raise ValidationError("pulse width must be > 0")
            if p.time < 0 or p.time + p.width > self.horizon:
                raise ValidationError(
                    f"pulse at t={p.time} extends outside the horizon"
                )

    @staticmethod
    def default() -> "TreatmentSpec":
        return TreatmentSpec(
            pulses=(
                Pulse(1.0, 1.5, 0.1),
                Pulse(3.0, 1.5, 0.1),
                Pulse(5.0, 1.5, 0.1),
            )
        )

    def force_at(self, t: float) -> float:
        """Force per unit mass at time t."""
        total = 0.0
        for p in self.pulses:
            if p.time <= t < p.time + p.width:
                total += p.amplitude
        return total

    def scaled(self, factor: float) -> "TreatmentSpec":
        """Same treatment with every pulse amplitude scaled."""
        return TreatmentSpec(
            pulses=tuple(
                Pulse(p.time, p.amplitude * factor, p.width) for p in self.pulses
            ),
            horizon=self.horizon,
            bell_position=self.bell_position,
            mass=self.mass,
            initial_displacement=self.initial_displacement,
        )


def write_treatment_spec(spec: TreatmentSpec, path) -> None:
    parser = configparser.ConfigParser()
    parser["treatment"] = {
        "pulses": ", ".join(
            f"{format_float(p.time)}:{format_float(p.amplitude)}:{format_float(p.width)}"
            for p in spec.pulses
        ),
        "horizon": format_float(spec.horizon),
        "bell_position": format_float(spec.bell_position),
        "mass": format_float(spec.mass),
        "initial_displacement": format_float(spec.initial_displacement),
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def read_treatment_spec(path) -> TreatmentSpec:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"cannot read treatment file: {path}")
    if "treatment" not in parser:
        raise ValidationError("treatment file needs a [treatment] section")
    section = parser["treatment"]
    known = {"pulses", "horizon", "bell_position", "mass", "initial_displacement"}
    for key in section:
        if key not in known:
            raise ValidationError(f"unknown treatment key: {key}")
    pulses = []
    raw = section.get("pulses", "").strip()
    if raw:
        for item in raw.split(","):
            fields = item.strip().split(":")
            if len(fields) != 3:
                raise ValidationError(f"malformed pulse triple: {item.strip()!r}")
            try:
                pulses.append(Pulse(*(float(f) for f in fields)))
            except ValueError as exc:
                raise ValidationError(
                    f"malformed pulse triple: {item.strip()!r}"
                ) from exc

    def _get(key, default):
        return float(section.get(key, format_float(default)))

    return TreatmentSpec(
        pulses=tuple(pulses),
        horizon=_get("horizon", TREATMENT_HORIZON),
        bell_position=_get("bell_position", BELL_POSITION),
        mass=_get("mass", DEFAULT_MASS),
        initial_displacement=_get("initial_displacement", DEFAULT_INITIAL_DISPLACEMENT),
    )


@dataclass(frozen=True)
class TreatmentResult:
    """Dense forced-oscillation trajectories and the per-spring success flag."""

    times: np.ndarray
    positions: np.ndarray
    peak: np.ndarray
    hit: np.ndarray


def _acceleration(x, stiffness, mass, force):
    return -(stiffness / mass) * x + force


def _integrate(stiffness: np.ndarray, spec: TreatmentSpec, record: bool):
    n_steps = int(np.ceil(spec.horizon / MAX_STEP))
    dt = spec.horizon / n_steps
    x = np.full(stiffness.shape, spec.initial_displacement, dtype=float)
    v = np.zeros_like(x)
    peak = x.copy()
    positions = np.empty((n_steps + 1, stiffness.shape[0])) if record else None
    if record:
        positions[0] = x
    for step in range(n_steps):
        t = step * dt
        f0 = spec.force_at(t)
        fh = spec.force_at(t + 0.5 * dt)
        f1 = spec.force_at(t + dt)
        k1x = v
        k1v = _acceleration(x, stiffness, spec.mass, f0)
        k2x = v + 0.5 * dt * k1v
        k2v = _acceleration(x + 0.5 * dt * k1x, stiffness, spec.mass, fh)
        k3x = v + 0.5 * dt * k2v
        k3v = _acceleration(x + 0.5 * dt * k2x, stiffness, spec.mass, fh)
        k4x = v + dt * k3v
        k4v = _acceleration(x + dt * k3x, stiffness, spec.mass, f1)
        x = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        np.maximum(peak, x, out=peak)
        if record:
            positions[step + 1] = x
    times = np.linspace(0.0, spec.horizon, n_steps + 1)
    return times, positions, peak


def treated_response(stiffness, spec: TreatmentSpec) -> TreatmentResult:
    """Integrate the forced oscillator and test the bell threshold.

    Fixed-step fourth-order Runge-Kutta with step <= 1 ms; the hit flag is
    true when the running position maximum reaches the bell within the
    horizon.
    """
    stiffness = np.atleast_1d(np.asarray(stiffness, dtype=float))
    if np.any(stiffness <= 0) or not np.all(np.isfinite(stiffness)):
        raise ValidationError("stiffness must be finite and > 0")
    times, positions, peak = _integrate(stiffness, spec, record=True)
    return TreatmentResult(
        times=times, positions=positions, peak=peak, hit=peak >= spec.bell_position
    )


def treatment_hits(stiffness, spec: TreatmentSpec) -> np.ndarray:
    """Success flags only, without storing trajectories."""
    stiffness = np.atleast_1d(np.asarray(stiffness, dtype=float))
    if np.any(stiffness <= 0) or not np.all(np.isfinite(stiffness)):
        raise ValidationError("stiffness must be finite and > 0")
    _, _, peak = _integrate(stiffness, spec, record=False)
    return peak >= spec.bell_position


def true_success(population: SpringPopulation, spec: TreatmentSpec) -> np.ndarray:
    """0/1 success per spring, evaluated at the true stiffness."""
    return treatment_hits(population.stiffness, spec).astype(float)


# ---------------------------------------------------------------------------
# success rates


def success_rate(weights: WeightVector, atoms: AtomSet, spec: TreatmentSpec) -> float:
    """Expected success under a weighted stiffness distribution."""
    if atoms.dim != 1:
        raise ValidationError("success_rate needs one-dimensional stiffness atoms")
    if weights.w.shape[0] != atoms.count:
        raise ValidationError("weights and atoms disagree in length")
    hits = treatment_hits(atoms.points[:, 0], spec)
    return float(np.sum(weights.w * hits))


def predicted_success_rates(
    matrix: LikelihoodMatrix, prior: WeightVector, hits: np.ndarray
) -> np.ndarray:
    """Posterior success probability for every measurement.

    ``hits`` holds the success flag per atom so the treatment ODE runs once
    per atom set rather than once per measurement.
    """
    hits = np.asarray(hits, dtype=float)
    if hits.shape[0] != matrix.log_values.shape[1]:
        raise ValidationError("hits and likelihood matrix disagree in atom count")
    out = np.empty(matrix.log_values.shape[0])
    for m in range(matrix.log_values.shape[0]):
        post = posterior_weights(matrix.log_values[m], prior)
        out[m] = np.sum(post.w * hits)
    return out


def success_rate_std(estimated, true) -> float:
    """Root mean square deviation from the true rates, with 1/(M-1)."""
    estimated = np.asarray(estimated, dtype=float)
    true = np.asarray(true, dtype=float)
    if estimated.shape != true.shape or estimated.ndim != 1:
        raise ValidationError("rate vectors must be one-dimensional and equal length")
    m = estimated.shape[0]
    if m < 2:
        raise ValidationError("need at least two springs")
    return float(np.sqrt(np.sum(np.abs(estimated - true) ** 2) / (m - 1)))
