"""Forward-model registry for configuration-driven runs.

Models are built from a kind name plus a key-value parameter mapping, the
shape the command line reads from its config file.  Besides the identity
map and the spring bench models this registers a small nonlinear
reaction fixture (three rate parameters, three observation times) standing
in for larger biochemical systems.
"""

import numpy as np

from .core import ForwardModel
from .errors import ValidationError
from .toymodel import (
    DEFAULT_INITIAL_DISPLACEMENT,
    DEFAULT_MASS,
    FIRST_MEASUREMENT_TIME,
    SECOND_MEASUREMENT_TIME,
    one_time_model,
    two_time_model,
)

# entropy weight preset for the reaction fixture demos (not a CLI default)
PRESET_ENTROPY_WEIGHT = 19.0

REACTION_OBSERVATION_TIMES = (1.0, 2.0, 3.0)
REACTION_STEP = 0.01


def identity_model(dim: int = 1) -> ForwardModel:
    """Parameters observed directly."""
    if dim < 1:
        raise ValidationError("identity model needs dim >= 1")

    def evaluate(x):
        return np.asarray(x, dtype=float)

    return ForwardModel(dim_param=int(dim), dim_obs=int(dim), eval=evaluate)


def reaction_model(
    times: tuple[float, ...] = REACTION_OBSERVATION_TIMES,
    step: float = REACTION_STEP,
) -> ForwardModel:
    """Two-species reaction chain observed through the product concentration.

    The species obey ``a' = -k1 a`` and ``b' = k1 a - k2 b + k3 b^2`` from
    ``(a, b)(0) = (1, 0)``; the parameters are the three rates and the
    observation is ``b`` at the given times.  Fixed-step fourth-order
    Runge-Kutta; rates that blow the quadratic term up yield non-finite
    output and are reported by the likelihood layer.
    """
    times = tuple(float(t) for t in times)
    if not times or any(t <= 0 for t in times) or list(times) != sorted(times):
        raise ValidationError("observation times must be positive and increasing")
    if step <= 0:
        raise ValidationError("step must be > 0")

    def rate(state, k1, k2, k3):
        a, b = state
        return np.array([-k1 * a, k1 * a - k2 * b + k3 * b * b])

    def evaluate(x):
        k1, k2, k3 = (float(v) for v in x)
        out = np.empty(len(times))
        state = np.array([1.0, 0.0])
        t = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for i, t_obs in enumerate(times):
                n_steps = max(1, int(np.ceil((t_obs - t) / step)))
                dt = (t_obs - t) / n_steps
                for _ in range(n_steps):
                    s1 = rate(state, k1, k2, k3)
                    s2 = rate(state + 0.5 * dt * s1, k1, k2, k3)
                    s3 = rate(state + 0.5 * dt * s2, k1, k2, k3)
                    s4 = rate(state + dt * s3, k1, k2, k3)
                    state = state + (dt / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
                t = t_obs
                out[i] = state[1]
        return out

    return ForwardModel(dim_param=3, dim_obs=len(times), eval=evaluate)


def _float_param(params: dict, key: str, default: float) -> float:
    try:
        return float(params.pop(key, default))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"model parameter {key} must be a number") from exc


def build_model(kind: str, params: dict | None = None) -> ForwardModel:
    """Model from its config-file name and parameter mapping."""
    params = dict(params or {})
    if kind == "identity":
        dim = params.pop("dim", 1)
        try:
            dim = int(dim)
        except (TypeError, ValueError) as exc:
            raise ValidationError("model parameter dim must be an integer") from exc
        model = identity_model(dim)
    elif kind == "spring-one-time":
        model = one_time_model(
            mass=_float_param(params, "mass", DEFAULT_MASS),
            time=_float_param(params, "time", FIRST_MEASUREMENT_TIME),
            x0=_float_param(params, "x0", DEFAULT_INITIAL_DISPLACEMENT),
        )
    elif kind == "spring-two-time":
        model = two_time_model(
            mass=_float_param(params, "mass", DEFAULT_MASS),
            times=(
                _float_param(params, "time1", FIRST_MEASUREMENT_TIME),
                _float_param(params, "time2", SECOND_MEASUREMENT_TIME),
            ),
            x0=_float_param(params, "x0", DEFAULT_INITIAL_DISPLACEMENT),
        )
    elif kind == "reaction":
        model = reaction_model(step=_float_param(params, "step", REACTION_STEP))
    else:
        raise ValidationError(
            f"unknown model kind {kind!r}; expected identity, spring-one-time, "
            f"spring-two-time or reaction"
        )
    if params:
        raise ValidationError(
            f"unknown model parameters for {kind!r}: {sorted(params)}"
        )
    return model
