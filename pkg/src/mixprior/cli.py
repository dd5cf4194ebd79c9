"""Command-line front end.

Commands wire the library into reproducible runs: `estimate` fits a prior
to a measurement file, `toy` drives the spring study end to end,
`deconvolve` sharpens a blurred gray image, and `plotdata` exports CSV
bundles for plotting.  Every run writes its outputs into a fresh directory
together with a manifest recording the command, seed, config hash, and
input digests; re-running with identical inputs reproduces every output
byte for byte.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure.
"""

import argparse
import configparser
import hashlib
import json
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    AtomSet,
    GaussianNoise,
    MeasurementSet,
    WeightVector,
    format_float,
    forward_values,
    likelihood_matrix,
    read_measurements_csv,
    read_weighted_atoms_csv,
    write_measurements_csv,
    write_weighted_atoms_csv,
)
from .deconv import deconvolve as run_deconvolve
from .deconv import read_pgm, read_psf, write_pgm
from .errors import NumericalError, ValidationError
from .estimators import (
    DsmleConfig,
    EstimatorSettings,
    MpleConfig,
    dsmle_prepare,
    load_estimator_config,
    mple_run,
    npmle_run,
    reference_prior_run,
)
from .mcmc import BoxUniformPrior, SamplerConfig, build_atom_set
from .models import build_model
from .rng import derive_seed, substream
from .toymodel import (
    DEFAULT_MEASUREMENT_STD,
    STIFFNESS_GRID_SIZE,
    STIFFNESS_HIGH,
    STIFFNESS_LOW,
    TreatmentSpec,
    centimeters_to_meters,
    generate_population,
    measure_population,
    meters_to_centimeters,
    predicted_success_rates,
    read_population_csv,
    read_treatment_spec,
    spring_response,
    success_rate_std,
    treatment_hits,
    true_success,
    write_population_csv,
)

DEFAULT_POSTERIOR_MERGE_COUNT = 100
DECONV_OUTPUT_MAXVAL = 65535


# ---------------------------------------------------------------------------
# run bookkeeping


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


class RunManifest:
    """Provenance record written (last) into every run directory."""

    def __init__(self, command: str, seed: int, config_path=None):
        self._start = time.monotonic()
        self.command = command
        self.seed = seed
        self.config_sha256 = _sha256(config_path) if config_path else None
        self.inputs: dict = {}
        self.outputs: list = []
        self.report: dict = {}

    def add_input(self, path) -> None:
        self.inputs[str(path)] = _sha256(path)

    def write(self, out_dir: Path) -> None:
        payload = {
            "command": self.command,
            "seed": self.seed,
            "config_sha256": self.config_sha256,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "report": self.report,
            "version": __version__,
            "wall_clock_seconds": round(time.monotonic() - self._start, 6),
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        (out_dir / "manifest.json").write_text(text, encoding="utf-8")


def _prepare_out_dir(command: str, out_arg) -> Path:
    if out_arg:
        path = Path(out_arg)
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        path = Path("out") / command / stamp
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_and_record(manifest: RunManifest, out_dir: Path, name: str, writer):
    writer(out_dir / name)
    manifest.outputs.append(name)


# ---------------------------------------------------------------------------
# configuration sections


def _load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is None:
        return parser
    if not parser.read(path):
        raise ValidationError(f"cannot read config file {path}")
    return parser


def _section(cfg: configparser.ConfigParser, name: str) -> dict:
    return dict(cfg.items(name)) if cfg.has_section(name) else {}


def _float_list(raw: str, field: str) -> list:
    try:
        return [float(tok) for tok in str(raw).split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"{field} must be a comma-separated number list") from exc


def _config_model(cfg, default_kind=None):
    params = _section(cfg, "model")
    kind = params.pop("kind", default_kind)
    if kind is None:
        raise ValidationError("config needs a [model] section with a kind")
    return build_model(kind, params)


def _config_noise(cfg, dim: int, default_sigma=None) -> GaussianNoise:
    params = _section(cfg, "noise")
    kind = params.pop("kind", "gaussian")
    if kind != "gaussian":
        raise ValidationError(f"unknown noise kind {kind!r}; only gaussian is built in")
    raw = params.pop("sigma", None)
    if params:
        raise ValidationError(f"unknown keys in [noise]: {sorted(params)}")
    if raw is None:
        if default_sigma is None:
            raise ValidationError("config needs [noise] sigma")
        return GaussianNoise(default_sigma, dim=dim)
    values = _float_list(raw, "[noise] sigma")
    if len(values) == 1:
        return GaussianNoise(values[0], dim=dim)
    return GaussianNoise(np.array(values), dim=dim)


def _config_box_prior(cfg, dim: int, default_lo=None, default_hi=None):
    params = _section(cfg, "prior")
    raw_lo = params.pop("lo", default_lo)
    raw_hi = params.pop("hi", default_hi)
    if params:
        raise ValidationError(f"unknown keys in [prior]: {sorted(params)}")
    if raw_lo is None or raw_hi is None:
        raise ValidationError(
            "posterior-merge atoms need [prior] lo and hi bounds in the config"
        )
    lo = _float_list(raw_lo, "[prior] lo")
    hi = _float_list(raw_hi, "[prior] hi")
    if len(lo) == 1:
        lo = lo * dim
    if len(hi) == 1:
        hi = hi * dim
    if len(lo) != dim or len(hi) != dim:
        raise ValidationError(f"[prior] bounds must have 1 or {dim} entries")
    return BoxUniformPrior(np.array(lo), np.array(hi))


_SAMPLER_KEYS = {"steps", "burn_in", "thinning", "proposal_scale", "adaptive", "beta"}


def _config_sampler(cfg, seed: int) -> SamplerConfig:
    params = _section(cfg, "sampler")
    unknown = set(params) - _SAMPLER_KEYS
    if unknown:
        raise ValidationError(f"unknown keys in [sampler]: {sorted(unknown)}")
    try:
        steps = int(params.get("steps", 2000))
        burn_in = int(params["burn_in"]) if "burn_in" in params else None
        thinning = int(params.get("thinning", 1))
        proposal_scale = float(params.get("proposal_scale", 1.0))
        beta = float(params.get("beta", 0.05))
    except ValueError as exc:
        raise ValidationError(f"bad [sampler] value: {exc}") from exc
    adaptive_raw = str(params.get("adaptive", "true")).strip().lower()
    if adaptive_raw not in ("true", "false", "1", "0", "yes", "no"):
        raise ValidationError("[sampler] adaptive must be a boolean")
    return SamplerConfig(
        steps=steps,
        burn_in=burn_in,
        thinning=thinning,
        proposal_scale=proposal_scale,
        adaptive=adaptive_raw in ("true", "1", "yes"),
        beta=beta,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# shared estimation plumbing


def _load_settings(config_path) -> EstimatorSettings:
    if config_path is None:
        return EstimatorSettings()
    return load_estimator_config(config_path)


def _apply_flag_overrides(settings, args, method: str):
    if getattr(args, "iters", None) is not None:
        if args.iters < 0:
            raise ValidationError("--iters must be >= 0")
        if method in ("npmle", "dsmle"):
            settings = replace(settings, npmle_max_iter=args.iters)
        else:
            settings = replace(settings, mple_max_iter=args.iters)
    if getattr(args, "gamma", None) is not None:
        settings = replace(settings, mple_gamma=args.gamma)
    if getattr(args, "bandwidth", None) is not None:
        settings = replace(settings, dsmle_bandwidth=args.bandwidth)
    return settings


def _resolve_atoms(
    spec: str, *, cfg, model, noise, data, master_seed: int, manifest: RunManifest
) -> AtomSet:
    if spec.startswith("grid:"):
        parts = spec.split(":")
        if len(parts) != 4:
            raise ValidationError("grid atoms need the form grid:LO:HI:COUNT")
        if model.dim_param != 1:
            raise ValidationError("grid atoms support one-dimensional parameters")
        try:
            lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ValidationError(f"malformed grid atoms {spec!r}") from exc
        return AtomSet.grid_1d(lo, hi, count)
    if spec.startswith("file:"):
        path = spec[len("file:") :]
        atoms, _ = read_weighted_atoms_csv(path)
        manifest.add_input(path)
        if atoms.dim != model.dim_param:
            raise ValidationError(
                f"atom dimension {atoms.dim} does not match the model "
                f"parameter dimension {model.dim_param}"
            )
        return atoms
    if spec == "posterior-merge" or spec.startswith("posterior-merge:"):
        rest = spec[len("posterior-merge") :]
        per_measurement = DEFAULT_POSTERIOR_MERGE_COUNT
        if rest:
            try:
                per_measurement = int(rest[1:])
            except ValueError as exc:
                raise ValidationError(f"malformed atom count in {spec!r}") from exc
        if data is None:
            raise ValidationError("posterior-merge atoms need measurement data")
        prior = _config_box_prior(cfg, model.dim_param)
        sampler = _config_sampler(cfg, seed=derive_seed(master_seed, "atoms"))
        return build_atom_set(model, noise, prior, data, per_measurement, sampler)
    raise ValidationError(
        f"atoms must be grid:LO:HI:COUNT, file:PATH, or "
        f"posterior-merge[:COUNT], got {spec!r}"
    )


def _run_method(method, model, noise, atoms, data, settings, master_seed, label):
    w0 = WeightVector.uniform(atoms.count)
    suffix = label or ""
    if method == "npmle":
        matrix = likelihood_matrix(model, noise, atoms, data)
        return npmle_run(
            matrix, w0, max_iter=settings.npmle_max_iter, tol=settings.npmle_tol
        )
    if method == "dsmle":
        bandwidth = settings.dsmle_bandwidth
        if bandwidth is None:
            bandwidth = float(np.max(noise.sigma))
        seed = settings.dsmle_seed
        if seed is None:
            seed = derive_seed(master_seed, "dsmle-smoothing", suffix)
        augmented, smoothed = dsmle_prepare(
            data, noise, DsmleConfig(bandwidth, settings.dsmle_samples, seed)
        )
        matrix = likelihood_matrix(model, smoothed, atoms, augmented)
        return npmle_run(
            matrix, w0, max_iter=settings.npmle_max_iter, tol=settings.npmle_tol
        )
    if method in ("mple", "refprior"):
        if settings.mple_gamma is None:
            raise ValidationError(
                f"method {method} needs gamma (--gamma or [mple] gamma)"
            )
        mple_cfg = MpleConfig(
            gamma=settings.mple_gamma,
            importance_samples=settings.mple_samples,
            step=settings.mple_step,
            backtrack=settings.mple_backtrack,
            max_iter=settings.mple_max_iter,
            tol=settings.mple_tol,
        )
        if method == "refprior":
            return reference_prior_run(
                atoms, model, noise, w0, mple_cfg,
                seed=derive_seed(master_seed, "refprior", suffix),
            )
        matrix = likelihood_matrix(model, noise, atoms, data)
        return mple_run(
            matrix, atoms, model, noise, w0, mple_cfg,
            seed=derive_seed(master_seed, "mple", suffix),
        )
    raise ValidationError(f"unknown method {method!r}")


def _estimate_into(
    out_dir, manifest, method, model, noise, atoms, data, settings, master_seed
):
    """One estimation run per group (or one for the whole set); writes the
    weight and trace files and fills the manifest report."""
    if data is None:
        runs = [(None, None)]
    elif manifest.report.get("group_by"):
        runs = sorted(data.split_by_group().items())
    else:
        runs = [(None, data)]
    for label, subset in runs:
        trace = _run_method(
            method, model, noise, atoms, subset, settings, master_seed, label
        )
        tag = f"_{label}" if label is not None else ""
        _write_and_record(
            manifest,
            out_dir,
            f"weights{tag}.csv",
            lambda p, t=trace: write_weighted_atoms_csv(p, atoms, t.final),
        )
        _write_and_record(
            manifest, out_dir, f"trace{tag}.csv", lambda p, t=trace: t.write_csv(p)
        )
        key = label if label is not None else "all"
        manifest.report[f"iterations[{key}]"] = trace.iterations
        manifest.report[f"termination[{key}]"] = trace.reason


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    settings = _apply_flag_overrides(_load_settings(args.config), args, args.method)
    manifest = RunManifest("estimate", args.seed, args.config)
    model = _config_model(cfg)
    noise = _config_noise(cfg, model.dim_obs)
    if args.method == "refprior":
        if args.data is not None:
            raise ValidationError("method refprior takes no --data")
        if args.group_by:
            raise ValidationError("method refprior takes no --group-by")
        data = None
    else:
        if args.data is None:
            raise ValidationError(f"method {args.method} needs --data")
        data = read_measurements_csv(args.data)
        manifest.add_input(args.data)
    manifest.report["method"] = args.method
    manifest.report["group_by"] = bool(args.group_by)
    atoms = _resolve_atoms(
        args.atoms,
        cfg=cfg,
        model=model,
        noise=noise,
        data=data,
        master_seed=args.seed,
        manifest=manifest,
    )
    out_dir = _prepare_out_dir("estimate", args.out)
    _estimate_into(
        out_dir, manifest, args.method, model, noise, atoms, data, settings, args.seed
    )
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_toy_generate(args) -> int:
    cfg = _load_config(args.config)
    params = _section(cfg, "population")
    nominal = _float_list(params.pop("nominal", "15,30"), "[population] nominal")
    counts_raw = params.pop("counts", "150,150")
    relative_std = params.pop("relative_std", "0.15")
    if params:
        raise ValidationError(f"unknown keys in [population]: {sorted(params)}")
    try:
        counts = [int(tok) for tok in str(counts_raw).split(",") if tok.strip()]
        relative_std = float(relative_std)
    except ValueError as exc:
        raise ValidationError(f"bad [population] value: {exc}") from exc
    manifest = RunManifest("toy-generate", args.seed, args.config)
    population = generate_population(
        nominal=tuple(nominal),
        counts=tuple(counts),
        relative_std=relative_std,
        seed=args.seed,
    )
    out_dir = _prepare_out_dir("toy-generate", args.out)
    _write_and_record(
        manifest,
        out_dir,
        "population.csv",
        lambda p: write_population_csv(population, p),
    )
    manifest.report["springs"] = population.count
    manifest.write(out_dir)
    print(out_dir)
    return 0


def _toy_model_and_sigma(cfg):
    model = _config_model(cfg, default_kind="spring-one-time")
    noise = _config_noise(cfg, model.dim_obs, default_sigma=DEFAULT_MEASUREMENT_STD)
    sigma = np.asarray(noise.sigma, dtype=float)
    return model, noise, float(sigma[0]) if sigma.ndim else float(sigma)


def _read_toy_measurements(path, manifest) -> MeasurementSet:
    raw = read_measurements_csv(path)
    manifest.add_input(path)
    return MeasurementSet(
        ids=raw.ids,
        z=centimeters_to_meters(raw.z),
        mask=raw.mask,
        groups=raw.groups,
    )


def cmd_toy_measure(args) -> int:
    cfg = _load_config(args.config)
    manifest = RunManifest("toy-measure", args.seed, args.config)
    model, _, sigma = _toy_model_and_sigma(cfg)
    population = read_population_csv(args.population)
    manifest.add_input(args.population)
    data = measure_population(model, population, sigma, seed=args.seed)
    in_cm = MeasurementSet(
        ids=data.ids,
        z=meters_to_centimeters(data.z),
        mask=data.mask,
        groups=data.groups,
    )
    out_dir = _prepare_out_dir("toy-measure", args.out)
    _write_and_record(
        manifest,
        out_dir,
        "measurements.csv",
        lambda p: write_measurements_csv(p, in_cm),
    )
    manifest.report["records"] = data.count
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_toy_estimate(args) -> int:
    cfg = _load_config(args.config)
    settings = _apply_flag_overrides(_load_settings(args.config), args, args.method)
    manifest = RunManifest("toy-estimate", args.seed, args.config)
    model, noise, _ = _toy_model_and_sigma(cfg)
    data = _read_toy_measurements(args.measurements, manifest)
    manifest.report["method"] = args.method
    manifest.report["group_by"] = bool(args.group_by)
    atoms = _resolve_atoms(
        args.atoms,
        cfg=cfg,
        model=model,
        noise=noise,
        data=data,
        master_seed=args.seed,
        manifest=manifest,
    )
    out_dir = _prepare_out_dir("toy-estimate", args.out)
    _estimate_into(
        out_dir, manifest, args.method, model, noise, atoms, data, settings, args.seed
    )
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_toy_treat(args) -> int:
    cfg = _load_config(args.config)
    manifest = RunManifest("toy-treat", args.seed, args.config)
    model, noise, _ = _toy_model_and_sigma(cfg)
    data = _read_toy_measurements(args.measurements, manifest)
    atoms, prior = read_weighted_atoms_csv(args.weights)
    manifest.add_input(args.weights)
    if args.treatment is not None:
        spec = read_treatment_spec(args.treatment)
        manifest.add_input(args.treatment)
    else:
        spec = TreatmentSpec.default()
    matrix = likelihood_matrix(model, noise, atoms, data)
    hits = treatment_hits(atoms.points[:, 0], spec)
    rates = predicted_success_rates(matrix, prior, hits)
    out_dir = _prepare_out_dir("toy-treat", args.out)

    def write_rates(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("id,rate\n")
            for record_id, rate in zip(data.ids, rates):
                fh.write(f"{record_id},{format_float(rate)}\n")

    _write_and_record(manifest, out_dir, "success_rates.csv", write_rates)
    manifest.report["mean_rate"] = float(np.sum(rates) / rates.size)
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_toy_evaluate(args) -> int:
    cfg = _load_config(args.config)
    settings = _apply_flag_overrides(_load_settings(args.config), args, "npmle")
    manifest = RunManifest("toy-evaluate", args.seed, args.config)
    model, noise, sigma = _toy_model_and_sigma(cfg)

    if args.population is not None:
        population = read_population_csv(args.population)
        manifest.add_input(args.population)
    else:
        population = generate_population(seed=args.seed)
    if args.measurements is not None:
        data = _read_toy_measurements(args.measurements, manifest)
        if data.count != population.count:
            raise ValidationError(
                "measurement and population sizes differ: "
                f"{data.count} vs {population.count}"
            )
    else:
        data = measure_population(model, population, sigma, seed=args.seed)
    if args.treatment is not None:
        spec = read_treatment_spec(args.treatment)
        manifest.add_input(args.treatment)
    else:
        spec = TreatmentSpec.default()

    atoms = _resolve_atoms(
        args.atoms,
        cfg=cfg,
        model=model,
        noise=noise,
        data=data,
        master_seed=args.seed,
        manifest=manifest,
    )
    matrix = likelihood_matrix(model, noise, atoms, data)
    hits = treatment_hits(atoms.points[:, 0], spec)
    truth = true_success(population, spec)

    priors = {"pi0": WeightVector.uniform(atoms.count)}
    priors["npmle"] = _run_method(
        "npmle", model, noise, atoms, data, settings, args.seed, None
    ).final
    priors["dsmle"] = _run_method(
        "dsmle", model, noise, atoms, data, settings, args.seed, None
    ).final
    priors["mple"] = _run_method(
        "mple", model, noise, atoms, data, settings, args.seed, None
    ).final

    out_dir = _prepare_out_dir("toy-evaluate", args.out)
    deviations = {}
    for name, prior in priors.items():
        rates = predicted_success_rates(matrix, prior, hits)
        deviations[name] = success_rate_std(rates, truth)
        _write_and_record(
            manifest,
            out_dir,
            f"weights_{name}.csv",
            lambda p, w=prior: write_weighted_atoms_csv(p, atoms, w),
        )

    def write_table(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("method,sigma_R\n")
            for name in ("pi0", "npmle", "dsmle", "mple"):
                fh.write(f"{name},{format_float(deviations[name])}\n")

    _write_and_record(manifest, out_dir, "evaluation.csv", write_table)
    for name, value in deviations.items():
        manifest.report[f"sigma_R[{name}]"] = value
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_deconvolve(args) -> int:
    cfg = _load_config(args.config)
    params = _section(cfg, "deconv")
    boundary = params.pop("boundary", "reflect")
    if params:
        raise ValidationError(f"unknown keys in [deconv]: {sorted(params)}")
    manifest = RunManifest("deconvolve", args.seed, args.config)
    blurred = read_pgm(args.blurred)
    manifest.add_input(args.blurred)
    psf = read_psf(args.psf, boundary=boundary)
    manifest.add_input(args.psf)
    if args.iters is None:
        raise ValidationError("deconvolve needs --iters")
    result = run_deconvolve(blurred, psf, n_iter=args.iters)
    if np.any(np.diff(result.objectives) < -1e-12):
        raise NumericalError("objective trace decreased; the update is broken")
    out_dir = _prepare_out_dir("deconvolve", args.out)
    _write_and_record(
        manifest,
        out_dir,
        "deconvolved.pgm",
        lambda p: write_pgm(result.image, p, maxval=DECONV_OUTPUT_MAXVAL),
    )
    _write_and_record(manifest, out_dir, "trace.csv", result.write_trace_csv)
    manifest.report["iterations"] = int(args.iters)
    manifest.report["final_objective"] = float(result.objectives[-1])
    if args.data is not None:
        original = read_pgm(args.data)
        manifest.add_input(args.data)
        base = original.l1_distance(blurred)
        final = original.l1_distance(result.image)
        manifest.report["l1_blurred_to_original"] = base
        manifest.report["l1_deconvolved_to_original"] = final
        manifest.report["l1_improvement"] = base - final
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_plot_prior_curve(args) -> int:
    manifest = RunManifest("plotdata", args.seed, args.config)
    atoms, weights = read_weighted_atoms_csv(args.weights)
    manifest.add_input(args.weights)
    if atoms.dim != 1:
        raise ValidationError("prior curves need one-dimensional atoms")
    points = atoms.points[:, 0]
    span = float(points.max() - points.min())
    bandwidth = args.bandwidth
    if bandwidth is None:
        bandwidth = span / 50.0 if span > 0 else 1.0
    if bandwidth <= 0:
        raise ValidationError("--bandwidth must be > 0")
    grid = np.linspace(
        points.min() - 3.0 * bandwidth, points.max() + 3.0 * bandwidth, 512
    )
    scale = 1.0 / (bandwidth * np.sqrt(2.0 * np.pi))
    curve = np.array(
        [
            float(
                np.sum(
                    weights.w
                    * scale
                    * np.exp(-0.5 * ((x - points) / bandwidth) ** 2)
                )
            )
            for x in grid
        ]
    )
    out_dir = _prepare_out_dir("plotdata", args.out)

    def write_curve(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,density\n")
            for x, d in zip(grid, curve):
                fh.write(f"{format_float(x)},{format_float(d)}\n")

    _write_and_record(manifest, out_dir, "prior_curve.csv", write_curve)
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_plot_trajectory_fan(args) -> int:
    cfg = _load_config(args.config)
    manifest = RunManifest("plotdata", args.seed, args.config)
    atoms, weights = read_weighted_atoms_csv(args.weights)
    manifest.add_input(args.weights)
    if atoms.dim != 1:
        raise ValidationError("trajectory fans need one-dimensional stiffness atoms")
    if args.count < 0:
        raise ValidationError("sample count must be >= 0")
    params = _section(cfg, "model")
    params.pop("kind", None)
    mass = float(params.pop("mass", 0.7))
    horizon = float(params.pop("horizon", 10.0))
    out_dir = _prepare_out_dir("plotdata", args.out)

    def write_fan(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if args.count == 0:
                fh.write("t,median\n")
                return
            rng = substream(args.seed, "trajectory-fan")
            picks = rng.choice(atoms.count, size=args.count, p=weights.w)
            times = np.linspace(0.0, horizon, 1001)
            fan = np.stack(
                [
                    spring_response(atoms.points[k, 0], mass, times)
                    for k in picks
                ]
            )
            median = np.median(fan, axis=0)
            header = ",".join(f"traj_{q}" for q in range(args.count))
            fh.write(f"t,{header},median\n")
            for i, t in enumerate(times):
                row = ",".join(format_float(v) for v in fan[:, i])
                fh.write(f"{format_float(t)},{row},{format_float(median[i])}\n")

    _write_and_record(manifest, out_dir, "trajectory_fan.csv", write_fan)
    manifest.write(out_dir)
    print(out_dir)
    return 0


def cmd_plot_measurement_overlay(args) -> int:
    cfg = _load_config(args.config)
    manifest = RunManifest("plotdata", args.seed, args.config)
    plot_params = _section(cfg, "plot")
    units = plot_params.pop("units", "m")
    if plot_params:
        raise ValidationError(f"unknown keys in [plot]: {sorted(plot_params)}")
    if units not in ("m", "cm"):
        raise ValidationError("[plot] units must be m or cm")
    model, noise, _ = _toy_model_and_sigma(cfg)
    if model.dim_obs != 1:
        raise ValidationError("measurement overlays need a scalar observation")
    raw = read_measurements_csv(args.measurements)
    manifest.add_input(args.measurements)
    z = raw.z if units == "m" else centimeters_to_meters(raw.z)
    atoms, weights = read_weighted_atoms_csv(args.weights)
    manifest.add_input(args.weights)
    if atoms.dim != model.dim_param:
        raise ValidationError("weights file does not match the model dimension")
    phi = forward_values(model, atoms)[:, 0]
    sigma = float(np.max(noise.sigma))
    lo = min(float(z.min()), float(phi.min())) - 3.0 * sigma
    hi = max(float(z.max()), float(phi.max())) + 3.0 * sigma
    grid = np.linspace(lo, hi, 512)
    scale = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    density = np.array(
        [
            float(np.sum(weights.w * scale * np.exp(-0.5 * ((g - phi) / sigma) ** 2)))
            for g in grid
        ]
    )
    out_dir = _prepare_out_dir("plotdata", args.out)

    def write_density(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("z,predictive_density\n")
            for g, d in zip(grid, density):
                fh.write(f"{format_float(g)},{format_float(d)}\n")

    def write_observations(path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("id,group,z\n")
            for i, record_id in enumerate(raw.ids):
                group = raw.groups[i] if raw.groups[i] is not None else ""
                fh.write(f"{record_id},{group},{format_float(z[i, 0])}\n")

    _write_and_record(manifest, out_dir, "predictive.csv", write_density)
    _write_and_record(manifest, out_dir, "observations.csv", write_observations)
    manifest.write(out_dir)
    print(out_dir)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser, *names):
    if "config" in names:
        parser.add_argument("--config", help="INI run configuration")
    if "seed" in names:
        parser.add_argument("--seed", type=int, default=0, help="master seed")
    if "out" in names:
        parser.add_argument(
            "--out", help="output directory (default out/<command>/<timestamp>/)"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixprior",
        description="Estimate nonparametric priors from population measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit a prior to a measurement file")
    est.add_argument("--config", required=True, help="INI run configuration")
    est.add_argument("--data", help="measurement CSV")
    est.add_argument(
        "--atoms",
        required=True,
        help="grid:LO:HI:COUNT, file:PATH, or posterior-merge[:COUNT]",
    )
    est.add_argument(
        "--method",
        required=True,
        choices=("npmle", "dsmle", "mple", "refprior"),
    )
    est.add_argument(
        "--group-by",
        action="store_true",
        help="run separately per group label in the data",
    )
    est.add_argument("--iters", type=int, help="iteration cap override")
    est.add_argument("--gamma", type=float, help="entropy weight override")
    est.add_argument("--bandwidth", type=float, help="smoothing bandwidth override")
    _add_common(est, "seed", "out")
    est.set_defaults(func=cmd_estimate)

    toy = sub.add_parser("toy", help="spring study pipeline")
    toy_sub = toy.add_subparsers(dest="toy_command", required=True)

    gen = toy_sub.add_parser("generate", help="draw a spring population")
    _add_common(gen, "config", "seed", "out")
    gen.set_defaults(func=cmd_toy_generate)

    mea = toy_sub.add_parser("measure", help="measure a population")
    mea.add_argument("population", help="population CSV")
    _add_common(mea, "config", "seed", "out")
    mea.set_defaults(func=cmd_toy_measure)

    tes = toy_sub.add_parser("estimate", help="fit a stiffness prior")
    tes.add_argument("measurements", help="measurement CSV (centimeters)")
    tes.add_argument(
        "--atoms",
        default=f"grid:{STIFFNESS_LOW:g}:{STIFFNESS_HIGH:g}:{STIFFNESS_GRID_SIZE}",
        help="atom source (default the standard stiffness grid)",
    )
    tes.add_argument(
        "--method",
        required=True,
        choices=("npmle", "dsmle", "mple", "refprior"),
    )
    tes.add_argument("--group-by", action="store_true")
    tes.add_argument("--iters", type=int)
    tes.add_argument("--gamma", type=float)
    tes.add_argument("--bandwidth", type=float)
    _add_common(tes, "config", "seed", "out")
    tes.set_defaults(func=cmd_toy_estimate)

    tre = toy_sub.add_parser("treat", help="predict success rates")
    tre.add_argument("measurements", help="measurement CSV (centimeters)")
    tre.add_argument("weights", help="weighted atoms CSV (the prior)")
    tre.add_argument("treatment", nargs="?", help="treatment INI (default shipped)")
    _add_common(tre, "config", "seed", "out")
    tre.set_defaults(func=cmd_toy_treat)

    eva = toy_sub.add_parser("evaluate", help="success-rate deviation table")
    eva.add_argument("population", nargs="?", help="population CSV (default generated)")
    eva.add_argument("measurements", nargs="?", help="measurement CSV (centimeters)")
    eva.add_argument("treatment", nargs="?", help="treatment INI (default shipped)")
    eva.add_argument(
        "--atoms",
        default=f"grid:{STIFFNESS_LOW:g}:{STIFFNESS_HIGH:g}:{STIFFNESS_GRID_SIZE}",
    )
    eva.add_argument("--iters", type=int, help="NPMLE and DS-MLE iteration cap")
    eva.add_argument("--gamma", type=float, help="entropy weight for the MPLE run")
    eva.add_argument("--bandwidth", type=float)
    _add_common(eva, "config", "seed", "out")
    eva.set_defaults(func=cmd_toy_evaluate)

    dec = sub.add_parser("deconvolve", help="sharpen a blurred gray image")
    dec.add_argument("blurred", help="blurred image (PGM)")
    dec.add_argument("psf", help="point spread function (PGM or kernel text)")
    dec.add_argument("--iters", type=int, default=50, help="iteration count")
    dec.add_argument(
        "--data", help="original image (PGM); adds distance reporting"
    )
    _add_common(dec, "config", "seed", "out")
    dec.set_defaults(func=cmd_deconvolve)

    plot = sub.add_parser("plotdata", help="export plot-ready CSV bundles")
    plot_sub = plot.add_subparsers(dest="plot_command", required=True)

    pri = plot_sub.add_parser("prior-curve", help="kernel-smoothed weight profile")
    pri.add_argument("weights", help="weighted atoms CSV")
    pri.add_argument("--bandwidth", type=float, help="kernel width")
    _add_common(pri, "config", "seed", "out")
    pri.set_defaults(func=cmd_plot_prior_curve)

    fan = plot_sub.add_parser("trajectory-fan", help="sampled response curves")
    fan.add_argument("weights", help="weighted atoms CSV")
    fan.add_argument(
        "count", nargs="?", type=int, default=20, help="number of sampled curves"
    )
    _add_common(fan, "config", "seed", "out")
    fan.set_defaults(func=cmd_plot_trajectory_fan)

    ove = plot_sub.add_parser(
        "measurement-overlay", help="data and the predictive density"
    )
    ove.add_argument("measurements", help="measurement CSV")
    ove.add_argument("weights", help="weighted atoms CSV (the prior)")
    _add_common(ove, "config", "seed", "out")
    ove.set_defaults(func=cmd_plot_measurement_overlay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
