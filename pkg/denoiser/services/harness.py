"""Config-driven experiment runner.

An ExperimentSpec names an experiment kind, a prior, a base DenoiseConfig, a
sweep and a list of seeds. The sweep is split into independent cells, each
cell sampling its own clean/noisy data from its seed, and every cell yields
MetricsRecords. Cells run serially or in a process pool; the returned records
are always in canonical order, so output never depends on the worker count.

Sweep semantics per kind:
    variance-decay   Stage 1 bandwidth beta; records per-snapshot variance
    mse-vs-n         context size N (nested subsets of one max-N sample)
    mse-vs-sigma2    noise variance sigma^2 (beta_c follows 1/sigma^2)
    mse-vs-depth     readout layer index
    mse-vs-beta      Stage 1 bandwidth beta
    theory-verify    context size N, crossed with ``betas``
"""

import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from functools import reduce
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from denoiser import __version__
from denoiser.config import get_settings
from denoiser.exceptions import DenoiserError, ValidationError
from denoiser.models.enums import ExperimentKind, ValueKind
from denoiser.models.mixture import GaussianMixture, validate_mixture
from denoiser.models.particles import ParticleSet
from denoiser.models.records import MetricsRecord
from denoiser.models.schedule import MAX_SEED, DenoiseConfig
from denoiser.services import dataio, metrics, oracle, plots, validation
from denoiser.services.meanfield import variance_ode_solve
from denoiser.services.stage1 import run_stage1, run_truncated, snapshot_depths
from denoiser.services.stage2 import one_shot_tweedie, posterior_readout, two_stage_denoise

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MSE_KINDS = {
    ExperimentKind.MSE_VS_N,
    ExperimentKind.MSE_VS_SIGMA2,
    ExperimentKind.MSE_VS_DEPTH,
    ExperimentKind.MSE_VS_BETA,
}


class ExperimentSpec(BaseModel):
    """One experiment grid.

    Attributes:
        kind: Experiment family.
        prior: Clean-data prior.
        config: Base run configuration; the swept field is overridden per cell.
        sweep: Values of the swept parameter.
        seeds: Cell seeds; every sweep value runs once per seed.
        out_dir: Output directory for records, plots and manifest.
        n: Context size (ignored by mse-vs-n, whose sweep is N).
        dim: Data dimension; defaults to the prior's.
        snapshot_every: Stage 1 snapshot spacing for variance-decay.
        mmse_samples: Monte Carlo samples for the Bayes MMSE baseline.
        mmse_seed: Seed of the Bayes MMSE baseline.
        betas: Bandwidths crossed with the N sweep for theory-verify.
        grid_bound: Observation bound M for the theory-verify posterior gap.
        workers: Worker processes for sweep cells.
    """

    model_config = ConfigDict(frozen=True)

    kind: ExperimentKind
    prior: GaussianMixture
    config: DenoiseConfig
    sweep: List[float] = Field(..., min_length=1)
    seeds: List[int] = Field(..., min_length=1)
    out_dir: str = Field(default="results")
    n: int = Field(default=2000, ge=2)
    dim: Optional[int] = Field(default=None, ge=1)
    snapshot_every: int = Field(default=10, ge=0)
    mmse_samples: Optional[int] = Field(default=None, ge=1000)
    mmse_seed: int = Field(default=0, ge=0)
    betas: List[float] = Field(default_factory=list)
    grid_bound: float = Field(default=2.0, gt=0)
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, value: List[int]) -> List[int]:
        for seed in value:
            if not 0 <= seed <= MAX_SEED:
                raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        return value

    @model_validator(mode="after")
    def _check(self) -> "ExperimentSpec":
        prior = validate_mixture(self.prior)
        object.__setattr__(self, "prior", prior)
        if self.dim is None:
            object.__setattr__(self, "dim", prior.dim)
        elif self.dim != prior.dim:
            raise ValidationError(f"dim {self.dim} does not match the prior dimension {prior.dim}")
        if self.kind == ExperimentKind.THEORY_VERIFY:
            if not self.betas:
                raise ValidationError("theory-verify needs a nonempty 'betas' list")
            if not prior.is_single_gaussian():
                raise ValidationError("theory-verify needs a single Gaussian prior")
        if self.kind in (ExperimentKind.MSE_VS_N, ExperimentKind.THEORY_VERIFY):
            if any(v < 2 or v != int(v) for v in self.sweep):
                raise ValidationError(f"N sweep values must be integers >= 2, got {self.sweep}")
        if self.kind == ExperimentKind.MSE_VS_DEPTH:
            if any(v < 0 or v != int(v) for v in self.sweep):
                raise ValidationError(f"depth sweep values must be integers >= 0, got {self.sweep}")
        return self


def load_spec(path: PathLike) -> ExperimentSpec:
    """Read an ExperimentSpec JSON file."""
    from pydantic import ValidationError as PydanticValidationError

    try:
        return ExperimentSpec.model_validate(dataio.read_json(path))
    except PydanticValidationError as e:
        raise ValidationError(f"invalid experiment spec in {path}: {e}") from e


# -- cell planning ----------------------------------------------------------------


def _cells(spec: ExperimentSpec) -> List[Tuple[Tuple[float, ...], int]]:
    """(sweep values, seed) per cell; mse-vs-depth shares one trajectory per seed."""
    if spec.kind == ExperimentKind.MSE_VS_DEPTH:
        return [(tuple(spec.sweep), seed) for seed in spec.seeds]
    return [((value,), seed) for value in spec.sweep for seed in spec.seeds]


def _config_for(spec: ExperimentSpec, value: float, seed: int) -> DenoiseConfig:
    update: Dict[str, object] = {"seed": seed}
    if spec.kind == ExperimentKind.MSE_VS_SIGMA2:
        update.update(sigma2=value, beta_c=None)
    elif spec.kind in (ExperimentKind.MSE_VS_BETA, ExperimentKind.VARIANCE_DECAY):
        update["beta"] = value
    elif spec.kind == ExperimentKind.MSE_VS_DEPTH:
        update["readout_depth"] = int(value)
    return DenoiseConfig(**{**spec.config.model_dump(), **update})


def _labels(spec: ExperimentSpec) -> List[Tuple[str, ValueKind]]:
    if spec.kind == ExperimentKind.VARIANCE_DECAY:
        return [("variance", ValueKind.VARIANCE)]
    if spec.kind == ExperimentKind.THEORY_VERIFY:
        labels = []
        for beta in spec.betas:
            labels += [
                (f"recovery_w1/beta={beta:g}", ValueKind.W1),
                (f"posterior_gap/beta={beta:g}", ValueKind.GAP),
                (f"retained/beta={beta:g}", ValueKind.COUNT),
            ]
        return labels
    labels = [
        ("two_stage", ValueKind.MSE),
        ("one_shot", ValueKind.MSE),
        ("stage1_only", ValueKind.MSE),
        ("bayes_mmse", ValueKind.MSE),
        ("two_stage_over_mmse", ValueKind.MSE),
    ]
    if spec.kind == ExperimentKind.MSE_VS_SIGMA2:
        labels += [
            ("two_stage_over_sigma2", ValueKind.MSE),
            ("one_shot_over_sigma2", ValueKind.MSE),
            ("stage1_over_sigma2", ValueKind.MSE),
            ("bayes_mmse_over_sigma2", ValueKind.MSE),
        ]
    return labels


def _noisy_sample(
    spec: ExperimentSpec, n: int, sigma2: float, seed: int
) -> Tuple[ParticleSet, ParticleSet]:
    clean = dataio.sample_prior_array(spec.prior, n, seed)
    noisy = dataio.corrupt_array(clean, sigma2, seed)
    return ParticleSet(points=clean), ParticleSet(points=noisy)


# -- cell runners -----------------------------------------------------------------


def _variance_cell(
    spec: ExperimentSpec, values: Tuple[float, ...], seed: int, mmse: Dict[float, float]
) -> List[MetricsRecord]:
    beta = values[0]
    config = _config_for(spec, beta, seed)
    _, noisy = _noisy_sample(spec, spec.n, config.sigma2, seed)
    if config.truncates:
        trajectory, _ = run_truncated(noisy, config, spec.snapshot_every)
    else:
        trajectory = run_stage1(noisy, config, spec.snapshot_every)
    return [
        MetricsRecord(
            label="variance",
            sweep_value=beta,
            seed=seed,
            depth_index=snap.depth_index,
            time=snap.time,
            value_kind=ValueKind.VARIANCE,
            value=metrics.empirical_variance(snap.particles),
        )
        for snap in trajectory.snapshots
    ]


def _mse_records(
    spec: ExperimentSpec,
    value: float,
    seed: int,
    depth: int,
    t: float,
    sigma2: float,
    baseline: float,
    errors: Dict[str, float],
) -> List[MetricsRecord]:
    values = dict(errors)
    values["bayes_mmse"] = baseline
    values["two_stage_over_mmse"] = errors["two_stage"] / baseline if baseline > 0 else math.inf
    if spec.kind == ExperimentKind.MSE_VS_SIGMA2:
        values["two_stage_over_sigma2"] = errors["two_stage"] / sigma2
        values["one_shot_over_sigma2"] = errors["one_shot"] / sigma2
        values["stage1_over_sigma2"] = errors["stage1_only"] / sigma2
        values["bayes_mmse_over_sigma2"] = baseline / sigma2
    records = []
    for label, kind in _labels(spec):
        v = values[label]
        records.append(
            MetricsRecord(
                label=label,
                sweep_value=value,
                seed=seed,
                depth_index=depth,
                time=t,
                value_kind=kind,
                value=v,
                diagnostic=None if math.isfinite(v) else "Bayes MMSE is zero",
            )
        )
    return records


def _clean_for(clean: ParticleSet, report) -> ParticleSet:
    """Clean tokens paired with the particles that survived truncation."""
    if report is None or report.dropped == 0:
        return clean
    return clean.subset(report.retained_indices)


def _mse_cell(
    spec: ExperimentSpec, values: Tuple[float, ...], seed: int, mmse: Dict[float, float]
) -> List[MetricsRecord]:
    value = values[0]
    config = _config_for(spec, value, seed)
    if spec.kind == ExperimentKind.MSE_VS_N:
        # Nested subsets: the first N rows of one max-N draw
        clean, noisy = _noisy_sample(spec, int(max(spec.sweep)), config.sigma2, seed)
        keep = np.arange(int(value))
        clean, noisy = clean.subset(keep), noisy.subset(keep)
    else:
        clean, noisy = _noisy_sample(spec, spec.n, config.sigma2, seed)

    result, trajectory = two_stage_denoise(noisy, config)
    evolved = trajectory.at(result.readout_depth).particles
    errors = {
        "two_stage": metrics.mse(result.estimates, clean),
        "one_shot": metrics.mse(one_shot_tweedie(noisy, config.sigma2), clean),
        "stage1_only": metrics.mse(evolved, _clean_for(clean, result.truncation)),
    }
    return _mse_records(
        spec, value, seed, result.readout_depth, result.readout_time,
        config.sigma2, mmse[config.sigma2], errors,
    )


def _depth_cell(
    spec: ExperimentSpec, values: Tuple[float, ...], seed: int, mmse: Dict[float, float]
) -> List[MetricsRecord]:
    depths = sorted({int(v) for v in values})
    config = _config_for(spec, depths[-1], seed)
    schedule = config.schedule()
    config.resolved_readout_depth(schedule)
    clean, noisy = _noisy_sample(spec, spec.n, config.sigma2, seed)

    every = reduce(math.gcd, depths)
    report = None
    if config.truncates:
        trajectory, report = run_truncated(noisy, config, every, depth=depths[-1])
    else:
        trajectory = run_stage1(noisy, config, every, depth=depths[-1])

    one_shot = metrics.mse(one_shot_tweedie(noisy, config.sigma2), clean)
    paired = _clean_for(clean, report)
    records = []
    for depth in depths:
        prior = trajectory.at(depth).particles
        errors = {
            "two_stage": metrics.mse(posterior_readout(prior, noisy, config.beta_c), clean),
            "one_shot": one_shot,
            "stage1_only": metrics.mse(prior, paired),
        }
        records += _mse_records(
            spec, float(depth), seed, depth, schedule.time_at(depth),
            config.sigma2, mmse[config.sigma2], errors,
        )
    return records


def _theory_cell(
    spec: ExperimentSpec, values: Tuple[float, ...], seed: int, mmse: Dict[float, float]
) -> List[MetricsRecord]:
    n = int(values[0])
    tau = spec.config.sigma2
    l0 = spec.config.l0
    t = tau / 2.0
    records = []
    for beta in spec.betas:
        evolved = validation.evolve_noisy_prior(
            spec.prior, tau, beta, n, spec.config.truncation, seed, l0
        )
        measured = {
            f"recovery_w1/beta={beta:g}": validation.recovery_w1(spec.prior, evolved, seed),
            f"posterior_gap/beta={beta:g}": validation.posterior_gap(
                spec.prior, evolved, tau, spec.grid_bound
            ),
            f"retained/beta={beta:g}": float(evolved.count),
        }
        for label, kind in _labels(spec):
            if label in measured:
                records.append(
                    MetricsRecord(
                        label=label, sweep_value=float(n), seed=seed, depth_index=l0,
                        time=t, value_kind=kind, value=measured[label],
                    )
                )
    return records


_CELL_RUNNERS = {
    ExperimentKind.VARIANCE_DECAY: _variance_cell,
    ExperimentKind.MSE_VS_N: _mse_cell,
    ExperimentKind.MSE_VS_SIGMA2: _mse_cell,
    ExperimentKind.MSE_VS_BETA: _mse_cell,
    ExperimentKind.MSE_VS_DEPTH: _depth_cell,
    ExperimentKind.THEORY_VERIFY: _theory_cell,
}


def run_cell(
    spec: ExperimentSpec, values: Tuple[float, ...], seed: int, mmse: Dict[float, float]
) -> List[MetricsRecord]:
    """Run one sweep cell; a failure becomes NaN records carrying a diagnostic."""
    try:
        records = _CELL_RUNNERS[spec.kind](spec, values, seed, mmse)
    except (DenoiserError, ArithmeticError, np.linalg.LinAlgError) as e:
        diagnostic = f"{type(e).__name__}: {e}"
        logger.warning(f"Cell {spec.kind.value} {values} seed={seed} failed: {diagnostic}")
        return [
            MetricsRecord(
                label=label, sweep_value=value, seed=seed, value_kind=kind,
                value=math.nan, diagnostic=diagnostic,
            )
            for value in values
            for label, kind in _labels(spec)
        ]
    logger.info(f"Cell {spec.kind.value} {values} seed={seed}: {len(records)} records")
    return records


def _run_cell_args(args: Tuple[ExperimentSpec, Tuple[float, ...], int, Dict[float, float]]) -> List[MetricsRecord]:
    return run_cell(*args)


# -- references -------------------------------------------------------------------


def _baselines(spec: ExperimentSpec) -> Dict[float, float]:
    """Bayes MMSE per noise level, computed once and shared by every cell."""
    if spec.kind not in MSE_KINDS:
        return {}
    sigmas = spec.sweep if spec.kind == ExperimentKind.MSE_VS_SIGMA2 else [spec.config.sigma2]
    samples = spec.mmse_samples or get_settings().mmse_samples
    return {
        s: oracle.bayes_mmse(spec.prior, s, spec.dim, samples, spec.mmse_seed)[0]
        for s in sorted(set(sigmas))
    }


def _variance_references(spec: ExperimentSpec) -> List[MetricsRecord]:
    """Variance ODE curve per beta at the snapshot times, recorded with seed 0."""
    if spec.kind != ExperimentKind.VARIANCE_DECAY:
        return []
    prior_var = float(np.trace(spec.prior.covariance())) / spec.dim
    v0 = prior_var + spec.config.sigma2
    records = []
    for beta in spec.sweep:
        schedule = _config_for(spec, beta, 0).schedule()
        depths = snapshot_depths(schedule.total_layers, schedule.layers_to_horizon, spec.snapshot_every)
        times = [schedule.time_at(d) for d in depths]
        curve = variance_ode_solve(v0, beta, times)
        records += [
            MetricsRecord(
                label="variance_ode", sweep_value=beta, seed=0, depth_index=d,
                time=t, value_kind=ValueKind.VARIANCE, value=v,
            )
            for d, t, v in zip(depths, times, curve)
        ]
    return records


# -- public API -------------------------------------------------------------------


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> List[MetricsRecord]:
    """Run every (sweep value, seed) cell of ``spec``.

    Args:
        spec: The experiment.
        workers: Process count; defaults to ``spec.workers`` then ``PD_WORKERS``.

    Returns:
        All records in canonical order.
    """
    workers = workers or spec.workers or get_settings().workers
    cells = _cells(spec)
    logger.info(f"Experiment {spec.kind.value}: {len(cells)} cells on {workers} worker(s)")

    mmse = _baselines(spec)
    jobs = [(spec, values, seed, mmse) for values, seed in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, jobs))
    else:
        results = [_run_cell_args(job) for job in jobs]

    records = [r for cell in results for r in cell] + _variance_references(spec)
    return sorted(records, key=lambda r: r.sort_key())


def _series(records: List[MetricsRecord], prefix: str) -> Dict[str, List[MetricsRecord]]:
    out: Dict[str, List[MetricsRecord]] = {}
    for r in records:
        if r.label.startswith(prefix):
            out.setdefault(r.label, []).append(r)
    return out


def emit_plots(records: List[MetricsRecord], spec: ExperimentSpec, out_dir: PathLike) -> List[Path]:
    """Write ``records.csv`` and one SVG per plot into ``out_dir``.

    Raises:
        ValidationError: If ``records`` is empty.
        DataIOError: If a file cannot be written.
    """
    if not records:
        raise ValidationError("emit_plots needs at least one record")
    out = Path(out_dir)
    paths = [dataio.save_records(records, out / "records.csv")]
    kind = spec.kind

    if kind == ExperimentKind.VARIANCE_DECAY:
        series: Dict[str, List[MetricsRecord]] = {}
        for r in records:
            series.setdefault(f"{r.label} beta={r.sweep_value:g}", []).append(r)
        dashed = [name for name in series if name.startswith("variance_ode")]
        paths.append(plots.line_plot(
            out / "variance_decay.svg", series, plots.by_time,
            "depth time t", "per-coordinate variance", "Stage 1 variance decay", dashed,
        ))
    elif kind in MSE_KINDS:
        xlabel = {
            ExperimentKind.MSE_VS_N: "context size N",
            ExperimentKind.MSE_VS_SIGMA2: "noise variance sigma^2",
            ExperimentKind.MSE_VS_DEPTH: "readout layer",
            ExperimentKind.MSE_VS_BETA: "Stage 1 bandwidth beta",
        }[kind]
        log_x = kind in (ExperimentKind.MSE_VS_N, ExperimentKind.MSE_VS_SIGMA2)
        stem = kind.value.replace("-", "_")
        if kind == ExperimentKind.MSE_VS_SIGMA2:
            names = ["two_stage_over_sigma2", "one_shot_over_sigma2", "stage1_over_sigma2", "bayes_mmse_over_sigma2"]
            ylabel = "MSE / sigma^2"
        else:
            names = ["two_stage", "one_shot", "stage1_only", "bayes_mmse"]
            ylabel = "x-prediction MSE"
        series = {name: [r for r in records if r.label == name] for name in names}
        paths.append(plots.line_plot(
            out / f"{stem}.svg", series, plots.by_sweep, xlabel, ylabel,
            f"Denoising MSE ({kind.value})", [names[-1]], log_x,
        ))
        paths.append(plots.line_plot(
            out / f"{stem}_over_mmse.svg", _series(records, "two_stage_over_mmse"),
            plots.by_sweep, xlabel, "MSE / Bayes MMSE", "Two-stage MSE relative to Bayes", (), log_x,
        ))
    else:
        for prefix, ylabel in (("recovery_w1", "W1 to P0"), ("posterior_gap", "sup |m_mu - m_P0|")):
            paths.append(plots.line_plot(
                out / f"{prefix}.svg", _series(records, prefix), plots.by_sweep,
                "context size N", ylabel, f"Sequential recovery: {prefix}", (), True,
            ))
    logger.info(f"Wrote {len(paths)} artifacts to {out}")
    return paths


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def execute(
    spec: ExperimentSpec, out_dir: Optional[PathLike] = None, workers: Optional[int] = None
) -> List[Path]:
    """Run ``spec`` and write records, plots and ``manifest.json``."""
    started = time.perf_counter()
    out = Path(out_dir or spec.out_dir)
    records = run_experiment(spec, workers)
    paths = emit_plots(records, spec, out)
    failed = sum(1 for r in records if r.diagnostic is not None)
    manifest = {
        "version": __version__,
        "spec": spec.model_dump(mode="json"),
        "records": len(records),
        "failed_records": failed,
        "artifacts": {p.name: _sha256(p) for p in paths},
        "wall_time_seconds": round(time.perf_counter() - started, 3),
    }
    paths.append(dataio.write_json(out / "manifest.json", manifest))
    if failed:
        logger.warning(f"{failed} records come from failed cells; see their diagnostics")
    return paths
