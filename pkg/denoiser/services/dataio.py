"""Sampling, corruption, seeded randomness and file persistence.

Randomness contract:
    Every random stream is derived from one 64-bit run seed and a text label,
    ``child = splitmix64(run_seed XOR fnv1a64(label))``, and drives a
    ``numpy.random.Generator`` over the counter-based Philox bit generator.
    There is no global RNG state. Large draws are split into chunks of
    ``Settings.mc_chunk_size`` rows; chunk c of stream ``label`` uses the
    label ``"{label}/{c}"``, so results depend on the chunk size setting but
    never on the number of workers.

File formats:
    Particle CSV: header ``x0,x1,...,x{d-1}``, one row per particle, values
    written with 17 significant digits, UTF-8, LF line endings.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from denoiser.config import get_settings
from denoiser.exceptions import DataIOError, DimensionMismatch, ParseError, ValidationError
from denoiser.models.mixture import GaussianMixture, validate_mixture
from denoiser.models.particles import ParticleSet
from denoiser.models.records import MetricsRecord
from denoiser.models.schedule import DenoiseConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

RECORD_COLUMNS = ["label", "sweep_value", "seed", "depth_index", "time", "value_kind", "value"]


# -- seeds and generators -------------------------------------------------------


def fnv1a64(label: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 bytes of ``label``."""
    h = FNV_OFFSET
    for byte in label.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(run_seed: int, label: str) -> int:
    """Child seed for stream ``label`` of ``run_seed``."""
    return splitmix64((int(run_seed) & MASK64) ^ fnv1a64(label))


def rng_for(run_seed: int, label: str) -> np.random.Generator:
    """Philox-backed generator for stream ``label`` of ``run_seed``."""
    return np.random.Generator(np.random.Philox(key=derive_seed(run_seed, label)))


def _chunks(n: int) -> List[Tuple[int, int]]:
    size = get_settings().mc_chunk_size
    return [(start, min(start + size, n)) for start in range(0, n, size)]


# -- sampling -------------------------------------------------------------------


def covariance_root(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (zero for a point mass)."""
    eigvals, eigvecs = np.linalg.eigh(cov)
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def sample_prior_array(prior: GaussianMixture, n: int, seed: int, label: str = "prior") -> np.ndarray:
    """Draw n points from ``prior`` as an (n, d) array."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    prior = validate_mixture(prior)
    cdf = np.cumsum(prior.weights_array())
    means = prior.means_array()
    roots = np.stack([covariance_root(c) for c in prior.covariances_array()])
    k, d = means.shape

    out = np.empty((n, d), dtype=np.float64)
    for c, (start, stop) in enumerate(_chunks(n)):
        rng = rng_for(seed, f"{label}/{c}")
        u = rng.random(stop - start)
        z = rng.standard_normal((stop - start, d))
        comp = np.minimum(np.searchsorted(cdf, u, side="right"), k - 1)
        block = out[start:stop]
        for j in range(k):
            mask = comp == j
            block[mask] = means[j] + z[mask] @ roots[j].T
    return out


def sample_prior(prior: GaussianMixture, n: int, dim: int, seed: int) -> ParticleSet:
    """Draw n i.i.d. points from the prior.

    Components are chosen by inverse CDF on the weights, then a Gaussian draw
    is pushed through the component's covariance square root.

    Raises:
        ValidationError: If the prior is invalid or its dimension is not ``dim``.
    """
    if prior.dim != dim:
        raise DimensionMismatch(dim, prior.dim, "prior")
    return ParticleSet(points=sample_prior_array(prior, n, seed))


def corrupt_array(clean: np.ndarray, sigma2: float, seed: int, label: str = "noise") -> np.ndarray:
    """Add i.i.d. N(0, sigma2 I) noise to the rows of ``clean``."""
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    scale = float(np.sqrt(sigma2))
    noisy = np.array(clean, dtype=np.float64, copy=True)
    for c, (start, stop) in enumerate(_chunks(noisy.shape[0])):
        rng = rng_for(seed, f"{label}/{c}")
        noisy[start:stop] += scale * rng.standard_normal((stop - start, noisy.shape[1]))
    return noisy


def corrupt(clean: ParticleSet, sigma2: float, seed: int) -> ParticleSet:
    """Corrupt every point with isotropic Gaussian noise of variance sigma2."""
    return ParticleSet(points=corrupt_array(clean.points, sigma2, seed))


def sample_pair(
    prior: GaussianMixture, n: int, sigma2: float, seed: int
) -> Tuple[ParticleSet, ParticleSet]:
    """Clean sample and its corruption, from independent streams of ``seed``."""
    clean = sample_prior(prior, n, prior.dim, seed)
    return clean, corrupt(clean, sigma2, seed)


# -- particle CSV ---------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def save_particles(p: ParticleSet, path: PathLike) -> Path:
    """Write a particle set as CSV.

    Raises:
        DataIOError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{i}" for i in range(p.dim)])
            for row in p.points:
                writer.writerow([_fmt(v) for v in row])
    except OSError as e:
        logger.error(f"Failed to write particles to {path}: {e}")
        raise DataIOError(f"Cannot write {path}: {e}") from e
    return path


def load_particles(path: PathLike) -> ParticleSet:
    """Read a particle set written by ``save_particles``.

    Raises:
        DataIOError: If the file cannot be read.
        ParseError: With the offending line number for malformed content.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        logger.error(f"Failed to read particles from {path}: {e}")
        raise DataIOError(f"Cannot read {path}: {e}") from e

    if not rows:
        raise ParseError("no data rows", path=str(path))
    header = rows[0]
    expected = [f"x{i}" for i in range(len(header))]
    if not header or header != expected:
        raise ParseError(f"header must be {','.join(expected) or 'x0,...'}, got {','.join(header)}", 1, str(path))
    if len(rows) == 1:
        raise ParseError("no data rows", path=str(path))

    values = np.empty((len(rows) - 1, len(header)), dtype=np.float64)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"row has {len(row)} fields but the header has {len(header)}", lineno, str(path)
            )
        try:
            values[lineno - 2] = [float(v) for v in row]
        except ValueError as e:
            raise ParseError(f"not a number: {e}", lineno, str(path)) from e
    return ParticleSet(points=values)


# -- trajectories ---------------------------------------------------------------


def save_trajectory(trajectory: Any, directory: PathLike) -> List[Path]:
    """Write one CSV per snapshot plus a ``trajectory.json`` index."""
    directory = Path(directory)
    written = []
    index = []
    for snap in trajectory.snapshots:
        name = f"snapshot_{snap.depth_index:06d}.csv"
        written.append(save_particles(snap.particles, directory / name))
        index.append({"depth_index": snap.depth_index, "time": snap.time, "file": name})
    meta = {"schedule": trajectory.schedule.model_dump(), "snapshots": index}
    written.append(_write_json(directory / "trajectory.json", meta))
    logger.info(f"Saved {len(index)} snapshots to {directory}")
    return written


def load_trajectory(directory: PathLike):
    """Read a trajectory written by ``save_trajectory``."""
    from denoiser.services.stage1 import Snapshot, Trajectory

    directory = Path(directory)
    meta = read_json(directory / "trajectory.json")
    try:
        snapshots = [
            Snapshot(
                depth_index=entry["depth_index"],
                time=entry["time"],
                particles=load_particles(directory / entry["file"]),
            )
            for entry in meta["snapshots"]
        ]
        return Trajectory(snapshots=snapshots, schedule=meta["schedule"])
    except (KeyError, TypeError, PydanticValidationError) as e:
        raise ParseError(f"malformed trajectory index: {e}", path=str(directory)) from e


# -- JSON -----------------------------------------------------------------------


def _write_json(path: Path, payload: Any) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise DataIOError(f"Cannot write {path}: {e}") from e
    return path


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to read {path}: {e}")
        raise DataIOError(f"Cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, str(path)) from e


def write_json(path: PathLike, payload: Any) -> Path:
    """Write ``payload`` as pretty, key-sorted JSON."""
    return _write_json(Path(path), payload)


def load_mixture(path: PathLike) -> GaussianMixture:
    """Read and validate a GaussianMixture JSON file."""
    try:
        mixture = GaussianMixture.model_validate(read_json(path))
    except PydanticValidationError as e:
        raise ValidationError(f"invalid mixture in {path}: {e}") from e
    return validate_mixture(mixture)


def load_config(path: PathLike) -> DenoiseConfig:
    """Read a DenoiseConfig JSON file."""
    try:
        return DenoiseConfig.model_validate(read_json(path))
    except PydanticValidationError as e:
        raise ValidationError(f"invalid config in {path}: {e}") from e


def parse_matrix(source: str) -> np.ndarray:
    """Square matrix from an inline JSON string or a path to a JSON file."""
    text = source.strip()
    if text.startswith("["):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid inline matrix: {e.msg}", path="<inline>") from e
    else:
        payload = read_json(source)
    try:
        matrix = np.atleast_2d(np.asarray(payload, dtype=np.float64))
    except (TypeError, ValueError) as e:
        raise ParseError(f"matrix rows must be equal-length lists of numbers: {e}") from e
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {matrix.shape}")
    return matrix


# -- tabular outputs ------------------------------------------------------------


def save_table(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write a CSV table; floats get 17 significant digits."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise DataIOError(f"Cannot write {path}: {e}") from e
    return path


def save_energy_grid(path: PathLike, xs: np.ndarray, ys: np.ndarray, values: np.ndarray) -> Path:
    """Write an energy lattice as (x, y, energy) rows."""
    rows = [
        (float(x), float(y), float(values[i, j]))
        for i, y in enumerate(ys)
        for j, x in enumerate(xs)
    ]
    return save_table(path, ["x", "y", "energy"], rows)


def save_records(records: Sequence[MetricsRecord], path: PathLike) -> Path:
    """Write metrics records as the tidy ``records.csv`` table, in canonical order."""
    ordered = sorted(records, key=lambda r: r.sort_key())
    rows = [
        (r.label, float(r.sweep_value), r.seed, r.depth_index, float(r.time), r.value_kind.value, float(r.value))
        for r in ordered
    ]
    return save_table(path, RECORD_COLUMNS, rows)


def load_records(path: PathLike) -> List[MetricsRecord]:
    """Parse a ``records.csv`` table back into MetricsRecord objects."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise DataIOError(f"Cannot read {path}: {e}") from e
    if not rows or rows[0] != RECORD_COLUMNS:
        raise ParseError(f"header must be {','.join(RECORD_COLUMNS)}", 1, str(path))

    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(RECORD_COLUMNS):
            raise ParseError(f"expected {len(RECORD_COLUMNS)} fields, got {len(row)}", lineno, str(path))
        label, sweep, seed, depth, time, kind, value = row
        try:
            value_f = float(value)
            records.append(
                MetricsRecord(
                    label=label,
                    sweep_value=float(sweep),
                    seed=int(seed),
                    depth_index=int(depth),
                    time=float(time),
                    value_kind=kind,
                    value=value_f,
                    diagnostic=None if np.isfinite(value_f) else "failed cell",
                )
            )
        except (ValueError, PydanticValidationError) as e:
            raise ParseError(f"malformed record: {e}", lineno, str(path)) from e
    return records
