"""Command-line entry point for the particle denoiser.

Outputs go to files and stdout; logs go to stderr. Exit codes: 0 success,
1 usage error, 2 validation or schedule error, 3 numeric failure, 4 I/O error.
"""

import argparse
import logging
import sys
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from denoiser import __version__
from denoiser.config import get_settings
from denoiser.exceptions import DenoiserError, ValidationError
from denoiser.models.enums import Integrator, TruncationMode, W1Method
from denoiser.models.schedule import DenoiseConfig
from denoiser.services import dataio, harness, kernel, meanfield, metrics
from denoiser.services.stage2 import two_stage_denoise

logger = logging.getLogger("denoiser")

EXIT_USAGE = 1


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code instead of 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _truncation(value: str):
    if value in (TruncationMode.NONE.value, TruncationMode.AUTO.value):
        return TruncationMode(value)
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected auto, none or a radius, got {value!r}")


def _readout_depth(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected auto or a layer index, got {value!r}")


def _fmt(value: float, precision: int) -> str:
    return f"{value:.{precision}f}"


# -- subcommands -------------------------------------------------------------------


def cmd_sample(args: argparse.Namespace) -> int:
    prior = dataio.load_mixture(args.prior)
    clean = dataio.sample_prior(prior, args.n, args.dim, args.seed)
    noisy = dataio.corrupt(clean, args.sigma2, args.seed)
    dataio.save_particles(clean, args.out_clean)
    dataio.save_particles(noisy, args.out_noisy)
    logger.info(f"Wrote {clean.count} clean and noisy points")
    return 0


def cmd_denoise(args: argparse.Namespace) -> int:
    noisy = dataio.load_particles(args.input)
    if args.energy_grid:
        noisy.require_dim(2, "energy grid input")
        if args.grid_resolution < 2:
            raise ValidationError(f"grid resolution must be >= 2, got {args.grid_resolution}")
    config = DenoiseConfig(
        sigma2=args.sigma2,
        beta=args.beta,
        beta_c=args.beta_c,
        l0=args.l0,
        horizon_mult=args.horizon_mult,
        truncation=args.truncate,
        seed=args.seed,
        readout_depth=args.readout_depth,
        integrator=args.integrator,
    )
    result, trajectory = two_stage_denoise(noisy, config, args.snapshot_every)
    dataio.save_particles(result.estimates, args.out)
    if args.snapshots:
        dataio.save_trajectory(trajectory, args.snapshots)
    if args.energy_grid:
        prior = trajectory.at(result.readout_depth).particles
        lo = noisy.points.min(axis=0) - 1.0
        hi = noisy.points.max(axis=0) + 1.0
        xs, ys, values = kernel.energy_grid(
            prior, config.beta_c, (lo[0], hi[0]), (lo[-1], hi[-1]), args.grid_resolution
        )
        dataio.save_energy_grid(args.energy_grid, xs, ys, values)
    if result.truncation is not None:
        logger.info(
            f"Truncation kept {result.truncation.retained} of {noisy.count} tokens "
            f"(R={result.truncation.radius:g})"
        )
    return 0


def cmd_hitting_time(args: argparse.Namespace) -> int:
    print(_fmt(meanfield.hitting_time(args.v0, args.vstar, args.beta), args.precision))
    return 0


def cmd_variance_ode(args: argparse.Namespace) -> int:
    if args.steps < 1:
        raise ValidationError(f"--steps must be >= 1, got {args.steps}")
    grid = np.linspace(0.0, args.t_end, args.steps + 1)
    values = meanfield.variance_ode_solve(args.v0, args.beta, grid)
    dataio.save_table(args.out, ["t", "v"], [(float(t), float(v)) for t, v in zip(grid, values)])
    print(_fmt(values[-1], args.precision))
    return 0


def cmd_covariance_flow(args: argparse.Namespace) -> int:
    sigma0 = dataio.parse_matrix(args.sigma0)
    dim = sigma0.shape[0]
    mean = np.zeros(dim)
    t_end = meanfield.denoising_time(args.tau, args.beta) if args.at_denoise_time else args.t_end
    if t_end is None:
        raise ValidationError("give --t-end or --at-denoise-time")

    rows = []
    for t in np.linspace(0.0, t_end, args.steps + 1):
        state = meanfield.covariance_flow_solve(sigma0, mean, args.tau, args.beta, float(t))
        rows.append((float(t), *map(float, state.eigenvalues), *map(float, state.conserved())))
    header = ["t"] + [f"lambda{i}" for i in range(dim)] + [f"conserved{i}" for i in range(dim)]
    dataio.save_table(args.out, header, rows)
    for value in rows[-1][1 : dim + 1]:
        print(_fmt(value, args.precision))
    return 0


def cmd_truncation(args: argparse.Namespace) -> int:
    radius = meanfield.auto_radius(args.n, args.lambda_max, args.mean_norm)
    mean = np.zeros(args.dim)
    mean[0] = args.mean_norm
    bound = meanfield.truncation_loss_probability(
        args.n, radius, args.lambda_max * np.eye(args.dim), mean
    )
    print(f"radius {_fmt(radius, args.precision)}")
    print(f"loss_probability {bound:.{args.precision}g}")
    return 0


def cmd_w1(args: argparse.Namespace) -> int:
    a = dataio.load_particles(args.a)
    b = dataio.load_particles(args.b)
    method = W1Method(args.method)
    if method == W1Method.ONE_D:
        if a.dim != 1 or b.dim != 1:
            raise ValidationError("--method 1d needs one-dimensional samples")
        value = metrics.w1_1d(a.points[:, 0], b.points[:, 0])
    elif method == W1Method.EXACT:
        value = metrics.w1_exact_matching(a, b)
    else:
        value = metrics.w1_sliced(a, b, args.projections, args.seed)
    print(_fmt(value, args.precision))
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    spec = harness.load_spec(args.spec)
    paths = harness.execute(spec, args.out_dir, args.workers)
    for path in paths:
        print(path)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    precision = _Parser(add_help=False)
    precision.add_argument(
        "--precision", type=int, default=settings.print_precision, choices=range(0, 18),
        metavar="{0..17}", help="digits printed after the decimal point (default: %(default)s)",
    )

    parser = _Parser(prog="particle-denoiser", description="In-context two-stage particle denoiser")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample clean data from a prior and corrupt it")
    p.add_argument("--prior", required=True, help="GaussianMixture JSON file")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--dim", type=int, required=True, help="data dimension")
    p.add_argument("--sigma2", type=float, required=True, help="noise variance")
    p.add_argument("--seed", type=int, default=0, help="64-bit run seed (default: %(default)s)")
    p.add_argument("--out-clean", required=True, help="clean points CSV")
    p.add_argument("--out-noisy", required=True, help="noisy points CSV")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("denoise", help="run the two-stage denoiser on a noisy CSV")
    p.add_argument("--in", dest="input", required=True, help="noisy points CSV")
    p.add_argument("--sigma2", type=float, required=True, help="noise variance")
    p.add_argument("--beta", type=float, required=True, help="Stage 1 bandwidth")
    p.add_argument("--beta-c", type=float, default=None, help="Stage 2 scale (default: 1/sigma2)")
    p.add_argument("--l0", type=int, required=True, help="layers to the denoising horizon")
    p.add_argument("--horizon-mult", type=float, default=1.0, help="total depth / l0 (default: %(default)s)")
    p.add_argument("--truncate", type=_truncation, default=TruncationMode.NONE,
                   help="auto, none or a radius (default: none)")
    p.add_argument("--readout-depth", type=_readout_depth, default="auto",
                   help="auto (= l0) or a layer index (default: %(default)s)")
    p.add_argument("--integrator", choices=[i.value for i in Integrator], default=Integrator.EULER.value,
                   help="Stage 1 depth integrator (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="64-bit run seed (default: %(default)s)")
    p.add_argument("--out", required=True, help="estimates CSV")
    p.add_argument("--snapshots", default=None, help="directory for Stage 1 snapshots")
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="snapshot spacing in layers, 0 for l0 and the last layer only (default: %(default)s)")
    p.add_argument("--energy-grid", default=None, help="CSV for the readout energy lattice (2-D data)")
    p.add_argument("--grid-resolution", type=int, default=101, help="energy lattice points per axis (default: %(default)s)")
    p.set_defaults(handler=cmd_denoise)

    theory = sub.add_parser("theory", help="closed-form mean-field checks")
    tsub = theory.add_subparsers(dest="theory_command", required=True)

    p = tsub.add_parser("hitting-time", parents=[precision], help="time for the variance to reach v*")
    p.add_argument("--v0", type=float, required=True, help="initial variance")
    p.add_argument("--vstar", type=float, required=True, help="target variance")
    p.add_argument("--beta", type=float, required=True, help="bandwidth")
    p.set_defaults(handler=cmd_hitting_time)

    p = tsub.add_parser("variance-ode", parents=[precision], help="solve the variance ODE on a uniform grid")
    p.add_argument("--v0", type=float, required=True, help="initial variance")
    p.add_argument("--beta", type=float, required=True, help="bandwidth")
    p.add_argument("--t-end", type=float, required=True, help="final time")
    p.add_argument("--steps", type=int, required=True, help="grid intervals")
    p.add_argument("--out", required=True, help="output CSV (t, v)")
    p.set_defaults(handler=cmd_variance_ode)

    p = tsub.add_parser("covariance-flow", parents=[precision], help="solve the Gaussian covariance flow")
    p.add_argument("--sigma0", required=True, help="clean covariance as inline JSON or a JSON file")
    p.add_argument("--tau", type=float, required=True, help="noise variance")
    p.add_argument("--beta", type=float, required=True, help="bandwidth")
    when = p.add_mutually_exclusive_group(required=True)
    when.add_argument("--t-end", type=float, default=None, help="final raw depth time")
    when.add_argument("--at-denoise-time", action="store_true", help="stop at T_beta = beta*tau/2")
    p.add_argument("--steps", type=int, default=100, help="grid intervals (default: %(default)s)")
    p.add_argument("--out", required=True, help="output CSV (t, eigenvalues, conserved quantities)")
    p.set_defaults(handler=cmd_covariance_flow)

    p = tsub.add_parser("truncation", parents=[precision], help="auto radius and its loss bound")
    p.add_argument("--n", type=int, required=True, help="number of tokens")
    p.add_argument("--lambda-max", type=float, required=True, help="largest eigenvalue of the noisy covariance")
    p.add_argument("--mean-norm", type=float, required=True, help="norm of the mean")
    p.add_argument("--dim", type=int, default=1, help="data dimension (default: %(default)s)")
    p.set_defaults(handler=cmd_truncation)

    m = sub.add_parser("metrics", help="distances between particle sets")
    msub = m.add_subparsers(dest="metrics_command", required=True)
    p = msub.add_parser("w1", parents=[precision], help="Wasserstein-1 distance between two CSVs")
    p.add_argument("--a", required=True, help="first points CSV")
    p.add_argument("--b", required=True, help="second points CSV")
    p.add_argument("--method", choices=[w.value for w in W1Method], default=W1Method.SLICED.value,
                   help="estimator (default: %(default)s)")
    p.add_argument("--projections", type=int, default=settings.sliced_projections,
                   help="sliced directions (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="projection seed (default: %(default)s)")
    p.set_defaults(handler=cmd_w1)

    p = sub.add_parser("experiment", help="run an experiment spec")
    p.add_argument("--spec", required=True, help="ExperimentSpec JSON file")
    p.add_argument("--out-dir", default=None, help="output directory (default: the spec's out_dir)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: PD_WORKERS)")
    p.set_defaults(handler=cmd_experiment)
    return parser


def configure_logging(verbose: bool = False) -> None:
    settings = get_settings()
    level = logging.DEBUG if verbose or settings.debug else getattr(logging, settings.log_level)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except DenoiserError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except PydanticValidationError as e:
        print(f"ValidationError: {e}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
