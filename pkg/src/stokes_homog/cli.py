"""Command line entry point, ``stokes-homog``.

Exit codes: 0 on success, 1 on invalid input, 2 on a solver failure or an
incomplete sweep. Numbers go to CSV files in the output directory; stdout only
carries a short summary.
"""
import functools
import logging
import os

import click

from .cell import solve_all_correctors
from .config import check_resonance, load_config, parse_fraction
from .dump import dump_correctors, dump_state, load_correctors
from .exceptions import (
    ConfigError,
    MissingArtifactError,
    SolverError,
    StokesHomogException,
    ValidationError,
)
from .report import (
    SWEEP_CSV,
    corrector_frame,
    read_sweep,
    read_tensor,
    tensor_frame,
    trajectory_frame,
    write_csv,
    write_sweep,
)
from .stokes import HomogOperator, OperatorSpec, solve_unsteady
from .tensor import assemble_tensor
from .twoscale import epsilon_sweep

log = logging.getLogger(__name__)

CELLS_DIR = "cells"
TENSOR_CSV = "tensor.csv"
CELLS_CSV = "cells.csv"
LOG_FILE = "run.log"

EXIT_VALIDATION = 1
EXIT_SOLVER = 2


class Run:
    """Per-invocation state shared by the subcommands."""

    def __init__(self, config, out):
        self.config = config
        self.out = out

    def path(self, *parts):
        return os.path.join(self.out, *parts)


class GroupOptions:
    """``--config``, ``--out`` and ``-v`` as given before the subcommand."""

    def __init__(self, config_path=None, out=None, verbose=0):
        self.config_path = config_path
        self.out = out
        self.verbose = verbose


class StokesHomogGroup(click.Group):
    """Usage errors are invalid input and exit with 1 like every other one."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION
            raise


def _setup_logging(ctx, verbose, out):
    if not verbose:
        return
    root = logging.getLogger("stokes_homog")
    root.setLevel(logging.DEBUG if verbose > 1 else logging.INFO)
    os.makedirs(out, exist_ok=True)
    handler = logging.FileHandler(os.path.join(out, LOG_FILE))
    handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    )
    root.addHandler(handler)

    def close():
        root.removeHandler(handler)
        handler.close()
        root.setLevel(logging.WARN)

    ctx.call_on_close(close)


def handle_errors(f):
    """Map package exceptions to exit codes."""

    @functools.wraps(f)
    @click.pass_context
    def wrapper(ctx, *args, **kwargs):
        try:
            return ctx.invoke(f, *args, **kwargs)
        except ValidationError as e:
            click.echo("error: {}".format(e), err=True)
            if isinstance(e, ConfigError) and len(e.errors) > 1:
                for message in e.errors:
                    click.echo("  - {}".format(message), err=True)
            ctx.exit(EXIT_VALIDATION)
        except SolverError as e:
            click.echo("solver failure: {}".format(e), err=True)
            ctx.exit(EXIT_SOLVER)
        except StokesHomogException as e:
            click.echo("error: {}".format(e), err=True)
            ctx.exit(EXIT_SOLVER)

    return wrapper


def pass_run(f):
    """Accept ``--config``/``--out`` on the subcommand too and pass a :class:`Run`.

    Subcommand values win over the ones given to the group.
    """

    @click.option(
        "--config",
        "config_path",
        default=None,
        type=click.Path(dir_okay=False),
        help="Run configuration, key = value lines.",
    )
    @click.option("--out", default=None, help="Output directory, overrides the config.")
    @functools.wraps(f)
    @click.pass_context
    def wrapper(ctx, *args, config_path=None, out=None, **kwargs):
        group = ctx.find_object(GroupOptions) or GroupOptions()
        config_path = config_path or group.config_path
        if config_path is None:
            raise click.UsageError("Missing option '--config'.", ctx)
        try:
            config = load_config(config_path)
        except ConfigError as e:
            click.echo("error: invalid config {}".format(config_path), err=True)
            for message in e.errors:
                click.echo("  - {}".format(message), err=True)
            ctx.exit(EXIT_VALIDATION)
        out = out or group.out or config.out
        _setup_logging(ctx, group.verbose, out)
        return ctx.invoke(f, Run(config, out), *args, **kwargs)

    return wrapper


@click.group(cls=StokesHomogGroup)
@click.version_option(package_name="stokes-homog", prog_name="stokes-homog")
@click.option(
    "--config",
    "config_path",
    default=None,
    type=click.Path(dir_okay=False),
    help="Run configuration, key = value lines.",
)
@click.option("--out", default=None, help="Output directory, overrides the config.")
@click.option("-v", "--verbose", count=True, help="INFO (-v) or DEBUG (-vv) logs to run.log.")
@click.pass_context
def cli(ctx, config_path, out, verbose):
    """Periodic homogenization of unsteady Stokes-type flows."""
    ctx.obj = GroupOptions(config_path, out, verbose)


def _correctors(run, solve=True):
    field = run.config.coefficient()
    directory = run.path(CELLS_DIR)
    try:
        return load_correctors(directory, field, run.config.n_cell)
    except MissingArtifactError as e:
        if not solve:
            raise
        log.info("%s, solving", e)
    return solve_all_correctors(field, run.config.cell_config())


def _tensor(run, solve=True):
    cfg = run.config
    field = cfg.coefficient()
    try:
        return read_tensor(run.path(TENSOR_CSV), field, cfg.n_cell)
    except MissingArtifactError as e:
        log.info("%s, assembling", e)
    chi = _correctors(run, solve)
    return assemble_tensor(field, chi)


@cli.command("cell-solve")
@handle_errors
@pass_run
def cell_solve(run):
    """Solve the four cell problems and dump the correctors."""
    cfg = run.config
    chi = solve_all_correctors(cfg.coefficient(), cfg.cell_config())
    os.makedirs(run.path(CELLS_DIR), exist_ok=True)
    dump_correctors(run.path(CELLS_DIR), chi)
    write_csv(corrector_frame(chi), run.path(CELLS_CSV))
    for entry in chi:
        click.echo(
            "chi_{}{}: {} iterations, residual {:.3e}".format(
                entry.i, entry.k, entry.iterations, entry.residual
            )
        )


@cli.command()
@click.option("--no-solve", is_flag=True, help="Fail instead of solving missing correctors.")
@handle_errors
@pass_run
def tensor(run, no_solve):
    """Assemble the homogenized tensor from corrector dumps or fresh solves."""
    field = run.config.coefficient()
    chi = _correctors(run, solve=not no_solve)
    q = assemble_tensor(field, chi)
    os.makedirs(run.out, exist_ok=True)
    write_csv(tensor_frame(q, field, chi.n_cell), run.path(TENSOR_CSV))
    click.echo("alpha0 = {:.6g}, consistency gap = {:.3e}".format(q.alpha0, q.consistency_gap))


def _write_trajectory(run, traj, prefix):
    os.makedirs(run.out, exist_ok=True)
    stride = run.config.stride
    write_csv(trajectory_frame(traj, stride), run.path(prefix + ".csv"))
    last = len(traj) - 1
    levels = [last] if not stride else sorted(set(range(0, last + 1, stride)) | {last})
    meta = traj.describe()
    meta.pop("tensor", None)
    for index in levels:
        dump_state(run.out, "{}-{:04d}".format(prefix, index), traj.grid, traj[index], meta)


@cli.command("solve-fine")
@click.option("--eps", "eps_text", required=True, help="Period, a fraction or decimal.")
@handle_errors
@pass_run
def solve_fine(run, eps_text):
    """Solve the oscillating problem for one period ε."""
    cfg = run.config
    try:
        eps = parse_fraction(eps_text)
    except ValueError as e:
        raise ConfigError(str(e))
    problem = check_resonance(eps, cfg.n)
    if problem:
        raise ConfigError(problem)
    traj = solve_unsteady(
        cfg.grid(),
        OperatorSpec.fine(cfg.coefficient(), eps),
        cfg.make_forcing(),
        cfg.T,
        cfg.M,
        cfg.stokes_config(),
    )
    prefix = "fine-eps{}".format(str(eps).replace("/", "_"))
    _write_trajectory(run, traj, prefix)
    click.echo(
        "eps = {}: {} steps, {} Uzawa iterations".format(eps, traj.M, sum(traj.iterations))
    )


@cli.command("solve-homog")
@handle_errors
@pass_run
def solve_homog(run):
    """Solve the homogenized problem with the assembled tensor."""
    cfg = run.config
    q = _tensor(run)
    traj = solve_unsteady(
        cfg.grid(), HomogOperator(q), cfg.make_forcing(), cfg.T, cfg.M, cfg.stokes_config()
    )
    _write_trajectory(run, traj, "homog")
    click.echo("homogenized: {} steps, {} Uzawa iterations".format(traj.M, sum(traj.iterations)))


@cli.command()
@handle_errors
@pass_run
@click.pass_context
def sweep(ctx, run):
    """Run the ε-sweep and write the report."""
    report = epsilon_sweep(run.config)
    write_sweep(report, run.out)
    for row in report.rows:
        click.echo(
            "eps = {}: {}, L2(Q) error {:.6e}".format(
                row["eps"], row["status"], row["l2q_error"]
            )
        )
    if report.degenerate:
        click.echo("degenerate sweep, no rate fitted")
    elif report.slope is not None:
        click.echo("fitted rate {:.4f}".format(report.slope))
    if not report.complete:
        click.echo("sweep incomplete, see {}".format(run.path(SWEEP_CSV)), err=True)
        ctx.exit(EXIT_SOLVER)


@cli.command()
@handle_errors
@pass_run
@click.pass_context
def report(ctx, run):
    """Summarize a sweep report written earlier."""
    if not os.path.exists(run.path(SWEEP_CSV)):
        raise MissingArtifactError("no sweep report in {}".format(run.out))
    frame = read_sweep(run.out)
    for row in frame.itertuples():
        click.echo(
            "eps = {}: {}, L2(Q) {:.6e}, corrected gradient {:.6e}".format(
                row.eps, row.status, row.l2q_error, row.corrector_error
            )
        )
    if (frame["status"] != "ok").any():
        ctx.exit(EXIT_SOLVER)


def main():
    cli(prog_name="stokes-homog")
