"""
Command line interface for the path-kernel gradient estimators
"""

import logging
import sys
from contextlib import contextmanager

import click

from pathkernel import experiment
from pathkernel.adjoint import CovectorBlowUpError
from pathkernel.model import ConfigurationError, ModelError, ScheduleError
from pathkernel.simulation import SimulationError
from pathkernel.utils import WORKERS_ENV_VAR


logger = logging.getLogger(__name__)

EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SIMULATION_BLOWUP = 3
EXIT_COVECTOR_BLOWUP = 4


@contextmanager
def _exit_codes():
    """
    Translate estimator failures into the documented exit codes.
    """
    try:
        yield
    except (
        experiment.ExperimentConfigError,
        ConfigurationError,
        ModelError,
        ScheduleError,
    ) as error:
        click.echo(f"Configuration error: {error}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except SimulationError as error:
        click.echo(f"Simulation failed: {error}", err=True)
        if error.norm is not None:
            click.echo(f"  step {error.step}, |x| = {error.norm:.3e}", err=True)
        sys.exit(EXIT_SIMULATION_BLOWUP)
    except CovectorBlowUpError as error:
        click.echo(f"Backward sweep failed: {error}", err=True)
        if error.suggested_alpha is not None:
            click.echo(f"  suggested alpha >= {error.suggested_alpha:.3g}", err=True)
        sys.exit(EXIT_COVECTOR_BLOWUP)


def experiment_options(command):
    """
    Options shared by every subcommand that reads an experiment.
    """
    command = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="SECTION.KEY=VALUE",
        help="Override a configuration field, e.g. estimator.alpha=2",
    )(command)
    command = click.option(
        "--profile",
        default=None,
        help="Name of a shipped profile, e.g. lorenz96-paper or ou-check",
    )(command)
    command = click.option(
        "--config",
        "config_path",
        default=None,
        help="Path of a YAML experiment configuration",
    )(command)
    return command


def _load(config_path, profile, overrides):
    return experiment.load_config(
        path=config_path, profile=profile, overrides=overrides
    )


@click.group()
@click.option("-v", "--verbose", count=True, help="Log INFO (-v) or DEBUG (-vv)")
def cli(verbose):
    """
    Linear responses of random dynamical systems with the adjoint path-kernel
    method.

    The number of worker threads can be set with the environment variable
    PATHKERNEL_WORKERS.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    logger.debug("Worker count override variable: %s", WORKERS_ENV_VAR)


@cli.command
@experiment_options
@click.option("--with-noise", is_flag=True, help="Also write the noise increments")
@click.option("--noise-free", is_flag=True, help="Simulate the drift alone")
def simulate(config_path, profile, overrides, with_noise, noise_free):
    """
    Simulate the configured orbits and write one CSV file per ensemble member.
    """
    # pylint: disable=too-many-arguments
    with _exit_codes():
        config = _load(config_path, profile, overrides)
        result = experiment.run_simulate(
            config, with_noise=with_noise, noise_free=noise_free
        )
    n_steps = result.paths[0].n_steps
    click.echo(
        f"Wrote {len(result.files)} orbits of {n_steps} steps to {config.output_dir}"
    )


@cli.command
@experiment_options
def gradient(config_path, profile, overrides):
    """
    Estimate the gradient of the configured average with respect to all
    parameters.

    Exits with 1 when the configuration has expected values in its check
    section and the estimate misses them.
    """
    with _exit_codes():
        config = _load(config_path, profile, overrides)
        run = experiment.run_gradient(config)
    for line in run.estimate.summary_lines():
        click.echo(line)
    click.echo(f"Result written to {config.output_path('gradient')}")
    if run.failures:
        for failure in run.failures:
            click.echo(f"Self-test failed: {failure}", err=True)
        sys.exit(EXIT_CHECK_FAILED)


@cli.command
@experiment_options
def sweep(config_path, profile, overrides):
    """
    Estimate the gradient on every point of the sweep grid and write a CSV
    table with one row per point.
    """
    with _exit_codes():
        config = _load(config_path, profile, overrides)
        rows = experiment.run_sweep(config)
    failed = [row for row in rows if row.get("error")]
    for row in failed:
        click.echo(f"Point ({row['gamma0']}, {row['gamma1']}) failed: {row['error']}")
    click.echo(
        f"{len(rows) - len(failed)} of {len(rows)} points written to "
        f"{config.output_path('sweep')}"
    )


@cli.command
@experiment_options
def descend(config_path, profile, overrides):
    """
    Run fixed-step gradient descent (or ascent) on the parameters.
    """
    with _exit_codes():
        config = _load(config_path, profile, overrides)
        result = experiment.run_descent(config)
    params = ", ".join(f"{value:.6g}" for value in result.params)
    click.echo(f"{result.status} after {len(result.rows)} iterations at ({params})")
    click.echo(f"Iteration log written to {config.output_path('descent')}")


@cli.command
@experiment_options
@click.option("--n-probe", default=5, show_default=True, help="Random probe states")
@click.option("--tol", default=1e-5, show_default=True, help="Mismatch tolerance")
@click.option(
    "--lyapunov", is_flag=True, help="Also estimate the top Lyapunov exponent"
)
def check(config_path, profile, overrides, n_probe, tol, lyapunov):
    """
    Check the derivatives of the configured model against finite differences.
    """
    # pylint: disable=too-many-arguments
    with _exit_codes():
        config = _load(config_path, profile, overrides)
        result = experiment.run_check(
            config, n_probe=n_probe, tol=tol, lyapunov=lyapunov
        )
    for line in result.report.lines():
        click.echo(line)
    if result.lyapunov_exponent is not None:
        click.echo(f"{'top Lyapunov exponent':32s} {result.lyapunov_exponent:.4g}")
    if not result.ok:
        sys.exit(EXIT_CHECK_FAILED)


if __name__ == "__main__":
    cli()  # pylint: disable=no-value-for-parameter
