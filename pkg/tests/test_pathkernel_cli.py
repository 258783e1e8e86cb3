"""
Tests for ensuring that the CLI stays functional in refactorings.

The estimators themselves are tested elsewhere; here it is enough that the
commands run, write their files and exit with the documented codes.
"""

import json

import pytest
from click.testing import CliRunner

from pathkernel_cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_COVECTOR_BLOWUP,
    EXIT_SIMULATION_BLOWUP,
    cli,
)


@pytest.fixture
def runner():
    """
    A CLI runner that keeps stderr apart from stdout.
    """
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        # click 8.2 always keeps the streams apart
        return CliRunner()


def test_gradient(runner, experiment_file, affine_experiment):
    """
    Test that the gradient command prints the summary and writes the JSON.
    """
    path = experiment_file(affine_experiment)

    # fmt: off
    result = runner.invoke(
        cli,
        [
            "gradient",
            "--config", str(path),
        ],
        catch_exceptions=False,
    )
    # fmt: on

    assert result.exit_code == 0
    assert "dPhi/dgamma0 = 1.75" in result.output
    written = path.parent / "results" / "gradient.json"
    assert json.loads(written.read_text(encoding="utf-8"))["values"][0] == 1.75


def test_gradient_with_profile_and_overrides(runner, tmp_path):
    """
    Test a shortened OU self-test run from the shipped profile.
    """
    # fmt: off
    result = runner.invoke(
        cli,
        [
            "gradient",
            "--profile", "ou-check",
            "--set", "estimator.horizon=200",
            "--set", "check.expected=null",
            "--set", f"output.directory={tmp_path}",
        ],
        catch_exceptions=False,
    )
    # fmt: on

    assert result.exit_code == 0
    assert (tmp_path / "summary.txt").is_file()


def test_failed_self_test(runner, experiment_file, affine_experiment):
    """
    Test that missing the expected values exits with 1.
    """
    sections = dict(affine_experiment)
    sections["check"] = {"expected": [10.0, 10.0], "rel_tol": 0.01}
    path = experiment_file(sections)
    result = runner.invoke(cli, ["gradient", "--config", str(path)])
    assert result.exit_code == EXIT_CHECK_FAILED
    assert "Self-test failed" in result.stderr


@pytest.mark.parametrize(
    "arguments",
    [
        ["--set", "estimator.dt=-1"],
        ["--set", "estimator.colour=red"],
        ["--profile", "lorenz63"],
    ],
)
def test_configuration_errors(runner, arguments):
    """
    Test that configuration mistakes exit with 2.
    """
    if arguments[0] == "--set":
        arguments = ["--profile", "ou-check"] + arguments
    result = runner.invoke(cli, ["gradient"] + arguments)
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert "Configuration error" in result.stderr


def test_malformed_file(runner, tmp_path):
    """
    Test that a YAML syntax error exits with 2 and names the line.
    """
    path = tmp_path / "broken.yaml"
    path.write_text("model:\n  name: ou\nestimator: [\n", encoding="utf-8")
    result = runner.invoke(cli, ["gradient", "--config", str(path)])
    assert result.exit_code == EXIT_CONFIG_ERROR
    assert str(path) in result.stderr


def test_simulation_blow_up(runner, experiment_file, affine_experiment):
    """
    Test that an exploding forward pass exits with 3.
    """
    path = experiment_file(affine_experiment)

    # fmt: off
    result = runner.invoke(
        cli,
        [
            "gradient",
            "--config", str(path),
            "--set", "model.options={a: 10.0}",
            "--set", "estimator.horizon=40",
        ],
    )
    # fmt: on

    assert result.exit_code == EXIT_SIMULATION_BLOWUP
    assert "Simulation failed" in result.stderr


def test_covector_blow_up(runner, experiment_file):
    """
    Test that an undamped chaotic backward sweep exits with 4 and suggests a
    damping rate.
    """
    path = experiment_file(
        {
            "model": {"name": "lorenz96"},
            "estimator": {
                "mode": "finite-time",
                "dt": 0.01,
                "horizon": 50.0,
                "ensemble_size": 2,
                "alpha": 0.0,
            },
        }
    )
    result = runner.invoke(cli, ["gradient", "--config", str(path)])
    assert result.exit_code == EXIT_COVECTOR_BLOWUP
    assert "suggested alpha" in result.stderr


def test_simulate(runner, experiment_file, affine_experiment):
    """
    Test that the simulate command writes every member with its noises.
    """
    path = experiment_file(affine_experiment)
    result = runner.invoke(
        cli, ["simulate", "--config", str(path), "--with-noise"], catch_exceptions=False
    )
    assert result.exit_code == 0
    assert "Wrote 8 orbits of 3 steps" in result.output
    written = path.parent / "results" / "path_7.csv"
    assert written.read_text(encoding="utf-8").startswith("step,t,x_0,b_0\n")


def test_simulate_noise_free(runner, experiment_file, affine_experiment):
    """
    Test that the simulate command writes one orbit of the drift alone.
    """
    path = experiment_file(affine_experiment)
    result = runner.invoke(
        cli, ["simulate", "--config", str(path), "--noise-free"], catch_exceptions=False
    )
    assert result.exit_code == 0
    assert "Wrote 1 orbits" in result.output
    assert (path.parent / "results" / "path_noise_free.csv").is_file()
    assert not (path.parent / "results" / "path_0.csv").exists()


def test_sweep(runner, experiment_file, affine_experiment):
    """
    Test that the sweep command reports failed points and writes every row.
    """
    sections = dict(affine_experiment)
    sections["sweep"] = {"gamma0": [0.0, 1.0e9]}
    result = runner.invoke(
        cli,
        ["sweep", "--config", str(experiment_file(sections))],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    assert "1 of 2 points written" in result.output
    assert "failed: SimulationBlowUpError" in result.output


def test_sweep_with_invalid_point(runner, experiment_file):
    """
    Test that an invalid grid point does not abort the sweep command.
    """
    path = experiment_file(
        {
            "model": {"name": "ou"},
            "estimator": {"horizon": 20.0, "window": 1.0, "alpha": 2.0},
            "sweep": {"gamma0": [-1.0, 1.0]},
        }
    )
    result = runner.invoke(
        cli,
        ["sweep", "--config", str(path)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    assert "failed: ModelError" in result.output
    assert "1 of 2 points written" in result.output
    assert (path.parent / "results" / "sweep.csv").is_file()


def test_descend(runner, experiment_file, affine_experiment):
    """
    Test that the descend command runs the configured iterations.
    """
    sections = dict(affine_experiment)
    sections["descent"] = {"step": 0.1, "iterations": 2, "active": [True, False]}
    result = runner.invoke(
        cli,
        ["-v", "descend", "--config", str(experiment_file(sections))],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    assert "max-iterations after 2 iterations" in result.output


def test_check(runner, experiment_file):
    """
    Test that the check command passes on a registered model.
    """
    path = experiment_file(
        {"model": {"name": "lorenz96", "options": {"m": 6}}, "estimator": {}}
    )

    # fmt: off
    result = runner.invoke(
        cli,
        [
            "check",
            "--config", str(path),
            "--n-probe", "2",
            "--lyapunov",
        ],
        catch_exceptions=False,
    )
    # fmt: on

    assert result.exit_code == 0
    assert "top Lyapunov exponent" in result.output
