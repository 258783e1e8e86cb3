"""
Tests for experiment configuration, gradient runs, sweeps and descent.
"""

import csv
import json
import math

import numpy as np
import pytest

from pathkernel import experiment
from pathkernel.estimate import GradientEstimate
from pathkernel.experiment import (
    SWEEP_COLUMNS,
    ExperimentConfigError,
    load_config,
    noise_free_phi_avg,
    run_check,
    run_descent,
    run_gradient,
    run_simulate,
    run_sweep,
    sweep_points,
)
from pathkernel.model import StorageMode
from pathkernel.models import REGISTRY, ModelEntry, ou
from pathkernel.oracle import ou_stationary_gradient


def _read_rows(path):
    with open(path, encoding="utf-8") as csv_file:
        return list(csv.DictReader(csv_file))


def test_lorenz_profile():
    """
    Test that the shipped Lorenz 96 profile pins the published settings.
    """
    config = load_config(profile="lorenz96-paper")
    assert config.model_name == "lorenz96"
    assert config.params == (8.0, 2.0)
    assert config.model_options == {"m": 40}
    assert config.mode == "stationary"
    assert (config.dt, config.horizon, config.window, config.alpha) == (
        0.002,
        2000.0,
        2.0,
        5.0,
    )
    assert config.storage_mode == StorageMode.CHECKPOINT.value
    assert config.sweep == {0: (6.0, 8.0, 10.0), 1: (2.0, 4.0, 6.0)}
    assert config.noise_free_reference is True
    assert config.descent.direction == "maximize"
    assert config.descent.tolerance == 1e-3
    assert config.descent.box == ((6.0, 10.0), (2.0, 6.0))
    estimator = config.estimator_config()
    assert estimator.n_steps == 1_000_000
    assert estimator.window_steps == 1000


def test_ou_profile_expects_the_closed_form():
    """
    Test that the OU self-test expects the analytic stationary gradient.
    """
    config = load_config(profile="ou-check")
    assert config.expected == (
        ou_stationary_gradient(1.0, 0.5, "d_theta").value,
        ou_stationary_gradient(1.0, 0.5, "d_sigma").value,
    )
    assert config.rel_tol == (0.1, 0.05)
    assert config.estimator_config().n_steps == 500_000


def test_unknown_profile():
    """
    Test that an unknown profile name lists the available ones.
    """
    with pytest.raises(ExperimentConfigError, match="ou-check"):
        load_config(profile="lorenz63")
    with pytest.raises(ExperimentConfigError):
        load_config()


def test_overrides():
    """
    Test dotted overrides parsed as YAML values.
    """
    config = load_config(
        profile="ou-check",
        overrides=["estimator.alpha=3", "model.params=[2.0, 1.0]", "check.expected="],
    )
    assert config.alpha == 3.0
    assert config.params == (2.0, 1.0)
    assert config.expected is None


@pytest.mark.parametrize(
    "override", ["estimator.alpha", "estimator.nope=1", "alpha=1", "model.params=["]
)
def test_invalid_overrides(override):
    """
    Test that malformed overrides and unknown fields are refused.
    """
    with pytest.raises(ExperimentConfigError):
        load_config(profile="ou-check", overrides=[override])


def test_exponent_without_dot(tmp_path):
    """
    Test that numbers such as 1e-3 are accepted.
    """
    path = tmp_path / "exponent.yaml"
    path.write_text(
        "model:\n  name: ou\nestimator:\n  dt: 1e-3\n  horizon: 10\n",
        encoding="utf-8",
    )
    assert load_config(path).dt == 0.001


def test_errors_name_file_line_and_field(tmp_path):
    """
    Test that invalid values are reported with their location.
    """
    path = tmp_path / "broken.yaml"
    path.write_text(
        "model:\n  name: ou\nestimator:\n  mode: stationary\n  dt: -0.5\n",
        encoding="utf-8",
    )
    with pytest.raises(ExperimentConfigError) as error_info:
        load_config(path)
    assert str(error_info.value).startswith(f"{path}:5: estimator.dt:")


@pytest.mark.parametrize(
    "text,message",
    [
        ("model:\n  name: ou\n  colour: red\n", ":3: unknown field model.colour"),
        ("model:\n  name: ou\nplots:\n  x: 1\n", ":3: unknown section plots"),
        ("model:\n  name: lorenz63\n", ":2: model.name: unknown model"),
        ("model:\n  name: ou\n  params: [1.0]\n", "model.params: expected 2 values"),
        ("model: [ou\n", ":2:"),
        ("- ou\n", "expected a mapping of sections"),
        (
            "model:\n  name: ou\nestimator:\n  seed: 1.5\n",
            "estimator.seed: expected an integer",
        ),
        (
            "model:\n  name: ou\nestimator:\n  trim: 'yes'\n",
            "estimator.trim: expected true or false",
        ),
    ],
)
def test_invalid_configurations(tmp_path, text, message):
    """
    Test the messages of typical configuration mistakes.
    """
    path = tmp_path / "invalid.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ExperimentConfigError, match=message):
        load_config(path)


def test_orbit_too_short(experiment_file):
    """
    Test that a stationary orbit shorter than two windows is refused.
    """
    path = experiment_file(
        {
            "model": {"name": "ou"},
            "estimator": {"horizon": 1.0, "window": 1.0, "dt": 0.01},
        }
    )
    with pytest.raises(ExperimentConfigError, match="too short"):
        load_config(path)


def test_run_gradient(experiment_file, affine_experiment):
    """
    Test the JSON result and the summary of a finite-time run.
    """
    config = load_config(experiment_file(affine_experiment))
    run = run_gradient(config)
    assert run.failures == []
    assert run.estimate.values[0] == pytest.approx(1.75)

    with open(config.output_path("gradient"), encoding="utf-8") as result_file:
        result = json.load(result_file)
    assert result["model"] == "affine1d"
    assert result["mode"] == "finite-time"
    assert result["n_samples"] == 8
    assert result["values"][0] == pytest.approx(1.75)
    assert set(result["diagnostics"]) == {"init_term", "drift_term", "diffusion_term"}
    assert result["schedule"] == {"kind": "constant", "value": 0.0}
    assert result["config"]["n_steps"] == 3
    summary = config.output_path("summary").read_text(encoding="utf-8")
    assert "dPhi/dgamma0 = 1.75" in summary


def test_self_test_failures(experiment_file, affine_experiment):
    """
    Test that components outside the expected values are reported.
    """
    sections = dict(affine_experiment)
    sections["check"] = {"expected": [1.75, 100.0], "rel_tol": 0.01}
    config = load_config(experiment_file(sections))
    run = run_gradient(config)
    assert len(run.failures) == 1
    assert run.failures[0].startswith("dPhi/dgamma1")
    summary = config.output_path("summary").read_text(encoding="utf-8")
    assert "self-test: FAILED" in summary


def test_sweep(experiment_file, affine_experiment):
    """
    Test a sweep with one diverging point.
    """
    sections = dict(affine_experiment)
    sections["sweep"] = {"gamma0": [0.0, 0.5, 1.0e9]}
    config = load_config(experiment_file(sections))
    assert sweep_points(config) == [(0.0, 1.0), (0.5, 1.0), (1.0e9, 1.0)]
    rows = run_sweep(config)
    assert [row["seed"] for row in rows] == [1, 2, 3]
    assert rows[0]["dphi_dgamma0"] == pytest.approx(1.75)
    assert rows[1]["dphi_dgamma0"] == pytest.approx(1.75)
    assert "SimulationBlowUpError" in rows[2]["error"]

    written = _read_rows(config.output_path("sweep"))
    assert list(written[0]) == SWEEP_COLUMNS
    assert len(written) == 3
    assert written[0]["error"] == ""
    assert written[2]["dphi_dgamma0"] == ""


def test_sweep_is_reproducible(experiment_file, affine_experiment):
    """
    Test that rerunning a sweep writes the same bytes.
    """
    sections = dict(affine_experiment)
    sections["sweep"] = {"gamma0": [0.0, 0.5], "gamma1": [1.0, 2.0]}
    config = load_config(experiment_file(sections))
    run_sweep(config)
    first = config.output_path("sweep").read_bytes()
    run_sweep(config)
    assert config.output_path("sweep").read_bytes() == first


def test_single_point_sweep_equals_gradient_run(experiment_file, affine_experiment):
    """
    Test that a one-point sweep reproduces the plain gradient run.
    """
    sections = dict(affine_experiment)
    sections["sweep"] = {"gamma0": [0.0]}
    config = load_config(experiment_file(sections))
    (row,) = run_sweep(config)
    estimate = run_gradient(config).estimate
    assert row["dphi_dgamma1"] == estimate.values[1]
    assert row["dphi_dgamma1_se"] == estimate.std_errors[1]
    assert row["phi_avg"] == estimate.phi_avg


def test_sweep_keeps_going_past_invalid_parameters(experiment_file):
    """
    Test that a grid point with an invalid parameter gets an error row while
    the other points are still estimated and written.
    """
    path = experiment_file(
        {
            "model": {"name": "ou", "params": [1.0, 0.5]},
            "estimator": {"horizon": 20.0, "window": 1.0, "alpha": 2.0},
            "sweep": {"gamma0": [-1.0, 1.0]},
        }
    )
    config = load_config(path)
    invalid, valid = run_sweep(config)
    assert invalid["error"].startswith("ModelError: OU needs theta > 0")
    assert "dphi_dgamma0" not in invalid
    assert not valid.get("error")
    assert math.isfinite(valid["dphi_dgamma1"])
    written = _read_rows(config.output_path("sweep"))
    assert len(written) == 2
    assert written[0]["dphi_dgamma0"] == ""
    assert written[1]["error"] == ""


def test_sweep_needs_a_grid(experiment_file, affine_experiment):
    """
    Test that sweeping without a grid is refused.
    """
    config = load_config(experiment_file(affine_experiment))
    with pytest.raises(ExperimentConfigError):
        run_sweep(config)


def _ou_gradient(config, params=None, seed=None):
    theta, sigma = params
    return GradientEstimate(
        values=np.array([-(sigma**2) / (2 * theta**2), sigma / theta]),
        std_errors=np.zeros(2),
        n_samples=1,
        config_echo=config.estimator_config(seed),
        phi_avg=sigma**2 / (2 * theta),
    )


def test_descent_leaves_the_box(mocker, experiment_file):
    """
    Test that minimizing the OU second moment in sigma stops at the box edge.
    """
    estimate = mocker.patch.object(
        experiment, "estimate_gradient", side_effect=_ou_gradient
    )
    path = experiment_file(
        {
            "model": {"name": "ou", "params": [1.0, 0.5]},
            "descent": {
                "step": 0.2,
                "iterations": 10,
                "active": [False, True],
                "box": [[0.5, 2.0], [0.3, 1.0]],
            },
        }
    )
    config = load_config(path)
    result = run_descent(config)
    assert result.status == "left-box"
    assert result.params == pytest.approx((1.0, 0.3))
    assert [call.kwargs["seed"] for call in estimate.call_args_list] == [0, 1, 2]
    assert [row["gamma1"] for row in result.rows] == pytest.approx([0.5, 0.4, 0.32])
    values = [row["phi_avg"] for row in result.rows]
    assert values == sorted(values, reverse=True)
    written = _read_rows(config.output_path("descent"))
    assert list(written[0]) == experiment.descent_columns(2)
    assert len(written) == 3


def test_descent_clips_the_gradient(mocker, experiment_file):
    """
    Test maximizing with a clipped gradient until the iteration cap.
    """
    mocker.patch.object(
        experiment,
        "estimate_gradient",
        return_value=GradientEstimate(
            values=np.array([10.0, 0.0]),
            std_errors=np.zeros(2),
            n_samples=1,
            config_echo=None,
        ),
    )
    path = experiment_file(
        {
            "model": {"name": "affine1d", "params": [0.0, 1.0]},
            "estimator": {"mode": "finite-time", "horizon": 3.0, "dt": 1.0},
            "descent": {
                "direction": "maximize",
                "step": 0.5,
                "iterations": 3,
                "clip": 1.0,
            },
        }
    )
    result = run_descent(load_config(path))
    assert result.status == "max-iterations"
    assert result.params == pytest.approx((1.5, 1.0))
    assert [row["step"] for row in result.rows] == pytest.approx([0.5, 0.5, 0.5])


def test_descent_converges_without_parameter_dependence(
    monkeypatch, experiment_file, frozen
):
    """
    Test that a model with a vanishing gradient converges at once.
    """
    monkeypatch.setitem(
        REGISTRY,
        "frozen-ou",
        ModelEntry(
            build=lambda params: frozen(ou(params[0], params[1])),
            default_params=(1.0, 0.5),
            param_names=("theta", "sigma"),
            param_ranges=((0.5, 2.0), (0.1, 1.0)),
        ),
    )
    path = experiment_file(
        {
            "model": {"name": "frozen-ou"},
            "estimator": {"horizon": 20.0, "window": 1.0, "alpha": 2.0},
        }
    )
    result = run_descent(load_config(path))
    assert result.status == "converged"
    assert len(result.rows) == 1
    assert result.rows[0]["step"] == 0.0
    assert result.params == (1.0, 0.5)


def test_run_simulate(experiment_file, affine_experiment):
    """
    Test that every ensemble member is dumped into its own CSV file.
    """
    config = load_config(experiment_file(affine_experiment))
    result = run_simulate(config, with_noise=True)
    assert [file.name for file in result.files] == [
        f"path_{index}.csv" for index in range(8)
    ]
    for path, file in zip(result.paths, result.files):
        lines = file.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "step,t,x_0,b_0"
        assert len(lines) == path.n_steps + 2
    first = np.loadtxt(result.files[0], delimiter=",", skiprows=1)
    second = np.loadtxt(result.files[1], delimiter=",", skiprows=1)
    assert not np.array_equal(first[:, 2], second[:, 2])


def test_run_simulate_stationary_orbit(experiment_file):
    """
    Test that a stationary experiment dumps its single long orbit.
    """
    path = experiment_file(
        {"model": {"name": "ou"}, "estimator": {"horizon": 5.0, "window": 1.0}}
    )
    result = run_simulate(load_config(path))
    assert [file.name for file in result.files] == ["path_0.csv"]


def test_run_simulate_without_noise(experiment_file, affine_experiment):
    """
    Test that the noise-free orbit follows the drift alone.
    """
    sections = dict(affine_experiment)
    sections["model"] = {"name": "affine1d", "params": [1.0, 1.0]}
    config = load_config(experiment_file(sections))
    result = run_simulate(config, noise_free=True)
    assert [file.name for file in result.files] == ["path_noise_free.csv"]
    table = np.loadtxt(result.files[0], delimiter=",", skiprows=1)
    np.testing.assert_allclose(table[:, 2], [0.0, 1.0, 1.5, 1.75])
    assert noise_free_phi_avg(config) == pytest.approx(1.75)
    assert noise_free_phi_avg(config, params=(0.0, 1.0)) == 0.0


def test_noise_free_stationary_average(experiment_file):
    """
    Test that the noise-free OU orbit started at x0 decays to zero.
    """
    path = experiment_file(
        {
            "model": {"name": "ou", "options": {"x0": 1.0}},
            "estimator": {"horizon": 50.0, "window": 1.0, "burn_in": 40.0},
        }
    )
    assert noise_free_phi_avg(load_config(path)) < 1e-7


def test_sweep_with_noise_free_reference(experiment_file, affine_experiment):
    """
    Test the noise-free column of the sweep table.
    """
    sections = dict(affine_experiment)
    sections["sweep"] = {"gamma0": [0.0, 1.0], "noise_free": True}
    config = load_config(experiment_file(sections))
    rows = run_sweep(config)
    assert [row["phi_avg_noise_free"] for row in rows] == pytest.approx([0.0, 1.75])
    written = _read_rows(config.output_path("sweep"))
    columns = list(written[0])
    assert columns[-2:] == ["phi_avg_noise_free", "error"]
    assert float(written[1]["phi_avg_noise_free"]) == pytest.approx(1.75)


def test_run_check(experiment_file):
    """
    Test the derivative check and the Lyapunov exponent of the OU process.
    """
    path = experiment_file(
        {"model": {"name": "ou"}, "estimator": {"horizon": 10.0, "dt": 0.01}}
    )
    result = run_check(load_config(path), lyapunov=True)
    assert result.ok
    assert result.lyapunov_exponent == pytest.approx(math.log(0.99) / 0.01)
