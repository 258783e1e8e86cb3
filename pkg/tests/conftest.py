"""
Test fixtures
"""

from dataclasses import replace

import numpy as np
import pytest
import yaml

from pathkernel.model import EstimatorConfig, ModelSpec, Schedule, TimeKind
from pathkernel.models import Lorenz96Params, affine1d, lorenz96, ou
from pathkernel.utils import WORKERS_ENV_VAR


def pytest_addoption(parser):
    """
    Add the --runslow option for the long reproductions.
    """
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(config, items):
    """
    Skip tests marked as slow unless --runslow is given.
    """
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def no_worker_override(monkeypatch):
    """
    Make sure a worker count set in the environment does not leak into tests.
    """
    monkeypatch.delenv(WORKERS_ENV_VAR, raising=False)


@pytest.fixture
def affine_model():
    """
    The map x_{n+1} = 0.5 x_n + b_n with Phi(x) = x.
    """
    return affine1d(a=0.5, gamma=0.0, sigma=1.0)


@pytest.fixture
def ou_model():
    """
    The OU process with theta = 1 and sigma = 0.5.
    """
    return ou(theta=1.0, sigma=0.5)


@pytest.fixture
def lorenz_model():
    """
    Lorenz 96 with the default 40 variables at (gamma0, gamma1) = (8, 2).
    """
    return lorenz96(Lorenz96Params(8.0, 2.0))


@pytest.fixture
def small_lorenz_model():
    """
    An 8-variable Lorenz 96, cheap enough for exact comparisons.
    """
    return lorenz96(Lorenz96Params(8.0, 2.0, m=8))


def _frozen(model):
    zeros = np.zeros(model.dim)
    return replace(
        model,
        param_drift_derivs=(lambda x: zeros,) * model.n_params,
        param_diffusion_derivs=(lambda x: 0.0,) * model.n_params,
        param_drift_stack=None,
        param_diffusion_stack=None,
        name=f"frozen-{model.name}",
    )


@pytest.fixture
def frozen_ou_model(ou_model):
    """
    The OU process with all parameter derivatives set to zero.
    """
    return _frozen(ou_model)


@pytest.fixture
def frozen():
    """
    Return a function that zeroes the parameter derivatives of a model.
    """
    return _frozen


def random_smooth_model(seed, dim=None):
    """
    A random discrete map with a nonlinear drift, multiplicative noise and two
    parameters, together with a random state and time dependent schedule.

    :return: Tuple of (model, schedule)
    """
    rng = np.random.default_rng(seed)
    dim = dim or int(rng.integers(1, 6))
    matrix = 0.4 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
    direction = rng.standard_normal(dim)
    weight = rng.standard_normal(dim)
    level, bump = 0.5 + rng.random(), 0.3 * rng.random()
    base, swing = 0.5 * rng.random(), 0.3 * rng.random()

    def drift(x):
        return matrix @ x + 0.1 * np.sin(x) + 0.3 * direction

    def drift_jacobian(x):
        return matrix + np.diag(0.1 * np.cos(x))

    def diffusion(x):
        return level + bump * np.exp(-0.5 * (x @ x))

    def diffusion_gradient(x):
        return -bump * np.exp(-0.5 * (x @ x)) * x

    def schedule(n, x):
        return base + swing * abs(np.sin(n + x[0]))

    model = ModelSpec(
        dim=dim,
        n_params=2,
        drift=drift,
        drift_jacobian=drift_jacobian,
        diffusion=diffusion,
        diffusion_gradient=diffusion_gradient,
        param_drift_derivs=(lambda x: direction, lambda x: 0.1 * np.cos(x)),
        param_diffusion_derivs=(lambda x: 0.0, lambda x: 1.0),
        observable=lambda x: float(weight @ np.sin(x) + 0.5 * (x @ x)),
        observable_gradient=lambda x: weight * np.cos(x) + x,
        x0=rng.standard_normal(dim),
        v0=rng.standard_normal((2, dim)),
        time_kind=TimeKind.DISCRETE_MAP,
        name=f"random-{seed}",
    )
    return model, Schedule(schedule)


@pytest.fixture
def random_model():
    """
    Return the factory of random smooth models.
    """
    return random_smooth_model


@pytest.fixture
def short_config():
    """
    Ten steps of unit length, four members, fixed seed.
    """
    return EstimatorConfig(n_steps=10, dt=1.0, ensemble_size=4, seed=1)


@pytest.fixture
def affine_experiment():
    """
    Sections of a three-step finite-time experiment on the affine map.
    """
    return {
        "model": {"name": "affine1d", "params": [0.0, 1.0]},
        "estimator": {
            "mode": "finite-time",
            "dt": 1.0,
            "horizon": 3.0,
            "ensemble_size": 8,
            "seed": 1,
        },
    }


@pytest.fixture
def experiment_file(tmp_path):
    """
    Return a function that writes experiment sections into a YAML file whose
    outputs go below the test's temporary directory.
    """

    def write(sections, name="experiment.yaml"):
        sections = {key: dict(value) for key, value in sections.items()}
        output = sections.setdefault("output", {})
        output.setdefault("directory", str(tmp_path / "results"))
        path = tmp_path / name
        path.write_text(yaml.safe_dump(sections), encoding="utf-8")
        return path

    return write
