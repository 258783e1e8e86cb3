"""
Ready-made models: the stochastic Lorenz 96 system and two solvable systems
used for validation.

Every model is registered under a name so that experiment configurations can
refer to it; a registry entry knows how to build the model from a parameter
vector.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from pathkernel.model import ModelError, ModelSpec, TimeKind


logger = logging.getLogger(__name__)

# Quadratic damping of the Lorenz 96 drift
LORENZ96_DAMPING = 0.01


@dataclass(frozen=True)
class Lorenz96Params:
    """
    Forcing ``gamma0``, base noise level ``gamma1`` and dimension ``m``.
    """

    gamma0: float = 8.0
    gamma1: float = 2.0
    m: int = 40

    def __post_init__(self):
        if self.m < 4:
            raise ModelError(f"Lorenz 96 needs at least 4 variables, got {self.m}")


def lorenz96(params):
    """
    The stochastic Lorenz 96 system with ``M = params.m`` variables::

        dx^i = ((x^{i+1} - x^{i-2}) x^{i-1} - x^i + gamma0 - 0.01 (x^i)^2) dt
               + (gamma1 + exp(-|x|^2 / 2)) dB^i

    with cyclic indices. The observable is ``|x|^2 / M`` and the orbit starts
    from all ones. Jacobian products use the five-point stencil of the drift
    instead of the dense Jacobian.

    :type params: :class:`Lorenz96Params`
    :rtype: :class:`~pathkernel.model.ModelSpec`
    """
    m = params.m
    gamma0, gamma1 = float(params.gamma0), float(params.gamma1)
    rows = np.arange(m)

    def stencil(x):
        before = np.roll(x, 1)
        return before, np.roll(x, -1) - np.roll(x, 2), -1.0 - 2 * LORENZ96_DAMPING * x

    def drift(x):
        return (
            (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1)
            - x
            + gamma0
            - LORENZ96_DAMPING * x**2
        )

    def drift_jacobian(x):
        before, difference, diagonal = stencil(x)
        jacobian = np.zeros((m, m))
        jacobian[rows, (rows + 1) % m] = before
        jacobian[rows, (rows - 2) % m] = -before
        jacobian[rows, (rows - 1) % m] = difference
        jacobian[rows, rows] = diagonal
        return jacobian

    def drift_jvp(x, v):
        before, difference, diagonal = stencil(x)
        return (
            before * (np.roll(v, -1) - np.roll(v, 2))
            + difference * np.roll(v, 1)
            + diagonal * v
        )

    def drift_vjp(x, w):
        before, difference, diagonal = stencil(x)
        return (
            np.roll(before * w, 1)
            - np.roll(before * w, -2)
            + np.roll(difference * w, -1)
            + diagonal * w
        )

    def bump(x):
        return np.exp(-0.5 * (x @ x))

    drift_stack = np.vstack([np.ones(m), np.zeros(m)])
    drift_stack.flags.writeable = False
    diffusion_stack = np.array([0.0, 1.0])
    diffusion_stack.flags.writeable = False

    return ModelSpec(
        dim=m,
        n_params=2,
        drift=drift,
        drift_jacobian=drift_jacobian,
        diffusion=lambda x: gamma1 + bump(x),
        diffusion_gradient=lambda x: -bump(x) * x,
        param_drift_derivs=(lambda x: np.ones(m), lambda x: np.zeros(m)),
        param_diffusion_derivs=(lambda x: 0.0, lambda x: 1.0),
        observable=lambda x: (x @ x) / m,
        observable_gradient=lambda x: 2 * x / m,
        x0=np.ones(m),
        time_kind=TimeKind.CONTINUOUS_SDE,
        drift_jvp=drift_jvp,
        drift_vjp=drift_vjp,
        param_drift_stack=lambda x: drift_stack,
        param_diffusion_stack=lambda x: diffusion_stack,
        name="lorenz96",
        lyapunov_hint=1.7,
    )


def ou(theta, sigma, x0=0.0):
    """
    The Ornstein-Uhlenbeck process ``dx = -theta x dt + sigma dB`` with the
    observable ``x^2``. Parameter 0 is ``theta`` and parameter 1 is ``sigma``.

    :rtype: :class:`~pathkernel.model.ModelSpec`
    """
    if not theta > 0:
        raise ModelError(f"OU needs theta > 0, got {theta}")
    if not sigma > 0:
        raise ModelError(f"OU needs sigma > 0, got {sigma}")
    theta, sigma = float(theta), float(sigma)
    return ModelSpec(
        dim=1,
        n_params=2,
        drift=lambda x: -theta * x,
        drift_jacobian=lambda x: np.array([[-theta]]),
        diffusion=lambda x: sigma,
        diffusion_gradient=lambda x: np.zeros(1),
        param_drift_derivs=(lambda x: -x, lambda x: np.zeros(1)),
        param_diffusion_derivs=(lambda x: 0.0, lambda x: 1.0),
        observable=lambda x: float(x @ x),
        observable_gradient=lambda x: 2 * x,
        x0=[x0],
        time_kind=TimeKind.CONTINUOUS_SDE,
        drift_jvp=lambda x, v: -theta * v,
        drift_vjp=lambda x, w: -theta * w,
        name="ou",
    )


def affine1d(a, gamma, sigma, observable="x", x0=0.0):
    """
    The discrete map ``x_{n+1} = a x_n + gamma + sigma b_n``. Parameter 0 is the
    shift ``gamma`` and parameter 1 the noise level ``sigma``.

    :param observable: ``"x"`` or ``"x2"`` for ``Phi(x) = x^2``
    :rtype: :class:`~pathkernel.model.ModelSpec`
    """
    if observable == "x":
        phi, phi_gradient = (lambda x: float(x[0])), (lambda x: np.ones(1))
    elif observable == "x2":
        phi, phi_gradient = (lambda x: float(x @ x)), (lambda x: 2 * x)
    else:
        raise ModelError(f"Unknown affine1d observable {observable}")
    a, gamma, sigma = float(a), float(gamma), float(sigma)
    return ModelSpec(
        dim=1,
        n_params=2,
        drift=lambda x: a * x + gamma,
        drift_jacobian=lambda x: np.array([[a]]),
        diffusion=lambda x: sigma,
        diffusion_gradient=lambda x: np.zeros(1),
        param_drift_derivs=(lambda x: np.ones(1), lambda x: np.zeros(1)),
        param_diffusion_derivs=(lambda x: 0.0, lambda x: 1.0),
        observable=phi,
        observable_gradient=phi_gradient,
        x0=[x0],
        time_kind=TimeKind.DISCRETE_MAP,
        drift_jvp=lambda x, v: a * v,
        drift_vjp=lambda x, w: a * w,
        name="affine1d",
    )


@dataclass(frozen=True)
class ModelEntry:
    """
    A registered model: ``build(params, **options)`` returns the model at a
    parameter vector.
    """

    build: Callable
    default_params: Tuple[float, ...]
    param_names: Tuple[str, ...]
    param_ranges: Tuple[Tuple[float, float], ...]
    options: dict = field(default_factory=dict)

    def family(self, **options):
        """
        The parameterized family ``params -> ModelSpec`` with fixed options.
        """
        merged = {**self.options, **options}
        return lambda params: self.build(params, **merged)


REGISTRY = {
    "lorenz96": ModelEntry(
        build=lambda params, m=40: lorenz96(Lorenz96Params(params[0], params[1], m)),
        default_params=(8.0, 2.0),
        param_names=("gamma0", "gamma1"),
        param_ranges=((6.0, 10.0), (2.0, 6.0)),
        options={"m": 40},
    ),
    "ou": ModelEntry(
        build=lambda params, x0=0.0: ou(params[0], params[1], x0=x0),
        default_params=(1.0, 0.5),
        param_names=("theta", "sigma"),
        param_ranges=((0.5, 2.0), (0.1, 1.0)),
        options={"x0": 0.0},
    ),
    "affine1d": ModelEntry(
        build=lambda params, a=0.5, observable="x", x0=0.0: affine1d(
            a, params[0], params[1], observable=observable, x0=x0
        ),
        default_params=(0.0, 1.0),
        param_names=("gamma", "sigma"),
        param_ranges=((-1.0, 1.0), (0.1, 2.0)),
        options={"a": 0.5, "observable": "x", "x0": 0.0},
    ),
}


def lookup(name):
    """
    Return the registry entry called ``name``.

    :raises ModelError: No model of that name is registered
    """
    try:
        return REGISTRY[name]
    except KeyError as error:
        raise ModelError(
            f"Unknown model {name}, expected one of {', '.join(sorted(REGISTRY))}"
        ) from error


def build_model(name, params=None, **options):
    """
    Build the registered model ``name`` at ``params`` (the entry's defaults
    when omitted).
    """
    entry = lookup(name)
    if params is None:
        params = entry.default_params
    if len(params) != len(entry.param_names):
        raise ModelError(
            f"Model {name} takes {len(entry.param_names)} parameters, "
            f"got {len(params)}"
        )
    unknown = set(options) - set(entry.options)
    if unknown:
        raise ModelError(
            f"Unknown options for model {name}: {', '.join(sorted(unknown))}"
        )
    model = entry.family(**options)(params)
    logger.debug("Built model %s at %s", name, list(params))
    return model
