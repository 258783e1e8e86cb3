"""
Parameterized random dynamical systems and the settings of the estimators that
consume them.

A model is either a discrete map ``x_{n+1} = f(x_n) + sigma(x_n) b_n`` or an Ito
SDE ``dx = F(x) dt + sigma(x) dB`` that is reduced to such a map by
:func:`discretize_sde`. The diffusion coefficient is always a positive scalar
function times the identity.
"""

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np


logger = logging.getLogger(__name__)


class TimeKind(str, enum.Enum):
    """
    Whether a model's drift is a discrete map or a continuous SDE drift.
    """

    DISCRETE_MAP = "discrete-map"
    CONTINUOUS_SDE = "continuous-sde"


class StorageMode(str, enum.Enum):
    """
    How a forward path keeps what the backward sweep needs.
    """

    FULL = "full-in-memory"
    CHECKPOINT = "checkpoint-replay"


@dataclass(frozen=True)
class ModelSpec:
    """
    The parameterized system.

    All callables must be pure. ``param_drift_derivs[i]`` and
    ``param_diffusion_derivs[i]`` are the derivatives of the drift and of the
    diffusion with respect to parameter ``gamma^i``. The optional hooks are
    faster equivalents of products with the dense derivatives:

      * ``drift_jvp(x, v)`` is ``drift_jacobian(x) @ v``
      * ``drift_vjp(x, w)`` is ``drift_jacobian(x).T @ w``
      * ``param_drift_stack(x)`` is the ``(P, M)`` array of all
        ``param_drift_derivs``
      * ``param_diffusion_stack(x)`` is the ``(P,)`` array of all
        ``param_diffusion_derivs``
    """

    # pylint: disable=too-many-instance-attributes

    dim: int
    n_params: int
    drift: Callable
    drift_jacobian: Callable
    diffusion: Callable
    diffusion_gradient: Callable
    param_drift_derivs: Tuple[Callable, ...]
    param_diffusion_derivs: Tuple[Callable, ...]
    observable: Callable
    observable_gradient: Callable
    x0: np.ndarray
    v0: Optional[np.ndarray] = None
    time_kind: TimeKind = TimeKind.DISCRETE_MAP
    drift_jvp: Optional[Callable] = None
    drift_vjp: Optional[Callable] = None
    param_drift_stack: Optional[Callable] = None
    param_diffusion_stack: Optional[Callable] = None
    name: str = "custom"
    lyapunov_hint: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ModelError(f"State dimension must be positive, got {self.dim}")
        if self.n_params < 1:
            raise ModelError(
                f"Number of parameters must be positive, got {self.n_params}"
            )
        if len(self.param_drift_derivs) != self.n_params:
            raise ModelError(
                f"Expected {self.n_params} drift derivatives, "
                f"got {len(self.param_drift_derivs)}"
            )
        if len(self.param_diffusion_derivs) != self.n_params:
            raise ModelError(
                f"Expected {self.n_params} diffusion derivatives, "
                f"got {len(self.param_diffusion_derivs)}"
            )

        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.dim,):
            raise ModelError(
                f"Initial state has shape {x0.shape}, expected ({self.dim},)"
            )
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)

        if self.v0 is None:
            v0 = np.zeros((self.n_params, self.dim))
        else:
            v0 = np.array(self.v0, dtype=float).reshape(self.n_params, -1)
            if v0.shape != (self.n_params, self.dim):
                raise ModelError(
                    f"Initial tangents have shape {v0.shape}, "
                    f"expected ({self.n_params}, {self.dim})"
                )
        v0.flags.writeable = False
        object.__setattr__(self, "v0", v0)

        object.__setattr__(self, "time_kind", TimeKind(self.time_kind))
        object.__setattr__(self, "param_drift_derivs", tuple(self.param_drift_derivs))
        object.__setattr__(
            self, "param_diffusion_derivs", tuple(self.param_diffusion_derivs)
        )

    @property
    def is_discrete(self):
        return self.time_kind == TimeKind.DISCRETE_MAP

    def jvp(self, x, v):
        """
        Product of the drift Jacobian at ``x`` with the vector ``v``.
        """
        if self.drift_jvp is not None:
            return self.drift_jvp(x, v)
        return self.drift_jacobian(x) @ v

    def vjp(self, x, w):
        """
        Product of the transposed drift Jacobian at ``x`` with the covector ``w``.
        """
        if self.drift_vjp is not None:
            return self.drift_vjp(x, w)
        return self.drift_jacobian(x).T @ w

    def param_drifts(self, x):
        """
        Drift derivatives of all parameters at ``x`` as a ``(P, M)`` array.
        """
        if self.param_drift_stack is not None:
            return self.param_drift_stack(x)
        return np.array([deriv(x) for deriv in self.param_drift_derivs])

    def param_diffusions(self, x):
        """
        Diffusion derivatives of all parameters at ``x`` as a ``(P,)`` array.
        """
        if self.param_diffusion_stack is not None:
            return self.param_diffusion_stack(x)
        return np.array([deriv(x) for deriv in self.param_diffusion_derivs])


@dataclass(frozen=True)
class Schedule:
    """
    The damping schedule ``alpha_n``.

    ``value`` is either a nonnegative constant or a function ``(n, x_n) -> alpha``
    of the step index and the state at that step only, so that the schedule is
    adapted to the noise filtration.
    """

    value: object = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not callable(self.value) and self.value < 0:
            raise ScheduleError(f"Schedule must be nonnegative, got {self.value}")

    @classmethod
    def constant(cls, value):
        return cls(value=float(value))

    @property
    def kind(self):
        return "state-time-function" if callable(self.value) else "constant"

    def __call__(self, n, x):
        if callable(self.value):
            alpha = float(self.value(n, x))
            if alpha < 0:
                raise ScheduleError(
                    f"Schedule returned negative value {alpha} at step {n}"
                )
            return alpha * self.scale
        return self.value * self.scale

    def rescaled(self, dt):
        """
        Return the schedule of the Euler-discretized map, ``alpha' = alpha * dt``.
        """
        return replace(self, scale=self.scale * dt)

    def describe(self):
        """
        JSON-friendly description used in result files.
        """
        if callable(self.value):
            return {"kind": self.kind, "value": getattr(self.value, "__name__", "fn")}
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Discretization, horizon and sampling settings of one estimator run.

    ``burn_in_steps`` defaults to ``window_steps`` and only matters in ergodic
    mode with trimming. ``checkpoint_stride`` defaults to ``ceil(sqrt(N))``.
    """

    # pylint: disable=too-many-instance-attributes

    n_steps: int
    dt: float = 1.0
    window_steps: int = 0
    ensemble_size: int = 2
    seed: int = 0
    trim: bool = True
    storage_mode: StorageMode = StorageMode.FULL
    burn_in_steps: Optional[int] = None
    checkpoint_stride: Optional[int] = None
    two_pass: bool = False
    n_workers: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "storage_mode", StorageMode(self.storage_mode))
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be at least 1, got {self.n_steps}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.window_steps < 0:
            raise ConfigurationError(
                f"window_steps must be nonnegative, got {self.window_steps}"
            )
        if self.ensemble_size < 1:
            raise ConfigurationError(
                f"ensemble_size must be positive, got {self.ensemble_size}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(
                f"seed must be a 64-bit unsigned integer, got {self.seed}"
            )

    @classmethod
    def from_horizon(cls, horizon, dt, window=0.0, burn_in=None, **kwargs):
        """
        Build a config from times in model units: ``N = T/dt``, ``N_W = W/dt``.
        """
        n_steps = int(round(horizon / dt))
        window_steps = int(round(window / dt))
        burn_in_steps = None if burn_in is None else int(round(burn_in / dt))
        return cls(
            n_steps=n_steps,
            dt=dt,
            window_steps=window_steps,
            burn_in_steps=burn_in_steps,
            **kwargs,
        )

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def burn_in(self):
        """
        Number of leading steps discarded before ergodic statistics start.
        """
        if not self.trim:
            return 0
        if self.burn_in_steps is None:
            return self.window_steps
        return self.burn_in_steps

    @property
    def stride(self):
        if self.checkpoint_stride is not None:
            return max(1, int(self.checkpoint_stride))
        return max(1, math.ceil(math.sqrt(self.n_steps)))

    def retained_range(self):
        """
        Steps ``k`` whose contributions enter the ergodic average.

        With trimming this drops the burn-in, the first window after it and the
        last window before the end of the orbit.

        :rtype: range
        """
        if not self.trim:
            return range(0, self.n_steps)
        start = self.burn_in + self.window_steps
        return range(start, self.n_steps - self.window_steps)

    def check_ergodic(self):
        """
        Raise :class:`ConfigurationError` unless the config is usable for a
        stationary (single orbit) estimate.
        """
        if self.window_steps < 1:
            raise ConfigurationError("Ergodic estimates need window_steps >= 1")
        if self.n_steps <= 2 * self.window_steps + self.burn_in:
            raise ConfigurationError(
                f"Orbit of {self.n_steps} steps is too short for window "
                f"{self.window_steps} and burn-in {self.burn_in}"
            )

    def check_ensemble(self):
        if self.ensemble_size < 2:
            raise ConfigurationError(
                f"Ensemble estimates need at least 2 members, got {self.ensemble_size}"
            )

    def to_dict(self):
        return {
            "n_steps": self.n_steps,
            "dt": self.dt,
            "window_steps": self.window_steps,
            "ensemble_size": self.ensemble_size,
            "seed": self.seed,
            "trim": self.trim,
            "storage_mode": self.storage_mode.value,
            "burn_in_steps": self.burn_in,
            "two_pass": self.two_pass,
        }


def discretize_sde(model, dt):
    """
    Reduce an SDE model to its Euler-Maruyama discrete map.

    The returned map has drift ``x + F(x) dt``, diffusion ``sigma(x) sqrt(dt)``,
    Jacobian ``I + grad F dt``, diffusion gradient ``grad sigma sqrt(dt)`` and
    parameter derivatives ``dF dt`` and ``dsigma sqrt(dt)``. The noise of the
    map is ``b_n = dB_n / sqrt(dt)``.

    The schedule is not part of the model: sweeps over a discretized path must
    use ``schedule.rescaled(dt)``, i.e. ``alpha' = alpha dt``.

    :param model: Model with ``time_kind`` continuous-sde
    :type model: :class:`ModelSpec`
    :param dt: Time step
    :type dt: float
    :rtype: :class:`ModelSpec`
    """
    if not dt > 0:
        raise ModelError(f"Time step must be positive, got {dt}")
    if model.time_kind != TimeKind.CONTINUOUS_SDE:
        raise ModelError(f"Model {model.name} is already a discrete map")

    sqrt_dt = math.sqrt(dt)
    drift, jacobian = model.drift, model.drift_jacobian
    diffusion, diffusion_gradient = model.diffusion, model.diffusion_gradient

    def _scaled(func, factor):
        return lambda x: func(x) * factor

    def drift_jvp(x, v):
        return v + model.jvp(x, v) * dt

    def drift_vjp(x, w):
        return w + model.vjp(x, w) * dt

    stack_drift = None
    if model.param_drift_stack is not None:
        stack_drift = _scaled(model.param_drift_stack, dt)
    stack_diffusion = None
    if model.param_diffusion_stack is not None:
        stack_diffusion = _scaled(model.param_diffusion_stack, sqrt_dt)

    return replace(
        model,
        drift=lambda x: x + drift(x) * dt,
        drift_jacobian=lambda x: np.eye(model.dim) + jacobian(x) * dt,
        diffusion=lambda x: diffusion(x) * sqrt_dt,
        diffusion_gradient=lambda x: diffusion_gradient(x) * sqrt_dt,
        param_drift_derivs=tuple(_scaled(d, dt) for d in model.param_drift_derivs),
        param_diffusion_derivs=tuple(
            _scaled(d, sqrt_dt) for d in model.param_diffusion_derivs
        ),
        time_kind=TimeKind.DISCRETE_MAP,
        drift_jvp=drift_jvp,
        drift_vjp=drift_vjp,
        param_drift_stack=stack_drift,
        param_diffusion_stack=stack_diffusion,
    )


def as_discrete(model, schedule=None, dt=1.0):
    """
    Return ``(map, schedule)`` ready for the sweeps.

    SDE models are discretized with ``dt`` and the schedule rescaled to
    ``alpha dt``; discrete maps and their schedules are returned unchanged.
    """
    if model.is_discrete:
        return model, schedule
    discrete = discretize_sde(model, dt)
    return discrete, None if schedule is None else schedule.rescaled(dt)


def clone_parameters(model, index, copies):
    """
    Return a model whose parameters are ``copies`` identical clones of parameter
    ``index`` of ``model``.

    The stacked derivative hooks evaluate the original derivative once and tile
    it, so the per-step cost does not grow with the number of clones.
    """
    drift_deriv = model.param_drift_derivs[index]
    diffusion_deriv = model.param_diffusion_derivs[index]
    v0 = np.tile(model.v0[index], (copies, 1))
    return replace(
        model,
        n_params=copies,
        param_drift_derivs=(drift_deriv,) * copies,
        param_diffusion_derivs=(diffusion_deriv,) * copies,
        v0=v0,
        param_drift_stack=lambda x: np.broadcast_to(
            drift_deriv(x), (copies, model.dim)
        ),
        param_diffusion_stack=lambda x: np.full(copies, diffusion_deriv(x)),
    )


@dataclass
class ValidationReport:
    """
    Result of :func:`validate_model`: the largest scaled relative mismatch of
    every supplied derivative against central finite differences.
    """

    errors: dict
    tol: float
    min_diffusion: float

    @property
    def flagged(self):
        return sorted(name for name, error in self.errors.items() if error > self.tol)

    @property
    def ok(self):
        return not self.flagged and self.min_diffusion > 0

    def lines(self):
        """
        Human-readable report, one field per line.
        """
        for name, error in sorted(self.errors.items()):
            mark = "FAIL" if error > self.tol else "ok"
            yield f"{name:32s} {error:.3e}  {mark}"
        yield f"{'min diffusion':32s} {self.min_diffusion:.3e}"


def _mismatch(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    if analytic.shape != numeric.shape:
        return math.inf
    scale = max(np.linalg.norm(numeric), 1.0)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _central_difference(func, x, step):
    """
    Derivative of ``func`` along every coordinate of ``x``; the last axis of
    the result runs over the coordinates.
    """
    columns = []
    for i in range(x.size):
        offset = np.zeros_like(x)
        offset[i] = step
        columns.append(
            (np.asarray(func(x + offset)) - np.asarray(func(x - offset))) / (2 * step)
        )
    return np.stack(columns, axis=-1)


def validate_model(model, n_probe=5, tol=1e-5, family=None, params=None, seed=0):
    """
    Compare the derivatives a model supplies with central finite differences.

    The probe states are drawn around ``x0``. Parameter derivatives can only be
    checked when the parameterized ``family`` (a function from a parameter
    vector to a :class:`ModelSpec`) and the base ``params`` are given.

    :param n_probe: Number of random probe states
    :param tol: Largest acceptable scaled relative mismatch
    :return: Per-field largest mismatch, never raises for bad derivatives
    :rtype: :class:`ValidationReport`
    """
    if n_probe < 1:
        raise ModelError(f"n_probe must be at least 1, got {n_probe}")

    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(model.x0))))
    errors = {
        "drift_jacobian": 0.0,
        "drift_jvp": 0.0,
        "drift_vjp": 0.0,
        "diffusion_gradient": 0.0,
        "observable_gradient": 0.0,
    }
    min_diffusion = math.inf

    for _ in range(n_probe):
        x = model.x0 + scale * rng.standard_normal(model.dim)
        step = 1e-6 * max(1.0, float(np.max(np.abs(x))))
        direction = rng.standard_normal(model.dim)

        jacobian = np.asarray(model.drift_jacobian(x), dtype=float)
        numeric_jacobian = _central_difference(model.drift, x, step)
        errors["drift_jacobian"] = max(
            errors["drift_jacobian"], _mismatch(jacobian, numeric_jacobian)
        )
        errors["drift_jvp"] = max(
            errors["drift_jvp"],
            _mismatch(model.jvp(x, direction), numeric_jacobian @ direction),
        )
        errors["drift_vjp"] = max(
            errors["drift_vjp"],
            _mismatch(model.vjp(x, direction), numeric_jacobian.T @ direction),
        )
        errors["diffusion_gradient"] = max(
            errors["diffusion_gradient"],
            _mismatch(
                model.diffusion_gradient(x),
                _central_difference(model.diffusion, x, step),
            ),
        )
        errors["observable_gradient"] = max(
            errors["observable_gradient"],
            _mismatch(
                model.observable_gradient(x),
                _central_difference(model.observable, x, step),
            ),
        )
        min_diffusion = min(min_diffusion, float(model.diffusion(x)))

        if family is not None:
            _check_parameter_derivatives(model, family, params, x, errors)

    report = ValidationReport(errors=errors, tol=tol, min_diffusion=min_diffusion)
    for name in report.flagged:
        logger.warning(
            "Derivative %s of model %s disagrees with finite differences (%.3e)",
            name,
            model.name,
            errors[name],
        )
    return report


def _check_parameter_derivatives(model, family, params, x, errors):
    params = np.asarray(params, dtype=float)
    drifts = np.asarray(model.param_drifts(x), dtype=float)
    diffusions = np.asarray(model.param_diffusions(x), dtype=float)
    for i in range(model.n_params):
        step = 1e-6 * max(1.0, abs(params[i]))
        offset = np.zeros_like(params)
        offset[i] = step
        upper, lower = family(params + offset), family(params - offset)
        numeric_drift = (upper.drift(x) - lower.drift(x)) / (2 * step)
        numeric_diffusion = (upper.diffusion(x) - lower.diffusion(x)) / (2 * step)
        for name, analytic, numeric in (
            (f"param_drift[{i}]", model.param_drift_derivs[i](x), numeric_drift),
            (f"param_drift_stack[{i}]", drifts[i], numeric_drift),
            (
                f"param_diffusion[{i}]",
                model.param_diffusion_derivs[i](x),
                numeric_diffusion,
            ),
            (f"param_diffusion_stack[{i}]", diffusions[i], numeric_diffusion),
        ):
            errors[name] = max(errors.get(name, 0.0), _mismatch(analytic, numeric))


class ModelError(ValueError):
    """
    Exception raised when a model is malformed or used with invalid settings.
    """


class ScheduleError(ValueError):
    """
    Exception raised when a schedule takes a negative value.
    """


class ConfigurationError(ValueError):
    """
    Exception raised when estimator settings are inconsistent.
    """
