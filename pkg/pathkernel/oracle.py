"""
Independent reference values for linear responses: closed forms for solvable
systems and brute-force finite differences for everything else.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from pathkernel import utils
from pathkernel.estimate import ergodic_average
from pathkernel.simulation import simulate_ensemble, simulate_path


logger = logging.getLogger(__name__)

# Common random numbers are refused beyond this many Lyapunov times.
CRN_LYAPUNOV_TIMES = 5.0

CRN_DELTA = 1e-4
INDEPENDENT_DELTA_FRACTION = 0.25

METHODS = ("analytic", "closed-form-recursion", "finite-difference")


@dataclass(frozen=True)
class OracleResult:
    """
    A reference value with the accuracy it claims.
    """

    value: float
    method: str
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise OracleError(f"Unknown oracle method {self.method}")
        if not math.isfinite(self.value):
            raise OracleError(f"Oracle value {self.value} is not finite")
        if not self.tolerance > 0:
            raise OracleError(
                f"Oracle tolerance must be positive, got {self.tolerance}"
            )

    def agrees_with(self, estimate, error=0.0, n_errors=3.0):
        """
        Whether ``estimate`` lies within the oracle tolerance plus
        ``n_errors`` times the estimate's own standard error.
        """
        return abs(estimate - self.value) <= self.tolerance + n_errors * error


def _exact_tolerance(value):
    return 8 * np.finfo(float).eps * max(1.0, abs(value))


def ou_stationary_gradient(theta, sigma, which):
    """
    Derivative of the stationary second moment ``sigma^2 / (2 theta)`` of
    ``dx = -theta x dt + sigma dB``.

    :param which: ``"d_theta"`` or ``"d_sigma"``
    :rtype: :class:`OracleResult`
    """
    if not theta > 0 or not sigma > 0:
        raise OracleError(f"Need theta > 0 and sigma > 0, got {theta}, {sigma}")
    if which == "d_sigma":
        value = sigma / theta
    elif which == "d_theta":
        value = -(sigma**2) / (2 * theta**2)
    else:
        raise OracleError(f"Unknown derivative {which}")
    return OracleResult(
        value=value,
        method="analytic",
        tolerance=_exact_tolerance(value),
        detail=f"E_mu[x^2] = sigma^2 / (2 theta), theta={theta}, sigma={sigma}",
    )


def affine_recursion_gradient(a, n_steps, which="d_gamma_drift"):
    """
    ``dE[x_N] / dgamma`` for ``x_{n+1} = a x_n + gamma + sigma b_n``, i.e.
    ``(1 - a^N) / (1 - a)``, or ``N`` when ``a = 1``.

    :rtype: :class:`OracleResult`
    """
    if which != "d_gamma_drift":
        raise OracleError(f"Unknown derivative {which}")
    if n_steps < 0:
        raise OracleError(f"Number of steps must be nonnegative, got {n_steps}")
    if a == 1:
        value = float(n_steps)
    else:
        value = (1 - a**n_steps) / (1 - a)
    return OracleResult(
        value=value,
        method="analytic",
        tolerance=_exact_tolerance(value) * max(1, n_steps),
        detail=f"geometric sum with a={a}, N={n_steps}",
    )


def ou_finite_time_gradient(theta, sigma, dt, n_steps, x0=0.0, which="d_sigma"):
    """
    Derivative of ``E[x_N^2]`` for the Euler-discretized OU process
    ``x_{n+1} = c x_n + sigma sqrt(dt) b_n`` with ``c = 1 - theta dt``::

        E[x_N^2] = c^(2N) x0^2 + sigma^2 dt sum_{j<N} c^(2j)

    :param which: ``"d_theta"`` or ``"d_sigma"``
    :rtype: :class:`OracleResult`
    """
    if not theta > 0 or not sigma > 0 or not dt > 0:
        raise OracleError(
            f"Need theta, sigma and dt positive, got {theta}, {sigma}, {dt}"
        )
    c = 1 - theta * dt
    powers = np.arange(n_steps)
    if which == "d_sigma":
        value = 2 * sigma * dt * np.sum(c ** (2 * powers))
    elif which == "d_theta":
        later = powers[1:]
        d_moment_dc = 2 * n_steps * c ** (2 * n_steps - 1) * x0**2
        d_moment_dc += sigma**2 * dt * np.sum(2 * later * c ** (2 * later - 1))
        value = -dt * d_moment_dc
    else:
        raise OracleError(f"Unknown derivative {which}")
    value = float(value)
    return OracleResult(
        value=value,
        method="closed-form-recursion",
        tolerance=_exact_tolerance(value) * max(1, n_steps),
        detail=f"Euler OU, theta={theta}, sigma={sigma}, dt={dt}, N={n_steps}",
    )


@dataclass(frozen=True)
class _Evaluation:
    mean: float
    error: float
    samples: object = None


def _evaluate(model, config, objective):
    if objective == "finite-time":
        paths = simulate_ensemble(model, config)
        samples = np.array([path.observable_trace[-1] for path in paths])
        mean, error = utils.ensemble_mean_and_error(samples)
        return _Evaluation(float(mean), float(error), samples)
    if objective == "stationary":
        config.check_ergodic()
        mean, error = ergodic_average(simulate_path(model, config), config)
        return _Evaluation(mean, error)
    raise OracleError(f"Unknown objective {objective}")


def _central_difference(family, params, config, param_index, delta, mode, objective):
    # pylint: disable=too-many-arguments
    offset = np.zeros_like(params)
    offset[param_index] = delta
    if mode == "crn":
        configs = (config, config)
    else:
        configs = (config, replace(config, seed=config.seed + 1))
    upper, lower = utils.ordered_map(
        lambda job: _evaluate(family(job[0]), job[1], objective),
        [(params + offset, configs[0]), (params - offset, configs[1])],
        2,
    )
    if mode == "crn" and upper.samples is not None:
        value, error = utils.ensemble_mean_and_error(
            (upper.samples - lower.samples) / (2 * delta)
        )
    else:
        value = (upper.mean - lower.mean) / (2 * delta)
        error = math.hypot(upper.error, lower.error) / (2 * delta)
    roundoff = np.finfo(float).eps * max(1.0, abs(upper.mean), abs(lower.mean)) / delta
    return float(value), float(error) + roundoff


def finite_difference_gradient(
    model_family,
    params,
    config,
    param_index,
    delta=None,
    mode="crn",
    objective="finite-time",
    richardson=False,
    force=False,
    param_range=None,
):
    """
    Central finite difference ``(E_{+delta} - E_{-delta}) / (2 delta)`` of the
    finite-time or stationary average with respect to one parameter.

    In ``crn`` mode both sides reuse the same noise streams; in
    ``independent`` mode the lower side gets the next seed. With
    ``richardson`` the difference is also taken at ``delta / 2`` and
    extrapolated; the gap between the two enters the tolerance.

    :param model_family: Function from a parameter vector to a model
    :param params: Parameter vector at which to differentiate
    :param delta: Step; defaults to 1e-4 for crn and a quarter of
                  ``param_range`` (or of ``max(1, |gamma|)``) otherwise
    :param force: Allow crn on horizons beyond five Lyapunov times
    :raises OracleError: Non-positive delta, or crn on a chaotic horizon
    :rtype: :class:`OracleResult`
    """
    # pylint: disable=too-many-arguments,too-many-locals
    if mode not in ("crn", "independent"):
        raise OracleError(f"Unknown finite difference mode {mode}")
    params = np.array(params, dtype=float)
    if delta is None:
        if mode == "crn":
            delta = CRN_DELTA
        elif param_range is not None:
            delta = INDEPENDENT_DELTA_FRACTION * (param_range[1] - param_range[0])
        else:
            delta = INDEPENDENT_DELTA_FRACTION * max(1.0, abs(params[param_index]))
    if not delta > 0:
        raise OracleError(f"Finite difference step must be positive, got {delta}")

    hint = model_family(params).lyapunov_hint
    lyapunov_times = 0.0 if hint is None else hint * config.horizon
    if mode == "crn" and lyapunov_times > CRN_LYAPUNOV_TIMES:
        message = (
            f"Common random numbers over {lyapunov_times:.1f} Lyapunov times "
            "decorrelate; use independent mode"
        )
        if not force:
            raise OracleError(message)
        logger.warning("%s (forced)", message)

    value, error = _central_difference(
        model_family, params, config, param_index, delta, mode, objective
    )
    detail = f"{mode} central difference, delta={delta:g}, {objective}"
    if richardson:
        half_value, half_error = _central_difference(
            model_family, params, config, param_index, delta / 2, mode, objective
        )
        extrapolated = (4 * half_value - value) / 3
        error = (4 * half_error + error) / 3 + abs(half_value - value) / 3
        detail = f"{detail}, Richardson with delta/2 gives {half_value:.6g}"
        value = extrapolated

    logger.info(
        "Finite difference of parameter %d: %g +- %g (%s)",
        param_index,
        value,
        error,
        detail,
    )
    return OracleResult(
        value=value, method="finite-difference", tolerance=error, detail=detail
    )


class OracleError(ValueError):
    """
    Exception raised when a reference value cannot be computed as requested.
    """
