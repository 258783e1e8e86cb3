"""
Backward covector sweeps and the adjoint path-kernel estimators.

A single backward sweep along a recorded path yields a covector process that is
shared by every parameter; each parameter then only costs one accumulation
pass, so the estimators are nearly independent of the number of parameters.
"""

import logging
from dataclasses import dataclass

import numpy as np

from pathkernel import utils
from pathkernel.estimate import (
    GradientEstimate,
    ergodic_average,
    ergodic_estimate,
    terminal_average,
    terminal_phi_avg,
)
from pathkernel.model import ModelError, as_discrete
from pathkernel.simulation import (
    NonPositiveDiffusionError,
    simulate_ensemble,
    simulate_path,
)
from pathkernel.tangent import ergodic_tangent_rates, tangent_sweep


logger = logging.getLogger(__name__)

# A sweep aborts when |nu_k| exceeds this multiple of the largest terminal or
# source magnitude seen so far.
BLOWUP_FACTOR = 1e12

# Steps averaged when reporting the local expansion rate of an aborted sweep.
EXPANSION_WINDOW = 50


@dataclass(frozen=True, eq=False)
class CovectorPath:
    """
    Covectors ``nu_0 .. nu_N`` of one backward sweep.

    ``mode`` is ``"finite-time"`` or ``"ergodic"``; ``source_terms`` says which
    source ``xi_k`` drove the sweep.
    """

    covectors: np.ndarray
    mode: str
    source_terms: str
    max_norm: float

    @property
    def n_steps(self):
        return self.covectors.shape[0] - 1

    def boundedness_ratio(self):
        """
        Ratio between the largest covector norm on either half of the path,
        larger over smaller. It stays of order one when the covector does not
        grow exponentially along the sweep.
        """
        norms = np.linalg.norm(self.covectors, axis=1)
        middle = self.n_steps // 2
        late, early = np.max(norms[middle:]), np.max(norms[: middle + 1])
        if min(late, early) == 0:
            return np.inf if max(late, early) > 0 else 1.0
        return float(max(late / early, early / late))


def _largest_local_rate(rates, dt):
    """
    Largest windowed mean of the per-step undamped expansion rates, in model
    time units.
    """
    rates = rates[np.isfinite(rates)]
    if rates.size == 0:
        return float("nan")
    if rates.size <= EXPANSION_WINDOW:
        return float(np.mean(rates)) / dt
    windows = np.lib.stride_tricks.sliding_window_view(rates, EXPANSION_WINDOW)
    return float(np.max(windows.mean(axis=1))) / dt


def _backward_sweep(model, path, schedule, terminal, source, dt, mode, source_terms):
    # pylint: disable=too-many-arguments,too-many-locals
    """
    Run ``nu_k = M_k^T nu_{k+1} + source(k, x_k, b_k, alpha_k, sigma_k)`` from
    ``nu_N = terminal`` down to ``k = 0``, with
    ``M_k^T nu = -alpha_k nu + grad f_k^T nu + grad sigma_k (b_k . nu)``.

    ``model`` must be a discrete map and ``schedule`` must already be in its
    units.
    """
    n_steps = path.n_steps
    covectors = np.empty((n_steps + 1, model.dim))
    rates = np.full(n_steps, np.nan)
    nu = np.array(terminal, dtype=float)
    covectors[n_steps] = nu
    reference = float(np.linalg.norm(nu))
    max_norm = reference

    for segment in path.reversed_segments():
        for j in reversed(range(segment.noises.shape[0])):
            k = segment.start + j
            x, b = segment.states[j], segment.noises[j]
            alpha = schedule(k, x)
            sigma = model.diffusion(x)
            if not sigma > 0:
                raise NonPositiveDiffusionError(
                    f"Diffusion {sigma} is not positive at step {k}",
                    step=k,
                    path_index=path.path_index,
                )
            propagated = model.vjp(x, nu) + model.diffusion_gradient(x) * (b @ nu)
            previous_norm = np.linalg.norm(nu)
            if previous_norm > 0:
                rates[k] = np.linalg.norm(propagated) / previous_norm - 1.0
            forcing = source(k, x, b, alpha, sigma)
            reference = max(reference, float(np.linalg.norm(forcing)))
            nu = -alpha * nu + propagated + forcing

            size = float(np.linalg.norm(nu))
            if not size <= BLOWUP_FACTOR * reference:
                rate = _largest_local_rate(rates[k:], dt)
                raise CovectorBlowUpError(
                    f"Covector blew up at step {k} (|nu| = {size:.3e}); "
                    f"raise the schedule above the local expansion rate {rate:.3g}",
                    step=k,
                    path_index=path.path_index,
                    norm=size,
                    expansion_rate=rate,
                )
            max_norm = max(max_norm, size)
            covectors[k] = nu

    covectors.flags.writeable = False
    logger.debug(
        "%s sweep of member %d finished, max |nu| = %g", mode, path.path_index, max_norm
    )
    return CovectorPath(
        covectors=covectors, mode=mode, source_terms=source_terms, max_norm=max_norm
    )


def adjoint_sweep_finite(model, path, schedule, phi_avg, dt=1.0):
    """
    Backward sweep of the finite-time adjoint path-kernel::

        nu_N = grad Phi(x_N)
        nu_k = -alpha_k nu_{k+1} + (grad f_k^T + grad sigma_k b_k^T) nu_{k+1}
               + (Phi(x_N) - phi_avg) alpha_k b_k / sigma_k

    SDE models are discretized with ``dt`` and the schedule rescaled.

    :param path: Path of the (discretized) model
    :type path: :class:`~pathkernel.simulation.Path`
    :param phi_avg: Ensemble mean of ``Phi(x_N)``
    :type phi_avg: float
    :raises CovectorBlowUpError: The covector grows beyond bounds
    :rtype: :class:`CovectorPath`
    """
    model, schedule = as_discrete(model, schedule, dt)
    if path.dim != model.dim:
        raise ModelError(
            f"Path has dimension {path.dim} but model {model.name} has {model.dim}"
        )
    excess = path.observable_trace[-1] - phi_avg

    def source(_k, _x, b, alpha, sigma):
        return (excess * alpha / sigma) * b

    return _backward_sweep(
        model,
        path,
        schedule,
        model.observable_gradient(path.final_state),
        source,
        dt,
        "finite-time",
        "(Phi(x_N) - Phi_avg) alpha_k b_k / sigma_k",
    )


def adjoint_sweep_ergodic(model, path, schedule, phi_avg, window_steps, dt=1.0):
    """
    Backward sweep of the ergodic adjoint path-kernel with ``nu_N = 0`` and the
    source ``xi_k dt``, where::

        xi_k = grad Phi_k
               + alpha_k (dB_k / sigma_k) sum_{m=1}^{N_W} (Phi_{k+m} - phi_avg)

    The windowed sums come from prefix sums of the observable trace and are
    truncated at the end of the path. ``dt`` is the time step of the path; it
    also discretizes an SDE model.

    :rtype: :class:`CovectorPath`
    """
    model, schedule = as_discrete(model, schedule, dt)
    if path.dim != model.dim:
        raise ModelError(
            f"Path has dimension {path.dim} but model {model.name} has {model.dim}"
        )
    sums = utils.window_sums(path.observable_trace, phi_avg, window_steps)
    gradient = model.observable_gradient

    def source(k, x, b, alpha, sigma):
        # alpha' b / sigma' of the map equals alpha dB / sigma of the SDE
        return dt * (gradient(x) + (alpha * sums[k] / sigma) * b)

    return _backward_sweep(
        model,
        path,
        schedule,
        np.zeros(model.dim),
        source,
        dt,
        "ergodic",
        f"xi_k dt with a window of {window_steps} steps",
    )


def accumulate_terms(model, path, covectors):
    """
    Per-step contributions of every parameter, in ascending step order::

        drift[k, i]     = nu_{k+1} . df^i(x_k)
        diffusion[k, i] = dsigma^i(x_k) (b_k . nu_{k+1})

    :param model: The discrete map the path belongs to
    :param covectors: ``nu_0 .. nu_N`` of a sweep over ``path``
    :return: Tuple of two ``(N, P)`` arrays
    """
    drift = np.empty((path.n_steps, model.n_params))
    diffusion = np.empty((path.n_steps, model.n_params))
    for segment in path.segments():
        for j in range(segment.noises.shape[0]):
            k = segment.start + j
            x, nu = segment.states[j], covectors[k + 1]
            drift[k] = model.param_drifts(x) @ nu
            diffusion[k] = model.param_diffusions(x) * (segment.noises[j] @ nu)
    return drift, diffusion


def adjoint_finite_time_gradient(model, config, schedule):
    """
    Finite-time linear response of ``E[Phi(x_N)]`` for all parameters at once::

        E[ nu_0 . v_0 + sum_k nu_{k+1} . (df_k + dsigma_k b_k) ]

    Every ensemble member costs one forward pass and one backward sweep; the
    members run concurrently and are reduced in member order.

    :param model: The parameterized system
    :type model: :class:`~pathkernel.model.ModelSpec`
    :param config: Estimator settings; needs at least two members
    :type config: :class:`~pathkernel.model.EstimatorConfig`
    :param schedule: Damping schedule in model time units
    :type schedule: :class:`~pathkernel.model.Schedule`
    :rtype: :class:`~pathkernel.estimate.GradientEstimate`
    """
    config.check_ensemble()
    discrete, discrete_schedule = as_discrete(model, schedule, config.dt)
    paths = simulate_ensemble(model, config)
    phi_avg = terminal_phi_avg(model, config, paths)
    logger.info(
        "Simulated %d members of %s, Phi_avg_N = %g", len(paths), model.name, phi_avg
    )

    def member_terms(path):
        covector_path = adjoint_sweep_finite(
            discrete, path, discrete_schedule, phi_avg, dt=config.dt
        )
        covectors = covector_path.covectors
        drift, diffusion = accumulate_terms(discrete, path, covectors)
        return np.stack(
            [discrete.v0 @ covectors[0], drift.sum(axis=0), diffusion.sum(axis=0)]
        )

    terms = np.array(utils.ordered_map(member_terms, paths, config.n_workers))
    values, errors = utils.ensemble_mean_and_error(terms.sum(axis=1))
    means = terms.mean(axis=0)
    terminal_mean, terminal_error = terminal_average(paths)
    estimate = GradientEstimate(
        values=values,
        std_errors=errors,
        n_samples=len(paths),
        config_echo=config,
        diagnostics={
            "init_term": means[0],
            "drift_term": means[1],
            "diffusion_term": means[2],
        },
        phi_avg=terminal_mean,
        phi_avg_se=terminal_error,
        mode="finite-time",
        schedule=schedule.describe(),
        model_name=model.name,
    )
    for line in estimate.summary_lines():
        logger.info(line)
    return estimate


def stationary_gradient(model, config, schedule):
    """
    Linear response of the stationary average ``E_mu[Phi]`` from one long
    orbit::

        1 / (N_ret dt) sum_{k retained} nu_{k+1} . (dF_k dt + dsigma_k dB_k)

    with ``nu`` from :func:`adjoint_sweep_ergodic`. The burn-in and one window
    at either end of the orbit are dropped and the standard errors come from
    batch means.

    :raises ConfigurationError: The orbit is too short for the window
    :rtype: :class:`~pathkernel.estimate.GradientEstimate`
    """
    config.check_ergodic()
    discrete, discrete_schedule = as_discrete(model, schedule, config.dt)
    path = simulate_path(model, config, path_index=0)
    phi_avg, phi_avg_se = ergodic_average(path, config)
    logger.info(
        "Simulated %d steps of %s, Phi_avg = %g +- %g",
        config.n_steps,
        model.name,
        phi_avg,
        phi_avg_se,
    )

    covector_path = adjoint_sweep_ergodic(
        discrete,
        path,
        discrete_schedule,
        phi_avg,
        config.window_steps,
        dt=config.dt,
    )
    logger.info(
        "Ergodic sweep finished, max |nu| = %g, boundedness ratio %.3g",
        covector_path.max_norm,
        covector_path.boundedness_ratio(),
    )
    drift, diffusion = accumulate_terms(discrete, path, covector_path.covectors)
    drift /= config.dt
    diffusion /= config.dt
    estimate = ergodic_estimate(
        drift + diffusion,
        config,
        {
            "init_term": np.zeros_like(drift),
            "drift_term": drift,
            "diffusion_term": diffusion,
        },
        phi_avg=phi_avg,
        phi_avg_se=phi_avg_se,
        schedule=schedule.describe(),
        model_name=model.name,
    )
    for line in estimate.summary_lines():
        logger.info(line)
    return estimate


def pathwise_equivalence_check(
    model, path, schedule, param_index, phi_avg, window_steps=None, dt=1.0
):
    """
    Evaluate the same path-kernel sum along one path with the tangent and with
    the adjoint sweep.

    Without ``window_steps`` this is the finite-time per-path value
    ``grad Phi(x_N) . v_N + (Phi(x_N) - phi_avg) sum alpha b . v / sigma``;
    with it, the untrimmed ergodic sum ``sum_n v_n . xi_n dt``. The two agree
    up to round-off on any path.

    :return: Tuple of (tangent value, adjoint value, absolute difference)
    """
    discrete, discrete_schedule = as_discrete(model, schedule, dt)
    tangent = tangent_sweep(discrete, path, discrete_schedule, param_index)
    if window_steps is None:
        tangent_value = tangent.observable_products[-1] + (
            path.observable_trace[-1] - phi_avg
        ) * np.sum(tangent.kernel_weights)
        covector_path = adjoint_sweep_finite(
            discrete, path, discrete_schedule, phi_avg, dt=dt
        )
    else:
        rates, _, _ = ergodic_tangent_rates(
            discrete, path, discrete_schedule, param_index, phi_avg, window_steps, dt
        )
        tangent_value = dt * np.sum(rates)
        covector_path = adjoint_sweep_ergodic(
            discrete, path, discrete_schedule, phi_avg, window_steps, dt=dt
        )

    covectors = covector_path.covectors
    drift, diffusion = accumulate_terms(discrete, path, covectors)
    adjoint_value = discrete.v0[param_index] @ covectors[0] + np.sum(
        drift[:, param_index] + diffusion[:, param_index]
    )
    tangent_value, adjoint_value = float(tangent_value), float(adjoint_value)
    return tangent_value, adjoint_value, abs(tangent_value - adjoint_value)


class CovectorBlowUpError(ArithmeticError):
    """
    Exception raised when a backward sweep grows out of bounds.
    """

    def __init__(
        self, message, step=None, path_index=None, norm=None, expansion_rate=None
    ):
        # pylint: disable=too-many-arguments
        super().__init__(message)
        self.step = step
        self.path_index = path_index
        self.norm = norm
        self.expansion_rate = expansion_rate

    @property
    def suggested_alpha(self):
        """
        Smallest constant schedule that would have damped the local expansion.
        """
        if self.expansion_rate is None or not np.isfinite(self.expansion_rate):
            return None
        return max(0.0, float(self.expansion_rate))

    def __str__(self):
        message = super().__str__()
        if self.path_index is not None:
            message = f"{message} in ensemble member {self.path_index}"
        return message
