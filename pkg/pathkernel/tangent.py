"""
The damped tangent equation and the tangent path-kernel estimators.

One tangent sweep follows one parameter, so these estimators cost a forward
sweep per parameter. They are the exact counterpart of the adjoint estimators
and the baseline the adjoint is checked against.
"""

import logging
import math
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
from pathkernel.simulation import simulate_ensemble, simulate_path


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TangentPath:
    """
    Tangent vectors ``v_0 .. v_N`` along a path for parameter ``param_index``.

    ``kernel_weights[n]`` is ``alpha_n (b_n / sigma_n) . v_n`` and
    ``observable_products[n]`` is ``grad Phi(x_n) . v_n``.
    """

    vectors: np.ndarray
    param_index: int
    kernel_weights: np.ndarray
    observable_products: np.ndarray


def _check_dimensions(model, path):
    if path.dim != model.dim:
        raise ModelError(
            f"Path has dimension {path.dim} but model {model.name} has {model.dim}"
        )


def tangent_sweep(model, path, schedule, param_index, dt=1.0):
    """
    Solve the damped tangent equation forward along ``path``::

        v_{n+1} = -alpha_n v_n + grad f(x_n) v_n + df(x_n)
                  + (grad sigma(x_n) . v_n + dsigma(x_n)) b_n

    starting from ``model.v0[param_index]``. SDE models are discretized with
    ``dt`` and the schedule rescaled accordingly.

    :rtype: :class:`TangentPath`
    """
    model, schedule = as_discrete(model, schedule, dt)
    _check_dimensions(model, path)
    if not 0 <= param_index < model.n_params:
        raise ModelError(f"No parameter {param_index} in model {model.name}")

    n_steps = path.n_steps
    vectors = np.empty((n_steps + 1, model.dim))
    kernel = np.empty(n_steps)
    products = np.empty(n_steps + 1)
    drift_deriv = model.param_drift_derivs[param_index]
    diffusion_deriv = model.param_diffusion_derivs[param_index]

    v = model.v0[param_index].copy()
    vectors[0] = v
    for segment in path.segments():
        for j in range(segment.noises.shape[0]):
            n = segment.start + j
            x, b = segment.states[j], segment.noises[j]
            alpha = schedule(n, x)
            kernel[n] = alpha * (b @ v) / model.diffusion(x)
            products[n] = model.observable_gradient(x) @ v
            v = (
                -alpha * v
                + model.jvp(x, v)
                + drift_deriv(x)
                + (model.diffusion_gradient(x) @ v + diffusion_deriv(x)) * b
            )
            vectors[n + 1] = v
    products[n_steps] = model.observable_gradient(path.final_state) @ v

    if not np.all(np.isfinite(vectors)):
        first = int(np.argmax(~np.all(np.isfinite(vectors), axis=1)))
        raise TangentOverflowError(
            f"Tangent of parameter {param_index} became non-finite at step {first}"
        )
    return TangentPath(
        vectors=vectors,
        param_index=param_index,
        kernel_weights=kernel,
        observable_products=products,
    )


def tangent_norm_growth(model, path, schedule, v0=None, start=0, dt=1.0):
    """
    Norms ``|v_n|`` for ``n >= start`` of the homogeneous damped tangent (no
    parameter forcing) started from ``v0`` (a unit vector by default).

    Without damping the norms of an unstable system grow exponentially; with a
    schedule above the top Lyapunov exponent they stay bounded.
    """
    model, schedule = as_discrete(model, schedule, dt)
    _check_dimensions(model, path)
    if v0 is None:
        v0 = np.ones(model.dim) / math.sqrt(model.dim)
    v = np.array(v0, dtype=float)
    states, noises = path.states, path.noises
    norms = [np.linalg.norm(v)]
    for n in range(start, path.n_steps):
        x, b = states[n], noises[n]
        v = (
            -schedule(n, x) * v
            + model.jvp(x, v)
            + (model.diffusion_gradient(x) @ v) * b
        )
        norms.append(np.linalg.norm(v))
    return np.array(norms)


def largest_lyapunov_exponent(model, path, dt=1.0, start=0, seed=0):
    """
    Estimate the top Lyapunov exponent of the linearized stochastic flow along
    ``path`` by propagating one tangent vector and renormalizing it every step.

    This is a diagnostic: a schedule above this rate keeps tangents and
    covectors bounded.

    :return: Exponent per unit of model time
    :rtype: float
    """
    model, _ = as_discrete(model, dt=dt)
    _check_dimensions(model, path)
    v = np.random.default_rng(seed).standard_normal(model.dim)
    v /= np.linalg.norm(v)
    states, noises = path.states, path.noises
    log_growth = 0.0
    for n in range(start, path.n_steps):
        x, b = states[n], noises[n]
        v = model.jvp(x, v) + (model.diffusion_gradient(x) @ v) * b
        norm = np.linalg.norm(v)
        log_growth += math.log(norm)
        v /= norm
    return log_growth / ((path.n_steps - start) * dt)


def tangent_finite_time_estimate(model, config, schedule, param_index):
    """
    Finite-time linear response of ``E[Phi(x_N)]`` from tangent sweeps::

        E[ grad Phi(x_N) . v_N
           + (Phi(x_N) - Phi^avg_N) sum_n alpha_n (b_n / sigma_n) . v_n ]

    ``Phi^avg_N`` is the ensemble mean of ``Phi(x_N)`` (or a pilot ensemble's,
    see :func:`~pathkernel.estimate.terminal_phi_avg`).

    :rtype: :class:`~pathkernel.estimate.GradientEstimate` with one component
    """
    config.check_ensemble()
    paths = simulate_ensemble(model, config)
    phi_avg = terminal_phi_avg(model, config, paths)

    def member_terms(path):
        tangent = tangent_sweep(model, path, schedule, param_index, dt=config.dt)
        kernel_term = (path.observable_trace[-1] - phi_avg) * np.sum(
            tangent.kernel_weights
        )
        return [tangent.observable_products[-1], kernel_term]

    terms = np.array(utils.ordered_map(member_terms, paths, config.n_workers))
    values, errors = utils.ensemble_mean_and_error(terms.sum(axis=1))
    means = terms.mean(axis=0)
    terminal_mean, terminal_error = terminal_average(paths)
    estimate = GradientEstimate(
        values=np.atleast_1d(values),
        std_errors=np.atleast_1d(errors),
        n_samples=len(paths),
        config_echo=config,
        diagnostics={
            "path_term": np.atleast_1d(means[0]),
            "kernel_term": np.atleast_1d(means[1]),
        },
        phi_avg=terminal_mean,
        phi_avg_se=terminal_error,
        mode="finite-time",
        schedule=schedule.describe(),
        model_name=model.name,
    )
    logger.info(
        "Tangent finite-time estimate for parameter %d: %g +- %g",
        param_index,
        estimate.values[0],
        estimate.std_errors[0],
    )
    return estimate


def ergodic_tangent_rates(
    model, path, schedule, param_index, phi_avg, window_steps, dt
):
    """
    Per-step contributions ``v_n . xi_n`` of the ergodic tangent formula, where
    ``xi_n = grad Phi_n + alpha_n (dB_n / sigma_n) sum_{m=1}^{N_W}
    (Phi_{n+m} - Phi^avg)``, together with the two terms separately.

    :return: Tuple of (rates, observable terms, kernel terms), each of length N
    """
    tangent = tangent_sweep(model, path, schedule, param_index, dt=dt)
    sums = utils.window_sums(path.observable_trace, phi_avg, window_steps)
    # In discrete-map units alpha' b / sigma' equals alpha dB / sigma.
    observable_terms = tangent.observable_products[:-1]
    kernel_terms = tangent.kernel_weights * sums
    return observable_terms + kernel_terms, observable_terms, kernel_terms


def tangent_ergodic_estimate(model, config, schedule, param_index):
    """
    Linear response of the stationary average from one long orbit, using the
    time-discretized ergodic tangent formula on the retained steps.

    :rtype: :class:`~pathkernel.estimate.GradientEstimate` with one component
    """
    config.check_ergodic()
    path = simulate_path(model, config, path_index=0)
    phi_avg, phi_avg_se = ergodic_average(path, config)
    rates, observable_terms, kernel_terms = ergodic_tangent_rates(
        model, path, schedule, param_index, phi_avg, config.window_steps, config.dt
    )
    estimate = ergodic_estimate(
        rates[:, np.newaxis],
        config,
        {
            "path_term": observable_terms[:, np.newaxis],
            "kernel_term": kernel_terms[:, np.newaxis],
        },
        phi_avg=phi_avg,
        phi_avg_se=phi_avg_se,
        schedule=schedule.describe(),
        model_name=model.name,
    )
    logger.info(
        "Tangent ergodic estimate for parameter %d: %g +- %g",
        param_index,
        estimate.values[0],
        estimate.std_errors[0],
    )
    return estimate


class TangentOverflowError(ArithmeticError):
    """
    Exception raised when a tangent vector becomes non-finite.
    """
