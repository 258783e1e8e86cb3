"""
Gradient estimates and the observable averages they are centred on.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from pathkernel import utils
from pathkernel.simulation import simulate_ensemble


logger = logging.getLogger(__name__)

# Ergodic standard errors use batches of this many decorrelation windows.
BATCH_WINDOWS = 10


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """
    Per-parameter linear response with standard errors.

    ``diagnostics`` maps a term name to a per-parameter array; the terms add up
    to ``values``. ``n_samples`` is the ensemble size for finite-time estimates
    and the number of batches for ergodic ones.
    """

    # pylint: disable=too-many-instance-attributes

    values: np.ndarray
    std_errors: np.ndarray
    n_samples: int
    config_echo: object
    diagnostics: dict = field(default_factory=dict)
    phi_avg: float = float("nan")
    phi_avg_se: float = float("nan")
    mode: str = "finite-time"
    schedule: dict = field(default_factory=dict)
    model_name: str = "custom"

    @property
    def n_params(self):
        return len(self.values)

    def to_dict(self):
        """
        JSON-serializable representation; the layout is part of the CLI's
        output contract.
        """
        return {
            "model": self.model_name,
            "mode": self.mode,
            "values": [float(value) for value in self.values],
            "std_errors": [float(error) for error in self.std_errors],
            "n_samples": int(self.n_samples),
            "phi_avg": float(self.phi_avg),
            "phi_avg_se": float(self.phi_avg_se),
            "diagnostics": {
                name: [float(value) for value in term]
                for name, term in self.diagnostics.items()
            },
            "schedule": self.schedule,
            "config": self.config_echo.to_dict(),
        }

    def summary_lines(self):
        """
        Human-readable summary, one line per parameter.
        """
        yield (
            f"{self.model_name} ({self.mode}): Phi_avg = {self.phi_avg:.6g} "
            f"+- {self.phi_avg_se:.2g}, {self.n_samples} samples"
        )
        for index, (value, error) in enumerate(zip(self.values, self.std_errors)):
            yield f"  dPhi/dgamma{index} = {value:.6g} +- {error:.2g}"


def terminal_average(paths):
    """
    Ensemble mean of ``Phi(x_N)`` and its standard error.
    """
    terminal = np.array([path.observable_trace[-1] for path in paths])
    mean, error = utils.ensemble_mean_and_error(terminal)
    return float(mean), float(error)


def terminal_phi_avg(model, config, paths):
    """
    The finite-time ``Phi^avg_N``: the mean of ``Phi(x_N)`` over ``paths``, or,
    with ``config.two_pass``, over an independent pilot ensemble whose member
    ids follow those of the main ensemble.
    """
    if not config.two_pass:
        return terminal_average(paths)[0]

    pilot = simulate_ensemble(model, config, first_index=config.ensemble_size)
    phi_avg = terminal_average(pilot)[0]
    logger.info("Pilot ensemble of %d members: Phi_avg = %g", len(pilot), phi_avg)
    return phi_avg


def ergodic_average(path, config):
    """
    Time average of ``Phi`` over the orbit after the burn-in, with its
    batch-means standard error.
    """
    trace = path.observable_trace[config.burn_in :]
    batch = max(1, BATCH_WINDOWS * config.window_steps)
    mean, error, _ = utils.batch_means(trace, batch)
    return float(mean), float(error)


def ergodic_estimate(rates, config, diagnostics, **kwargs):
    """
    Build an ergodic :class:`GradientEstimate` from per-step rate
    contributions (time along the first axis, one column per parameter),
    keeping only the retained steps.
    """
    retained = config.retained_range()
    rates = np.asarray(rates, dtype=float)[retained.start : retained.stop]
    batch = max(1, BATCH_WINDOWS * config.window_steps)
    values, errors, n_batches = utils.batch_means(rates, batch)
    return GradientEstimate(
        values=np.atleast_1d(values),
        std_errors=np.atleast_1d(errors),
        n_samples=n_batches,
        config_echo=config,
        diagnostics={
            name: np.atleast_1d(
                np.mean(np.asarray(term)[retained.start : retained.stop], axis=0)
            )
            for name, term in diagnostics.items()
        },
        mode="stationary",
        **kwargs,
    )
