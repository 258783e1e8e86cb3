"""
Forward simulation of noise-recorded orbits.

The Gaussian increments come from a counter-addressable stream: the noise of
step ``n`` of ensemble member ``path_index`` is a pure function of
``(seed, path_index, n)``, so backward sweeps can regenerate it on demand and
ensembles are reproducible regardless of how members are scheduled on workers.
"""

import functools
import logging
import pathlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from pathkernel import utils
from pathkernel.model import StorageMode, as_discrete


logger = logging.getLogger(__name__)

# Noise is generated in blocks of this many steps; the block is the unit that a
# Philox counter addresses.
NOISE_BLOCK_STEPS = 512

BLOWUP_THRESHOLD = 1e8


@functools.lru_cache(maxsize=64)
def _noise_block(seed, path_index, dim, block_index):
    counter = np.array([0, 0, block_index, path_index], dtype=np.uint64)
    generator = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    block = generator.standard_normal((NOISE_BLOCK_STEPS, dim))
    block.flags.writeable = False
    return block


@dataclass(frozen=True)
class CounterNoise:
    """
    Standard normal increments addressed by ``(seed, path_index, step)``.

    Each block of :data:`NOISE_BLOCK_STEPS` steps is drawn from its own Philox
    counter ``[0, 0, block, path_index]`` under the key ``seed``; a block uses
    far fewer than ``2**64`` increments of the lowest counter word, so blocks
    never overlap.
    """

    seed: int
    path_index: int
    dim: int

    def steps(self, start, stop):
        """
        Noises ``b_start .. b_{stop-1}`` as a ``(stop - start, dim)`` array.
        """
        if stop <= start:
            return np.empty((0, self.dim))
        first, last = start // NOISE_BLOCK_STEPS, (stop - 1) // NOISE_BLOCK_STEPS
        blocks = [
            _noise_block(self.seed, self.path_index, self.dim, index)
            for index in range(first, last + 1)
        ]
        offset = start - first * NOISE_BLOCK_STEPS
        return np.concatenate(blocks)[offset : offset + stop - start]

    def describe(self):
        return {
            "kind": "philox-counter",
            "seed": self.seed,
            "path_index": self.path_index,
            "block_steps": NOISE_BLOCK_STEPS,
        }


@dataclass(frozen=True)
class RecordedNoise:
    """
    Noises supplied by the caller, e.g. injected values in tests.
    """

    noises: np.ndarray

    def __post_init__(self):
        noises = np.array(self.noises, dtype=float)
        if noises.ndim == 1:
            noises = noises.reshape(-1, 1)
        noises.flags.writeable = False
        object.__setattr__(self, "noises", noises)

    @property
    def dim(self):
        return self.noises.shape[1]

    def steps(self, start, stop):
        if stop > self.noises.shape[0]:
            raise NoiseIndexError(
                f"Only {self.noises.shape[0]} recorded noises, step {stop - 1} "
                "requested"
            )
        return self.noises[start:stop]

    def describe(self):
        return {"kind": "recorded", "length": int(self.noises.shape[0])}


@dataclass(frozen=True)
class ZeroNoise:
    """
    All-zero increments: the orbit follows the drift alone.
    """

    dim: int

    def steps(self, start, stop):
        return np.zeros((max(0, stop - start), self.dim))

    def describe(self):
        return {"kind": "zero"}


@dataclass(frozen=True, eq=False)
class Segment:
    """
    A contiguous piece of a path: ``states`` holds ``x_start .. x_stop`` and
    ``noises`` holds ``b_start .. b_{stop-1}``.
    """

    start: int
    states: np.ndarray
    noises: np.ndarray

    @property
    def stop(self):
        return self.start + self.noises.shape[0]


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """
    Every ``stride``-th state of a path and the noise stream that drove it.
    """

    stride: int
    stored_states: np.ndarray
    rng_stream_spec: object

    def replay_segment(self, model, index, n_steps):
        """
        Re-simulate segment ``index``, i.e. steps ``index*stride`` to
        ``min((index+1)*stride, n_steps)``, from its stored first state.

        :rtype: :class:`Segment`
        """
        start = index * self.stride
        stop = min(start + self.stride, n_steps)
        noises = self.rng_stream_spec.steps(start, stop)
        states = np.empty((stop - start + 1, model.dim))
        states[0] = self.stored_states[index]
        _advance(model, states, noises, start, path_index=None)
        return Segment(start=start, states=states, noises=noises)


@dataclass(frozen=True, eq=False)
class Path:
    """
    One realized orbit of a discrete map.

    In full-in-memory mode ``stored_states`` and ``stored_noises`` hold the
    whole orbit; in checkpoint-replay mode only ``checkpoint`` is kept and
    segments are re-simulated on demand. The observable trace is always kept.
    """

    # pylint: disable=too-many-instance-attributes

    model: object
    n_steps: int
    seed: int
    path_index: int
    observable_trace: np.ndarray
    noise_source: object
    stored_states: Optional[np.ndarray] = None
    stored_noises: Optional[np.ndarray] = None
    checkpoint: Optional[Checkpoint] = None

    @property
    def storage_mode(self):
        if self.checkpoint is None:
            return StorageMode.FULL
        return StorageMode.CHECKPOINT

    @property
    def dim(self):
        return self.model.dim

    @property
    def states(self):
        """
        All states ``x_0 .. x_N``; re-simulated in checkpoint-replay mode.
        """
        if self.stored_states is not None:
            return self.stored_states
        return np.concatenate(
            [segment.states[:-1] for segment in self.segments()]
            + [self.final_state[np.newaxis]]
        )

    @property
    def noises(self):
        """
        All noises ``b_0 .. b_{N-1}``; regenerated in checkpoint-replay mode.
        """
        if self.stored_noises is not None:
            return self.stored_noises
        return self.noise_source.steps(0, self.n_steps)

    @property
    def final_state(self):
        if self.stored_states is not None:
            return self.stored_states[-1]
        last = self.n_segments - 1
        return self.checkpoint.replay_segment(self.model, last, self.n_steps).states[-1]

    @property
    def n_segments(self):
        if self.checkpoint is None:
            return 1
        return -(-self.n_steps // self.checkpoint.stride)

    def segment(self, index):
        if self.checkpoint is None:
            return Segment(
                start=0, states=self.stored_states, noises=self.stored_noises
            )
        return self.checkpoint.replay_segment(self.model, index, self.n_steps)

    def segments(self):
        """
        Iterate over the segments of the path in forward order.
        """
        for index in range(self.n_segments):
            yield self.segment(index)

    def reversed_segments(self):
        """
        Iterate over the segments of the path from the end to the start,
        re-simulating each one once in checkpoint-replay mode.
        """
        for index in reversed(range(self.n_segments)):
            yield self.segment(index)


def _advance(model, states, noises, start, path_index, trace=None):
    """
    Fill ``states[1:]`` from ``states[0]`` with the recursion
    ``x_{n+1} = f(x_n) + sigma(x_n) b_n``. ``trace`` receives ``Phi(x_n)``.
    """
    drift, diffusion = model.drift, model.diffusion
    x = states[0]
    if trace is not None:
        trace[0] = model.observable(x)
    for j in range(noises.shape[0]):
        sigma = diffusion(x)
        if not sigma > 0:
            raise NonPositiveDiffusionError(
                f"Diffusion {sigma} is not positive at step {start + j}",
                step=start + j,
                path_index=path_index,
            )
        x = drift(x) + sigma * noises[j]
        size = np.max(np.abs(x))
        if not size <= BLOWUP_THRESHOLD:
            raise SimulationBlowUpError(
                f"State blew up at step {start + j + 1} (|x| = {size:.3e})",
                step=start + j + 1,
                path_index=path_index,
                norm=float(size),
            )
        states[j + 1] = x
        if trace is not None:
            trace[j + 1] = model.observable(x)
    return x


def simulate_path(model, config, path_index=0, noise=None):
    """
    Simulate one orbit of ``model``.

    SDE models are discretized with ``config.dt`` first; the returned path
    belongs to the discretized map. ``noise`` overrides the counter-based
    stream, e.g. with :class:`RecordedNoise`.

    :param model: The system to simulate
    :type model: :class:`~pathkernel.model.ModelSpec`
    :param config: Estimator settings (horizon, seed, storage mode)
    :type config: :class:`~pathkernel.model.EstimatorConfig`
    :param path_index: Ensemble member id
    :type path_index: int
    :raises SimulationBlowUpError: A state is non-finite or exceeds 1e8
    :raises NonPositiveDiffusionError: The diffusion is not positive
    :rtype: :class:`Path`
    """
    discrete, _ = as_discrete(model, dt=config.dt)
    if noise is None:
        noise = CounterNoise(seed=config.seed, path_index=path_index, dim=model.dim)
    n_steps = config.n_steps
    trace = np.empty(n_steps + 1)

    if config.storage_mode == StorageMode.FULL:
        noises = noise.steps(0, n_steps)
        states = np.empty((n_steps + 1, model.dim))
        states[0] = discrete.x0
        _advance(discrete, states, noises, 0, path_index, trace)
        states.flags.writeable = False
        path = Path(
            model=discrete,
            n_steps=n_steps,
            seed=config.seed,
            path_index=path_index,
            observable_trace=trace,
            noise_source=noise,
            stored_states=states,
            stored_noises=noises,
        )
    else:
        stride = config.stride
        starts = range(0, n_steps, stride)
        stored = np.empty((len(starts), model.dim))
        x = discrete.x0
        for index, start in enumerate(starts):
            stop = min(start + stride, n_steps)
            stored[index] = x
            states = np.empty((stop - start + 1, model.dim))
            states[0] = x
            x = _advance(
                discrete,
                states,
                noise.steps(start, stop),
                start,
                path_index,
                trace[start : stop + 1],
            )
        stored.flags.writeable = False
        path = Path(
            model=discrete,
            n_steps=n_steps,
            seed=config.seed,
            path_index=path_index,
            observable_trace=trace,
            noise_source=noise,
            checkpoint=Checkpoint(
                stride=stride, stored_states=stored, rng_stream_spec=noise
            ),
        )

    trace.flags.writeable = False
    logger.debug(
        "Simulated member %d of %s: %d steps, Phi(x_N) = %g",
        path_index,
        model.name,
        n_steps,
        trace[-1],
    )
    return path


def simulate_ensemble(model, config, first_index=0):
    """
    Simulate ``config.ensemble_size`` members with consecutive path indices,
    concurrently, and return them in index order.
    """
    indices = range(first_index, first_index + config.ensemble_size)
    return utils.ordered_map(
        lambda index: simulate_path(model, config, path_index=index),
        indices,
        config.n_workers,
    )


def replay_noise(path, n):
    """
    Return the noise ``b_n`` exactly as it was used in the forward pass.

    :raises NoiseIndexError: ``n`` is outside ``[0, N)``
    """
    if not 0 <= n < path.n_steps:
        raise NoiseIndexError(
            f"Noise index {n} out of range for a path of {path.n_steps} steps"
        )
    if path.stored_noises is not None:
        return path.stored_noises[n]
    return path.noise_source.steps(n, n + 1)[0]


def dump_path(path, output_path, dt=1.0, with_noise=False):
    """
    Write a path as CSV with columns ``step, t, x_0 .. x_{M-1}`` and, when
    requested, ``b_0 .. b_{M-1}`` (the last row has no noise and repeats NaN).
    """
    states = path.states
    steps = np.arange(path.n_steps + 1)
    columns = [steps, steps * dt, states]
    header = ["step", "t"] + [f"x_{i}" for i in range(path.dim)]
    if with_noise:
        noises = np.vstack([path.noises, np.full((1, path.dim), np.nan)])
        columns.append(noises)
        header += [f"b_{i}" for i in range(path.dim)]
    table = np.column_stack(columns)
    output_path = pathlib.Path(output_path)
    utils.ensure_dir(output_path.parent)
    np.savetxt(
        output_path,
        table,
        delimiter=",",
        header=",".join(header),
        comments="",
        fmt=["%d"] + ["%.17g"] * (table.shape[1] - 1),
    )


class SimulationError(ArithmeticError):
    """
    Exception raised when a forward simulation cannot continue.
    """

    def __init__(self, message, step=None, path_index=None, norm=None):
        super().__init__(message)
        self.step = step
        self.path_index = path_index
        self.norm = norm

    def __str__(self):
        message = super().__str__()
        if self.path_index is not None:
            message = f"{message} in ensemble member {self.path_index}"
        return message


class SimulationBlowUpError(SimulationError):
    """
    Exception raised when a state becomes non-finite or too large.
    """


class NonPositiveDiffusionError(SimulationError):
    """
    Exception raised when the diffusion coefficient is not positive.
    """


class NoiseIndexError(IndexError):
    """
    Exception raised when a noise outside the recorded path is requested.
    """
