"""
Batch experiments: configuration files, single gradient runs, parameter sweeps
and gradient descent on the parameters.

A configuration is a YAML document with the sections ``model``, ``estimator``,
``sweep``, ``descent``, ``output`` and ``check``. Times are given in model time
units and converted to step counts with ``estimator.dt``.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from pathkernel import utils
from pathkernel.adjoint import (
    CovectorBlowUpError,
    adjoint_finite_time_gradient,
    stationary_gradient,
)
from pathkernel.estimate import ergodic_average
from pathkernel.model import (
    ConfigurationError,
    EstimatorConfig,
    ModelError,
    Schedule,
    StorageMode,
    validate_model,
)
from pathkernel.models import REGISTRY, build_model, lookup
from pathkernel.simulation import (
    SimulationError,
    ZeroNoise,
    dump_path,
    simulate_ensemble,
    simulate_path,
)
from pathkernel.tangent import largest_lyapunov_exponent


logger = logging.getLogger(__name__)

PROFILE_DIR = Path(__file__).parent / "profiles"

MODES = ("finite-time", "stationary")

SWEEP_COLUMNS = [
    "gamma0",
    "gamma1",
    "phi_avg",
    "phi_avg_se",
    "dphi_dgamma0",
    "dphi_dgamma0_se",
    "dphi_dgamma1",
    "dphi_dgamma1_se",
    "T",
    "W",
    "alpha",
    "seed",
    "error",
]

DEFAULTS = {
    "model": {"name": None, "params": None, "options": {}},
    "estimator": {
        "mode": "stationary",
        "dt": 0.01,
        "horizon": 100.0,
        "window": 1.0,
        "burn_in": None,
        "ensemble_size": 100,
        "seed": 0,
        "alpha": 0.0,
        "trim": True,
        "storage_mode": StorageMode.FULL.value,
        "checkpoint_stride": None,
        "two_pass": False,
        "workers": None,
    },
    "sweep": {"gamma0": None, "gamma1": None, "noise_free": False},
    "descent": {
        "direction": "minimize",
        "step": 0.1,
        "iterations": 10,
        "tolerance": 1e-6,
        "clip": None,
        "active": None,
        "box": None,
    },
    "output": {
        "directory": "results",
        "gradient": "gradient.json",
        "summary": "summary.txt",
        "sweep": "sweep.csv",
        "descent": "descent.csv",
        "path": "path.csv",
    },
    "check": {"expected": None, "rel_tol": None, "abs_tol": 0.0},
}


@dataclass(frozen=True)
class DescentOptions:
    """
    Fixed-step gradient iteration settings.

    ``active`` masks the parameters that move; ``box`` holds one
    ``(low, high)`` pair per parameter and the iteration stops when an active
    parameter leaves it.
    """

    direction: str = "minimize"
    step: float = 0.1
    iterations: int = 10
    tolerance: float = 1e-6
    clip: Optional[float] = None
    active: Optional[Tuple[bool, ...]] = None
    box: Optional[Tuple[Tuple[float, float], ...]] = None

    @property
    def sign(self):
        return 1.0 if self.direction == "maximize" else -1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one experiment needs; built by :func:`load_config`.
    """

    # pylint: disable=too-many-instance-attributes

    model_name: str
    params: Tuple[float, ...]
    model_options: dict = field(default_factory=dict)
    mode: str = "stationary"
    dt: float = 0.01
    horizon: float = 100.0
    window: float = 1.0
    burn_in: Optional[float] = None
    ensemble_size: int = 100
    seed: int = 0
    alpha: float = 0.0
    trim: bool = True
    storage_mode: str = StorageMode.FULL.value
    checkpoint_stride: Optional[int] = None
    two_pass: bool = False
    workers: Optional[int] = None
    sweep: dict = field(default_factory=dict)
    noise_free_reference: bool = False
    descent: DescentOptions = field(default_factory=DescentOptions)
    output_dir: Path = Path("results")
    output_files: dict = field(default_factory=dict)
    expected: Optional[Tuple[float, ...]] = None
    rel_tol: Optional[Tuple[float, ...]] = None
    abs_tol: float = 0.0

    @property
    def n_params(self):
        return len(self.params)

    def family(self):
        """
        The parameterized model family with this experiment's options.
        """
        return lookup(self.model_name).family(**self.model_options)

    def build_model(self, params=None):
        return build_model(
            self.model_name,
            self.params if params is None else params,
            **self.model_options,
        )

    def schedule(self):
        return Schedule.constant(self.alpha)

    def estimator_config(self, seed=None):
        """
        :rtype: :class:`~pathkernel.model.EstimatorConfig`
        """
        return EstimatorConfig.from_horizon(
            self.horizon,
            self.dt,
            window=self.window,
            burn_in=self.burn_in,
            ensemble_size=self.ensemble_size,
            seed=self.seed if seed is None else seed,
            trim=self.trim,
            storage_mode=self.storage_mode,
            checkpoint_stride=self.checkpoint_stride,
            two_pass=self.two_pass,
            n_workers=self.workers,
        )

    def output_path(self, kind):
        return self.output_dir / self.output_files[kind]


def _line_numbers(text):
    """
    Map ``section`` and ``section.key`` to the line they are defined on.
    """
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for key, value in root.value:
        lines[key.value] = key.start_mark.line + 1
        if isinstance(value, yaml.MappingNode):
            for sub_key, _ in value.value:
                lines[f"{key.value}.{sub_key.value}"] = sub_key.start_mark.line + 1
    return lines


def _numeric(value):
    """
    Return ``value`` as a number, or None if it is not one.

    PyYAML reads exponents without a dot, such as ``1e-3``, as strings.
    """
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    return value


class _Fields:
    """
    Typed access to the merged configuration sections that reports the file,
    line and dotted field of every invalid value.
    """

    def __init__(self, sections, source, lines):
        self.sections = sections
        self.source = source
        self.lines = lines

    def error(self, name, message):
        line = self.lines.get(name, self.lines.get(name.split(".")[0]))
        location = self.source if line is None else f"{self.source}:{line}"
        return ExperimentConfigError(f"{location}: {name}: {message}")

    def raw(self, name):
        section, key = name.split(".")
        return self.sections[section][key]

    def number(self, name, kind=float, optional=False, positive=False):
        value = self.raw(name)
        if value is None and optional:
            return None
        value = _numeric(value)
        if value is None:
            raise self.error(name, f"expected a number, got {self.raw(name)!r}")
        if kind is int and value != int(value):
            raise self.error(name, f"expected an integer, got {value!r}")
        if positive and not value > 0:
            raise self.error(name, f"must be positive, got {value!r}")
        return kind(value)

    def flag(self, name):
        value = self.raw(name)
        if not isinstance(value, bool):
            raise self.error(name, f"expected true or false, got {value!r}")
        return value

    def choice(self, name, choices):
        value = self.raw(name)
        if value not in choices:
            raise self.error(
                name, f"expected one of {', '.join(choices)}, got {value!r}"
            )
        return value

    def numbers(self, name, length=None, optional=True):
        value = self.raw(name)
        if value is None and optional:
            return None
        if not isinstance(value, (list, tuple)) or not value:
            raise self.error(name, f"expected a non-empty list, got {value!r}")
        if length is not None and len(value) != length:
            raise self.error(name, f"expected {length} values, got {len(value)}")
        numbers = tuple(_numeric(item) for item in value)
        for item, number in zip(value, numbers):
            if number is None:
                raise self.error(name, f"expected numbers, got {item!r}")
        return tuple(float(number) for number in numbers)


def _merge(document, source, lines):
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ExperimentConfigError(f"{source}: expected a mapping of sections")
    sections = {name: dict(values) for name, values in DEFAULTS.items()}
    for section, values in document.items():
        if section not in DEFAULTS:
            line = lines.get(section)
            location = source if line is None else f"{source}:{line}"
            raise ExperimentConfigError(f"{location}: unknown section {section}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ExperimentConfigError(f"{source}: section {section} is not a mapping")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                name = f"{section}.{key}"
                line = lines.get(name)
                location = source if line is None else f"{source}:{line}"
                raise ExperimentConfigError(f"{location}: unknown field {name}")
            sections[section][key] = value
    return sections


def _apply_overrides(sections, overrides):
    """
    Apply ``section.key=value`` overrides; values are parsed as YAML scalars or
    lists.
    """
    for override in overrides:
        name, separator, text = override.partition("=")
        name = name.strip()
        if not separator or name.count(".") != 1:
            raise ExperimentConfigError(
                f"Override {override!r} is not of the form section.key=value"
            )
        section, key = name.split(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ExperimentConfigError(f"Override of unknown field {name}")
        try:
            sections[section][key] = yaml.safe_load(text)
        except yaml.YAMLError as error:
            raise ExperimentConfigError(
                f"Override {name}: cannot parse {text!r}"
            ) from error
        logger.debug("Override %s = %r", name, sections[section][key])


def _build(sections, source, lines):
    # pylint: disable=too-many-locals
    fields = _Fields(sections, source, lines)
    name = fields.raw("model.name")
    if name not in REGISTRY:
        raise fields.error(
            "model.name",
            f"unknown model {name!r}, expected one of {', '.join(sorted(REGISTRY))}",
        )
    entry = REGISTRY[name]
    n_params = len(entry.param_names)
    params = fields.numbers("model.params", length=n_params) or entry.default_params
    options = fields.raw("model.options") or {}
    if not isinstance(options, dict):
        raise fields.error("model.options", "expected a mapping")
    unknown = set(options) - set(entry.options)
    if unknown:
        raise fields.error(
            "model.options", f"unknown options {', '.join(sorted(unknown))}"
        )

    sweep = {}
    for index in range(2):
        key = f"sweep.gamma{index}"
        values = fields.numbers(key)
        if values is not None:
            if index >= n_params:
                raise fields.error(key, f"model {name} has {n_params} parameters")
            sweep[index] = values

    active = fields.raw("descent.active")
    if active is not None:
        if not isinstance(active, list) or len(active) != n_params:
            raise fields.error("descent.active", f"expected {n_params} booleans")
        active = tuple(bool(item) for item in active)
    box = fields.raw("descent.box")
    if box is not None:
        if not isinstance(box, list) or len(box) != n_params:
            raise fields.error("descent.box", f"expected {n_params} [low, high] pairs")
        try:
            box = tuple((float(low), float(high)) for low, high in box)
        except (TypeError, ValueError) as error:
            raise fields.error("descent.box", "expected [low, high] pairs") from error
    descent = DescentOptions(
        direction=fields.choice("descent.direction", ("minimize", "maximize")),
        step=fields.number("descent.step", positive=True),
        iterations=fields.number("descent.iterations", kind=int, positive=True),
        tolerance=fields.number("descent.tolerance"),
        clip=fields.number("descent.clip", optional=True, positive=True),
        active=active,
        box=box,
    )

    expected = fields.numbers("check.expected", length=n_params)
    rel_tol = fields.raw("check.rel_tol")
    if isinstance(rel_tol, (int, float)) and not isinstance(rel_tol, bool):
        rel_tol = (float(rel_tol),) * n_params
    else:
        rel_tol = fields.numbers("check.rel_tol", length=n_params)

    output = {
        key: str(fields.raw(f"output.{key}"))
        for key in DEFAULTS["output"]
        if key != "directory"
    }
    config = ExperimentConfig(
        model_name=name,
        params=tuple(params),
        model_options=options,
        mode=fields.choice("estimator.mode", MODES),
        dt=fields.number("estimator.dt", positive=True),
        horizon=fields.number("estimator.horizon", positive=True),
        window=fields.number("estimator.window"),
        burn_in=fields.number("estimator.burn_in", optional=True),
        ensemble_size=fields.number("estimator.ensemble_size", kind=int),
        seed=fields.number("estimator.seed", kind=int),
        alpha=fields.number("estimator.alpha"),
        trim=fields.flag("estimator.trim"),
        storage_mode=fields.choice(
            "estimator.storage_mode", [mode.value for mode in StorageMode]
        ),
        checkpoint_stride=fields.number(
            "estimator.checkpoint_stride", kind=int, optional=True, positive=True
        ),
        two_pass=fields.flag("estimator.two_pass"),
        workers=fields.number("estimator.workers", kind=int, optional=True),
        sweep=sweep,
        noise_free_reference=fields.flag("sweep.noise_free"),
        descent=descent,
        output_dir=Path(str(fields.raw("output.directory"))),
        output_files=output,
        expected=expected,
        rel_tol=rel_tol,
        abs_tol=fields.number("check.abs_tol"),
    )

    if config.alpha < 0:
        raise fields.error("estimator.alpha", "must be nonnegative")
    try:
        estimator = config.estimator_config()
        if config.mode == "stationary":
            estimator.check_ergodic()
        else:
            estimator.check_ensemble()
        config.build_model()
    except (ConfigurationError, ModelError) as error:
        raise fields.error("estimator", str(error)) from error
    return config


def profile_path(name):
    """
    Path of the shipped profile ``name``.

    :raises ExperimentConfigError: There is no such profile
    """
    path = PROFILE_DIR / f"{name}.yaml"
    if not path.is_file():
        available = sorted(profile.stem for profile in PROFILE_DIR.glob("*.yaml"))
        raise ExperimentConfigError(
            f"Unknown profile {name}, expected one of {', '.join(available)}"
        )
    return path


def load_config(path=None, profile=None, overrides=()):
    """
    Read an experiment configuration from a YAML file or a shipped profile and
    apply dotted ``section.key=value`` overrides.

    :param path: Path of a YAML configuration file
    :param profile: Name of a shipped profile, used when ``path`` is None
    :param overrides: Iterable of ``section.key=value`` strings
    :raises ExperimentConfigError: The file cannot be parsed or a field is
                                   unknown or invalid
    :rtype: :class:`ExperimentConfig`
    """
    if path is None:
        if profile is None:
            raise ExperimentConfigError("Either a configuration file or a profile")
        path = profile_path(profile)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise ExperimentConfigError(f"Cannot read {path}: {error}") from error

    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        location = str(path) if mark is None else f"{path}:{mark.line + 1}"
        problem = getattr(error, "problem", None) or str(error)
        raise ExperimentConfigError(f"{location}: {problem}") from error

    lines = _line_numbers(text)
    sections = _merge(document, str(path), lines)
    _apply_overrides(sections, overrides)
    config = _build(sections, str(path), lines)
    logger.info("Loaded experiment %s (%s, %s)", path, config.model_name, config.mode)
    return config


def estimate_gradient(config, params=None, seed=None):
    """
    Run the adjoint estimator the configuration asks for at ``params``.

    :rtype: :class:`~pathkernel.estimate.GradientEstimate`
    """
    model = config.build_model(params)
    estimator = config.estimator_config(seed)
    if config.mode == "finite-time":
        return adjoint_finite_time_gradient(model, estimator, config.schedule())
    return stationary_gradient(model, estimator, config.schedule())


def noise_free_phi_avg(config, params=None):
    """
    ``Phi_avg`` of the system driven by its drift alone: the time average over
    the orbit after the burn-in in stationary mode, ``Phi(x_N)`` in finite-time
    mode.
    """
    model = config.build_model(params)
    estimator = config.estimator_config()
    path = simulate_path(model, estimator, noise=ZeroNoise(model.dim))
    if config.mode == "finite-time":
        return float(path.observable_trace[-1])
    return ergodic_average(path, estimator)[0]


def check_failures(config, estimate):
    """
    Components of ``estimate`` outside the configured expected values, as
    human-readable lines; empty when there is nothing to check or all agree.
    """
    if config.expected is None:
        return []
    rel_tol = config.rel_tol or (0.0,) * config.n_params
    failures = []
    for index, (value, expected, tol) in enumerate(
        zip(estimate.values, config.expected, rel_tol)
    ):
        allowed = tol * abs(expected) + config.abs_tol
        if not abs(value - expected) <= allowed:
            failures.append(
                f"dPhi/dgamma{index} = {value:.6g}, expected {expected:.6g} "
                f"+- {allowed:.3g}"
            )
    return failures


@dataclass(frozen=True)
class GradientRun:
    estimate: object
    failures: list


def run_gradient(config):
    """
    Estimate the gradient, write it as JSON together with a text summary and
    compare it with the expected values of the ``check`` section.

    :rtype: :class:`GradientRun`
    """
    estimate = estimate_gradient(config)
    utils.write_json(estimate.to_dict(), config.output_path("gradient"))
    failures = check_failures(config, estimate)
    summary = list(estimate.summary_lines())
    if config.expected is not None:
        summary.append("self-test: " + ("FAILED" if failures else "passed"))
        summary.extend(f"  {failure}" for failure in failures)
    summary_path = config.output_path("summary")
    utils.ensure_dir(summary_path.parent)
    summary_path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    for failure in failures:
        logger.error("Self-test failed: %s", failure)
    return GradientRun(estimate=estimate, failures=failures)


def sweep_points(config):
    """
    Parameter vectors of the sweep grid, the first parameter varying slowest.
    Parameters without a sweep list keep their base value.
    """
    if not config.sweep:
        raise ExperimentConfigError("The sweep section defines no grid")
    axes = [
        config.sweep.get(index, (value,)) for index, value in enumerate(config.params)
    ]
    return [tuple(point) for point in itertools.product(*axes)]


def _sweep_row(config, index, point):
    seed = config.seed + index
    row = {
        "gamma0": point[0],
        "gamma1": point[1] if len(point) > 1 else None,
        "T": config.horizon,
        "W": config.window,
        "alpha": config.alpha,
        "seed": seed,
    }
    try:
        estimate = estimate_gradient(config, params=point, seed=seed)
        if config.noise_free_reference:
            row["phi_avg_noise_free"] = noise_free_phi_avg(config, params=point)
    except (
        SimulationError,
        CovectorBlowUpError,
        ModelError,
        ConfigurationError,
    ) as error:
        logger.warning("Sweep point %s failed: %s", list(point), error)
        row["error"] = f"{type(error).__name__}: {error}"
        return row
    row["phi_avg"] = estimate.phi_avg
    row["phi_avg_se"] = estimate.phi_avg_se
    for component in range(min(2, estimate.n_params)):
        row[f"dphi_dgamma{component}"] = estimate.values[component]
        row[f"dphi_dgamma{component}_se"] = estimate.std_errors[component]
    return row


def run_sweep(config):
    """
    Estimate the gradient at every grid point, each from its own seed
    (``seed + point index``), and write one CSV row per point. Failing points
    are recorded in the ``error`` column. With ``sweep.noise_free`` every row
    also holds ``Phi_avg`` of the noise-free system.

    :return: The rows in grid order
    """
    points = sweep_points(config)
    logger.info("Sweeping %d grid points of %s", len(points), config.model_name)
    rows = utils.ordered_map(
        lambda job: _sweep_row(config, *job), list(enumerate(points)), config.workers
    )
    columns = list(SWEEP_COLUMNS)
    if config.noise_free_reference:
        columns.insert(columns.index("error"), "phi_avg_noise_free")
    utils.write_csv(rows, columns, config.output_path("sweep"))
    return rows


@dataclass(frozen=True)
class DescentResult:
    """
    Iteration log of :func:`run_descent`; ``status`` is ``converged``,
    ``max-iterations`` or ``left-box``.
    """

    rows: list
    status: str
    params: Tuple[float, ...]


def descent_columns(n_params):
    return (
        ["iter"]
        + [f"gamma{index}" for index in range(n_params)]
        + ["phi_avg"]
        + [f"grad{index}" for index in range(n_params)]
        + ["step"]
    )


def run_descent(config):
    """
    Fixed-step gradient iteration on ``Phi_avg`` over the active parameters.

    Every iteration estimates the gradient with a fresh seed
    (``seed + iteration``). The gradient is optionally clipped in norm. The
    iteration stops when the gradient norm falls below the tolerance, after
    the iteration cap, or when an active parameter leaves the box; in the last
    case the iterate is projected back onto the box.

    :rtype: :class:`DescentResult`
    """
    # pylint: disable=too-many-locals
    options = config.descent
    params = np.array(config.params, dtype=float)
    active = np.array(options.active or (True,) * len(params), dtype=bool)
    status = "max-iterations"
    rows = []

    for iteration in range(options.iterations):
        estimate = estimate_gradient(
            config, params=tuple(params), seed=config.seed + iteration
        )
        gradient = np.where(active, estimate.values, 0.0)
        norm = float(np.linalg.norm(gradient))
        if options.clip is not None and norm > options.clip:
            gradient = gradient * (options.clip / norm)
        update = options.sign * options.step * gradient
        converged = norm < options.tolerance
        if converged:
            update = np.zeros_like(update)

        row = {"iter": iteration, "phi_avg": estimate.phi_avg}
        for index, value in enumerate(params):
            row[f"gamma{index}"] = float(value)
            row[f"grad{index}"] = float(estimate.values[index])
        row["step"] = float(np.linalg.norm(update))
        rows.append(row)
        logger.info(
            "Descent iteration %d at %s: Phi_avg = %g, |grad| = %g",
            iteration,
            list(params),
            estimate.phi_avg,
            norm,
        )

        if converged:
            status = "converged"
            break
        params = params + update
        if options.box is not None:
            low, high = np.array(options.box).T
            outside = active & ((params < low) | (params > high))
            if np.any(outside):
                params = np.where(active, np.clip(params, low, high), params)
                status = "left-box"
                logger.warning("Iterate left the box, stopping at %s", list(params))
                break

    utils.write_csv(rows, descent_columns(len(params)), config.output_path("descent"))
    return DescentResult(
        rows=rows, status=status, params=tuple(float(value) for value in params)
    )


def member_output_path(config, suffix):
    """
    ``path.csv`` with ``_<suffix>`` appended to its stem, e.g. ``path_3.csv``.
    """
    template = config.output_path("path")
    return template.with_name(f"{template.stem}_{suffix}{template.suffix}")


@dataclass(frozen=True)
class SimulateResult:
    paths: list
    files: list


def run_simulate(config, with_noise=False, noise_free=False):
    """
    Simulate and write the states (and noises) of every orbit as CSV, one file
    per ensemble member: the whole ensemble in finite-time mode, the single
    long orbit in stationary mode. With ``noise_free`` one orbit of the drift
    alone is written to ``path_noise_free.csv`` instead.

    :rtype: :class:`SimulateResult`
    """
    model = config.build_model()
    estimator = config.estimator_config()
    if noise_free:
        paths = [simulate_path(model, estimator, noise=ZeroNoise(model.dim))]
        files = [member_output_path(config, "noise_free")]
    else:
        if config.mode == "finite-time":
            paths = simulate_ensemble(model, estimator)
        else:
            paths = [simulate_path(model, estimator)]
        files = [member_output_path(config, path.path_index) for path in paths]
    for path, output_path in zip(paths, files):
        dump_path(path, output_path, dt=config.dt, with_noise=with_noise)
    logger.info(
        "Wrote %d orbits of %d steps to %s",
        len(files),
        estimator.n_steps,
        config.output_dir,
    )
    return SimulateResult(paths=paths, files=files)


@dataclass(frozen=True)
class CheckResult:
    report: object
    lyapunov_exponent: Optional[float] = None

    @property
    def ok(self):
        return self.report.ok


def run_check(config, n_probe=5, tol=1e-5, lyapunov=False):
    """
    Validate the derivatives of the configured model against finite
    differences and, on request, estimate the top Lyapunov exponent along a
    simulated orbit.

    :rtype: :class:`CheckResult`
    """
    model = config.build_model()
    report = validate_model(
        model,
        n_probe=n_probe,
        tol=tol,
        family=config.family(),
        params=config.params,
        seed=config.seed,
    )
    exponent = None
    if lyapunov:
        estimator = config.estimator_config()
        path = simulate_path(model, estimator)
        start = min(estimator.burn_in, path.n_steps - 1)
        exponent = largest_lyapunov_exponent(
            model, path, dt=config.dt, start=start, seed=config.seed
        )
        if not math.isfinite(exponent):
            logger.warning("Lyapunov exponent estimate is not finite")
    return CheckResult(report=report, lyapunov_exponent=exponent)


class ExperimentConfigError(ValueError):
    """
    Exception raised when an experiment configuration is malformed.
    """
