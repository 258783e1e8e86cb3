"""
General utility functions shared by the simulators, the estimators and the
experiment runner.
"""

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np


logger = logging.getLogger(__name__)

WORKERS_ENV_VAR = "PATHKERNEL_WORKERS"


def worker_count(requested=None):
    """
    Return the number of worker threads to use.

    The environment variable ``PATHKERNEL_WORKERS`` overrides everything else,
    then the explicitly requested count, and finally the number of CPUs capped
    at four.

    :param requested: Worker count asked for by the caller, or None
    :type requested: int
    :rtype: int
    """
    from_env = os.environ.get(WORKERS_ENV_VAR)
    if from_env:
        try:
            return max(1, int(from_env))
        except ValueError:
            logger.warning(
                "Ignoring non-integer %s=%r", WORKERS_ENV_VAR, from_env
            )
    if requested:
        return max(1, int(requested))
    return min(4, os.cpu_count() or 1)


def ordered_map(func, items, workers=None):
    """
    Apply ``func`` to every item, possibly concurrently, and return the results
    in the order of ``items``.

    Exceptions raised by ``func`` propagate to the caller.
    """
    items = list(items)
    workers = worker_count(workers)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def ensemble_mean_and_error(samples):
    """
    Mean and standard error (sample standard deviation over ``sqrt(K)``) of
    per-member samples along the first axis.

    The reduction runs over an array stacked in member order, so the result does
    not depend on which worker produced which sample.
    """
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[0]
    mean = np.mean(samples, axis=0)
    if count < 2:
        return mean, np.full_like(mean, np.inf)
    return mean, np.std(samples, axis=0, ddof=1) / np.sqrt(count)


def batch_means(series, batch_length):
    """
    Mean and batch-means standard error of a serially correlated series.

    The series is cut into non-overlapping batches of ``batch_length`` steps
    (an incomplete trailing batch is dropped for the error but not for the
    mean). The batch length is shortened, with a warning, when fewer than two
    batches would fit.

    :param series: Per-step contributions, time along the first axis
    :type series: :class:`numpy.ndarray`
    :return: Tuple of (mean, standard error, number of batches)
    """
    series = np.asarray(series, dtype=float)
    length = series.shape[0]
    mean = np.mean(series, axis=0)
    if length < 2:
        return mean, np.full_like(mean, np.inf), length

    batch_length = max(1, int(batch_length))
    if length // batch_length < 2:
        shortened = max(1, length // 2)
        logger.warning(
            "Only %d steps available, shortening batches from %d to %d steps",
            length,
            batch_length,
            shortened,
        )
        batch_length = shortened

    n_batches = length // batch_length
    used = series[: n_batches * batch_length]
    batches = used.reshape((n_batches, batch_length) + series.shape[1:]).mean(axis=1)
    error = np.std(batches, axis=0, ddof=1) / np.sqrt(n_batches)
    return mean, error, n_batches


def window_sums(values, offset, window):
    """
    For every step ``n`` return ``sum_{m=1}^{window} (values[n+m] - offset)``,
    truncated at the end of ``values``.

    Computed from prefix sums, so the cost does not depend on the window.

    :param values: Observable trace ``Phi_0 .. Phi_N``
    :return: Array of length ``N`` (one entry for each step ``n < N``)
    """
    centered = np.asarray(values, dtype=float) - offset
    prefix = np.concatenate(([0.0], np.cumsum(centered)))
    n_steps = centered.shape[0] - 1
    steps = np.arange(n_steps)
    upper = np.minimum(steps + window, n_steps) + 1
    return prefix[upper] - prefix[steps + 1]


def ensure_dir(directory):
    """
    Create ``directory`` and its parents if they do not exist yet.

    :rtype: :class:`pathlib.Path`
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_json(data, output_path):
    """
    Write ``data`` as deterministic, human-readable JSON.
    """
    output_path = Path(output_path)
    ensure_dir(output_path.parent)
    with open(output_path, "w", encoding="utf-8") as output_file:
        json.dump(data, output_file, indent=2, sort_keys=True)
        output_file.write("\n")


def write_csv(rows, columns, output_path):
    """
    Write a list of dicts into a CSV file with exactly the given columns.
    """
    output_path = Path(output_path)
    ensure_dir(output_path.parent)
    with open(output_path, "w", encoding="utf-8", newline="") as output_file:
        writer = csv.DictWriter(output_file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: _csv_value(row.get(column)) for column in columns})


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
