import csv
import logging
import os
import typing

import toml

from .experiment import CellOutcome, ExperimentResult
from .utils import DomainError, format_float
from .verification import ConvergenceReport, uniformity_ratio

__all__ = [
    "VERSION",
    "BORIS_VARIANT",
    "CONVERGE_COLUMNS",
    "ENERGY_COLUMNS",
    "RunMetadata",
    "write_report",
]

_LOGGER = logging.getLogger(__name__)

VERSION = "0.1.0"
BORIS_VARIANT = "synchronized velocities, Cayley rotation with t = (h/2) B/eps"

CONVERGE_COLUMNS = ("method", "eps", "h", "t", "err_x", "err_v", "error", "metric_scaled")
SLOPE_COLUMNS = ("method", "eps", "metric", "points", "slope", "fit_residual")
ENERGY_COLUMNS = ("method", "t", "e_H")
ENERGY_SUMMARY_COLUMNS = ("method", "eps", "h", "max_e_H", "first_half_max", "second_half_max", "drift_ratio")
SYMPLECTIC_COLUMNS = ("method", "eps", "h", "sample", "residual", "delta")
SWEEP_SUMMARY_COLUMNS = ("method", "h", "metric", "min", "max", "ratio")
TRAJECTORY_COLUMNS = ("method", "t", "x1", "x2", "x3", "v1", "v2", "v3")


def _cell(value) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


class _CsvFile:
    def __init__(self, out_dir: str, name: str, columns: typing.Sequence[str]):
        self.path = os.path.join(out_dir, name)
        self._file = open(self.path, "w", encoding="utf8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(columns)

    def row(self, *values):
        self._writer.writerow([_cell(value) for value in values])

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self._file.close()


def _tag(value: float) -> str:
    return format_float(value).replace("-", "m")


class RunMetadata:
    def __init__(self, result: ExperimentResult):
        self.result = result

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        config = self.result.config
        cells = {}
        for outcome in self.result.outcomes:
            entry: typing.Dict[str, typing.Any] = {"status": "ok" if outcome.ok else "failed"}
            if outcome.stats is not None:
                entry.update(outcome.stats)
            if outcome.error is not None:
                entry["error"] = outcome.error
            cells[str(outcome.key)] = entry
        metadata: typing.Dict[str, typing.Any] = {
            "version": VERSION,
            "command": config.command,
            "problem": config.problem_name,
            "config_digest": config.digest,
            "wall_clock_seconds": self.result.wall_clock,
            "exit_code": self.result.exit_code,
            "cells": cells,
            "oracle_checks": self.result.oracle_checks,
            "config": config.as_dict(),
        }
        if "BORIS" in config.methods:
            metadata["boris_variant"] = BORIS_VARIANT
        return metadata

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, "metadata.toml")
        with open(path, "w", encoding="utf8", newline="\n") as metadata_file:
            metadata_file.write(toml.dumps(self.as_dict()))
        return path


def _write_converge(result: ExperimentResult, out_dir: str) -> typing.List[str]:
    config = result.config
    reports: typing.Dict[typing.Tuple[str, float], ConvergenceReport] = {}
    with _CsvFile(out_dir, "converge.csv", CONVERGE_COLUMNS) as rows:
        for outcome in result.successful():
            key, metrics = outcome.key, outcome.value
            scaled = metrics.select(config.metric, config.metric_convention, config.metric_weights)
            rows.row(key.method, key.eps, key.h, config.t_end, metrics.err_x, metrics.err_v, metrics.error, scaled)
            report = reports.setdefault(
                (key.method, key.eps),
                ConvergenceReport(key.method, key.eps, config.metric, config.metric_convention, config.metric_weights),
            )
            report.add(key.h, metrics)

    with _CsvFile(out_dir, "slopes.csv", SLOPE_COLUMNS) as slopes:
        for (method, eps), report in reports.items():
            for metric in dict.fromkeys(("error", config.metric)):
                try:
                    fit = report.fit(metric)
                except DomainError as error:
                    _LOGGER.warning("no slope for %s eps=%r (%s): %s", method, eps, metric, error)
                    continue
                slopes.row(method, eps, metric, len(report.points), fit.slope, fit.residual)
    return [rows.path, slopes.path]


def _write_energy(result: ExperimentResult, out_dir: str) -> typing.List[str]:
    paths = []
    groups: typing.Dict[typing.Tuple[float, float], typing.List[CellOutcome]] = {}
    for outcome in result.successful():
        groups.setdefault((outcome.key.eps, outcome.key.h), []).append(outcome)

    for (eps, h), outcomes in groups.items():
        with _CsvFile(out_dir, f"energy_eps{_tag(eps)}_h{_tag(h)}.csv", ENERGY_COLUMNS) as rows:
            for outcome in outcomes:
                for t, error in zip(outcome.value.times, outcome.value.errors):
                    rows.row(outcome.key.method, float(t), float(error))
        paths.append(rows.path)

    with _CsvFile(out_dir, "energy_summary.csv", ENERGY_SUMMARY_COLUMNS) as summary:
        for outcome in result.successful():
            series = outcome.value
            first, second = series.halves()
            key = outcome.key
            summary.row(key.method, key.eps, key.h, series.max_error, first, second, series.drift_ratio)
    return paths + [summary.path]


def _write_symplectic(result: ExperimentResult, out_dir: str) -> typing.List[str]:
    with _CsvFile(out_dir, "symplectic.csv", SYMPLECTIC_COLUMNS) as rows:
        for outcome in result.successful():
            report = outcome.value
            delta = "auto" if report.delta is None else report.delta
            for sample, residual in enumerate(report.residuals):
                rows.row(outcome.key.method, outcome.key.eps, outcome.key.h, sample, residual, delta)
    return [rows.path]


def _write_sweep(result: ExperimentResult, out_dir: str) -> typing.List[str]:
    config = result.config
    values: typing.Dict[typing.Tuple[str, float], typing.List[float]] = {}
    with _CsvFile(out_dir, "sweep_eps.csv", CONVERGE_COLUMNS) as rows:
        for outcome in result.successful():
            key, metrics = outcome.key, outcome.value
            scaled = metrics.select(config.metric, config.metric_convention, config.metric_weights)
            rows.row(key.method, key.eps, key.h, config.t_end, metrics.err_x, metrics.err_v, metrics.error, scaled)
            values.setdefault((key.method, key.h), []).append(scaled)

    with _CsvFile(out_dir, "sweep_summary.csv", SWEEP_SUMMARY_COLUMNS) as summary:
        for (method, h), scaled_values in values.items():
            try:
                ratio = uniformity_ratio(scaled_values)
            except DomainError as error:
                _LOGGER.warning("no uniformity ratio for %s h=%r: %s", method, h, error)
                continue
            summary.row(method, h, config.metric, min(scaled_values), max(scaled_values), ratio)
    return [rows.path, summary.path]


def _write_trajectory(result: ExperimentResult, out_dir: str) -> typing.List[str]:
    paths = []
    groups: typing.Dict[typing.Tuple[float, float], typing.List[CellOutcome]] = {}
    for outcome in result.successful():
        groups.setdefault((outcome.key.eps, outcome.key.h), []).append(outcome)

    for (eps, h), outcomes in groups.items():
        with _CsvFile(out_dir, f"trajectory_eps{_tag(eps)}_h{_tag(h)}.csv", TRAJECTORY_COLUMNS) as rows:
            for outcome in outcomes:
                times, positions, velocities = outcome.value
                for t, x, v in zip(times, positions, velocities):
                    rows.row(outcome.key.method, float(t), *(float(c) for c in x), *(float(c) for c in v))
        paths.append(rows.path)
    return paths


_WRITERS = {
    "converge": _write_converge,
    "energy": _write_energy,
    "symplectic": _write_symplectic,
    "sweep-eps": _write_sweep,
    "trajectory": _write_trajectory,
}


def write_report(result: ExperimentResult, out_dir: typing.Optional[str] = None) -> typing.List[str]:
    out_dir = out_dir or result.config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = _WRITERS[result.config.command](result, out_dir)
    paths.append(RunMetadata(result).write(out_dir))
    for path in paths:
        _LOGGER.info("wrote %s", path)
    return paths
