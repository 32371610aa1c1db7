import asyncio
import concurrent.futures
import functools
import logging
import os
import time
import typing

import async_timeout
import numpy as np
from async_lru import alru_cache

from .config import ExperimentConfig
from .oracle import OracleSolution, oracle_solve
from .problems import State
from .stepper import Stepper, StepperCollection, integrate, step_count
from .verification import energy_series, measure_error, symplecticity_report

__all__ = [
    "CellKey",
    "CellOutcome",
    "ExperimentResult",
    "ExperimentRunner",
    "run_experiment",
]

_LOGGER = logging.getLogger(__name__)


class CellKey(typing.NamedTuple):
    method: str
    eps: float
    h: float

    def __str__(self):
        return f"{self.method} eps={self.eps!r} h={self.h!r}"


class CellOutcome(typing.NamedTuple):
    key: CellKey
    value: typing.Any = None
    stats: typing.Optional[typing.Dict[str, int]] = None
    error: typing.Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


# cell bodies run in worker processes and take only picklable arguments


def _stepper(config: ExperimentConfig, method: str) -> Stepper:
    return StepperCollection().get(method, config.fixed_point)


def reference_cell(config: ExperimentConfig, eps: float, h_min: float) -> OracleSolution:
    return oracle_solve(config.make_problem(eps), config.t_end, h_min, config.oracle, controls=config.fixed_point)


def error_cell(config: ExperimentConfig, key: CellKey, reference: State):
    stepper = _stepper(config, key.method)
    metrics = measure_error(stepper, config.make_problem(key.eps), key.h, config.t_end, reference)
    return metrics, stepper.stats.as_dict()


def energy_cell(config: ExperimentConfig, key: CellKey):
    stepper = _stepper(config, key.method)
    problem = config.make_problem(key.eps)
    trajectory = integrate(stepper, problem, key.h, step_count(config.t_end, key.h), config.thin)
    return energy_series(trajectory), stepper.stats.as_dict()


def symplectic_cell(config: ExperimentConfig, key: CellKey):
    stepper = _stepper(config, key.method)
    report = symplecticity_report(
        stepper, config.make_problem(key.eps), key.h, config.samples, config.seed, config.delta
    )
    return report, stepper.stats.as_dict()


def trajectory_cell(config: ExperimentConfig, key: CellKey):
    stepper = _stepper(config, key.method)
    problem = config.make_problem(key.eps)
    trajectory = integrate(stepper, problem, key.h, step_count(config.t_end, key.h), config.thin)
    positions = np.array([state.x for state in trajectory.states])
    velocities = np.array([state.v for state in trajectory.states])
    return (trajectory.times, positions, velocities), stepper.stats.as_dict()


_CELL_BODIES = {
    "energy": energy_cell,
    "symplectic": symplectic_cell,
    "trajectory": trajectory_cell,
}


class ExperimentResult:
    def __init__(
        self,
        config: ExperimentConfig,
        outcomes: typing.List[CellOutcome],
        oracle_checks: typing.Dict[str, typing.Dict[str, typing.Any]],
        wall_clock: float,
    ):
        self.config = config
        self.outcomes = outcomes
        self.oracle_checks = oracle_checks
        self.wall_clock = wall_clock

    @property
    def failed(self) -> typing.List[CellOutcome]:
        return [outcome for outcome in self.outcomes if not outcome.ok]

    @property
    def oracle_failures(self) -> typing.List[str]:
        return [key for key, check in self.oracle_checks.items() if not check.get("passed")]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed or self.oracle_failures else 0

    def successful(self) -> typing.List[CellOutcome]:
        return [outcome for outcome in self.outcomes if outcome.ok]


class ExperimentRunner:
    def __init__(self, config: ExperimentConfig, jobs: typing.Optional[int] = None):
        self.config = config
        self.jobs = int(jobs or os.cpu_count() or 1)
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        self._executor = concurrent.futures.ProcessPoolExecutor(max_workers=self.jobs)
        self._semaphore = asyncio.Semaphore(self.jobs)
        self.oracle_checks: typing.Dict[str, typing.Dict[str, typing.Any]] = {}
        self._timed_out = False

    async def _run_in_executor(self, func, *args):
        partial_function = functools.partial(func, *args)
        async with self._semaphore:
            async with async_timeout.timeout(self.config.cell_timeout):
                return await asyncio.get_event_loop().run_in_executor(self._executor, partial_function)

    @alru_cache(maxsize=None)
    async def reference(self, eps: float, h_min: float) -> OracleSolution:
        check_key = f"eps={eps!r} h_min={h_min!r}"
        try:
            solution = await self._run_in_executor(reference_cell, self.config, eps, h_min)
        except Exception as error:
            self.oracle_checks[check_key] = {"passed": False, "error": str(error) or type(error).__name__}
            raise
        self.oracle_checks[check_key] = solution.as_dict()
        return solution

    def _reference_step(self, h: float) -> float:
        # sweeps compare at each step size, convergence runs share the finest one
        return h if self.config.command == "sweep-eps" else min(self.config.steps)

    async def _cell(self, key: CellKey) -> CellOutcome:
        _LOGGER.info("cell %s started", key)
        try:
            if self.config.command in ("converge", "sweep-eps"):
                reference = await self.reference(key.eps, self._reference_step(key.h))
                value, stats = await self._run_in_executor(error_cell, self.config, key, reference.state)
            else:
                value, stats = await self._run_in_executor(_CELL_BODIES[self.config.command], self.config, key)
        except asyncio.TimeoutError:
            _LOGGER.error("cell %s timed out after %gs", key, self.config.cell_timeout)
            self._timed_out = True
            return CellOutcome(key, error=f"timed out after {self.config.cell_timeout:g}s")
        except Exception as error:
            _LOGGER.exception("cell %s failed", key)
            return CellOutcome(key, error=f"{type(error).__name__}: {error}")
        _LOGGER.info("cell %s finished", key)
        return CellOutcome(key, value, stats)

    def cells(self) -> typing.List[CellKey]:
        return [
            CellKey(method, eps, h)
            for method in self.config.methods
            for eps in self.config.eps_values
            for h in self.config.steps
        ]

    def _terminate_workers(self):
        # a timed out cell keeps its worker busy until killed
        processes = getattr(self._executor, "_processes", None) or {}
        for process in list(processes.values()):
            if process.is_alive():
                _LOGGER.warning("terminating worker process %s", process.pid)
                process.terminate()
        for process in list(processes.values()):
            process.join()

    async def run(self) -> ExperimentResult:
        started = time.perf_counter()
        try:
            outcomes = await asyncio.gather(*(self._cell(key) for key in self.cells()))
        finally:
            if self._timed_out:
                self._terminate_workers()
            self._executor.shutdown(wait=False, cancel_futures=True)
        return ExperimentResult(self.config, list(outcomes), dict(self.oracle_checks), time.perf_counter() - started)


async def run_experiment(config: ExperimentConfig, jobs: typing.Optional[int] = None) -> ExperimentResult:
    return await ExperimentRunner(config, jobs).run()
