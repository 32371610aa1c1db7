from .config import ExperimentConfig, load_config, load_preset, parse_config, preset_names, serialize
from .experiment import ExperimentRunner, run_experiment
from .oracle import OracleConfig, oracle_solve
from .problems import CPDProblem, State, make_problem
from .report import VERSION as __version__, write_report
from .stepper import FixedPointControls, StepperCollection, integrate

__all__ = [
    "CPDProblem",
    "ExperimentConfig",
    "ExperimentRunner",
    "FixedPointControls",
    "OracleConfig",
    "State",
    "StepperCollection",
    "integrate",
    "load_config",
    "load_preset",
    "make_problem",
    "oracle_solve",
    "parse_config",
    "preset_names",
    "run_experiment",
    "serialize",
    "write_report",
]
