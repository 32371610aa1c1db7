import importlib.resources
import logging
import typing

import toml

try:
    import tomllib
except ImportError:
    import toml as tomllib  # type: ignore[no-redef]

from .oracle import OracleConfig
from .problems import PROBLEM_IDS, CPDProblem, make_problem, problem_from_table
from .stepper import FixedPointControls, StepperCollection, step_count
from .utils import ConfigError, config_digest
from .verification import METRIC_CONVENTIONS, METRICS

__all__ = [
    "COMMANDS",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "load_preset",
    "preset_names",
    "serialize",
]

_LOGGER = logging.getLogger(__name__)

COMMANDS = ("converge", "energy", "symplectic", "sweep-eps", "trajectory")

_TOP_LEVEL_KEYS = {
    "command",
    "problem",
    "methods",
    "h",
    "eps",
    "t_end",
    "metric",
    "metric_convention",
    "metric_weights",
    "thin",
    "samples",
    "delta",
    "seed",
    "out_dir",
    "cell_timeout",
    "oracle",
    "fixed_point",
}
_ORACLE_KEYS = {"method", "refinement", "tolerance"}
_FIXED_POINT_KEYS = {"tolerance", "max_iterations", "divergence_bound"}
_PROBLEM_KEYS = {"name", "field", "potential_scale", "x0", "v0"}


def _reject_unknown(table: typing.Mapping[str, typing.Any], allowed: typing.Set[str], path: str = ""):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown config key `{path}{key}`")


def _table(config: typing.Mapping[str, typing.Any], key: str) -> typing.Dict[str, typing.Any]:
    value = config.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"`{key}` must be a table")
    return dict(value)


def _float_list(config: typing.Mapping[str, typing.Any], key: str) -> typing.List[float]:
    if key not in config:
        raise ConfigError(f"config key `{key}` is required")
    value = config[key]
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ConfigError(f"`{key}` grid is empty")
    try:
        return [float(item) for item in values]
    except (TypeError, ValueError) as error:
        raise ConfigError(f"`{key}` must hold numbers") from error


def _vector(table: typing.Mapping[str, typing.Any], key: str, path: str) -> typing.List[float]:
    if key not in table:
        raise ConfigError(f"config key `{path}{key}` is required")
    value = table[key]
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"`{path}{key}` must be a list of three numbers")
    return [float(item) for item in value]


class ExperimentConfig:
    def __init__(self, config: typing.Mapping[str, typing.Any]):
        _reject_unknown(config, _TOP_LEVEL_KEYS)

        self.command = str(config.get("command", "converge"))
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command `{self.command}`, expected one of {', '.join(COMMANDS)}")

        problem = config.get("problem", "P1")
        if isinstance(problem, dict):
            _reject_unknown(problem, _PROBLEM_KEYS, "problem.")
            self.problem: typing.Union[str, typing.Dict[str, typing.Any]] = {
                "name": str(problem.get("name", "inline")),
                "field": _vector(problem, "field", "problem.") if "field" in problem else [0.0, 0.0, 1.0],
                "potential_scale": float(problem.get("potential_scale", 0.0)),
                "x0": _vector(problem, "x0", "problem."),
                "v0": _vector(problem, "v0", "problem."),
            }
        elif str(problem) in PROBLEM_IDS:
            self.problem = str(problem)
        else:
            raise ConfigError(f"unknown problem id `{problem}`, expected one of {', '.join(PROBLEM_IDS)}")

        methods = config.get("methods")
        if isinstance(methods, str):
            methods = [methods]
        if not methods:
            raise ConfigError("`methods` must list at least one method id")
        self.methods = [str(method) for method in methods]
        collection = StepperCollection()
        for method in self.methods:
            if method not in collection:
                raise ConfigError(f"unknown method id `{method}`, expected one of {', '.join(collection.names())}")

        self.steps = _float_list(config, "h")
        self.eps_values = _float_list(config, "eps")
        self.t_end = float(config.get("t_end", 1.0))
        if self.t_end <= 0:
            raise ConfigError("`t_end` must be positive")
        if any(h <= 0 for h in self.steps):
            raise ConfigError("step sizes in `h` must be positive")
        if len(set(self.steps)) != len(self.steps):
            raise ConfigError("`h` holds duplicate step sizes")
        for h in self.steps:
            step_count(self.t_end, h)

        self.metric = str(config.get("metric", "error"))
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric `{self.metric}`, expected one of {', '.join(METRICS)}")
        self.metric_convention = str(config.get("metric_convention", "homogeneous"))
        if self.metric_convention not in METRIC_CONVENTIONS:
            raise ConfigError(f"unknown metric convention `{self.metric_convention}`")
        weights = _table(config, "metric_weights")
        _reject_unknown(weights, set(METRICS), "metric_weights.")
        self.metric_weights = {name: [float(w) for w in pair] for name, pair in weights.items()}
        if any(len(pair) != 2 for pair in self.metric_weights.values()):
            raise ConfigError("every `metric_weights` entry is a pair [position power, velocity power]")

        self.thin = int(config.get("thin", 1))
        self.samples = int(config.get("samples", 4))
        self.delta: typing.Optional[float] = float(config["delta"]) if "delta" in config else None
        self.seed = int(config.get("seed", 0))
        self.out_dir = str(config.get("out_dir", "results"))
        self.cell_timeout = float(config.get("cell_timeout", 600.0))
        if self.thin < 1 or self.samples < 1:
            raise ConfigError("`thin` and `samples` must be at least 1")
        if self.cell_timeout <= 0 or (self.delta is not None and self.delta <= 0):
            raise ConfigError("`cell_timeout` and `delta` must be positive")

        oracle = _table(config, "oracle")
        _reject_unknown(oracle, _ORACLE_KEYS, "oracle.")
        self.oracle = OracleConfig(oracle)
        fixed_point = _table(config, "fixed_point")
        _reject_unknown(fixed_point, _FIXED_POINT_KEYS, "fixed_point.")
        self.fixed_point = FixedPointControls(fixed_point)

        # builds every problem once so bad eps values and singular data fail here
        problems = [self.make_problem(eps) for eps in self.eps_values]
        if not problems[0].field.homogeneous:
            for method in self.methods:
                if collection.get(method).homogeneous_only:
                    raise ConfigError(f"method `{method}` needs a homogeneous field, {problems[0].name} has none")
        if self.command == "symplectic" and not problems[0].has_momentum():
            raise ConfigError(f"{problems[0].name} has no vector potential, symplecticity cannot be measured")

    def make_problem(self, eps: float) -> CPDProblem:
        if isinstance(self.problem, dict):
            return problem_from_table(self.problem, eps)
        return make_problem(self.problem, eps)

    def with_overrides(self, out_dir: typing.Optional[str] = None, seed: typing.Optional[int] = None):
        config = self.as_dict()
        if out_dir is not None:
            config["out_dir"] = out_dir
        if seed is not None:
            config["seed"] = int(seed)
        return ExperimentConfig(config)

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        config: typing.Dict[str, typing.Any] = {
            "command": self.command,
            "problem": self.problem,
            "methods": list(self.methods),
            "h": list(self.steps),
            "eps": list(self.eps_values),
            "t_end": self.t_end,
            "metric": self.metric,
            "metric_convention": self.metric_convention,
            "metric_weights": dict(self.metric_weights),
            "thin": self.thin,
            "samples": self.samples,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "cell_timeout": self.cell_timeout,
            "oracle": self.oracle.as_dict(),
            "fixed_point": self.fixed_point.as_dict(),
        }
        if self.delta is not None:
            config["delta"] = self.delta
        return config

    @property
    def digest(self) -> str:
        return config_digest(self.as_dict())

    @property
    def problem_name(self) -> str:
        return self.problem["name"] if isinstance(self.problem, dict) else self.problem

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.as_dict() == other.as_dict()

    def __repr__(self):
        return f"ExperimentConfig({self.command}, {self.problem_name}, {self.methods})"


def parse_config(text: str) -> ExperimentConfig:
    try:
        config = tomllib.loads(text)
    except ValueError as error:
        # both TOML parsers raise ValueError subclasses carrying the line number
        raise ConfigError(f"config file parsing error:\n{error}") from error
    return ExperimentConfig(config)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf8") as config_file:
            text = config_file.read()
    except FileNotFoundError as error:
        raise ConfigError(f"The file `{path}` does not exist") from error
    except IsADirectoryError as error:
        raise ConfigError(f"`{path}` is not a file") from error
    return parse_config(text)


def _presets():
    return importlib.resources.files("cpdsymp") / "presets"


def preset_names() -> typing.List[str]:
    return sorted(entry.name[: -len(".toml")] for entry in _presets().iterdir() if entry.name.endswith(".toml"))


def load_preset(name: str) -> ExperimentConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset `{name}`, expected one of {', '.join(preset_names())}")
    _LOGGER.info("loading preset %s", name)
    return parse_config((_presets() / f"{name}.toml").read_text(encoding="utf8"))


def serialize(config: ExperimentConfig) -> str:
    return toml.dumps(config.as_dict())
