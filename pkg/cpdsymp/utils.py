import hashlib
import json
import typing

__all__ = [
    "config_digest",
    "format_float",
    "ConfigError",
    "DomainError",
    "UnsupportedOperationError",
    "StepFailure",
    "OracleError",
]


def config_digest(config: typing.Mapping[str, typing.Any]) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf8")).hexdigest()


def format_float(value: float) -> str:
    # repr is the shortest decimal that round-trips
    return repr(float(value))


class ConfigError(Exception):
    pass


class _StepIndexed(Exception):
    def __init__(self, message: str, step_index: typing.Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.step_index = step_index

    def __str__(self):
        if self.step_index is None:
            return self.message
        return f"step {self.step_index}: {self.message}"

    def __reduce__(self):
        # keeps the index when the error crosses a worker process
        return type(self), (self.message, self.step_index)


class DomainError(_StepIndexed, ValueError):
    pass


class UnsupportedOperationError(Exception):
    pass


class StepFailure(_StepIndexed):
    pass


class OracleError(Exception):
    pass
