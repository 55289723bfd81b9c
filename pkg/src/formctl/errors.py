"""Exception types raised by formctl; each maps to a CLI exit code."""

from __future__ import annotations


class FormctlError(Exception):
    exit_code = 1


class ConfigError(FormctlError, ValueError):
    """Invalid scenario, parameter set, or argument."""

    exit_code = 2

    def __init__(self, message: str, path: str | None = None) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DivergenceError(FormctlError, ArithmeticError):
    """The closed loop produced a non-finite state."""

    exit_code = 3

    def __init__(self, message: str, step: int | None = None) -> None:
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


class SingularInputError(DivergenceError):
    """A robot's input matrix cannot be inverted for torque recovery."""

    def __init__(self, robot: int, detail: str = "input matrix B is singular") -> None:
        self.robot = robot
        super().__init__(f"robot {robot}: {detail}")


class OutputError(FormctlError, OSError):
    exit_code = 4
