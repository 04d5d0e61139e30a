"""Exception types for the diffblocks library.

Every error carries a distinct ``exit_code`` that the command-line harness
uses when the error escapes a run.
"""

from dataclasses import dataclass
from typing import ClassVar


@dataclass
class DiffBlocksError(Exception):
    """Base class for all library errors."""

    message: str

    exit_code: ClassVar[int] = 1

    def __str__(self) -> str:
        return f"Error: {self.message}"


@dataclass
class ParseError(DiffBlocksError):
    """Malformed signal or configuration text."""

    line: int = 0
    column: int = 1

    exit_code: ClassVar[int] = 3

    def __str__(self) -> str:
        return f"Parse error at line {self.line}, column {self.column}: {self.message}"


@dataclass
class ParameterError(DiffBlocksError):
    """Invalid numerical parameter (time step, cycle length, ...)."""

    exit_code: ClassVar[int] = 5

    def __str__(self) -> str:
        return f"Parameter error: {self.message}"


@dataclass
class ConfigError(ParameterError):
    """Invalid or conflicting experiment configuration."""

    key: str | None = None

    exit_code: ClassVar[int] = 4

    def __str__(self) -> str:
        if self.key:
            return f"Config error for key '{self.key}': {self.message}"
        return f"Config error: {self.message}"


@dataclass
class SizeError(DiffBlocksError):
    """Signal or operator dimensions do not fit."""

    exit_code: ClassVar[int] = 6

    def __str__(self) -> str:
        return f"Size error: {self.message}"


@dataclass
class CapabilityError(DiffBlocksError):
    """Requested feature is not supported (e.g. derivative order > 2)."""

    exit_code: ClassVar[int] = 7

    def __str__(self) -> str:
        return f"Unsupported: {self.message}"


@dataclass
class ConvergenceError(DiffBlocksError):
    """An iterative method hit its iteration cap."""

    iterations: int = 0

    exit_code: ClassVar[int] = 8

    def __str__(self) -> str:
        return f"No convergence after {self.iterations} iterations: {self.message}"


@dataclass
class DivergenceError(DiffBlocksError):
    """Non-finite values appeared during time stepping."""

    step: int | None = None

    exit_code: ClassVar[int] = 9

    def __str__(self) -> str:
        if self.step is not None:
            return f"Divergence at step {self.step}: {self.message}"
        return f"Divergence: {self.message}"


@dataclass
class SingularityError(DiffBlocksError):
    """A matrix diagonal required by a smoother vanishes."""

    exit_code: ClassVar[int] = 10

    def __str__(self) -> str:
        return f"Singular operator: {self.message}"


@dataclass
class ResourceError(DiffBlocksError):
    """A run exceeded its resource budget."""

    resource: str | None = None

    exit_code: ClassVar[int] = 11

    def __str__(self) -> str:
        if self.resource:
            return f"Resource error for '{self.resource}': {self.message}"
        return f"Resource error: {self.message}"
