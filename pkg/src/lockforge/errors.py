"""Error types shared across the toolchain.

Every error carries enough context to be reported with module attribution,
and the CLI maps each family onto a stable exit code.
"""

from __future__ import annotations


class LockforgeError(Exception):
    """Base class for all toolchain errors."""

    exit_code = 1


class ParseError(LockforgeError):
    """Malformed input text (theory, operations, mappings, template)."""

    exit_code = 1

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}" + (f", col {column}" if column is not None else "") + f": {message}"
        super().__init__(message)


class ValidationError(LockforgeError):
    """Well-formed input that violates a knowledge-level invariant."""

    exit_code = 1


class StratificationError(ValidationError):
    """Negative cycle in the predicate dependency graph."""


class KeyOrderError(ValidationError):
    """Contradictory symbolic key constraints (cycle through lt)."""


class AnalysisError(LockforgeError):
    """An analysis could not produce a result (no instance, no order)."""

    exit_code = 2


class EmissionError(LockforgeError):
    """Code generation failed (missing mapping, unanchored block).

    Treated as an output-production failure by the CLI, like an I/O error:
    analysis verdicts are still written before this is raised."""

    exit_code = 4


class SimulationError(LockforgeError):
    """Simulator misuse (bad schedule, missing synthesis outputs)."""

    exit_code = 1
