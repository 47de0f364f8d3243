"""Exception hierarchy for fglab.

Every error carries the process exit code the CLI uses when the error escapes a
subcommand: 2 for configuration problems, 3 for checkpoint problems, 4 for numeric
failures.
"""

from typing import ClassVar


class FGLabError(Exception):
    """Base class for all fglab errors."""

    exit_code: ClassVar[int] = 1


class ConfigError(FGLabError):
    """Invalid configuration file, key, value, or CLI parameter."""

    exit_code = 2


class PlacementError(ConfigError):
    """No valid placement of agents, items, or obstacles exists for a configuration."""


class ProbeError(ConfigError):
    """Probe dataset cannot be fitted (single class, too few samples, wrong target)."""


class CheckpointError(FGLabError):
    """Missing, corrupt, or mismatching checkpoint data."""

    exit_code = 3


class NumericError(FGLabError):
    """Non-finite values where finite values are required."""

    exit_code = 4


class ShapeError(NumericError):
    """Operands of a tensor primitive have incompatible shapes."""

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        """Build the message from the primitive name and every operand shape.

        Args:
            op: Name of the primitive.
            *shapes: Shapes of the operands, in argument order.
        """
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")
        self.op = op
        self.shapes = shapes


class AutodiffError(NumericError):
    """Violation of the backward-pass contract."""


class EpisodeFinishedError(FGLabError):
    """A finished episode was stepped again."""


class UndefinedMetricError(FGLabError):
    """A metric is undefined for the given inputs (zero denominator or zero variance)."""


class TokenError(FGLabError, ValueError):
    """A message token lies outside ``[0, vocab_size)``."""
