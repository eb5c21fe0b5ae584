"""Exception hierarchy for the consensus workbench."""

from typing import Optional


class ConsensusError(Exception):
    """Base class for every domain failure raised by this package."""


class InvalidOrderError(ConsensusError, ValueError):
    """The half state dimension m is not a positive integer."""


class DegenerateFrequencyError(ConsensusError, ValueError):
    """|sin(theta)| is too small for the observability matrix to be inverted."""


class BinomialOverflowError(ConsensusError, OverflowError):
    """A combinatorial term left the signed 64-bit range."""


class WindowLengthError(ConsensusError, ValueError):
    """Output/input windows do not have lengths 2m and 2m-1."""


class NegativeWeightError(ConsensusError, ValueError):
    """An adjacency weight is negative."""


class AsymmetricWeightsError(ConsensusError, ValueError):
    """Weights flagged undirected are not symmetric."""


class TopologyError(ConsensusError, ValueError):
    """The graph does not meet the structural requirement of an operation."""


class ConsistencyError(ConsensusError, RuntimeError):
    """Two independent computations of the same property disagree."""


class OutOfOrderError(ConsensusError, ValueError):
    """An encoder or decoder was stepped with a non-consecutive time index."""


class InfeasibleGainError(ConsensusError, RuntimeError):
    """No epsilon satisfied every required inequality."""

    def __init__(self, message: str, failing: Optional[str] = None) -> None:
        super().__init__(message)
        self.failing = failing


class NonPositiveBoundError(ConsensusError, ValueError):
    """A bound that must be strictly positive was not."""


class InsufficientRateError(ConsensusError, ValueError):
    """The level schedule is below the bound needed for consensus."""


class AssumptionError(ConsensusError, ValueError):
    """Initial states violate the declared bounds C* / C_delta*."""


class NumericOverflowError(ConsensusError, ArithmeticError):
    """A simulated state left the finite floating point range."""


class TraceTooShortError(ConsensusError, ValueError):
    """A trace is too short for rate fitting."""


class ConfigError(ConsensusError, ValueError):
    """A scenario file or override could not be parsed or validated."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None) -> None:
        location = ""
        if source is not None and line is not None:
            location = f"{source}:{line}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
        self.line = line
        self.source = source


class EdgeListError(ConfigError):
    """An edge-list file has a malformed line."""
