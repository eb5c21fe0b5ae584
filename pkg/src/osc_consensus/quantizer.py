"""Finite-level symmetric uniform quantizer and the two-phase level schedule."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InvalidOrderError
from .model import check_frequency

logger = logging.getLogger(__name__)

# Absorbs rounding in the bound, e.g. cos(pi/3) = 0.5000000000000001.
BOUND_TOL = 1e-9
SATURATION_TOL = 1e-12


def quantize(y: Union[float, np.ndarray], M: int) -> Union[int, np.ndarray]:
    """Map y to the nearest integer in [-M, M]; half-integers round away from zero."""
    if M < 1:
        raise ValueError(f"quantizer needs at least one level, got M={M}")
    values = np.asarray(y, dtype=float)
    q = np.sign(values) * np.minimum(np.floor(np.abs(values) + 0.5), M)
    q = q.astype(np.int64)
    if q.ndim == 0:
        return int(q)
    return q


def quantization_error(d: Union[float, np.ndarray], symbol: Union[int, np.ndarray]) -> np.ndarray:
    """Scaled quantization error Delta = symbol - d."""
    return np.asarray(symbol, dtype=float) - np.asarray(d, dtype=float)


def is_saturated(d: Union[float, np.ndarray], symbol: Union[int, np.ndarray]) -> Union[bool, np.ndarray]:
    """True where the quantizer clamped and the 1/2 error bound is lost."""
    flags = np.abs(quantization_error(d, symbol)) > 0.5 + SATURATION_TOL
    if np.ndim(flags) == 0:
        return bool(flags)
    return flags


def bits_for_levels(M: int) -> int:
    """ceil(log2(2M)) bits encode the 2M+1 symbols when 0 is sent as silence."""
    if M < 1:
        raise ValueError(f"quantizer needs at least one level, got M={M}")
    return (2 * int(M) - 1).bit_length()


def steady_bound(m: int, theta: float) -> float:
    """Lower bound on M(t) for t > 2m."""
    c = abs(math.cos(theta))
    if m == 1:
        return c + 0.5
    return 2 ** (m - 1) * (1.0 + c) ** m - 0.5


def input_bound(m: int, theta: float) -> float:
    """Bound on the steady quantizer input |d_i(t)| when no saturation occurs."""
    c = abs(math.cos(theta))
    if m == 1:
        return c + 1.0
    return 2 ** (m - 1) * (1.0 + c) ** m


@dataclass(frozen=True)
class LevelSchedule:
    """M(t) = M_initial for t <= 2m and M_steady afterwards."""
    m: int
    theta: float
    M_initial: int
    M_steady: int

    @property
    def bits(self) -> int:
        return bits_for_levels(self.M_steady)

    @property
    def bits_initial(self) -> int:
        return bits_for_levels(self.M_initial)

    @property
    def bound(self) -> float:
        return steady_bound(self.m, self.theta)

    def levels_at(self, t: int) -> int:
        """Number of positive levels used at step t (t >= 1)."""
        return self.M_initial if t <= 2 * self.m else self.M_steady

    def bits_at(self, t: int) -> int:
        return bits_for_levels(self.levels_at(t))

    def meets_bound(self) -> bool:
        """True when M_steady satisfies the steady-phase rate condition."""
        return self.M_steady >= self.bound - BOUND_TOL


def _check_order(m: int) -> None:
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidOrderError(f"order m must be a positive integer, got {m!r}")


def minimal_schedule(m: int, theta: float, M_initial: int = 1) -> LevelSchedule:
    """Smallest steady level count meeting the rate condition for (m, theta)."""
    _check_order(m)
    check_frequency(theta)
    M_steady = max(1, math.ceil(steady_bound(m, theta) - BOUND_TOL))
    return LevelSchedule(m=int(m), theta=float(theta), M_initial=M_initial, M_steady=M_steady)


def make_schedule(m: int, theta: float, levels: Optional[int] = None, levels_initial: Optional[int] = None) -> LevelSchedule:
    """Schedule with optional explicit level counts; missing ones default to the minimal schedule."""
    minimal = minimal_schedule(m, theta)
    M_steady = minimal.M_steady if levels is None else int(levels)
    M_initial = minimal.M_initial if levels_initial is None else int(levels_initial)
    if M_steady < 1 or M_initial < 1:
        raise ValueError(f"level counts must be positive, got initial={M_initial}, steady={M_steady}")
    schedule = LevelSchedule(m=minimal.m, theta=minimal.theta, M_initial=M_initial, M_steady=M_steady)
    if not schedule.meets_bound():
        logger.warning(
            f"M_steady={M_steady} is below the rate bound {schedule.bound:.4f} for m={m}"
        )
    return schedule
