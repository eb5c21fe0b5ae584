"""Agent dynamics: the real Jordan block, its observability matrix and the
state-recovery matrices used by the encoders."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import mpmath
import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import comb

from .errors import (
    BinomialOverflowError,
    DegenerateFrequencyError,
    InvalidOrderError,
    WindowLengthError,
)

logger = logging.getLogger(__name__)

# Smallest |sin(theta)| accepted; O^-1 and csc(theta) blow up below this.
SIN_FLOOR = 1e-6

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class SystemModel:
    """Immutable bundle of the agent matrices for a given (m, theta)."""
    m: int
    theta: float
    A: np.ndarray
    b: np.ndarray
    O: np.ndarray
    S: np.ndarray
    S_m: np.ndarray
    l: np.ndarray
    b_tilde: Tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        """State dimension 2m."""
        return 2 * self.m

    @property
    def B_tilde(self) -> np.ndarray:
        """Input-compensation vectors stacked as columns, shape (2m, 2m-1)."""
        if not self.b_tilde:
            return np.zeros((self.dim, 0))
        return np.column_stack(self.b_tilde)


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _check_order(m: int) -> int:
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidOrderError(f"order m must be a positive integer, got {m!r}")
    return int(m)


def check_frequency(theta: float) -> None:
    """Raise if theta is too close to a multiple of pi."""
    if abs(np.sin(theta)) < SIN_FLOOR:
        raise DegenerateFrequencyError(
            f"|sin(theta)| = {abs(np.sin(theta)):.3e} is below {SIN_FLOOR:g}; "
            "the observability matrix is singular"
        )


def rotation(theta: float) -> np.ndarray:
    """The 2x2 block Q on the diagonal of A."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def jordan_matrix(m: int, theta: float) -> np.ndarray:
    """Block upper bidiagonal matrix with m copies of Q and identity superblocks."""
    return np.kron(np.eye(m), rotation(theta)) + np.kron(np.eye(m, k=1), np.eye(2))


def build_system(m: int, theta: float) -> SystemModel:
    """Build A, b, O, S = A^{2m-1} O^{-1}, S_m, l(theta) and the vectors b~_n."""
    m = _check_order(m)
    check_frequency(theta)
    theta = float(theta)
    n = 2 * m

    A = jordan_matrix(m, theta)
    b = np.zeros(n)
    b[-1] = 1.0

    # A^0 .. A^{2m-1}
    powers = [np.eye(n)]
    for _ in range(n - 1):
        powers.append(powers[-1] @ A)

    O = np.vstack([power[0] for power in powers])
    # S O = A^{2m-1}, solved through an LU factorization of O^T
    S = lu_solve(lu_factor(O.T), powers[-1].T).T

    b_tilde = []
    for order in range(1, n):
        b_n = np.zeros(n)
        for r in range(order):
            b_n[n - order + r] = powers[r][0, n - 1]
        b_tilde.append(_freeze(-S @ b_n + powers[order - 1][:, n - 1]))

    l = _combine_rows(S, theta, m)

    logger.debug(f"Built system m={m}, theta={theta:.6f}, cond(O)={np.linalg.cond(O):.3e}")
    return SystemModel(
        m=m,
        theta=theta,
        A=_freeze(A),
        b=_freeze(b),
        O=_freeze(O),
        S=_freeze(S),
        S_m=_freeze(S[1:].copy()),
        l=_freeze(l),
        b_tilde=tuple(b_tilde),
    )


def _combine_rows(S: np.ndarray, theta: float, m: int) -> np.ndarray:
    combined = np.cos(theta) * S[0] + np.sin(theta) * S[1]
    if m >= 2:
        combined = combined + S[2]
    return combined


def l_closed_form(m: int, theta: float) -> np.ndarray:
    """Closed-form row combination l_k(theta), k = 0 .. 2m-1, with exact binomials."""
    m = _check_order(m)
    two_cos = 2.0 * np.cos(theta)
    l = np.empty(2 * m)
    for k in range(2 * m):
        total = 0.0
        for h in range(k // 2 + 1):
            r = k - 2 * h
            if r > m:
                continue
            coefficient = comb(m, r, exact=True) * comb(m - r, h, exact=True)
            if coefficient > INT64_MAX:
                raise BinomialOverflowError(f"C({m},{r})*C({m - r},{h}) exceeds 64 bits")
            total += coefficient * two_cos**r
        sign = -1.0 if k % 2 == 0 else 1.0
        l[k] = sign * total
    return l


def l_abs_sum_identity(m: int, theta: float) -> float:
    """Right-hand side of sum_k |l_k(theta)| = [2(1+|cos theta|)]^m - 1."""
    return (2.0 * (1.0 + abs(np.cos(theta)))) ** m - 1.0


def l_direct(model: SystemModel, digits: Optional[int] = None) -> np.ndarray:
    """Row combination cos(theta) S(1,.) + sin(theta) S(2,.) + S(3,.) of the built S.

    The third row is omitted for m = 1. With ``digits`` the combination is
    recomputed in mpmath at that many decimal digits; the rows of A^{2m-1}
    are combined before the single solve against O, which is the same
    combination of the rows of S by linearity.
    """
    if digits is None:
        return _combine_rows(np.asarray(model.S), model.theta, model.m).copy()
    return _l_direct_extended(model.m, model.theta, digits)


def _l_direct_extended(m: int, theta: float, digits: int) -> np.ndarray:
    n = 2 * m
    with mpmath.workdps(digits):
        c = mpmath.cos(mpmath.mpf(theta))
        s = mpmath.sin(mpmath.mpf(theta))
        zero = mpmath.mpf(0)

        def times_A(row: List) -> List:
            # row @ A using the block bidiagonal structure
            out = []
            for block in range(m):
                a, b = row[2 * block], row[2 * block + 1]
                left, right = a * c - b * s, a * s + b * c
                if block:
                    left += row[2 * block - 2]
                    right += row[2 * block - 1]
                out.extend((left, right))
            return out

        def unit_row(index: int) -> List:
            row = [zero] * n
            row[index] = mpmath.mpf(1)
            return row

        O = mpmath.matrix(n, n)
        row = unit_row(0)
        for k in range(n):
            for j in range(n):
                O[k, j] = row[j]
            row = times_A(row)

        weights = [c, s, mpmath.mpf(1)] if m >= 2 else [c, s]
        target = [zero] * n
        for index, weight in enumerate(weights):
            top = unit_row(index)
            for _ in range(n - 1):
                top = times_A(top)
            target = [total + weight * value for total, value in zip(target, top)]

        solution = mpmath.lu_solve(O.T, mpmath.matrix(target))
        return np.array([float(solution[j]) for j in range(n)])


def reconstruct_state(model: SystemModel, output_window, input_window) -> np.ndarray:
    """Recover x(t) from outputs y(t-2m+1..t) and inputs u(t-2m+1..t-1)."""
    n = model.dim
    outputs = np.asarray(output_window, dtype=float)
    inputs = np.asarray(input_window, dtype=float)
    if outputs.shape != (n,):
        raise WindowLengthError(f"expected {n} outputs, got shape {outputs.shape}")
    if inputs.shape != (n - 1,):
        raise WindowLengthError(f"expected {n - 1} inputs, got shape {inputs.shape}")
    # column n-1 of B_tilde multiplies u(t-n)
    return model.S @ outputs + model.B_tilde @ inputs[::-1]


def simulate_open_loop(model: SystemModel, x0, inputs) -> np.ndarray:
    """Propagate one agent: returns states x(0..T) for inputs u(0..T-1)."""
    x = np.asarray(x0, dtype=float).copy()
    states = [x.copy()]
    for u in np.asarray(inputs, dtype=float):
        x = model.A @ x + model.b * u
        states.append(x.copy())
    return np.array(states)
