"""Perturbation analysis of the closed-loop blocks A - lambda*K.

Spectral radii, first-order slope fits and the entrywise power bounds for
the graded gain vectors used by the controller.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from numpy.polynomial import polynomial as P

from .model import SystemModel

logger = logging.getLogger(__name__)

EPSILON_FLOOR = 1e-6
DISTINCT_GAP = 1e-10
# Below this epsilon the closed-loop spectrum is computed in mpmath.
EXTENDED_PRECISION_BELOW = 1e-5


def gain_exponents(m: int) -> np.ndarray:
    """Power of epsilon applied to each entry of c: m-j for pair j < m, 1 for pair m."""
    pairs = np.array([m - j if j < m else 1 for j in range(1, m + 1)], dtype=float)
    return np.repeat(pairs, 2)


def graded_gains(c: Sequence[float], epsilon: float) -> np.ndarray:
    """Gain vector k from coefficients c at a given epsilon."""
    c = np.asarray(c, dtype=float)
    return c * epsilon ** gain_exponents(len(c) // 2)


def closed_loop_matrix(model: SystemModel, k: Sequence[float], lam: complex) -> np.ndarray:
    """A - lambda*K with k as the last row of K."""
    k = np.asarray(k, dtype=float)
    if k.shape != (model.dim,):
        raise ValueError(f"gain vector must have length {model.dim}, got {k.shape}")
    dtype = complex if np.iscomplexobj(lam) and np.imag(lam) != 0 else float
    matrix = np.array(model.A, dtype=dtype)
    matrix[-1] = matrix[-1] - (lam if dtype is complex else np.real(lam)) * k
    return matrix


def spectral_radius(matrix: np.ndarray, digits: Optional[int] = None) -> float:
    """Largest eigenvalue modulus; ``digits`` switches to an mpmath eigensolve."""
    if digits is None:
        return float(np.max(np.abs(np.linalg.eigvals(matrix))))
    with mpmath.workdps(digits):
        rows = [[mpmath.mpmathify(complex(value)) for value in row] for row in np.asarray(matrix)]
        eigenvalues = mpmath.eig(mpmath.matrix(rows), left=False, right=False)
        return float(max(abs(value) for value in eigenvalues))


def digits_for(epsilon: float) -> Optional[int]:
    """Working precision needed to resolve O(epsilon) shifts of clustered eigenvalues."""
    if epsilon >= EXTENDED_PRECISION_BELOW:
        return None
    return 20 + 2 * math.ceil(-math.log10(epsilon))


def eigen_distinct(matrix: np.ndarray, gap: float = DISTINCT_GAP) -> bool:
    """True when every pair of eigenvalues is separated by more than gap."""
    values = np.linalg.eigvals(matrix)
    if len(values) < 2:
        return True
    differences = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(differences, np.inf)
    return bool(np.min(differences) > gap)


def coefficient_polynomial(c: Sequence[float]) -> np.ndarray:
    """Complex coefficients c_{2j} - c_{2j-1}*i of theta^(j-1), j = 1 .. m-1, low to high."""
    c = np.asarray(c, dtype=float)
    m = len(c) // 2
    return np.array([c[2 * j - 1] - 1j * c[2 * j - 2] for j in range(1, m)], dtype=complex)


def coefficient_terms(m: int, theta: float, c: Sequence[float]) -> Tuple[Optional[float], Optional[float], np.ndarray]:
    """(R_m, H, roots) implied by a coefficient vector.

    R_m is None for m = 1; H is 0 for m = 2 and None for m = 1; the roots
    of the coefficient polynomial exist only for m >= 3.
    """
    c = np.asarray(c, dtype=float)
    if m == 1:
        return None, None, np.zeros(0, dtype=complex)
    s, co = math.sin(theta), math.cos(theta)
    R_m = 0.5 + 0.5 * (c[2 * m - 2] * s - c[2 * m - 1] * co)
    if m == 2:
        return R_m, 0.0, np.zeros(0, dtype=complex)
    # 1-based c_{2m-5}, c_{2m-4}, c_{2m-3}, c_{2m-2}
    numerator = c[2 * m - 6] * 1j - c[2 * m - 5]
    denominator = c[2 * m - 4] * 1j - c[2 * m - 3]
    H = float(np.real(numerator / denominator * np.exp(-1j * theta)))
    roots = P.polyroots(coefficient_polynomial(c))
    return R_m, H, np.asarray(roots, dtype=complex)


def predicted_slope(m: int, theta: float, c: Sequence[float], lam: complex) -> float:
    """First-order coefficient a in rho(epsilon) = 1 + a*epsilon + o(epsilon)."""
    c = np.asarray(c, dtype=float)
    if m == 1:
        return -0.5 * float(np.real(lam)) * (c[1] * math.cos(theta) - c[0] * math.sin(theta))
    R_m, H, roots = coefficient_terms(m, theta, c)
    lam = float(np.real(lam))
    if m == 2:
        return 0.5 * lam * R_m
    root_terms = [2.0 * float(np.real(root * np.exp(-1j * theta))) for root in roots]
    return 0.5 * max([lam * R_m + H] + root_terms)


def entry_bound_constants(m: int, lam: complex, roots: Sequence[complex]) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pair constants M_j and epsilon exponents of the entrywise power bounds."""
    if m == 1:
        return np.array([2.5]), np.array([0.0])
    lam = float(np.real(lam))
    roots = np.asarray(roots, dtype=complex)
    constants = np.empty(m)
    exponents = np.empty(m)

    def root_sum(power: int) -> float:
        total = 0.0
        for n, root in enumerate(roots):
            others = np.delete(roots, n)
            total += abs(root) ** power / float(np.prod(np.abs(others - root)))
        return total

    for j in range(1, m + 1):
        if j <= m - 3:
            constants[j - 1] = 5.0 / (2.0 * lam) * root_sum(j - 1)
        elif j == m - 2:
            constants[j - 1] = 5.0 / (2.0 * lam) * (root_sum(m - 3) + 1.0)
        elif j == m - 1:
            constants[j - 1] = 3.0 / math.sqrt(2.0 * lam)
        else:
            constants[j - 1] = 2.5
        exponents[j - 1] = j - (m - 1) if j <= m - 2 else (j - m) / 2.0
    return constants, exponents


@dataclass
class SpectralReport:
    """Radius samples and slope comparison for one closed-loop eigenvalue."""
    lam: complex
    epsilons: List[float]
    radii: List[float]
    slope_fit: float
    predicted_slope: float
    eigen_distinct: bool
    lemma2_margins: Optional[Dict[int, float]] = None
    diagnostics: List[str] = field(default_factory=list)

    @property
    def relative_error(self) -> float:
        if self.predicted_slope == 0:
            return float("inf")
        return abs(self.slope_fit - self.predicted_slope) / abs(self.predicted_slope)

    def predicted_rho(self, epsilon: float) -> float:
        return 1.0 + self.predicted_slope * epsilon


def fit_slope(epsilons: Sequence[float], radii: Sequence[float]) -> float:
    """Least-squares estimate of a in (rho - 1)/epsilon = a + b*sqrt(epsilon)."""
    eps = np.asarray(epsilons, dtype=float)
    ratios = (np.asarray(radii, dtype=float) - 1.0) / eps
    keep = np.isfinite(ratios)
    eps, ratios = eps[keep], ratios[keep]
    if len(ratios) == 0:
        return float("nan")
    if len(ratios) < 3:
        return float(np.mean(ratios))
    design = np.column_stack([np.ones_like(eps), np.sqrt(eps)])
    solution, *_ = np.linalg.lstsq(design, ratios, rcond=None)
    return float(solution[0])


def radius_expansion_check(
    model: SystemModel,
    c: Sequence[float],
    lam: complex,
    epsilons: Sequence[float],
    power_epsilon: Optional[float] = None,
    s_max: int = 2000,
    trials: int = 100,
    seed: Optional[int] = None,
) -> SpectralReport:
    """Sample rho(A - lambda*K(epsilon)) and compare the fitted slope with the prediction.

    With ``power_epsilon`` set, the entrywise power-bound ratios at that
    epsilon are attached as ``lemma2_margins``.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("at least one epsilon sample is required")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilon samples must be strictly decreasing")
    if epsilons[-1] < EPSILON_FLOOR:
        raise ValueError(f"epsilon samples must stay above {EPSILON_FLOOR:g}")

    radii: List[float] = []
    diagnostics: List[str] = []
    for epsilon in epsilons:
        matrix = closed_loop_matrix(model, graded_gains(c, epsilon), lam)
        try:
            radii.append(spectral_radius(matrix))
        except np.linalg.LinAlgError as exc:
            diagnostics.append(f"eigensolve failed at epsilon={epsilon:g}: {exc}")
            radii.append(float("nan"))

    smallest = closed_loop_matrix(model, graded_gains(c, epsilons[-1]), lam)
    report = SpectralReport(
        lam=lam,
        epsilons=epsilons,
        radii=radii,
        slope_fit=fit_slope(epsilons, radii),
        predicted_slope=predicted_slope(model.m, model.theta, c, lam),
        eigen_distinct=eigen_distinct(smallest),
        diagnostics=diagnostics,
    )
    if power_epsilon is not None:
        k = graded_gains(c, power_epsilon)
        report.lemma2_margins = power_bound_check(model, k, lam, power_epsilon, s_max, trials, seed=seed)
    for message in diagnostics:
        logger.warning(message)
    logger.debug(
        f"lambda={lam}: slope fit {report.slope_fit:.6f} vs predicted {report.predicted_slope:.6f}"
    )
    return report


def power_bound_check(
    model: SystemModel,
    k: Sequence[float],
    lam: complex,
    epsilon: float,
    s_max: int,
    trials: int,
    seed: Optional[int] = None,
    xi: Optional[np.ndarray] = None,
) -> Dict[int, float]:
    """Worst ratio of |(A_i^s xi)_{2j-1}|, |(A_i^s xi)_{2j}| to the entrywise bound, per pair j.

    Vectors are drawn uniformly and scaled to unit infinity norm unless
    ``xi`` (shape 2m x trials) is given.
    """
    m = model.m
    k = np.asarray(k, dtype=float)
    c = k / epsilon ** gain_exponents(m)
    _, _, roots = coefficient_terms(m, model.theta, c)
    constants, exponents = entry_bound_constants(m, lam, roots)
    matrix = closed_loop_matrix(model, k, lam)
    rho = spectral_radius(matrix)

    if xi is None:
        rng = np.random.default_rng(seed)
        xi = rng.uniform(-1.0, 1.0, size=(model.dim, trials))
    vectors = np.array(xi, dtype=float)
    norms = np.max(np.abs(vectors), axis=0)

    worst = np.zeros(m)
    if not np.any(norms > 0):
        return {j + 1: 0.0 for j in range(m)}
    base = constants * epsilon**exponents
    for s in range(s_max + 1):
        pair_peaks = np.max(np.abs(vectors).reshape(m, 2, -1), axis=1)
        bounds = np.outer(base * rho**s, norms)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(bounds > 0, pair_peaks / bounds, 0.0)
        worst = np.maximum(worst, np.max(ratios, axis=1))
        vectors = matrix @ vectors
    return {j + 1: float(worst[j]) for j in range(m)}


def report_rows(model: SystemModel, report: SpectralReport) -> List[Dict[str, float]]:
    """Rows for the spectral CSV, one per epsilon sample."""
    rows = []
    for epsilon, rho in zip(report.epsilons, report.radii):
        rows.append({
            "m": model.m,
            "theta": model.theta,
            "lambda": float(np.real(report.lam)),
            "epsilon": epsilon,
            "rho": rho,
            "predicted_rho": report.predicted_rho(epsilon),
            "slope_fit": report.slope_fit,
            "predicted_slope": report.predicted_slope,
        })
    return rows
