"""Controller design: coefficients c, graded gains k, epsilon/gamma selection and p0."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import InfeasibleGainError, NonPositiveBoundError, TopologyError
from .model import SystemModel, check_frequency, l_closed_form
from .network import Network, eigenvector_norms, require_high_order_topology
from .spectral import (
    closed_loop_matrix,
    coefficient_terms,
    digits_for,
    graded_gains,
    entry_bound_constants,
    spectral_radius,
)

logger = logging.getLogger(__name__)

EPSILON_START = 0.1
MAX_HALVINGS = 60
SIGN_TOL = 1e-12
CRITERIA = ("standard", "strengthened")


@dataclass(frozen=True)
class Coefficients:
    """Coefficient vector c with the stability terms it induces."""
    m: int
    theta: float
    h: float
    c: np.ndarray
    R_m: Optional[float]
    H: Optional[float]
    vartheta_roots: np.ndarray

    @property
    def R_m_closed_form(self) -> Optional[float]:
        """-(H + 2)/h, the value the construction targets for m >= 2."""
        if self.m == 1:
            return None
        return -(self.H_nominal + 2.0) / self.h

    @property
    def H_nominal(self) -> float:
        return (self.m - 1) * (self.m - 2) / 2.0


@dataclass(frozen=True)
class InequalityCheck:
    """One line of the feasibility report."""
    id: str
    lhs: float
    rhs: float
    required: bool = True
    strict: bool = False
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        if self.strict:
            return self.lhs < self.rhs
        return self.lhs <= self.rhs


@dataclass
class FeasibilityReport:
    """Outcome of the inequality checks at one epsilon."""
    epsilon: float
    gamma: float
    criteria: str
    forced: bool
    checks: List[InequalityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks if check.required)

    @property
    def first_failure(self) -> Optional[InequalityCheck]:
        for check in self.checks:
            if check.required and not check.passed:
                return check
        return None

    @property
    def advisory_failures(self) -> List[InequalityCheck]:
        return [check for check in self.checks if not check.required and not check.passed]


def format_feasibility_report(report: FeasibilityReport) -> str:
    """Key-value block: one line per inequality with lhs, rhs, margin and verdict."""
    lines = [
        "FEASIBILITY REPORT",
        f"epsilon = {report.epsilon:.6g}",
        f"gamma = {report.gamma:.10g}",
        f"criteria = {report.criteria}",
        f"forced = {str(report.forced).lower()}",
    ]
    for check in report.checks:
        verdict = "pass" if check.passed else ("fail" if check.required else "advisory-fail")
        suffix = f" ({check.detail})" if check.detail else ""
        lines.append(
            f"{check.id}: lhs={check.lhs:.6e} rhs={check.rhs:.6e} "
            f"margin={check.margin:.6e} {verdict}{suffix}"
        )
    lines.append("=" * 80)
    return "\n".join(lines)


@dataclass(frozen=True)
class GainPlan:
    """Coefficients, gains, epsilon, gamma and the constants behind them."""
    m: int
    theta: float
    h: float
    c: np.ndarray
    k: np.ndarray
    epsilon: float
    gamma: float
    constants: Dict[str, object]
    R_m: Optional[float]
    H: Optional[float]
    vartheta_roots: np.ndarray
    feasibility: FeasibilityReport
    p0_min: Optional[float] = None

    def with_p0_min(self, cstar: float, cdeltastar: float) -> "GainPlan":
        return replace(self, p0_min=p0_minimum(self.m, self.gamma, cstar, cdeltastar))


def select_coefficients(m: int, theta: float, h: float) -> Coefficients:
    """Coefficient vector c for design parameter h."""
    if not h > 0:
        raise ValueError(f"design parameter h must be positive, got {h}")
    check_frequency(theta)
    s, co = math.sin(theta), math.cos(theta)

    if m == 1:
        c = np.array([-s / h, co / h])
        return Coefficients(m=1, theta=theta, h=h, c=c, R_m=None, H=None, vartheta_roots=np.zeros(0, dtype=complex))

    c = np.zeros(2 * m)
    roots = np.zeros(0, dtype=complex)
    if m >= 3:
        roots = -np.arange(1, m - 1) * np.exp(1j * theta)
        poly = np.exp(2j * theta) * P.polyfromroots(roots)
        for j in range(1, m):
            c[2 * j - 1] = poly[j - 1].real
            c[2 * j - 2] = -poly[j - 1].imag
    else:
        c[0], c[1] = -math.sin(2 * theta), math.cos(2 * theta)

    H_target = (m - 1) * (m - 2) / 2.0
    F = (2.0 * H_target + 4.0) / h + 1.0
    c[2 * m - 2] = -F * s
    c[2 * m - 1] = F * co

    R_m, H, _ = coefficient_terms(m, theta, c)
    return Coefficients(m=m, theta=theta, h=h, c=c, R_m=R_m, H=H, vartheta_roots=roots)


def default_h(m: int, network: Network) -> float:
    """lambda_2 for m >= 2 and Re(lambda_2)/2 for m = 1; 1 for a single agent."""
    if network.N == 1:
        return 1.0
    if network.lambda2_real <= 0:
        raise TopologyError("the graph has no spanning tree (Re lambda_2 = 0)")
    if m == 1:
        return network.lambda2_real / 2.0
    return network.lambda2_real


def expansion_sign_checks(coefficients: Coefficients, eigenvalues: np.ndarray) -> List[InequalityCheck]:
    """Sign conditions that make the first-order radius shift negative."""
    m, theta, c = coefficients.m, coefficients.theta, coefficients.c
    checks: List[InequalityCheck] = []
    if m == 1:
        s, co = math.sin(theta), math.cos(theta)
        checks.append(InequalityCheck("expansion_sign", -(c[1] * co - c[0] * s), 0.0, strict=True, detail="c2 cos - c1 sin > 0"))
        checks.append(InequalityCheck("expansion_sign", abs(c[0] * co + c[1] * s), SIGN_TOL, detail="c1 cos + c2 sin = 0"))
        if len(eigenvalues):
            checks.append(InequalityCheck("expansion_sign", -float(np.min(eigenvalues.real)), 0.0, strict=True, detail="Re lambda_i > 0"))
        return checks
    if m == 2:
        checks.append(InequalityCheck("expansion_sign", coefficients.R_m, 0.0, strict=True, detail="R_2 < 0"))
        return checks
    worst_lambda = max((float(np.real(lam)) * coefficients.R_m + coefficients.H for lam in eigenvalues), default=-math.inf)
    checks.append(InequalityCheck("expansion_sign", worst_lambda, 0.0, strict=True, detail="lambda_i R_m + H < 0"))
    worst_root = max(float(np.real(root * np.exp(-1j * theta))) for root in coefficients.vartheta_roots)
    checks.append(InequalityCheck("expansion_sign", worst_root, 0.0, strict=True, detail="Re(vartheta e^{-i theta}) < 0"))
    return checks


def design_constants(model: SystemModel, network: Network, coefficients: Coefficients) -> Dict[str, object]:
    """Constants gating the analytic epsilon inequalities."""
    eigenvalues = np.asarray(network.nonzero_eigenvalues)
    U_norm, U_inv_norm, N_max = eigenvector_norms(network)
    c = coefficients.c
    theta = model.theta

    if model.m == 1:
        csc = 1.0 / abs(math.sin(theta))
        C0 = 0.5 * abs(c[0]) + 1.5 * abs(c[1]) * csc
        Lam = float(np.max(np.abs(eigenvalues), initial=0.0))
        chain = [U_inv_norm + 2.0 * C0 * Lam * U_norm]
        for _ in range(2, N_max + 1):
            chain.append(U_inv_norm + 2.0 * C0 * (Lam + 1.0) * U_norm + 10.0 * (abs(c[0]) + abs(c[1])) * chain[-1])
        C_bar = 5.0 * (abs(c[0]) + abs(c[1])) * chain[-1] + C0 * U_norm
        return {
            "C0": C0,
            "Lambda": Lam,
            "C_chain": chain,
            "C_bar": C_bar,
            "U_norm": U_norm,
            "U_inv_norm": U_inv_norm,
            "N_max": N_max,
        }

    b_star = float(max(np.max(np.abs(vector)) for vector in model.b_tilde))
    c_star = float(np.max(np.abs(c)))
    real = np.real(eigenvalues)
    Lambda_i = np.maximum(np.sqrt(real), real**1.5) if len(real) else np.zeros(0)
    S_norm = float(np.linalg.norm(model.S, np.inf))
    C_bar = 9.0 / math.sqrt(2.0) * (U_inv_norm + 5.0 * c_star * model.m * network.N * (S_norm + 2.0))
    return {
        "b_star": b_star,
        "c_star": c_star,
        "Lambda_i": Lambda_i.tolist(),
        "Lambda": float(np.max(Lambda_i, initial=0.0)),
        "S_norm": S_norm,
        "C_bar": C_bar,
        "U_norm": U_norm,
        "U_inv_norm": U_inv_norm,
        "N_max": N_max,
    }


def analytic_checks(
    model: SystemModel,
    network: Network,
    coefficients: Coefficients,
    constants: Dict[str, object],
    epsilon: float,
    criteria: str = "standard",
    required: bool = True,
) -> List[InequalityCheck]:
    """The small-gain inequalities evaluated at one epsilon."""
    m, theta = model.m, model.theta
    gamma = 1.0 - epsilon / 4.0
    N = network.N
    csc = 1.0 / abs(math.sin(theta))
    cos_abs = abs(math.cos(theta))
    C_bar = constants["C_bar"]
    Lam = constants["Lambda"]

    if m == 1:
        return [
            InequalityCheck("estimation_bound", (Lam + 1.0) * C_bar * epsilon, 0.5 * gamma * csc * constants["U_norm"], required),
            InequalityCheck("rate_headroom", (2.0 * cos_abs + 1.0 / gamma) / gamma, 2.0 * cos_abs + 1.5, required),
            InequalityCheck("input_leakage", (N - 1) * C_bar * (Lam + 1.0) * epsilon, 0.25 * csc * gamma**3, required),
        ]

    checks: List[InequalityCheck] = []
    root_eps = math.sqrt(epsilon)
    c_star = constants["c_star"]
    eigenvalues = np.real(network.nonzero_eigenvalues)
    if criteria == "strengthened":
        checks.append(strengthened_coupling_check(m, c_star, eigenvalues, epsilon, required))
    else:
        worst: Optional[InequalityCheck] = None
        for lam in eigenvalues:
            M, _ = entry_bound_constants(m, lam, coefficients.vartheta_roots)
            lhs = 2.0 * c_star * (float(np.sum(M)) - M[m - 2]) * root_eps
            check = InequalityCheck("gain_coupling", lhs, float(M[m - 2]), required, detail=f"lambda={lam:.6g}")
            if worst is None or check.margin < worst.margin:
                worst = check
        if worst is not None:
            checks.append(worst)

    l_sum = float(np.sum(np.abs(l_closed_form(m, theta))))
    checks.append(InequalityCheck("rate_headroom", l_sum / gamma ** (2 * m), (2.0 * (1.0 + cos_abs)) ** m - 0.5, required))
    checks.append(InequalityCheck(
        "input_leakage",
        (2 * m - 1) * constants["b_star"] * (N - 1) * Lam * C_bar * root_eps,
        gamma ** (4 * m - 1) / 8.0,
        required,
    ))
    return checks


def strengthened_coupling_check(m: int, c_star: float, eigenvalues: np.ndarray, epsilon: float, required: bool = True) -> InequalityCheck:
    """Single sufficient condition replacing the per-eigenvalue coupling checks."""
    if len(eigenvalues) == 0:
        return InequalityCheck("gain_coupling_strict", 0.0, 0.0, required)
    lam2, lamN = float(np.min(eigenvalues)), float(np.max(eigenvalues))
    total = 0.0
    if m >= 3:
        denominator = min(math.factorial(n - 1) * math.factorial(m - 2 - n) for n in range(1, m - 1))
        total = sum(n ** (j - 1) for j in range(1, m - 1) for n in range(1, m - 1)) / denominator
    lhs = 5.0 * c_star * (total + 1.0 + lamN) * math.sqrt(epsilon)
    return InequalityCheck("gain_coupling_strict", lhs, 3.0 * math.sqrt(lam2 / 2.0), required)


def spectral_gate(model: SystemModel, c: np.ndarray, eigenvalues: np.ndarray, epsilon: float) -> InequalityCheck:
    """Worst rho(A - lambda_i K) against 1 - epsilon/2 over the nonzero eigenvalues."""
    k = graded_gains(c, epsilon)
    digits = digits_for(epsilon)
    worst_rho, worst_lam = 0.0, None
    for lam in eigenvalues:
        value = lam if abs(np.imag(lam)) > 0 else float(np.real(lam))
        rho = spectral_radius(closed_loop_matrix(model, k, value), digits=digits)
        if worst_lam is None or rho > worst_rho:
            worst_rho, worst_lam = rho, value
    detail = f"lambda={worst_lam:.6g}" if worst_lam is not None else "no nonzero eigenvalues"
    return InequalityCheck("spectral_gate", worst_rho, 1.0 - epsilon / 2.0, strict=True, detail=detail)


def select_epsilon(
    model: SystemModel,
    network: Network,
    coefficients: Coefficients,
    criteria: str = "standard",
    epsilon: Optional[float] = None,
    start: float = EPSILON_START,
    max_halvings: int = MAX_HALVINGS,
) -> FeasibilityReport:
    """Halve epsilon from ``start`` until every required inequality holds.

    With an explicit ``epsilon`` only the sign conditions and the spectral
    gate are required; the analytic inequalities are reported as advisory.
    """
    if criteria not in CRITERIA:
        raise ValueError(f"criteria must be one of {CRITERIA}, got {criteria!r}")
    eigenvalues = np.asarray(network.nonzero_eigenvalues)
    constants = design_constants(model, network, coefficients)
    signs = expansion_sign_checks(coefficients, eigenvalues)

    def evaluate(value: float, forced: bool) -> FeasibilityReport:
        report = FeasibilityReport(epsilon=value, gamma=1.0 - value / 4.0, criteria=criteria, forced=forced)
        report.checks.extend(signs)
        report.checks.extend(analytic_checks(model, network, coefficients, constants, value, criteria, required=not forced))
        if report.passed:
            report.checks.append(spectral_gate(model, coefficients.c, eigenvalues, value))
        return report

    if epsilon is not None:
        if not 0 < epsilon < 4:
            raise ValueError(f"epsilon must lie in (0, 4), got {epsilon}")
        report = evaluate(float(epsilon), forced=True)
        for check in report.advisory_failures:
            logger.warning(f"Advisory inequality {check.id} fails at forced epsilon={epsilon:g} (margin {check.margin:.3e})")
        failure = report.first_failure
        if failure is not None:
            raise InfeasibleGainError(f"forced epsilon={epsilon:g} violates {failure.id} (margin {failure.margin:.3e})", failing=failure.id)
        return report

    value = start
    report = None
    for halving in range(max_halvings + 1):
        report = evaluate(value, forced=False)
        logger.debug(f"epsilon search step {halving}: epsilon={value:.6g} passed={report.passed}")
        if report.passed:
            return report
        failure = report.first_failure
        if failure is not None and failure.id == "expansion_sign":
            break
        value /= 2.0
    failure = report.first_failure
    raise InfeasibleGainError(
        f"no feasible epsilon after {max_halvings} halvings from {start:g}; first failing inequality: {failure.id}",
        failing=failure.id,
    )


def p0_minimum(m: int, gamma: float, cstar: float, cdeltastar: float) -> float:
    """Smallest admissible p0 for the declared bounds on the initial states."""
    if not cstar > 0 or not cdeltastar > 0:
        raise NonPositiveBoundError(f"C* and C_delta* must be positive, got {cstar} and {cdeltastar}")
    if not gamma > 0:
        raise NonPositiveBoundError(f"gamma must be positive, got {gamma}")
    if m == 1:
        return max(4.0 * cstar / (3.0 * gamma), cdeltastar)
    return (math.sqrt(2.0) + 1.0) ** (2 * m) * max(cstar, cdeltastar)


def design_gains(
    model: SystemModel,
    network: Network,
    h: Optional[float] = None,
    epsilon: Optional[float] = None,
    criteria: str = "standard",
    cstar: Optional[float] = None,
    cdeltastar: Optional[float] = None,
) -> GainPlan:
    """Full gain plan: coefficients, epsilon search, graded gains and p0_min."""
    if model.m >= 2:
        require_high_order_topology(network)
    if h is None:
        h = default_h(model.m, network)
    coefficients = select_coefficients(model.m, model.theta, h)
    report = select_epsilon(model, network, coefficients, criteria=criteria, epsilon=epsilon)
    constants = design_constants(model, network, coefficients)
    plan = GainPlan(
        m=model.m,
        theta=model.theta,
        h=float(h),
        c=coefficients.c,
        k=graded_gains(coefficients.c, report.epsilon),
        epsilon=report.epsilon,
        gamma=report.gamma,
        constants=constants,
        R_m=coefficients.R_m,
        H=coefficients.H,
        vartheta_roots=coefficients.vartheta_roots,
        feasibility=report,
    )
    if cstar is not None and cdeltastar is not None:
        plan = plan.with_p0_min(cstar, cdeltastar)
    logger.info(
        f"Gain plan m={plan.m}: h={plan.h:.6g}, epsilon={plan.epsilon:.6g}, gamma={plan.gamma:.8g}"
        + (f", p0_min={plan.p0_min:.6g}" if plan.p0_min is not None else "")
    )
    return plan
