"""Closed-loop engine: agents, encoders, decoders, channel and control law.

Each step runs measure -> encode/publish -> decode -> control -> advance.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .channels import InMemoryChannel, SymbolChannel
from .codec import Decoder, Encoder
from .errors import AssumptionError, InsufficientRateError, NumericOverflowError, TraceTooShortError
from .gains import GainPlan
from .model import SystemModel
from .network import Network, disagreement_matrix
from .packets import SymbolPacket
from .quantizer import LevelSchedule, input_bound, is_saturated

logger = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e150
MIN_FIT_LENGTH = 100
INITIAL_MODES = ("component_scaled", "uniform")


def initial_states(
    N: int,
    m: int,
    rng: np.random.Generator,
    mode: str = "component_scaled",
    low: float = 0.0,
    high: float = 1.0,
) -> np.ndarray:
    """Draw x(0): component j uniform on (0, j), or every entry uniform on (low, high)."""
    if mode == "component_scaled":
        return rng.uniform(0.0, 1.0, size=(N, 2 * m)) * np.arange(1, 2 * m + 1)
    if mode == "uniform":
        if not high > low:
            raise ValueError(f"uniform initial states need high > low, got [{low}, {high}]")
        return rng.uniform(low, high, size=(N, 2 * m))
    raise ValueError(f"unknown initial mode {mode!r}; expected one of {INITIAL_MODES}")


def initial_bounds(network: Network, states: np.ndarray):
    """(C*, C_delta*) realised by a given initial state."""
    states = np.asarray(states, dtype=float)
    cstar = float(np.max(np.abs(states)))
    cdeltastar = float(np.max(np.abs(disagreement_matrix(network, states))))
    return cstar, cdeltastar


@dataclass
class SimConfig:
    """Everything a closed-loop run needs."""
    model: SystemModel
    network: Network
    plan: GainPlan
    schedule: LevelSchedule
    p0: float
    horizon: int
    initial: np.ndarray
    seed: Optional[int] = None
    cstar: Optional[float] = None
    cdeltastar: Optional[float] = None
    allow_insufficient_rate: bool = False

    def __post_init__(self) -> None:
        self.initial = np.array(self.initial, dtype=float)
        expected = (self.network.N, self.model.dim)
        if self.initial.shape != expected:
            raise ValueError(f"initial states must have shape {expected}, got {self.initial.shape}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.p0 > 0:
            raise ValueError(f"p0 must be positive, got {self.p0}")
        cstar, cdeltastar = initial_bounds(self.network, self.initial)
        if self.cstar is None:
            self.cstar = max(cstar, np.finfo(float).tiny)
        if self.cdeltastar is None:
            self.cdeltastar = max(cdeltastar, np.finfo(float).tiny)
        if cstar > self.cstar:
            raise AssumptionError(f"max |x_ij(0)| = {cstar:.6g} exceeds C* = {self.cstar:.6g}")
        if cdeltastar > self.cdeltastar:
            raise AssumptionError(f"max |delta_ij(0)| = {cdeltastar:.6g} exceeds C_delta* = {self.cdeltastar:.6g}")


@dataclass
class SimTrace:
    """Time series of one run. Per-step arrays are indexed by t - 1 for t = 1 .. T."""
    states: np.ndarray
    outputs: np.ndarray
    symbols: np.ndarray
    d_values: np.ndarray
    saturated: np.ndarray
    controls: np.ndarray
    xhat: np.ndarray
    levels: np.ndarray
    delta_inf: np.ndarray
    delta_max: np.ndarray
    quant_err_inf: np.ndarray
    decoder_mismatch: np.ndarray
    control_residual: np.ndarray
    neutrality: np.ndarray
    estimation_residual: np.ndarray
    channel_stats: Dict[str, int] = field(default_factory=dict)
    gamma: float = 1.0
    p0: float = 1.0
    elapsed: float = 0.0

    @property
    def horizon(self) -> int:
        return self.outputs.shape[0]

    @property
    def consensus_error(self) -> np.ndarray:
        """max_j ||delta_j(t)||_inf for t = 0 .. T."""
        return np.max(self.delta_inf, axis=1)


def control_step(own: np.ndarray, neighbor: np.ndarray, weights: np.ndarray, k: np.ndarray, t: Optional[int] = None, m: Optional[int] = None) -> np.ndarray:
    """u_i = sum_j k_j sum_v g_iv (xhat_vij - xhat_ij); zero while t < 2m.

    ``neighbor[i, v]`` is agent i's decoded estimate of agent v.
    """
    own = np.asarray(own, dtype=float)
    if t is not None and m is not None and t < 2 * m:
        return np.zeros(own.shape[0])
    differences = np.asarray(neighbor, dtype=float) - own[:, None, :]
    return np.einsum("iv,ivj,j->i", np.asarray(weights, dtype=float), differences, np.asarray(k, dtype=float))


def _signed_extreme(delta: np.ndarray) -> np.ndarray:
    rows = np.argmax(np.abs(delta), axis=0)
    return delta[rows, np.arange(delta.shape[1])]


def run(config: SimConfig, channel: Optional[SymbolChannel] = None) -> SimTrace:
    """Simulate the closed loop for config.horizon steps."""
    model, network, plan, schedule = config.model, config.network, config.plan, config.schedule
    if not schedule.meets_bound() and not config.allow_insufficient_rate:
        raise InsufficientRateError(
            f"M_steady={schedule.M_steady} is below the rate bound {schedule.bound:.4f}; "
            "set allow_insufficient_rate to run anyway"
        )
    if plan.p0_min is not None and config.p0 < plan.p0_min:
        logger.warning(f"p0={config.p0:g} is below the sufficient value p0_min={plan.p0_min:.6g}")

    N, n, T = network.N, model.dim, config.horizon
    m = model.m
    G = np.asarray(network.weights)
    channel = channel if channel is not None else InMemoryChannel()
    encoders = [Encoder(model, config.p0, plan.gamma) for _ in range(N)]
    in_neighbors = [network.in_neighbors(i) for i in range(N)]
    out_neighbors = [network.out_neighbors(v) for v in range(N)]
    decoders = {(i, v): Decoder(model, config.p0, plan.gamma) for i in range(N) for v in in_neighbors[i]}

    states = np.empty((T + 1, N, n))
    outputs = np.empty((T, N))
    symbols = np.zeros((T, N), dtype=np.int64)
    d_values = np.empty((T, N))
    saturated = np.zeros((T, N), dtype=bool)
    controls = np.zeros((T, N))
    xhat = np.empty((T, N, n))
    levels = np.empty(T, dtype=np.int64)
    delta_inf = np.empty((T + 1, n))
    delta_max = np.empty((T + 1, n))
    quant_err_inf = np.empty(T)
    decoder_mismatch = np.zeros(T)
    control_residual = np.zeros(T)
    neutrality = np.zeros(T)
    estimation_residual = np.zeros(T)

    x = config.initial.copy()
    u = np.zeros(N)
    states[0] = x
    delta = disagreement_matrix(network, x)
    delta_inf[0] = np.max(np.abs(delta), axis=0)
    delta_max[0] = _signed_extreme(delta)
    A, b = model.A, model.b
    neighbor_estimates = np.zeros((N, N, n))

    logger.info(f"Run start: N={N}, m={m}, T={T}, p0={config.p0:g}, gamma={plan.gamma:.8g}, M={schedule.M_initial}/{schedule.M_steady}")
    started = time.perf_counter()
    for t in range(1, T + 1):
        x = x @ A.T + np.outer(u, b)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > OVERFLOW_LIMIT:
            raise NumericOverflowError(f"state left the finite range at step {t}")
        y = x[:, 0]
        M = schedule.levels_at(t)
        bits = schedule.bits_at(t)
        levels[t - 1] = M
        p_prev = config.p0 * plan.gamma ** (t - 1)

        for i, encoder in enumerate(encoders):
            symbol, d = encoder.step(float(y[i]), M, t)
            symbols[t - 1, i] = symbol
            d_values[t - 1, i] = d
            channel.publish(SymbolPacket(sender=i, t=t, symbol=symbol, bits=bits), out_neighbors[i])

        own = np.array([encoder.xhat for encoder in encoders])
        for i in range(N):
            received = {packet.sender: packet.symbol for packet in channel.collect(i)}
            for v in in_neighbors[i]:
                decoder = decoders[(i, v)]
                decoder.step(received.get(v, 0), t)
                neighbor_estimates[i, v] = decoder.xhat
            if in_neighbors[i]:
                decoder_mismatch[t - 1] = max(
                    decoder_mismatch[t - 1],
                    float(np.max(np.abs(neighbor_estimates[i, in_neighbors[i]] - own[in_neighbors[i]]))),
                )

        u = control_step(own, neighbor_estimates, G, plan.k, t=t, m=m)

        errors = symbols[t - 1] - d_values[t - 1]
        saturated[t - 1] = is_saturated(d_values[t - 1], symbols[t - 1])
        quant_err_inf[t - 1] = float(np.max(np.abs(errors)))
        estimation_residual[t - 1] = float(np.max(np.abs((own[:, 0] - y) - p_prev * errors)))
        delta = disagreement_matrix(network, x)
        if t >= 2 * m:
            law = -(network.L @ (delta + own - x)) @ plan.k
            control_residual[t - 1] = float(np.max(np.abs(u - law)))
        neutrality[t - 1] = abs(float(network.psi1 @ u))

        states[t] = x
        outputs[t - 1] = y
        controls[t - 1] = u
        xhat[t - 1] = own
        delta_inf[t] = np.max(np.abs(delta), axis=0)
        delta_max[t] = _signed_extreme(delta)

    elapsed = time.perf_counter() - started
    stats = channel.stats()
    saturation_count = int(np.count_nonzero(saturated))
    if saturation_count:
        logger.warning(f"{saturation_count} saturation events over {T} steps")
    logger.info(f"Run finished in {elapsed:.2f}s: packets={stats.get('packets_sent', 0)}, bits={stats.get('bits_sent', 0)}")
    return SimTrace(
        states=states,
        outputs=outputs,
        symbols=symbols,
        d_values=d_values,
        saturated=saturated,
        controls=controls,
        xhat=xhat,
        levels=levels,
        delta_inf=delta_inf,
        delta_max=delta_max,
        quant_err_inf=quant_err_inf,
        decoder_mismatch=decoder_mismatch,
        control_residual=control_residual,
        neutrality=neutrality,
        estimation_residual=estimation_residual,
        channel_stats=stats,
        gamma=plan.gamma,
        p0=config.p0,
        elapsed=elapsed,
    )


def fitted_rate(errors: np.ndarray) -> float:
    """exp of the least-squares slope of log(error) over the second half of the series."""
    errors = np.asarray(errors, dtype=float)
    if len(errors) < MIN_FIT_LENGTH:
        raise TraceTooShortError(f"rate fitting needs at least {MIN_FIT_LENGTH} samples, got {len(errors)}")
    tail = errors[len(errors) // 2:]
    if not np.any(tail > 0):
        return 0.0
    steps = np.arange(len(errors) // 2, len(errors), dtype=float)
    slope, _ = np.polyfit(steps, np.log(tail + 1e-300), 1)
    return float(np.exp(slope))


def metrics(
    trace: SimTrace,
    gamma: Optional[float] = None,
    m: Optional[int] = None,
    theta: Optional[float] = None,
    rate_tolerance: float = 0.001,
    allow_short: bool = False,
) -> Dict[str, object]:
    """Summary of a run: fitted rate against gamma, saturation, final error and traffic.

    Traces shorter than 100 steps raise unless ``allow_short`` is set, in
    which case the rate entries are None.
    """
    gamma = trace.gamma if gamma is None else gamma
    errors = trace.consensus_error
    if trace.horizon < MIN_FIT_LENGTH:
        if not allow_short:
            raise TraceTooShortError(f"trace has {trace.horizon} steps; at least {MIN_FIT_LENGTH} are needed")
        rate = None
    else:
        rate = fitted_rate(errors)
    report: Dict[str, object] = {
        "fitted_rate": rate,
        "gamma": gamma,
        "rate_within_gamma": None if rate is None else rate <= gamma + rate_tolerance,
        "max_abs_delta_quant": float(np.max(trace.quant_err_inf)),
        "saturation_count": int(np.count_nonzero(trace.saturated)),
        "initial_error": float(errors[0]),
        "final_error": float(errors[-1]),
        "decoder_mismatch": float(np.max(trace.decoder_mismatch)),
        "control_law_residual": float(np.max(trace.control_residual)),
        "consensus_neutrality": float(np.max(trace.neutrality)),
        "estimation_identity_residual": float(np.max(trace.estimation_residual)),
        "packets_sent": int(trace.channel_stats.get("packets_sent", 0)),
        "bits_sent": int(trace.channel_stats.get("bits_sent", 0)),
        "silent_slots": int(trace.channel_stats.get("silent_slots", 0)),
    }
    if m is not None:
        steady = trace.d_values[2 * m:]
        report["steady_max_abs_d"] = float(np.max(np.abs(steady))) if steady.size else 0.0
        if theta is not None:
            report["steady_d_bound"] = input_bound(m, theta)
    return report
