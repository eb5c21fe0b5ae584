"""Encoder and decoder recursions with the decaying scaling p(t) = p0 * gamma^t.

Both sides run the same update on the same symbol stream, so a decoder's
estimate of its sender is bit-identical to the sender's own estimate. The
encoder additionally sees the output y and produces the symbol.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from .errors import OutOfOrderError
from .model import SystemModel
from .quantizer import quantize

logger = logging.getLogger(__name__)


class CodecState:
    """Estimate window and scaling shared by the encoder and decoder recursions."""

    def __init__(self, model: SystemModel, p0: float, gamma: float) -> None:
        if not p0 > 0:
            raise ValueError(f"p0 must be positive, got {p0}")
        if not 0 < gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.model = model
        self.p0 = float(p0)
        self.gamma = float(gamma)
        self.t = 0
        self.xhat1_window = np.zeros(model.dim)
        self.xhat = np.zeros(model.dim)
        self.last_symbol = 0

    def scale(self, t: int) -> float:
        """p(t) = p0 * gamma^t."""
        return self.p0 * self.gamma**t

    @property
    def initial_phase_length(self) -> int:
        return self.model.dim

    def prediction(self) -> float:
        """One-step prediction cos x1 + sin x2 + x3 of the next first component."""
        return float(self.model.A[0] @ self.xhat)

    def prediction_input(self, y: float) -> float:
        """Quantizer input d(t) for the next step t = self.t + 1."""
        t = self.t + 1
        p_prev = self.scale(t - 1)
        if t <= self.initial_phase_length:
            return y / p_prev
        return (y - self.prediction()) / p_prev

    def advance(self, symbol: int, t: Optional[int] = None) -> None:
        """Apply one symbol and move to the next step."""
        expected = self.t + 1
        if t is not None and t != expected:
            raise OutOfOrderError(f"expected step {expected}, got {t}")
        t = expected
        p_prev = self.scale(t - 1)

        if t <= self.initial_phase_length:
            x1 = p_prev * symbol
        else:
            x1 = self.prediction() + p_prev * symbol

        window = np.empty_like(self.xhat1_window)
        window[:-1] = self.xhat1_window[1:]
        window[-1] = x1
        self.xhat1_window = window

        xhat = np.zeros_like(self.xhat)
        xhat[0] = x1
        if t >= self.initial_phase_length:
            xhat[1:] = self.model.S_m @ window
        self.xhat = xhat
        self.t = t
        self.last_symbol = int(symbol)


class Encoder(CodecState):
    """Encoder of one agent; sees the agent's own output."""

    def step(self, y: float, M: int, t: Optional[int] = None) -> Tuple[int, float]:
        """Quantize the prediction residual, advance, and return (symbol, d)."""
        d = self.prediction_input(y)
        symbol = quantize(d, M)
        self.advance(symbol, t)
        return symbol, d


class Decoder(CodecState):
    """Decoder of one (receiver, sender) edge; sees only the symbols."""

    def step(self, symbol: int, t: Optional[int] = None) -> None:
        self.advance(symbol, t)


def encoder_step(state: Encoder, y: float, M: int, t: Optional[int] = None) -> Tuple[int, Encoder]:
    """Functional form of :meth:`Encoder.step`."""
    symbol, _ = state.step(y, M, t)
    return symbol, state


def decoder_step(state: CodecState, symbol: int, t: Optional[int] = None) -> CodecState:
    """Functional form of :meth:`Decoder.step`."""
    state.advance(symbol, t)
    return state


def prediction_input(state: CodecState, y: float) -> float:
    return state.prediction_input(y)
