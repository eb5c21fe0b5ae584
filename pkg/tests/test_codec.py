"""Tests for the encoder and decoder recursions."""

import numpy as np
import pytest

from osc_consensus.codec import CodecState, Decoder, Encoder, decoder_step, encoder_step, prediction_input
from osc_consensus.errors import OutOfOrderError
from osc_consensus.model import build_system, simulate_open_loop


def test_decoders_track_encoders_bit_exactly(rng):
    """1000 random symbol streams leave encoder and decoder estimates identical."""
    models = {m: build_system(m, 1.0 + 0.3 * m) for m in (1, 2, 3)}
    for stream in range(1000):
        m = stream % 3 + 1
        model = models[m]
        gamma = float(rng.uniform(0.9, 0.999))
        p0 = float(rng.uniform(0.5, 20.0))
        encoder = Encoder(model, p0, gamma)
        decoder = Decoder(model, p0, gamma)
        M = int(rng.integers(1, 6))
        for t in range(1, 31):
            symbol, _ = encoder.step(float(rng.normal(scale=5.0)), M)
            decoder.step(symbol, t)
            assert np.array_equal(encoder.xhat, decoder.xhat)
        assert np.array_equal(encoder.xhat1_window, decoder.xhat1_window)


def test_first_component_error_is_scaled_quantization_error(rng):
    """xhat_1(t) - y(t) = p(t-1) * (symbol - d)."""
    model = build_system(2, 1.1)
    encoder = Encoder(model, p0=3.0, gamma=0.99)
    outputs = rng.uniform(-2.0, 2.0, 50)
    for t, y in enumerate(outputs, start=1):
        symbol, d = encoder.step(float(y), 3)
        residual = (encoder.xhat[0] - y) - encoder.scale(t - 1) * (symbol - d)
        assert abs(residual) < 1e-12


def test_estimate_follows_free_trajectory(rng):
    """With enough levels the estimate of an unforced agent converges to its state."""
    model = build_system(2, 1.3)
    states = simulate_open_loop(model, rng.uniform(0, 1, 4), np.zeros(600))
    encoder = Encoder(model, p0=10.0, gamma=0.98)
    for t in range(1, 601):
        encoder.step(float(states[t, 0]), 10)
    np.testing.assert_allclose(encoder.xhat, states[600], atol=1e-2)


def test_initial_phase_uses_scaled_symbols():
    """Up to t = 2m the estimate is p(t-1) * symbol with the other components zero."""
    model = build_system(1, 0.9)
    encoder = Encoder(model, p0=2.0, gamma=0.5)
    symbol, d = encoder.step(3.1, 4)
    assert d == pytest.approx(1.55)
    assert symbol == 2
    np.testing.assert_allclose(encoder.xhat, [4.0, 0.0])
    assert encoder.initial_phase_length == 2


def test_prediction_input_after_initial_phase():
    """After 2m steps d is the prediction residual over p(t-1)."""
    model = build_system(1, 0.9)
    state = CodecState(model, p0=1.0, gamma=0.9)
    for t in (1, 2):
        decoder_step(state, 1, t)
    expected = (0.7 - state.prediction()) / state.scale(2)
    assert prediction_input(state, 0.7) == pytest.approx(expected)


def test_functional_steps_match_methods():
    """encoder_step and decoder_step drive the same state machine."""
    model = build_system(2, 0.8)
    encoder = Encoder(model, 5.0, 0.95)
    decoder = Decoder(model, 5.0, 0.95)
    for t, y in enumerate([1.0, -2.0, 0.5, 3.0, 2.5], start=1):
        symbol, encoder = encoder_step(encoder, y, 4)
        decoder = decoder_step(decoder, symbol, t)
    assert np.array_equal(encoder.xhat, decoder.xhat)
    assert decoder.t == 5


def test_out_of_order_symbols_are_rejected():
    """Skipping or repeating a step raises."""
    decoder = Decoder(build_system(1, 1.0), 1.0, 0.9)
    decoder.step(1, 1)
    with pytest.raises(OutOfOrderError):
        decoder.step(1, 3)
    with pytest.raises(OutOfOrderError):
        decoder.step(1, 1)
    decoder.step(0, 2)
    assert decoder.t == 2


def test_encoder_rejects_out_of_order_steps():
    """A stale or skipped step index leaves the encoder untouched."""
    encoder = Encoder(build_system(1, 1.0), 1.0, 0.9)
    encoder_step(encoder, 0.7, 2, t=1)
    with pytest.raises(OutOfOrderError):
        encoder_step(encoder, 0.7, 2, t=1)
    with pytest.raises(OutOfOrderError):
        encoder.step(0.7, 2, t=4)
    assert encoder.t == 1
    encoder.step(0.7, 2, t=2)
    assert encoder.t == 2


def test_invalid_scaling():
    """p0 must be positive and gamma inside (0, 1)."""
    model = build_system(1, 1.0)
    with pytest.raises(ValueError):
        Encoder(model, 0.0, 0.9)
    with pytest.raises(ValueError):
        Encoder(model, 1.0, 1.0)
