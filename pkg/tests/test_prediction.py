import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from arts_qkd import (
    CalibrationError,
    DomainError,
    LognormalFade,
    ModelInconsistencyError,
    PredictionInputs,
    empirical_curve,
    optimize_threshold,
    pdf,
    predict_counts_per_packet,
    predict_curve,
    predict_packets,
    predict_qber,
    predict_rate,
    predict_sifted,
)
from arts_qkd.prediction import grid_maximize, positive_rate_window, threshold_grid

from .test_selection import Q_STAR

# measured values of the reference acquisition
N_B = 35.17
Q_INTRINSIC = 5.6e-2
SIGMA_SQ_PROBE = 0.967
Q_UNSELECTED = 13.14e-2
SIFTED_TOTAL = 5e5


def reference_inputs(mean_v=1.0):
    return PredictionInputs.from_reference_qber(
        LognormalFade(mean_v, SIGMA_SQ_PROBE), N_B, Q_INTRINSIC, Q_UNSELECTED, SIFTED_TOTAL
    )


def simple_inputs(n_b=2.0, q=0.03, sigma_sq=1.0):
    return PredictionInputs(LognormalFade(1.0, sigma_sq), n_b, q, 12.0 * 1000, 1000.0)


def test_inverted_counts_per_packet():
    inputs = reference_inputs()
    # s(0) = N_b (1/2 - <Q>) / (Q(0) - <Q>)
    s0 = 35.17 * 0.444 / 0.0754
    assert inputs.counts_per_packet == pytest.approx(s0, rel=1e-12)
    assert inputs.counts_per_packet == pytest.approx(207.1, abs=0.05)


def test_predict_packets():
    inputs = reference_inputs(mean_v=0.8)
    assert predict_packets(inputs, 0.0) == inputs.packet_total
    assert predict_packets(inputs, inputs.fade.median) == pytest.approx(inputs.packet_total / 2)
    tail, _ = integrate.quad(lambda v: pdf(inputs.fade, v), 0.8, np.inf, epsabs=1e-13)
    assert predict_packets(inputs, 0.8) == pytest.approx(inputs.packet_total * tail, rel=1e-8)


def test_predict_sifted_limits():
    inputs = simple_inputs()
    assert predict_sifted(inputs, 0.0) == inputs.sifted_total
    no_bg = simple_inputs(n_b=0.0)
    t = np.array([0.3, 1.0, 4.0])
    weighted = np.array(
        [integrate.quad(lambda v: v * pdf(no_bg.fade, v), x, np.inf, epsabs=1e-13)[0] for x in t]
    )
    np.testing.assert_allclose(predict_sifted(no_bg, t), no_bg.sifted_total * weighted, rtol=1e-8)
    all_bg = PredictionInputs(LognormalFade(1.0, 1.0), 12.0, 0.03, 12_000.0, 1000.0)
    np.testing.assert_allclose(predict_sifted(all_bg, t), 12.0 * predict_packets(all_bg, t))


def test_calibration_error():
    with pytest.raises(CalibrationError):
        PredictionInputs(LognormalFade(1.0, 1.0), 20.0, 0.03, 1000.0, 100.0)


def test_predict_qber_limits():
    assert np.all(predict_qber(simple_inputs(n_b=0.0), np.array([0.0, 1.0, 9.0])) == 0.03)
    all_bg = PredictionInputs(LognormalFade(1.0, 1.0), 12.0, 0.03, 12_000.0, 1000.0)
    np.testing.assert_allclose(predict_qber(all_bg, np.array([0.0, 0.5, 2.0])), 0.5)


def test_predict_qber_reference_value():
    assert predict_qber(reference_inputs(), 0.0) == pytest.approx(Q_UNSELECTED, abs=1e-4)


def test_model_inconsistency_detected():
    inputs = simple_inputs()
    # bypass validation to emulate a calibration that breaks the background floor
    broken = object.__new__(PredictionInputs)
    for name, value in vars(inputs).items():
        object.__setattr__(broken, name, value)
    object.__setattr__(broken, "background_per_packet", 50.0)
    with pytest.raises(ModelInconsistencyError):
        predict_qber(broken, 1.0)


def test_predict_rate_examples():
    noiseless = PredictionInputs(LognormalFade(1.0, 1.0), 0.0, 0.0, 1e4, 1e3)
    assert predict_rate(noiseless, 0.0) == 1.0
    inputs = reference_inputs()
    t = np.linspace(0, 0.3, 50)
    q = predict_qber(inputs, t)
    assert np.all(predict_rate(inputs, t)[q >= Q_STAR] == 0)


def test_reference_rate_shape():
    inputs = reference_inputs()
    grid = threshold_grid(inputs.fade, inputs.fade.quantile(0.9999))
    curve = predict_curve(inputs, grid)
    assert curve.rate[0] == 0
    window = positive_rate_window(curve)
    assert window is not None
    lo, hi = window
    inside = (curve.thresholds >= lo) & (curve.thresholds <= hi)
    assert np.all(curve.rate[inside] > 0)
    assert np.all(curve.rate[curve.thresholds < lo] == 0)
    peak = int(np.argmax(curve.rate))
    assert np.all(np.diff(curve.rate[: peak + 1][inside[: peak + 1]]) >= -1e-15)
    assert np.all(np.diff(curve.rate[peak:]) <= 1e-15)


def test_optimize_no_background_keeps_everything():
    best = optimize_threshold(simple_inputs(n_b=0.0))
    assert best.threshold == 0.0
    assert best.rate == pytest.approx(1 - 2 * (-(0.03 * math.log2(0.03)) - 0.97 * math.log2(0.97)))


def test_optimize_reference_configuration():
    inputs = reference_inputs()
    best = optimize_threshold(inputs)
    assert not best.no_key
    assert best.rate > 0
    assert best.qber < 0.11
    # refinement never loses to the dense grid
    grid = np.linspace(0, inputs.fade.quantile(0.9999), 200_001)
    assert best.rate >= predict_rate(inputs, grid).max() - 1e-12


def test_optimize_no_key():
    hopeless = PredictionInputs(LognormalFade(1.0, 0.01), 10.0, 0.03, 11_000.0, 1000.0)
    best = optimize_threshold(hopeless)
    assert best.no_key and best.threshold == 0 and best.rate == 0


def test_optimize_rejects_short_range():
    inputs = reference_inputs()
    with pytest.raises(DomainError):
        optimize_threshold(inputs, t_max=inputs.fade.quantile(0.9))


def test_two_peaked_curve_returns_global_max():
    near = reference_inputs(mean_v=0.2)
    far = reference_inputs(mean_v=3.0)

    def mixed(t):
        return 0.8 * predict_rate(near, t) + predict_rate(far, t)

    grid = threshold_grid(far.fade, far.fade.quantile(0.9999), 2000)
    x, y = grid_maximize(mixed, grid)
    dense = np.linspace(0, far.fade.quantile(0.9999), 400_001)
    values = mixed(dense)
    # the exhaustive scan confirms two separated local maxima
    interior = (values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:]) & (values[1:-1] > 0)
    assert interior.sum() >= 2
    assert y >= values.max() - 1e-9
    assert abs(x - dense[np.argmax(values)]) < 0.05 * dense[np.argmax(values)]


@settings(max_examples=60, deadline=None)
@given(
    n_b=st.floats(0.01, 50),
    extra=st.floats(0.01, 500),
    q=st.floats(0, 0.5),
    sigma_sq=st.floats(0.05, 3),
    t=st.floats(0, 20),
)
def test_qber_bounded_and_decreasing_in_counts(n_b, extra, q, sigma_sq, t):
    inputs = PredictionInputs(LognormalFade(1.0, sigma_sq), n_b, q, (n_b + extra) * 100, 100.0)
    qt = predict_qber(inputs, t)
    if not math.isnan(qt):
        assert q - 1e-12 <= qt <= 0.5 + 1e-12
    thresholds = np.linspace(0, 5, 30)
    s = predict_counts_per_packet(inputs, thresholds)
    qs = predict_qber(inputs, thresholds)
    ok = ~np.isnan(s)
    order = np.argsort(s[ok])
    assert np.all(np.diff(qs[ok][order]) <= 1e-12)


def test_zero_threshold_exact():
    inputs = reference_inputs()
    assert predict_sifted(inputs, 0.0) == inputs.sifted_total
    assert predict_packets(inputs, 0.0) == inputs.packet_total


def test_predict_curve_validation():
    with pytest.raises(DomainError):
        predict_curve(simple_inputs(), [0.0, 0.0])
    curve = predict_curve(simple_inputs(), [0.5])
    assert len(curve) == 1 and curve.rate.shape == (1,)


def test_model_tracks_simulation(sim_trace):
    inputs = PredictionInputs.from_trace(sim_trace, 2.0, 0.03)
    t = np.quantile(sim_trace.probe_voltage, np.linspace(0, 0.95, 20))
    outs = empirical_curve(sim_trace, t)
    n_p0 = len(sim_trace)
    for out in outs:
        pred_frac = predict_packets(inputs, out.threshold) / inputs.packet_total
        assert abs(pred_frac - out.selected_count / n_p0) <= 0.01
        assert abs(predict_qber(inputs, out.threshold) - out.qber) <= 0.01
