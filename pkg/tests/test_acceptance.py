"""Acceptance gate: one pass/fail line per criterion, printed in the terminal summary."""

import io
import json

import numpy as np
import pytest
from scipy import integrate

from arts_qkd import (
    ChannelSpec,
    EmpiricalCurve,
    LognormalFade,
    PredictionInputs,
    compare_strategies,
    empirical_curve,
    entropy_root,
    fit_mle,
    generate,
    intensity_weighted_survival,
    no_selection,
    optimize_count_threshold,
    optimize_empirical_threshold,
    optimize_threshold,
    pdf,
    predict_curve,
    predict_packets,
    predict_qber,
    predict_rate,
    predict_sifted,
    sample,
    select,
    survival_fraction,
)
from arts_qkd.prediction import positive_rate_window
from arts_qkd.trace_io import dumps_results, read_results, read_trace, write_trace

from .conftest import random_trace
from .test_selection import bisect_entropy_root


def test_criterion_1_entropy_root(acceptance_report):
    q_lib = entropy_root()
    q_oracle = bisect_entropy_root()
    ok = abs(q_lib - 0.1100) <= 1e-4 and abs(q_lib - q_oracle) <= 1e-9
    acceptance_report(1, "entropy root 0.1100 +/- 0.0001", ok, f"(q*={q_lib:.6f})")
    assert ok


def test_criterion_2_survival_vs_quadrature(acceptance_report):
    worst = 0.0
    for sigma_sq in (0.1, 0.5, 0.967, 1.0, 2.0):
        fade = LognormalFade(1.0, sigma_sq)
        thresholds = [fade.quantile(p) for p in np.linspace(0.01, 0.99, 50)]
        for t in thresholds:
            # split at the mean so quad sees the bulk of the mass
            pieces = sorted({float(t), max(float(t), 1.0)})
            p = w = 0.0
            for a, b in zip(pieces, pieces[1:] + [np.inf]):
                p += integrate.quad(lambda v: pdf(fade, v), a, b, epsabs=1e-13, epsrel=1e-12)[0]
                w += integrate.quad(lambda v: v * pdf(fade, v), a, b, epsabs=1e-13, epsrel=1e-12)[0]
            worst = max(
                worst,
                abs(survival_fraction(fade, t) - p),
                abs(intensity_weighted_survival(fade, t) - w),
            )
    ok = worst <= 1e-6
    acceptance_report(2, "survival functions vs quadrature within 1e-6", ok, f"(max err {worst:.1e})")
    assert ok


@pytest.fixture(scope="module")
def million_trace():
    spec = ChannelSpec(10.0, 2.0, 0.03, LognormalFade(1.0, 1.0))
    return spec, generate(spec, 1_000_000, seed=2024)


def test_criterion_3_monte_carlo_vs_model(million_trace, acceptance_report):
    spec, trace = million_trace
    ref = no_selection(trace)
    inputs = PredictionInputs(
        spec.fade, spec.background_per_packet, spec.intrinsic_qber,
        float(ref.sifted_total), float(ref.selected_count),
    )
    thresholds = np.concatenate([[0.0], [spec.fade.quantile(p) for p in np.linspace(0.05, 0.95, 10)]])
    outs = empirical_curve(trace, thresholds)
    packet_err = sifted_err = qber_err = 0.0
    for t, out in zip(thresholds, outs):
        packet_err = max(packet_err, abs(out.selected_count / ref.selected_count
                                         - predict_packets(inputs, t) / inputs.packet_total))
        sifted_err = max(sifted_err, abs(out.sifted_total / ref.sifted_total
                                         - predict_sifted(inputs, t) / inputs.sifted_total))
        qber_err = max(qber_err, abs(out.qber - predict_qber(inputs, t)))
    ok = packet_err <= 0.01 and sifted_err <= 0.01 and qber_err <= 0.002
    acceptance_report(
        3, "Monte Carlo fractions within 0.01 and QBER within 0.002", ok,
        f"(packets {packet_err:.4f}, sifted {sifted_err:.4f}, qber {qber_err:.4f})",
    )
    assert ok


def test_criterion_4_reference_regime(acceptance_report):
    inputs = PredictionInputs.from_reference_qber(
        LognormalFade(1.0, 0.967), 35.17, 0.056, 0.1314, 5e5
    )
    q0 = float(predict_qber(inputs, 0.0))
    best = optimize_threshold(inputs)
    grid = np.geomspace(1e-3, inputs.fade.quantile(0.9999), 4000)
    curve = predict_curve(inputs, grid)
    window = positive_rate_window(curve)
    inside = curve.rate[curve.rate > 0]
    # unimodal: rate rises then falls across the positive window
    steps = np.sign(np.diff(inside))
    steps = steps[steps != 0]
    turns = int(np.count_nonzero(np.diff(steps)))
    ok = (
        abs(q0 - 0.1314) <= 5e-4
        and predict_rate(inputs, 0.0) == 0.0
        and predict_rate(inputs, grid[0]) == 0.0
        and window is not None
        and window[0] > grid[0]
        and window[0] < best.threshold < window[1]
        and best.rate > 0
        and best.qber < 0.11
        and turns == 1
    )
    acceptance_report(
        4, "reference regime: Q(0), zero-rate head, positive unimodal window, Q(T*) < 0.11", ok,
        f"(Q(0)={q0:.4f}, T*={best.threshold:.3f}<V>, R*={best.rate:.4f}, Q(T*)={best.qber:.4f})",
    )
    assert ok


@pytest.mark.slow
def test_criterion_5_strategy_crossover(acceptance_report):
    result = compare_strategies(intrinsic_qber=0.03, sigma_sq=1.0, packets_per_point=100_000, seed=0)
    failures = []
    for mu, snr, rates in result.points():
        if mu <= 10 and snr <= 20:
            arts, count = rates["arts"], rates["count_threshold"]
            if arts == 0 and count == 0:
                continue
            if not arts > count:
                failures.append((mu, snr, arts, count))
    high = next(r for mu, snr, r in result.points() if mu == 100 and snr == 50)
    values = [high["arts"], high["count_threshold"], high["none"]]
    spread = (max(values) - min(values)) / max(values)
    ok = not failures and spread <= 0.10
    acceptance_report(
        5, "ARTS beats count threshold at low counts; all agree at (100, 50)", ok,
        f"(low-count failures {len(failures)}, spread at (100, 50) {spread:.4f})",
    )
    assert ok, failures


def test_criterion_6_property_suite(tmp_path, acceptance_report):
    checks = {}

    rng = np.random.default_rng(6)
    mono = dom = True
    for _ in range(50):
        trace = random_trace(rng, 200)
        t = np.sort(rng.uniform(0, 3, 2))
        lo, hi = select(trace, t[0]), select(trace, t[1])
        mono &= (hi.selected_count <= lo.selected_count and hi.sifted_total <= lo.sifted_total
                 and hi.error_total <= lo.error_total)
        mask_lo, mask_hi = trace.probe_voltage > t[0], trace.probe_voltage > t[1]
        mono &= bool(np.all(mask_lo[mask_hi]))
        base = no_selection(trace).rate
        dom &= optimize_empirical_threshold(trace).rate >= base - 1e-12
        dom &= optimize_count_threshold(trace).rate >= base - 1e-12
    checks["subset monotonicity"] = mono
    checks["dominance"] = dom

    fade = LognormalFade(1.0, 1.0)
    fitted = fit_mle(sample(fade, 99, 100_000))
    checks["MLE round trip"] = (abs(fitted.sigma_sq - 1.0) <= 0.02
                                and abs(fitted.mean_intensity - 1.0) <= 0.02)

    spec = ChannelSpec(5.0, 1.0, 0.03)
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        write_trace(generate(spec, 20_000, seed=17), buf)
        texts.append(buf.getvalue())
    kw = dict(mu_grid=[2.0, 10.0], snr_grid=[5.0], packets_per_point=10_000, seed=17)
    docs = [dumps_results(compare_strategies(**kw)) for _ in range(2)]
    checks["seed determinism"] = texts[0] == texts[1] and docs[0] == docs[1]

    trace = read_trace(io.StringIO(texts[0]))
    out = io.StringIO()
    write_trace(trace, out)
    curve = EmpiricalCurve.from_trace(trace, [0.0, 0.5, 2.0])
    comparison = read_results(io.StringIO(docs[0]))
    checks["format round trip"] = (
        out.getvalue() == texts[0]
        and read_results(io.StringIO(dumps_results(curve))) == curve
        and dumps_results(comparison) == docs[0]
        and json.loads(docs[0])["kind"] == "comparison"
    )

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    acceptance_report(6, "property suite", ok, f"(failed: {', '.join(failed)})" if failed else "")
    assert ok, failed
