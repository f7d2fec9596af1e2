"""Command-line front end: ``arts-qkd <subcommand> ...``.

Results go to ``--out`` or, when it is absent, to standard output; human
readable summaries then move to standard error so the two never mix.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import trace_io
from .baselines import DEFAULT_MU_GRID, DEFAULT_SNR_GRID, compare_strategies
from .channel import ChannelSpec, background_from_snr, generate
from .exceptions import (
    CalibrationError,
    DomainError,
    InsufficientDataError,
    ModelInconsistencyError,
    TraceFormatError,
)
from .fading import LognormalFade, fit_mle
from .prediction import PredictionInputs, optimize_threshold, predict_curve
from .selection import EmpiricalCurve, optimize_empirical_threshold

PROG = "arts-qkd"


def parse_grid(text: str, log: bool = False) -> np.ndarray:
    """``start:stop:count`` (linear, or geometric with ``log``) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:count, got {text!r}")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
        if count < 1:
            raise argparse.ArgumentTypeError("grid count must be at least 1")
        if log:
            if start <= 0 or stop <= 0:
                raise argparse.ArgumentTypeError("a log grid needs positive endpoints")
            return np.geomspace(start, stop, count)
        return np.linspace(start, stop, count)
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from None


def _summary_stream(args):
    return sys.stderr if getattr(args, "out", None) in (None, "-") else sys.stdout


def _positive(text):
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _non_negative(text):
    x = float(text)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return x


def _qber(text):
    x = float(text)
    if not 0 <= x <= 0.5:
        raise argparse.ArgumentTypeError(f"must lie in [0, 0.5], got {text}")
    return x


def _snr(text):
    x = float(text)
    if not x > 1:
        raise argparse.ArgumentTypeError(f"SNR must exceed 1 (N_b = mu / (SNR - 1)), got {text}")
    return x


def _count(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return n


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    n_b = args.n_b if args.n_b is not None else background_from_snr(args.mu, args.snr)
    spec = ChannelSpec(args.mu, n_b, args.qber, LognormalFade(1.0, args.sigma_sq))
    trace = generate(spec, args.packets, args.seed, packet_duration=args.packet_duration)
    trace_io.write_trace(trace, args.out)
    mean_counts = float(trace.sifted_count.mean())
    total = int(trace.sifted_count.sum())
    qber = trace.error_count.sum() / total if total else math.nan
    print(
        f"packets={len(trace)} n_b={n_b:.6g} mean_counts={mean_counts:.6g} qber={qber:.6g}",
        file=_summary_stream(args),
    )
    return 0


def _thresholds(args):
    if args.threshold is not None:
        return np.array([args.threshold])
    return parse_grid(args.grid, args.log)


def cmd_select(args) -> int:
    trace = trace_io.read_trace(args.trace)
    t = _thresholds(args)
    curve = EmpiricalCurve.from_trace(trace, t)
    trace_io.write_results(curve, args.out)
    out = _summary_stream(args)
    print(f"{'T':>14} {'N_P':>10} {'N_S':>12} {'Q':>10} {'R':>10}", file=out)
    for o in curve.outcomes:
        q = "undef" if o.qber is None else f"{o.qber:.6f}"
        print(f"{o.threshold:14.6g} {o.selected_count:10d} {o.sifted_total:12d} {q:>10} "
              f"{o.rate:10.6f}", file=out)
    return 0


def _model_inputs(args) -> PredictionInputs:
    fade = LognormalFade(args.mean_v, args.sigma_sq)
    if args.n_p0 is not None:
        return PredictionInputs(fade, args.n_b, args.qber, args.n_s0, args.n_p0)
    return PredictionInputs.from_reference_qber(fade, args.n_b, args.qber, args.q0, args.n_s0)


def cmd_predict(args) -> int:
    inputs = _model_inputs(args)
    curve = predict_curve(inputs, parse_grid(args.grid, args.log))
    trace_io.write_results(curve, args.out)
    return 0


def cmd_optimize(args) -> int:
    if args.from_trace is not None:
        trace = trace_io.read_trace(args.from_trace)
        if args.empirical:
            best = optimize_empirical_threshold(trace)
            q = "undef" if best.qber is None else f"{best.qber:.6g}"
            print(f"T*={best.threshold:.6g} R*={best.rate:.6g} Q(T*)={q} "
                  f"no_key={best.rate == 0}")
            return 0
        if args.n_b is None or args.qber is None:
            raise DomainError("--from-trace needs --n-b and --qber unless --empirical is given")
        inputs = PredictionInputs.from_trace(trace, args.n_b, args.qber)
    else:
        missing = [f for f in ("mean_v", "sigma_sq", "n_b", "qber", "n_s0") if getattr(args, f) is None]
        if missing or (args.n_p0 is None and args.q0 is None):
            raise DomainError("model flags --mean-v --sigma-sq --n-b --qber --n-s0 and one of "
                              "--n-p0/--q0 are required without --from-trace")
        inputs = _model_inputs(args)
    best = optimize_threshold(inputs, args.t_max)
    print(f"T*={best.threshold:.6g} R*={best.rate:.6g} Q(T*)={best.qber:.6g} no_key={best.no_key}")
    return 0


def cmd_compare(args) -> int:
    result = compare_strategies(
        intrinsic_qber=args.qber,
        sigma_sq=args.sigma_sq,
        mu_grid=parse_grid(args.mu_grid, args.log),
        snr_grid=parse_grid(args.snr_grid, args.log),
        packets_per_point=args.packets,
        seed=args.seed,
    )
    trace_io.write_results(result, args.out)
    out = _summary_stream(args)
    print(f"{'mu':>8} {'SNR':>8} {'arts':>10} {'count':>10} {'none':>10}", file=out)
    for mu, snr, rates in result.points():
        print(f"{mu:8.4g} {snr:8.4g} {rates['arts']:10.6f} {rates['count_threshold']:10.6f} "
              f"{rates['none']:10.6f}", file=out)
    return 0


def _read_samples(path):
    values = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            for tok in line.replace(",", " ").split():
                try:
                    values.append(float(tok))
                except ValueError:
                    raise TraceFormatError(f"not a number: {tok!r}", line_no) from None
    return np.array(values)


def cmd_fit(args) -> int:
    if args.trace is not None:
        v = trace_io.read_trace(args.trace).probe_voltage
        v = v[v > 0]
    else:
        v = _read_samples(args.samples)
    fade = fit_mle(v)
    print(f"mean_intensity={fade.mean_intensity:.10g} sigma_sq={fade.sigma_sq:.10g} n={v.size}")
    return 0


# --- parser ------------------------------------------------------------------


def _add_model_flags(p, required: bool):
    p.add_argument("--mean-v", type=_positive, required=required,
                   help="mean probe amplitude <V> (probe units, e.g. volts)")
    p.add_argument("--sigma-sq", type=_non_negative, required=required,
                   help="log-variance sigma^2 of the probe distribution (dimensionless)")
    p.add_argument("--n-b", type=_non_negative, required=required,
                   help="background counts per packet N_b")
    p.add_argument("--qber", type=_qber, required=required,
                   help="intrinsic QBER <Q> of signal bits, in [0, 0.5]")
    p.add_argument("--n-s0", type=_positive, required=required,
                   help="sifted bits without selection N_S(0)")
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--n-p0", type=_positive, help="packets without selection N_P(0)")
    g.add_argument("--q0", type=_qber,
                   help="measured QBER without selection; N_P(0) is inferred from it")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="Generate a Monte Carlo trace under log-normal fading.")
    s.add_argument("--mu", type=_positive, required=True,
                   help="mean signal sifted counts per packet at unit transmissivity")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--snr", type=_snr, help="(signal + background) / background, must exceed 1")
    g.add_argument("--n-b", type=_non_negative, help="background counts per packet")
    s.add_argument("--qber", type=_qber, required=True, help="intrinsic QBER of signal bits")
    s.add_argument("--sigma-sq", type=_non_negative, default=1.0,
                   help="log-variance of the fade (dimensionless, default 1)")
    s.add_argument("--packets", type=_count, required=True, help="number of packets")
    s.add_argument("--seed", type=int, required=True, help="RNG seed")
    s.add_argument("--packet-duration", type=_positive, default=1e-3,
                   help="packet duration in seconds (default 1e-3)")
    s.add_argument("--out", help="trace CSV path (default: standard output)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("select", help="Apply probe thresholds to a trace.")
    s.add_argument("--trace", required=True, help="trace CSV path")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--threshold", type=_non_negative, help="single probe threshold (probe units)")
    g.add_argument("--grid", help="threshold grid start:stop:count or comma list (probe units)")
    s.add_argument("--log", action="store_true", help="geometric spacing for start:stop:count")
    s.add_argument("--out", help="results JSON path (default: standard output)")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("predict", help="Analytic N_P, N_S, Q and R versus threshold.")
    _add_model_flags(s, required=True)
    s.add_argument("--grid", required=True,
                   help="threshold grid start:stop:count or comma list (probe units)")
    s.add_argument("--log", action="store_true", help="geometric spacing for start:stop:count")
    s.add_argument("--out", help="results JSON path (default: standard output)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("optimize", help="Find the rate-maximizing probe threshold.")
    _add_model_flags(s, required=False)
    s.add_argument("--from-trace", help="calibrate from a trace CSV (MLE fade, measured totals)")
    s.add_argument("--empirical", action="store_true",
                   help="with --from-trace: maximize the measured rate instead of the model")
    s.add_argument("--t-max", type=_positive,
                   help="upper end of the search range (default: 99.99th percentile of the fade)")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("compare", help="ARTS vs count-threshold vs no selection on simulated links.")
    s.add_argument("--qber", type=_qber, default=0.03, help="intrinsic QBER (default 0.03)")
    s.add_argument("--sigma-sq", type=_non_negative, default=1.0,
                   help="log-variance of the fade (default 1)")
    s.add_argument("--mu-grid", default=",".join(f"{m:g}" for m in DEFAULT_MU_GRID),
                   help="mean signal counts per packet: start:stop:count or comma list")
    s.add_argument("--snr-grid", default=",".join(f"{x:g}" for x in DEFAULT_SNR_GRID),
                   help="SNR values (> 1): start:stop:count or comma list")
    s.add_argument("--log", action="store_true", help="geometric spacing for start:stop:count")
    s.add_argument("--packets", type=_count, default=100_000, help="packets per grid point")
    s.add_argument("--seed", type=int, default=0, help="RNG seed")
    s.add_argument("--out", help="results JSON path (default: standard output)")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("fit", help="Maximum-likelihood log-normal fit of probe amplitudes.")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--trace", help="trace CSV path (uses probe_voltage > 0)")
    g.add_argument("--samples", help="text file of probe amplitudes, whitespace or comma separated")
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, CalibrationError, ModelInconsistencyError, InsufficientDataError,
            TraceFormatError, OSError, ValueError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
