"""Trace CSV and results JSON formats.

Both formats are documented byte-for-byte in ``docs/formats.md``.
"""

from __future__ import annotations

import contextlib
import json
import math
import os
import sys
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .baselines import STRATEGIES, ComparisonResult, StrategyResult
from .exceptions import DomainError, TraceFormatError
from .fading import LognormalFade
from .prediction import PredictionCurve, PredictionInputs
from .selection import EmpiricalCurve, SelectionOutcome, Trace

FORMAT_VERSION = 1
TRACE_COLUMNS = ("index", "probe_voltage", "sifted_count", "error_count")
SOURCES = ("experimental", "simulated")


@dataclass(frozen=True)
class TraceFileHeader:
    format_version: int
    packet_duration_s: float
    source: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise DomainError(f"unsupported format_version {self.format_version}")
        if not self.packet_duration_s > 0:
            raise DomainError("packet_duration_s must be positive")
        if self.source not in SOURCES:
            raise DomainError(f"source must be one of {SOURCES}, got {self.source!r}")


@contextlib.contextmanager
def _open(destination, mode):
    if destination is None or destination == "-":
        yield sys.stdout if "w" in mode else sys.stdin
    elif isinstance(destination, (str, os.PathLike)):
        try:
            with open(destination, mode, encoding="utf-8", newline="") as fh:
                yield fh
        except OSError as exc:
            raise OSError(f"{os.fspath(destination)}: {exc.strerror or exc}") from exc
    else:
        yield destination


# --- trace CSV -------------------------------------------------------------


def _flatten(d, prefix=""):
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, value


def _encode_header_value(value) -> str:
    if isinstance(value, str):
        try:
            json.loads(value)
        except ValueError:
            return value
    return json.dumps(value)


def _decode_header_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def _fmt_real(x: float) -> str:
    return format(x, ".17g")


def write_trace(trace: Trace, destination) -> None:
    """Write ``trace`` as CSV with ``# key=value`` header lines."""
    if len(trace) < 1:
        raise DomainError("cannot write an empty trace")
    meta = dict(trace.provenance)
    source = meta.pop("source", "experimental")
    header = TraceFileHeader(FORMAT_VERSION, trace.packet_duration, source)
    lines = [
        f"# format_version={header.format_version}",
        f"# packet_duration_s={_fmt_real(header.packet_duration_s)}",
        f"# source={header.source}",
    ]
    for key, value in _flatten(meta):
        if "=" in key or "\n" in key:
            raise DomainError(f"unsupported provenance key {key!r}")
        lines.append(f"# {key}={_encode_header_value(value)}")
    lines.append(",".join(TRACE_COLUMNS))
    lines.extend(
        f"{i},{_fmt_real(v)},{s},{e}"
        for i, v, s, e in zip(
            trace.index.tolist(),
            trace.probe_voltage.tolist(),
            trace.sifted_count.tolist(),
            trace.error_count.tolist(),
        )
    )
    with _open(destination, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _unflatten(items):
    out: dict = {}
    for key, value in items:
        node = out
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def _parse_int(text, row, name):
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(f"expected an integer, got {text!r}", row, name) from None


def read_trace(source) -> Trace:
    """Parse and validate a trace file. Either returns a full trace or raises."""
    with _open(source, "r") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    meta = []
    key_line: dict[str, int] = {}
    line_no = 0
    for line_no, line in enumerate(lines, start=1):
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" not in body:
            raise TraceFormatError("header line must be '# key=value'", line_no)
        key, value = body.split("=", 1)
        meta.append((key.strip(), value))
        key_line.setdefault(key.strip(), line_no)
    else:
        raise TraceFormatError("missing column header row", line_no + 1)

    header_fields = dict(meta)
    for required in ("format_version", "packet_duration_s", "source"):
        if required not in header_fields:
            raise TraceFormatError("missing header field", line_no, required)
    row = key_line["format_version"]
    version = _parse_int(header_fields["format_version"], row, "format_version")
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported version {version}, expected {FORMAT_VERSION}", row,
                               "format_version")
    row = key_line["packet_duration_s"]
    try:
        duration = float(header_fields["packet_duration_s"])
    except ValueError:
        raise TraceFormatError("not a number", row, "packet_duration_s") from None
    if not duration > 0:
        raise TraceFormatError("must be positive", row, "packet_duration_s")
    if header_fields["source"] not in SOURCES:
        raise TraceFormatError(f"must be one of {SOURCES}", key_line["source"], "source")

    columns = [c.strip() for c in lines[line_no - 1].split(",")]
    missing = [c for c in TRACE_COLUMNS if c not in columns]
    if missing:
        raise TraceFormatError(f"missing columns {missing}", line_no, missing[0])
    if len(columns) != len(TRACE_COLUMNS) or tuple(columns) != TRACE_COLUMNS:
        raise TraceFormatError(f"columns must be {','.join(TRACE_COLUMNS)}", line_no)

    data_start = line_no + 1
    body = lines[line_no:]
    if not body:
        raise TraceFormatError("trace has no packets", data_start)
    n = len(body)
    idx = np.empty(n, dtype=np.int64)
    v = np.empty(n)
    s = np.empty(n, dtype=np.int64)
    e = np.empty(n, dtype=np.int64)
    prev = None
    for k, line in enumerate(body):
        row = data_start + k
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceFormatError(f"expected 4 fields, got {len(parts)}", row)
        i = _parse_int(parts[0], row, "index")
        try:
            volt = float(parts[1])
        except ValueError:
            raise TraceFormatError(f"not a number: {parts[1]!r}", row, "probe_voltage") from None
        if not (math.isfinite(volt) and volt >= 0):
            raise TraceFormatError("must be finite and non-negative", row, "probe_voltage")
        sc = _parse_int(parts[2], row, "sifted_count")
        ec = _parse_int(parts[3], row, "error_count")
        if i < 0:
            raise TraceFormatError("must be non-negative", row, "index")
        if sc < 0:
            raise TraceFormatError("must be non-negative", row, "sifted_count")
        if ec < 0:
            raise TraceFormatError("must be non-negative", row, "error_count")
        if ec > sc:
            raise TraceFormatError("error_count exceeds sifted_count", row, "error_count")
        if prev is not None and i <= prev:
            raise TraceFormatError("indices must be strictly increasing", row, "index")
        prev = i
        idx[k], v[k], s[k], e[k] = i, volt, sc, ec

    provenance = _unflatten(
        (key, _decode_header_value(value))
        for key, value in meta
        if key not in ("format_version", "packet_duration_s")
    )
    return Trace(v, s, e, index=idx, packet_duration=duration, provenance=provenance)


# --- results JSON ----------------------------------------------------------

_NUM = {"oneOf": [{"type": "number"}, {"enum": ["inf", "-inf"]}]}
_NUM_OR_NULL = {"oneOf": [{"type": "number"}, {"type": "null"}, {"enum": ["inf", "-inf"]}]}


def _array(item):
    return {"type": "array", "items": item}


_FADE_SCHEMA = {
    "type": "object",
    "required": ["mean_intensity", "sigma_sq"],
    "properties": {"mean_intensity": {"type": "number"}, "sigma_sq": {"type": "number"}},
}

RESULT_SCHEMAS = {
    "prediction": {
        "type": "object",
        "required": ["format_version", "kind", "inputs", "thresholds", "packets", "sifted",
                     "counts_per_packet", "qber", "rate"],
        "properties": {
            "format_version": {"const": FORMAT_VERSION},
            "kind": {"const": "prediction"},
            "inputs": {
                "type": "object",
                "required": ["fade", "background_per_packet", "intrinsic_qber",
                             "sifted_total", "packet_total"],
                "properties": {
                    "fade": _FADE_SCHEMA,
                    "background_per_packet": {"type": "number"},
                    "intrinsic_qber": {"type": "number"},
                    "sifted_total": {"type": "number"},
                    "packet_total": {"type": "number"},
                },
            },
            "thresholds": _array(_NUM),
            "packets": _array(_NUM_OR_NULL),
            "sifted": _array(_NUM_OR_NULL),
            "counts_per_packet": _array(_NUM_OR_NULL),
            "qber": _array(_NUM_OR_NULL),
            "rate": _array(_NUM_OR_NULL),
        },
    },
    "empirical": {
        "type": "object",
        "required": ["format_version", "kind", "trace", "thresholds", "selected_count",
                     "sifted_total", "error_total", "counts_per_packet", "qber", "rate"],
        "properties": {
            "format_version": {"const": FORMAT_VERSION},
            "kind": {"const": "empirical"},
            "trace": {"type": "object"},
            "thresholds": _array(_NUM),
            "selected_count": _array({"type": "integer", "minimum": 0}),
            "sifted_total": _array({"type": "integer", "minimum": 0}),
            "error_total": _array({"type": "integer", "minimum": 0}),
            "counts_per_packet": _array({"type": "number"}),
            "qber": _array({"type": ["number", "null"]}),
            "rate": _array({"type": "number", "minimum": 0, "maximum": 1}),
        },
    },
    "comparison": {
        "type": "object",
        "required": ["format_version", "kind", "inputs", "strategies"],
        "properties": {
            "format_version": {"const": FORMAT_VERSION},
            "kind": {"const": "comparison"},
            "inputs": {
                "type": "object",
                "required": ["intrinsic_qber", "sigma_sq", "packets_per_point", "seed",
                             "mu_grid", "snr_grid"],
                "properties": {
                    "intrinsic_qber": {"type": "number"},
                    "sigma_sq": {"type": "number"},
                    "packets_per_point": {"type": "integer"},
                    "seed": {"type": "integer"},
                    "mu_grid": _array({"type": "number"}),
                    "snr_grid": _array(_NUM),
                },
            },
            "strategies": {
                "type": "object",
                "required": list(STRATEGIES),
                "additionalProperties": {
                    "type": "object",
                    "required": ["mu", "snr", "rate", "threshold", "qber"],
                    "properties": {
                        "mu": _array({"type": "number"}),
                        "snr": _array(_NUM),
                        "rate": _array({"type": "number", "minimum": 0, "maximum": 1}),
                        "threshold": _array({"type": "number"}),
                        "qber": _array({"type": ["number", "null"]}),
                    },
                },
            },
        },
    },
}


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x):
    if x is None:
        return math.nan
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    return float(x)


def _nums(xs):
    return [_num(x) for x in xs]


def _fade_dict(fade: LognormalFade):
    return {"mean_intensity": fade.mean_intensity, "sigma_sq": fade.sigma_sq}


def results_to_dict(results) -> dict:
    if isinstance(results, PredictionCurve):
        inp = results.inputs
        return {
            "format_version": FORMAT_VERSION,
            "kind": "prediction",
            "inputs": {
                "fade": _fade_dict(inp.fade),
                "background_per_packet": inp.background_per_packet,
                "intrinsic_qber": inp.intrinsic_qber,
                "sifted_total": inp.sifted_total,
                "packet_total": inp.packet_total,
            },
            "thresholds": _nums(results.thresholds),
            "packets": _nums(results.packets),
            "sifted": _nums(results.sifted),
            "counts_per_packet": _nums(results.counts_per_packet),
            "qber": _nums(results.qber),
            "rate": _nums(results.rate),
        }
    if isinstance(results, EmpiricalCurve):
        outs = results.outcomes
        return {
            "format_version": FORMAT_VERSION,
            "kind": "empirical",
            "trace": results.trace_provenance,
            "thresholds": _nums(results.thresholds),
            "selected_count": [o.selected_count for o in outs],
            "sifted_total": [o.sifted_total for o in outs],
            "error_total": [o.error_total for o in outs],
            "counts_per_packet": [o.counts_per_packet for o in outs],
            "qber": [o.qber for o in outs],
            "rate": [o.rate for o in outs],
        }
    if isinstance(results, ComparisonResult):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "comparison",
            "inputs": {
                "intrinsic_qber": results.intrinsic_qber,
                "sigma_sq": results.sigma_sq,
                "packets_per_point": results.packets_per_point,
                "seed": results.seed,
                "mu_grid": list(results.mu_grid),
                "snr_grid": _nums(results.snr_grid),
            },
            "strategies": {
                name: {
                    "mu": list(r.mu),
                    "snr": _nums(r.snr),
                    "rate": list(r.rate),
                    "threshold": list(r.thresholds),
                    "qber": list(r.qber),
                }
                for name, r in results.results.items()
            },
        }
    raise TypeError(f"cannot serialize {type(results).__name__}")


def validate_results(doc: dict) -> None:
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind not in RESULT_SCHEMAS:
        raise jsonschema.ValidationError(f"unknown results kind {kind!r}")
    jsonschema.validate(doc, RESULT_SCHEMAS[kind])


def results_from_dict(doc: dict):
    validate_results(doc)
    kind = doc["kind"]
    if kind == "prediction":
        i = doc["inputs"]
        inputs = PredictionInputs(
            LognormalFade(i["fade"]["mean_intensity"], i["fade"]["sigma_sq"]),
            i["background_per_packet"],
            i["intrinsic_qber"],
            i["sifted_total"],
            i["packet_total"],
        )
        arr = {k: np.array([_unnum(x) for x in doc[k]])
               for k in ("thresholds", "packets", "sifted", "counts_per_packet", "qber", "rate")}
        return PredictionCurve(inputs=inputs, **arr)
    if kind == "empirical":
        outcomes = tuple(
            SelectionOutcome(t, n_p, n_s, n_e, s, q, r)
            for t, n_p, n_s, n_e, s, q, r in zip(
                (_unnum(x) for x in doc["thresholds"]), doc["selected_count"],
                doc["sifted_total"], doc["error_total"], doc["counts_per_packet"],
                doc["qber"], doc["rate"],
            )
        )
        return EmpiricalCurve(tuple(o.threshold for o in outcomes), outcomes, doc["trace"])
    i = doc["inputs"]
    strategies = {
        name: StrategyResult(
            name,
            tuple(s["mu"]),
            tuple(_unnum(x) for x in s["snr"]),
            tuple(s["rate"]),
            tuple(s["threshold"]),
            tuple(s["qber"]),
        )
        for name, s in doc["strategies"].items()
    }
    return ComparisonResult(
        i["intrinsic_qber"], i["sigma_sq"], i["packets_per_point"], i["seed"],
        tuple(i["mu_grid"]), tuple(_unnum(x) for x in i["snr_grid"]), strategies,
    )


def dumps_results(results) -> str:
    doc = results_to_dict(results)
    validate_results(doc)
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_results(results, destination) -> None:
    """Write a prediction curve, empirical curve or comparison as JSON."""
    text = dumps_results(results)
    with _open(destination, "w") as fh:
        fh.write(text)


def read_results(source):
    with _open(source, "r") as fh:
        doc = json.load(fh)
    return results_from_dict(doc)
