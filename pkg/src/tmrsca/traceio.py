"""SCTR binary trace files and CSV report exports.

SCTR layout, all integers little-endian::

    offset  size  field
    0       4     magic b"SCTR"
    4       2     version (1)
    6       2     flags (bit0: known key follows header)
    8       4     n_traces
    12      4     n_samples
    16      4     sample period, ps
    20      32    design label, UTF-8, zero padded
    52      8     seed
    60      4     reserved, zero
    64      16    known key (only if flags bit0)
    ...           n_traces x (16-octet plaintext, n_samples x float64)
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path
from typing import BinaryIO, TextIO

import numpy as np

from .analysis import MtdOutcome
from .cpa import CpaResult
from .leakage import TraceSet

MAGIC = b"SCTR"
VERSION = 1
FLAG_KEY = 0x1
HEADER = struct.Struct("<4sHHIII32sQ4x")
assert HEADER.size == 64
_SAMPLE = np.dtype("<f8")


class TraceFormatError(ValueError):
    pass


def _record_dtype(n_samples: int) -> np.dtype:
    return np.dtype([("pt", "u1", (16,)), ("samples", _SAMPLE, (n_samples,))])


def encode_traceset(ts: TraceSet) -> bytes:
    label = ts.design_label.encode("utf-8")
    if len(label) > 32:
        raise ValueError("design label longer than 32 octets")
    period_ps = round(ts.sample_period * 1000)
    if not 0 < period_ps < 2**32:
        raise ValueError("sample period not representable in whole picoseconds")
    flags = FLAG_KEY if ts.known_key is not None else 0
    head = HEADER.pack(MAGIC, VERSION, flags, ts.n_traces, ts.n_samples, period_ps,
                       label, ts.seed)
    records = np.empty(ts.n_traces, dtype=_record_dtype(ts.n_samples))
    records["pt"] = ts.plaintexts
    records["samples"] = ts.samples
    return head + (ts.known_key or b"") + records.tobytes()


def decode_traceset(data: bytes) -> TraceSet:
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise TraceFormatError("not a trace file")
    magic, version, flags, n, m, period_ps, label, seed = HEADER.unpack_from(data)
    if version > VERSION or version == 0:
        raise TraceFormatError(f"unsupported version {version}")
    if flags & ~FLAG_KEY:
        raise TraceFormatError(f"unknown flag bits 0x{flags:04x}")
    if data[60:64] != b"\0\0\0\0":
        raise TraceFormatError("reserved header octets are not zero")
    if n < 1 or m < 1:
        raise TraceFormatError("header declares an empty trace set")
    key_len = 16 if flags & FLAG_KEY else 0
    dtype = _record_dtype(m)
    expected = HEADER.size + key_len + n * dtype.itemsize
    if len(data) != expected:
        raise TraceFormatError(f"size mismatch: header implies {expected} octets, got {len(data)}")
    key = data[HEADER.size:HEADER.size + key_len] or None
    records = np.frombuffer(data, dtype=dtype, offset=HEADER.size + key_len)
    try:
        label_text = label.rstrip(b"\0").decode("utf-8")
    except UnicodeDecodeError:
        raise TraceFormatError("design label is not UTF-8") from None
    try:
        return TraceSet(records["pt"].copy(), records["samples"].astype(np.float64),
                        period_ps / 1000, label_text, seed, key)
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from None


def write_traceset(ts: TraceSet, sink: BinaryIO | str | Path) -> int:
    """Write ``ts``; returns the number of octets written."""
    data = encode_traceset(ts)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)
    return len(data)


def read_traceset(source: BinaryIO | str | Path) -> TraceSet:
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
    return decode_traceset(data)


# -- CSV reports ----------------------------------------------------------

def _num(x) -> str:
    return format(float(x), ".9g")


def _writer(sink: TextIO):
    return csv.writer(sink, lineterminator="\n")


def export_pcc_vs_guess(result: CpaResult, sink: TextIO, true_byte: int | None = None) -> None:
    """Columns guess,pcc,is_guessed,is_true; one row per guess.

    Per-sample results report each guess's correlation at its best sample.
    """
    pcc = result.pcc
    if pcc.ndim == 2:
        pcc = pcc[np.arange(256), result.best_sample]
    w = _writer(sink)
    w.writerow(["guess", "pcc", "is_guessed", "is_true"])
    for g in range(256):
        w.writerow([g, _num(pcc[g]), int(g == result.guessed), int(g == true_byte)])


def export_mtd_table(outcomes: list[MtdOutcome], sink: TextIO) -> None:
    w = _writer(sink)
    w.writerow(["key_index", "key_byte", "disclosed", "n_required"])
    for i, o in enumerate(outcomes):
        w.writerow([i, o.key_byte, int(o.disclosed), o.n_required if o.disclosed else ""])


def export_normal_fit(points: list[tuple[float, float]], sink: TextIO) -> None:
    w = _writer(sink)
    w.writerow(["x", "density"])
    for x, d in points:
        w.writerow([_num(x), _num(d)])


_EXPORTERS = {
    "pcc_vs_guess": export_pcc_vs_guess,
    "mtd_table": export_mtd_table,
    "normal_fit": export_normal_fit,
}


def export_csv(report: str, data, sink: TextIO | str | Path, **kwargs) -> None:
    """Dispatch to one of the three report writers by name."""
    try:
        exporter = _EXPORTERS[report]
    except KeyError:
        raise ValueError(f"unknown report {report!r}; expected one of {sorted(_EXPORTERS)}") from None
    if isinstance(sink, (str, Path)):
        buf = io.StringIO()
        exporter(data, buf, **kwargs)
        Path(sink).write_text(buf.getvalue(), newline="")
    else:
        exporter(data, sink, **kwargs)
