"""Reader for the four-state scalar/vector subset of Value Change Dump files.

Toggle counts per time window serve as a switching-activity power proxy.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from .aes_core import as_block
from .leakage import TraceSet

log = logging.getLogger(__name__)

_UNITS_NS = {
    "s": Fraction(10**9),
    "ms": Fraction(10**6),
    "us": Fraction(10**3),
    "ns": Fraction(1),
    "ps": Fraction(1, 10**3),
    "fs": Fraction(1, 10**6),
}
_SCALAR_VALUES = set("01xzXZ")
_SKIPPED_SECTIONS = {"$comment", "$date", "$version"}
_DUMP_BLOCKS = {"$dumpvars", "$dumpall", "$dumpon", "$dumpoff"}


class VcdError(ValueError):
    """Malformed VCD input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message, self.line, self.source = message, line, source
        where = ":".join(str(p) for p in (source, line) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class VcdVar:
    name: str
    width: int
    scope: tuple[str, ...] = ()
    kind: str = "wire"

    @property
    def path(self) -> str:
        return ".".join(self.scope + (self.name,))


@dataclass(frozen=True)
class VcdHeader:
    timescale: tuple[int, str]
    vars: dict[str, VcdVar]

    @property
    def ns_per_tick(self) -> Fraction:
        mag, unit = self.timescale
        return mag * _UNITS_NS[unit]


@dataclass(frozen=True)
class ChangeEvent:
    time: int
    id: str
    value: str  # MSB first, one of 0/1/x/z per bit
    initial: bool = False  # set inside a $dumpvars block


@dataclass(frozen=True)
class ToggleSeries:
    window_ns: float
    counts: np.ndarray
    t_start: float
    t_end: float


def _tokens(lines: Iterable[str]) -> Iterator[tuple[str, int]]:
    for lineno, line in enumerate(lines, 1):
        for tok in line.split():
            yield tok, lineno


def _as_lines(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _read_section(tokens, opener: str, line: int) -> list[str]:
    body = []
    for tok, _ in tokens:
        if tok == "$end":
            return body
        body.append(tok)
    raise VcdError(f"unterminated {opener} section", line)


def _parse_timescale(body: list[str], line: int) -> tuple[int, str]:
    text = "".join(body)
    digits = text.rstrip("fpnumsFPNUMS")
    unit = text[len(digits):].lower()
    if digits not in ("1", "10", "100") or unit not in _UNITS_NS:
        raise VcdError(f"bad timescale {' '.join(body)!r}", line)
    return int(digits), unit


def parse_vcd(stream: TextIO | str | Iterable[str]) -> tuple[VcdHeader, Iterator[ChangeEvent]]:
    """Parse the header eagerly; value changes are yielded lazily.

    Errors in the change section surface while iterating.
    """
    tokens = _tokens(_as_lines(stream))
    timescale = (1, "ns")
    variables: dict[str, VcdVar] = {}
    scope: list[str] = []
    for tok, line in tokens:
        if tok == "$enddefinitions":
            _read_section(tokens, tok, line)
            break
        if tok == "$timescale":
            timescale = _parse_timescale(_read_section(tokens, tok, line), line)
        elif tok == "$scope":
            body = _read_section(tokens, tok, line)
            if len(body) != 2:
                raise VcdError("$scope needs a type and a name", line)
            scope.append(body[1])
        elif tok == "$upscope":
            _read_section(tokens, tok, line)
            if not scope:
                raise VcdError("$upscope without matching $scope", line)
            scope.pop()
        elif tok == "$var":
            body = _read_section(tokens, tok, line)
            if len(body) < 4:
                raise VcdError("$var needs type, width, id and name", line)
            kind, width, code, name = body[:4]
            if kind == "real":
                raise VcdError("real-valued variables are not supported", line)
            if not width.isdigit() or int(width) < 1:
                raise VcdError(f"bad width {width!r}", line)
            if code in variables:
                raise VcdError(f"duplicate id-code {code!r}", line)
            variables[code] = VcdVar(name, int(width), tuple(scope), kind)
        elif tok.startswith("$"):
            body = _read_section(tokens, tok, line)
            if tok not in _SKIPPED_SECTIONS:
                log.warning("line %d: skipping unknown section %s", line, tok)
        else:
            raise VcdError(f"malformed header: missing $enddefinitions before {tok!r}", line)
    else:
        raise VcdError("malformed header: missing $enddefinitions")

    header = VcdHeader(timescale, variables)
    return header, _changes(tokens, header)


def _normalize(bits: str, width: int, line: int) -> str:
    bits = bits.lower()
    if len(bits) > width:
        raise VcdError(f"value {bits!r} wider than declared width {width}", line)
    if len(bits) < width:
        pad = bits[0] if bits[0] in "xz" else "0"
        bits = pad * (width - len(bits)) + bits
    return bits


def _changes(tokens, header: VcdHeader) -> Iterator[ChangeEvent]:
    now = 0
    in_dump = False
    initial = False
    for tok, line in tokens:
        head = tok[0]
        if head == "#":
            try:
                t = int(tok[1:])
            except ValueError:
                raise VcdError(f"bad timestamp {tok!r}", line) from None
            if t < now:
                raise VcdError(f"non-monotonic timestamp #{t} after #{now}", line)
            now = t
            continue
        if tok in _DUMP_BLOCKS:
            in_dump, initial = True, tok == "$dumpvars"
            continue
        if tok == "$end":
            if not in_dump:
                raise VcdError("stray $end", line)
            in_dump = initial = False
            continue
        if tok in _SKIPPED_SECTIONS:
            _read_section(tokens, tok, line)
            continue
        if head in "bB":
            try:
                code, _ = next(tokens)
            except StopIteration:
                raise VcdError("vector change without id-code", line) from None
            bits = tok[1:]
            if not bits or set(bits) - _SCALAR_VALUES:
                raise VcdError(f"bad vector value {tok!r}", line)
        elif head in "rR":
            raise VcdError("real-valued changes are not supported", line)
        elif head in _SCALAR_VALUES and len(tok) > 1:
            bits, code = head, tok[1:]
        else:
            raise VcdError(f"unexpected token {tok!r}", line)
        var = header.vars.get(code)
        if var is None:
            raise VcdError(f"unknown id-code {code!r}", line)
        yield ChangeEvent(now, code, _normalize(bits, var.width, line), initial)


def read_vcd(path: str | Path) -> tuple[VcdHeader, list[ChangeEvent]]:
    """Parse a whole file; errors carry the file name."""
    path = Path(path)
    try:
        with path.open() as fh:
            header, events = parse_vcd(fh)
            return header, list(events)
    except VcdError as exc:
        raise VcdError(exc.message, exc.line, str(path)) from None


def bit_flips(old: str, new: str, xz_weight: float = 0.5) -> float:
    """Weighted count of differing bits; any difference involving x/z weighs ``xz_weight``."""
    total = 0.0
    for a, b in zip(old, new):
        if a != b:
            total += 1.0 if a in "01" and b in "01" else xz_weight
    return total


def _frac(value: float) -> Fraction:
    return Fraction(str(value)) if isinstance(value, float) else Fraction(value)


def n_windows(window_ns: float, t_start: float, t_end: float) -> int:
    return math.ceil((_frac(t_end) - _frac(t_start)) / _frac(window_ns))


def toggle_counts(events: Iterable[ChangeEvent], header: VcdHeader, window_ns: float,
                  t_start: float, t_end: float, xz_weight: float = 0.5) -> ToggleSeries:
    """Bucket per-event bit flips into fixed windows over ``[t_start, t_end)``.

    Values set in ``$dumpvars`` initialise a signal without counting; a signal
    with no dumped value starts as all-x.
    """
    if not window_ns > 0:
        raise ValueError("window_ns must be > 0")
    if not t_start < t_end:
        raise ValueError("t_start must be < t_end")
    w, lo, hi = _frac(window_ns), _frac(t_start), _frac(t_end)
    tick = header.ns_per_tick
    counts = np.zeros(n_windows(window_ns, t_start, t_end), dtype=np.float64)
    state: dict[str, str] = {}
    for ev in events:
        prev = state.get(ev.id)
        state[ev.id] = ev.value
        if ev.initial and prev is None:
            continue
        if prev is None:
            prev = "x" * len(ev.value)
        t = ev.time * tick
        if lo <= t < hi:
            counts[int((t - lo) // w)] += bit_flips(prev, ev.value, xz_weight)
    return ToggleSeries(float(window_ns), counts, float(t_start), float(t_end))


def write_vcd(header: VcdHeader, events: Iterable[ChangeEvent], sink: TextIO) -> None:
    """Serialize the supported subset; ``parse_vcd`` reads it back to equal events."""
    mag, unit = header.timescale
    sink.write(f"$timescale {mag}{unit} $end\n")
    by_scope: dict[tuple[str, ...], list[tuple[str, VcdVar]]] = {}
    for code, var in header.vars.items():
        by_scope.setdefault(var.scope, []).append((code, var))
    current: tuple[str, ...] = ()
    for scope_path in sorted(by_scope):
        common = 0
        while common < min(len(current), len(scope_path)) and current[common] == scope_path[common]:
            common += 1
        for _ in range(len(current) - common):
            sink.write("$upscope $end\n")
        for name in scope_path[common:]:
            sink.write(f"$scope module {name} $end\n")
        current = scope_path
        for code, var in by_scope[scope_path]:
            sink.write(f"$var {var.kind} {var.width} {code} {var.name} $end\n")
    for _ in current:
        sink.write("$upscope $end\n")
    sink.write("$enddefinitions $end\n")

    time = None
    in_dump = False
    for ev in events:
        if ev.time != time:
            if in_dump:
                sink.write("$end\n")
                in_dump = False
            sink.write(f"#{ev.time}\n")
            time = ev.time
        if ev.initial and not in_dump:
            sink.write("$dumpvars\n")
            in_dump = True
        elif not ev.initial and in_dump:
            sink.write("$end\n")
            in_dump = False
        if header.vars[ev.id].width == 1:
            sink.write(f"{ev.value}{ev.id}\n")
        else:
            sink.write(f"b{ev.value} {ev.id}\n")
    if in_dump:
        sink.write("$end\n")


def read_manifest(path: str | Path) -> list[tuple[Path, bytes]]:
    """Lines of ``path,hex-plaintext``; ``#`` comments and blank lines ignored.

    Relative VCD paths resolve against the manifest's directory.
    """
    path = Path(path)
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        vcd_path, sep, hex_pt = line.rpartition(",")
        if not sep or not vcd_path.strip():
            raise VcdError("expected 'path,hex-plaintext'", lineno, str(path))
        try:
            pt = as_block(hex_pt.strip(), "plaintext")
        except ValueError as exc:
            raise VcdError(str(exc), lineno, str(path)) from None
        p = Path(vcd_path.strip())
        entries.append((p if p.is_absolute() else path.parent / p, pt))
    if not entries:
        raise VcdError("manifest lists no traces", None, str(path))
    return entries


def vcd_to_traceset(files: list[tuple[str | Path, bytes]], window_ns: float, t_start: float,
                    t_end: float | None = None, coeff: float = 1.0, xz_weight: float = 0.5,
                    label: str = "vcd") -> TraceSet:
    """One trace per VCD file: toggle counts times ``coeff`` (mW per toggle).

    With ``t_end=None`` each file ends at its last timestamp, which can leave
    traces of different lengths; that is rejected.
    """
    if not files:
        raise ValueError("no VCD files given")
    rows, pts = [], []
    for vcd_path, pt in files:
        pts.append(np.frombuffer(as_block(pt, "plaintext"), dtype=np.uint8))
        header, events = read_vcd(vcd_path)
        end = t_end
        if end is None:
            last = events[-1].time if events else 0
            end = float(last * header.ns_per_tick) + window_ns
        rows.append(toggle_counts(events, header, window_ns, t_start, end, xz_weight).counts * coeff)
    if len({len(r) for r in rows}) != 1:
        raise ValueError("ragged trace set: files yield different sample counts")
    return TraceSet(np.array(pts), np.array(rows), float(window_ns), label, 0)
