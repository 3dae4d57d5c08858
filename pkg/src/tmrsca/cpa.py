"""Correlation power analysis over one key byte.

Pearson correlation is computed from one-pass running sums so partial results
over disjoint trace blocks can be merged exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_byte_index, check_plaintexts, check_selection, check_traces
from .aes_core import HW, HW8, PowerModel, PowerModelKind

# variance terms below this fraction of n*sum(v^2) are treated as zero
_DEGENERATE_RTOL = 1e-12


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class PccAccumulator:
    n: int = 0
    sx: float = 0.0
    sy: float = 0.0
    sxx: float = 0.0
    syy: float = 0.0
    sxy: float = 0.0


def acc_update(acc: PccAccumulator, x: float, y: float) -> PccAccumulator:
    return PccAccumulator(
        acc.n + 1, acc.sx + x, acc.sy + y, acc.sxx + x * x, acc.syy + y * y, acc.sxy + x * y
    )


def acc_extend(acc: PccAccumulator, xs, ys) -> PccAccumulator:
    """Fold a batch of pairs into ``acc``."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError("x and y must have the same length")
    return acc_merge(
        acc,
        PccAccumulator(len(xs), xs.sum(), ys.sum(), xs @ xs, ys @ ys, xs @ ys),
    )


def acc_merge(a: PccAccumulator, b: PccAccumulator) -> PccAccumulator:
    return PccAccumulator(
        a.n + b.n, a.sx + b.sx, a.sy + b.sy, a.sxx + b.sxx, a.syy + b.syy, a.sxy + b.sxy
    )


def _pcc(n, sx, sy, sxx, syy, sxy):
    """Vectorized finalize; returns (r, degenerate mask)."""
    vx = n * sxx - sx * sx
    vy = n * syy - sy * sy
    degenerate = (vx <= _DEGENERATE_RTOL * n * sxx) | (vy <= _DEGENERATE_RTOL * n * syy)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (n * sxy - sx * sy) / np.sqrt(vx * vy)
    r = np.where(degenerate, 0.0, np.clip(r, -1.0, 1.0))
    return r, degenerate


def acc_finalize_flagged(acc: PccAccumulator) -> tuple[float, bool]:
    """Pearson r plus a flag that is True when either variable has zero variance."""
    if acc.n < 2:
        raise InsufficientDataError("insufficient data: need at least 2 points")
    r, deg = _pcc(acc.n, acc.sx, acc.sy, acc.sxx, acc.syy, acc.sxy)
    return float(r), bool(deg)


def acc_finalize(acc: PccAccumulator) -> float:
    return acc_finalize_flagged(acc)[0]


@dataclass(frozen=True)
class HypothesisMatrix:
    values: np.ndarray  # (256, N) uint8
    byte_index: int
    model: PowerModel


def build_hypotheses(plaintexts, byte_index: int = 0, model: PowerModel = HW) -> HypothesisMatrix:
    """Predicted register-byte flips for every guess (rows) and plaintext (columns)."""
    byte_index = check_byte_index(byte_index)
    pts = check_plaintexts(plaintexts)
    col = pts[:, byte_index]
    guesses = np.arange(256, dtype=np.uint8)[:, None]
    value = col[None, :] ^ guesses
    if model.kind is PowerModelKind.HD_PLAINTEXT_PREV:
        value = value ^ col[None, :]
    elif model.kind is PowerModelKind.HD_CUSTOM_PREV:
        value = value ^ np.uint8(model.prev[byte_index])
    return HypothesisMatrix(HW8[value], byte_index, model)


@dataclass(frozen=True)
class CpaResult:
    pcc: np.ndarray  # (256,) scalar mode or (256, M) per-sample mode
    guessed: int
    ranking: np.ndarray
    n_traces_used: int
    degenerate: np.ndarray  # same shape as pcc
    statistic: np.ndarray  # (256,) selection statistic used for ranking
    best_sample: np.ndarray | None = None  # per-sample mode: argmax sample per guess

    def rank_of(self, true_byte: int) -> int:
        return key_rank(self, true_byte)


def _rank(stat: np.ndarray) -> np.ndarray:
    # descending statistic, ties toward the smaller guess
    return np.lexsort((np.arange(256), -stat))


def _correlate(hyp: np.ndarray, y: np.ndarray):
    """r between every hypothesis row and every column of y: (256, M)."""
    n = hyp.shape[1]
    x = hyp.astype(np.float64)
    sx = x.sum(axis=1)[:, None]
    sxx = np.einsum("gn,gn->g", x, x)[:, None]
    sy = y.sum(axis=0)[None, :]
    syy = np.einsum("nm,nm->m", y, y)[None, :]
    sxy = x @ y
    return _pcc(n, sx, sy, sxx, syy, sxy)


def correlate_hypotheses(hyp: HypothesisMatrix | np.ndarray, scalars, selection: str = "max_signed") -> CpaResult:
    """Scalar-mode CPA against a prebuilt hypothesis matrix."""
    values = hyp.values if isinstance(hyp, HypothesisMatrix) else hyp
    y = np.asarray(scalars, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != values.shape[1]:
        raise ValueError("scalars must be a vector matching the hypothesis columns")
    if y.shape[0] < 2:
        raise InsufficientDataError("insufficient data: CPA needs at least 2 traces")
    r, deg = _correlate(values, y[:, None])
    r, deg = r[:, 0], deg[:, 0]
    stat = np.abs(r) if check_selection(selection) == "max_abs" else r
    ranking = _rank(stat)
    return CpaResult(r, int(ranking[0]), ranking, y.shape[0], deg, stat)


def run_cpa(scalars, plaintexts, byte_index: int = 0, model: PowerModel = HW,
            selection: str = "max_signed") -> CpaResult:
    """Correlate one scalar per trace against all 256 key-byte hypotheses."""
    y = check_traces(scalars)
    if y.shape[1] != 1:
        raise ValueError("run_cpa expects one scalar per trace")
    pts = check_plaintexts(plaintexts)
    if pts.shape[0] != y.shape[0]:
        raise ValueError("scalars and plaintexts differ in length")
    if y.shape[0] < 2:
        raise InsufficientDataError("insufficient data: CPA needs at least 2 traces")
    return correlate_hypotheses(build_hypotheses(pts, byte_index, model), y[:, 0], selection)


def run_cpa_per_sample(traces, plaintexts, byte_index: int = 0, model: PowerModel = HW,
                       selection: str = "max_signed") -> CpaResult:
    """Correlate every sample column; each guess is scored by its best sample.

    ``traces`` may be a TraceSet or an (N, M) array.
    """
    samples = getattr(traces, "samples", traces)
    y = check_traces(samples)
    pts = check_plaintexts(plaintexts)
    if pts.shape[0] != y.shape[0]:
        raise ValueError("traces and plaintexts differ in length")
    if y.shape[0] < 2:
        raise InsufficientDataError("insufficient data: CPA needs at least 2 traces")
    hyp = build_hypotheses(pts, byte_index, model)
    r, deg = _correlate(hyp.values, y)
    per_cell = np.abs(r) if check_selection(selection) == "max_abs" else r
    best = per_cell.argmax(axis=1)
    stat = per_cell[np.arange(256), best]
    ranking = _rank(stat)
    return CpaResult(r, int(ranking[0]), ranking, y.shape[0], deg, stat, best)


def key_rank(result: CpaResult, true_byte: int) -> int:
    """1-based position of ``true_byte`` in the ranking (1 means disclosed)."""
    return int(np.flatnonzero(result.ranking == true_byte)[0]) + 1
