"""Minimum traces to disclosure and repeated-key experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .aes_core import HW, PowerModel
from .cpa import build_hypotheses, correlate_hypotheses
from .leakage import (
    DesignConfig, NoiseParams, TraceSet, preset, random_plaintexts, reduce_to_scalar, simulate_traces,
)


@dataclass(frozen=True)
class MtdOutcome:
    disclosed: bool
    n_required: int | None
    n_max: int
    key_byte: int
    design_label: str
    seed: int


@dataclass(frozen=True)
class NormalFit:
    mean: float
    std: float
    n: int


def mtd(ts: TraceSet, design: DesignConfig, true_byte: int | None = None, step: int = 10,
        mode: str = "stable", *, byte_index: int = 0, model: PowerModel = HW,
        selection: str = "max_signed", n_max: int | None = None) -> MtdOutcome:
    """Smallest trace count in ``step, 2*step, ..`` at which CPA ranks ``true_byte`` first.

    ``first_hit`` stops at the first correct guess; ``stable`` additionally
    requires every larger sampled count to stay correct.
    """
    if true_byte is None:
        if ts.known_key is None:
            raise ValueError("true_byte not given and trace set carries no key")
        true_byte = ts.known_key[byte_index]
    if mode not in ("first_hit", "stable"):
        raise ValueError(f"unknown mode {mode!r}")
    n_max = ts.n_traces if n_max is None else min(n_max, ts.n_traces)
    if step < 1:
        raise ValueError("step must be >= 1")
    if step > n_max:
        raise ValueError(f"step {step} exceeds the {n_max} available traces")

    scalars = reduce_to_scalar(ts, design)[:n_max]
    hyp = build_hypotheses(ts.plaintexts[:n_max], byte_index, model).values
    found = None
    for n in range(step, n_max + 1, step):
        if n < 2:
            continue
        correct = correlate_hypotheses(hyp[:, :n], scalars[:n], selection).guessed == true_byte
        if correct and found is None:
            found = n
            if mode == "first_hit":
                break
        elif not correct and mode == "stable":
            found = None
    return MtdOutcome(found is not None, found, n_max, int(true_byte), ts.design_label, ts.seed)


def fit_normal(values) -> NormalFit:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("a normal fit needs at least 2 values")
    return NormalFit(float(values.mean()), float(values.std(ddof=1)), int(values.size))


@dataclass(frozen=True)
class ExperimentResult:
    outcomes: list[MtdOutcome]
    fit: NormalFit | None

    @property
    def n_disclosed(self) -> int:
        return sum(o.disclosed for o in self.outcomes)

    @property
    def disclosure_rate(self) -> float:
        return self.n_disclosed / len(self.outcomes)

    def summary(self) -> str:
        if self.fit is None:
            stats = "mean=NA, std=NA"
        else:
            stats = f"mean={self.fit.mean:.1f}, std={self.fit.std:.1f}"
        return f"{stats}, disclosed={self.n_disclosed}/{len(self.outcomes)}"

    def __iter__(self):
        # unpacks as (outcomes, fit)
        return iter((self.outcomes, self.fit))


def experiment(design_kind: str | DesignConfig, n_keys: int = 10, n_max: int = 2000, step: int = 10,
               seed: int = 1, *, sigma_el_rel: float | None = None, mode: str = "stable",
               byte_index: int = 0, model: PowerModel = HW, selection: str = "max_signed",
               n_jobs: int = 1) -> ExperimentResult:
    """MTD over ``n_keys`` random keys, each with fresh random plaintexts.

    Key ``i`` draws everything from ``SeedSequence([seed, i])``.
    """
    if n_keys < 1:
        raise ValueError("n_keys must be >= 1")
    design = preset(design_kind) if isinstance(design_kind, str) else design_kind
    noise = NoiseParams(model=model) if sigma_el_rel is None else NoiseParams(sigma_el_rel, model)
    outcomes = []
    for i in range(n_keys):
        ss = np.random.SeedSequence([seed, i])
        rng = np.random.default_rng(ss)
        key = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
        pts = random_plaintexts(n_max, rng)
        key_seed = int(ss.generate_state(1, np.uint64)[0])
        ts = simulate_traces(design, key, pts, replace(noise, seed=key_seed), n_jobs=n_jobs)
        outcomes.append(mtd(ts, design, key[byte_index], step, mode, byte_index=byte_index,
                            model=model, selection=selection))
    hits = [o.n_required for o in outcomes if o.disclosed]
    fit = fit_normal(hits) if len(hits) >= 2 else None
    return ExperimentResult(outcomes, fit)


def normal_pdf_points(fit: NormalFit, n_points: int = 200) -> list[tuple[float, float]]:
    """Gaussian density on ``n_points`` evenly spaced x in mean +/- 4 std."""
    if fit.std <= 0:
        raise ValueError("std must be > 0 to draw a density")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    xs = np.linspace(fit.mean - 4 * fit.std, fit.mean + 4 * fit.std, n_points)
    z = (xs - fit.mean) / fit.std
    dens = np.exp(-0.5 * z * z) / (fit.std * math.sqrt(2 * math.pi))
    return list(zip(xs.tolist(), dens.tolist()))
