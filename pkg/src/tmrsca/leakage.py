"""Parametric power-trace synthesis for single and TMR AES designs.

Each design is a list of instances. An instance turns the register transition
of ``pt ^ key`` into bit flips that land on specific samples of the trace; the
trace is a constant baseline plus ``leak_coeff`` per flip plus Gaussian noise.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._validation import check_plaintexts
from .aes_core import HW, SBOX_NP, PowerModel, as_block, popcount_rows, register_transitions

DEFAULT_LEAK_COEFF = 0.01  # mW per flipped bit
DEFAULT_SIGMA_EL_REL = 0.0012
TMR_OPT_JITTER = (0.94, 1.08, 0.97)
TMR_OPT_ALG_NOISE = 0.02  # mW
TMR_DIF_ALG_NOISE_REL = 0.02  # fraction of instance power


class TransformKind(enum.Enum):
    BASELINE = "baseline"
    CLOCK_GATED = "clock_gated"
    RETIMED = "retimed"


@dataclass(frozen=True)
class InstanceConfig:
    transform: TransformKind = TransformKind.BASELINE
    leak_coeff: float = DEFAULT_LEAK_COEFF
    time_offset: int = 0
    split_fraction: float = 1.0
    alg_noise_sigma: float = 0.0
    instance_power: float = 0.0

    def __post_init__(self):
        if not self.leak_coeff > 0:
            raise ValueError("leak_coeff must be > 0")
        if not 0.0 <= self.split_fraction <= 1.0:
            raise ValueError("split_fraction must lie in [0, 1]")
        if self.alg_noise_sigma < 0:
            raise ValueError("alg_noise_sigma must be >= 0")
        if self.time_offset < 0:
            raise ValueError("time_offset must be >= 0")


@dataclass(frozen=True)
class DesignConfig:
    label: str
    instances: tuple[InstanceConfig, ...]
    nominal_power: float
    samples_per_trace: int = 8
    sample_period: float = 1.0  # ns
    window1: tuple[int, int] = (0, 2)  # half-open sample range
    window2: tuple[int, int] = (2, 4)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "window1", tuple(int(v) for v in self.window1))
        object.__setattr__(self, "window2", tuple(int(v) for v in self.window2))
        if not 1 <= len(self.instances) <= 3:
            raise ValueError("a design has 1 to 3 instances")
        if not self.nominal_power > 0:
            raise ValueError("nominal_power must be > 0")
        if self.samples_per_trace < 4:
            raise ValueError("samples_per_trace must be >= 4")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be > 0")
        for name, (lo, hi) in (("window1", self.window1), ("window2", self.window2)):
            if not 0 <= lo < hi <= self.samples_per_trace:
                raise ValueError(f"{name} {lo}:{hi} outside 0:{self.samples_per_trace}")
        (a0, a1), (b0, b1) = self.window1, self.window2
        if a0 < b1 and b0 < a1:
            raise ValueError("window1 and window2 overlap")
        for inst in self.instances:
            for pos in _positions(inst, self.window2):
                if pos >= self.samples_per_trace:
                    raise ValueError(
                        f"{inst.transform.value} instance leaks at sample {pos}, "
                        f"beyond samples_per_trace={self.samples_per_trace}"
                    )


@dataclass(frozen=True)
class NoiseParams:
    sigma_el_rel: float = DEFAULT_SIGMA_EL_REL
    model: PowerModel = HW
    seed: int = 1

    def __post_init__(self):
        if self.sigma_el_rel < 0:
            raise ValueError("sigma_el_rel must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class TraceSet:
    """N plaintexts with N x M power samples (mW)."""

    plaintexts: np.ndarray
    samples: np.ndarray
    sample_period: float = 1.0
    design_label: str = ""
    seed: int = 0
    known_key: bytes | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.plaintexts, dtype=np.uint8)
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 16:
            raise ValueError("plaintexts must have shape (N, 16)")
        if samples.ndim != 2 or samples.shape[0] != pts.shape[0]:
            raise ValueError("samples must have shape (N, M) matching plaintexts")
        if samples.shape[0] < 1 or samples.shape[1] < 4:
            raise ValueError("a trace set needs N >= 1 and M >= 4")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        pts.setflags(write=False)
        samples.setflags(write=False)
        object.__setattr__(self, "plaintexts", pts)
        object.__setattr__(self, "samples", samples)
        if self.known_key is not None:
            object.__setattr__(self, "known_key", as_block(self.known_key, "known_key"))

    @property
    def n_traces(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def head(self, n: int) -> TraceSet:
        return replace(self, plaintexts=self.plaintexts[:n], samples=self.samples[:n])

    def __eq__(self, other):
        if not isinstance(other, TraceSet):
            return NotImplemented
        return (
            np.array_equal(self.plaintexts, other.plaintexts)
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
            and self.sample_period == other.sample_period
            and self.design_label == other.design_label
            and self.seed == other.seed
            and self.known_key == other.known_key
        )


def _positions(inst: InstanceConfig, window2: tuple[int, int]) -> tuple[int, int]:
    """Sample indices where (flips_w2, flips_late) land."""
    start, stop = window2
    if inst.transform is TransformKind.RETIMED:
        return start + inst.time_offset, start + inst.time_offset
    return start + inst.time_offset, stop + inst.time_offset


PRESETS = ("single", "tmr_ide", "tmr_opt", "tmr_dif")


def preset(kind: str) -> DesignConfig:
    """Built-in design: ``single``, ``tmr_ide``, ``tmr_opt`` or ``tmr_dif``."""
    kind = kind.replace("-", "_")
    if kind == "single":
        return DesignConfig("single", (InstanceConfig(instance_power=9.44),), 9.44)
    if kind == "tmr_ide":
        inst = InstanceConfig(instance_power=42.60 / 3)
        return DesignConfig("tmr_ide", (inst, inst, inst), 42.60)
    if kind == "tmr_opt":
        instances = tuple(
            InstanceConfig(
                leak_coeff=DEFAULT_LEAK_COEFF * j,
                alg_noise_sigma=TMR_OPT_ALG_NOISE,
                instance_power=29.09 / 3,
            )
            for j in TMR_OPT_JITTER
        )
        return DesignConfig("tmr_opt", instances, 29.09)
    if kind == "tmr_dif":
        instances = (
            InstanceConfig(TransformKind.BASELINE, instance_power=15.84,
                           alg_noise_sigma=TMR_DIF_ALG_NOISE_REL * 15.84),
            InstanceConfig(TransformKind.CLOCK_GATED, split_fraction=0.5, instance_power=15.12,
                           alg_noise_sigma=TMR_DIF_ALG_NOISE_REL * 15.12),
            InstanceConfig(TransformKind.RETIMED, time_offset=2, instance_power=16.73,
                           alg_noise_sigma=TMR_DIF_ALG_NOISE_REL * 16.73),
        )
        return DesignConfig("tmr_dif", instances, 50.51)
    raise ValueError(f"unknown design {kind!r}; expected one of {', '.join(PRESETS)}")


def design_for_label(label: str) -> DesignConfig | None:
    try:
        return preset(label)
    except ValueError:
        return None


def _instance_flips(inst: InstanceConfig, pts: np.ndarray, key, model: PowerModel):
    trans = register_transitions(pts, key, model)
    if inst.transform is TransformKind.RETIMED:
        key_arr = np.frombuffer(as_block(key, "key"), dtype=np.uint8)
        sub = SBOX_NP[pts ^ key_arr]
        # same previous-state convention, applied to the relocated register
        late = popcount_rows(sub ^ (trans ^ pts ^ key_arr))
        return np.zeros_like(late), late
    total = popcount_rows(trans)
    if inst.transform is TransformKind.CLOCK_GATED:
        w2 = np.floor(inst.split_fraction * total + 0.5).astype(np.int64)
        return w2, total - w2
    return total, np.zeros_like(total)


def instance_target_flips(inst: InstanceConfig, pt, key, model: PowerModel = HW) -> tuple[int, int]:
    """Bit flips an instance emits inside window2 and after it, for one plaintext."""
    pts = np.frombuffer(as_block(pt, "plaintext"), dtype=np.uint8)[None, :]
    w2, late = _instance_flips(inst, pts, key, model)
    return int(w2[0]), int(late[0])


def _trace_noise(seed: int, index: int, shape: tuple[int, int]) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    return rng.standard_normal(shape)


def simulate_traces(design: DesignConfig, key, plaintexts, noise: NoiseParams = NoiseParams(),
                    n_jobs: int = 1) -> TraceSet:
    """Synthesize one trace per plaintext.

    Noise for trace ``i`` comes from a generator seeded with ``(seed, i)``, so the
    result does not depend on ``n_jobs``.
    """
    key = as_block(key, "key")
    pts = check_plaintexts(plaintexts)
    n, m = pts.shape[0], design.samples_per_trace

    signal = np.full((n, m), float(design.nominal_power))
    for inst in design.instances:
        w2, late = _instance_flips(inst, pts, key, noise.model)
        p_w2, p_late = _positions(inst, design.window2)
        signal[:, p_w2] += inst.leak_coeff * w2
        signal[:, p_late] += inst.leak_coeff * late

    # row 0 electrical, rows 1.. one per instance
    scales = np.array(
        [noise.sigma_el_rel * design.nominal_power]
        + [inst.alg_noise_sigma for inst in design.instances]
    )
    rows = 1 + len(design.instances)

    def fill(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            signal[i] += scales @ _trace_noise(noise.seed, i, (rows, m))

    if n_jobs <= 1:
        fill(0, n)
    else:
        bounds = np.linspace(0, n, n_jobs + 1).astype(int)
        with ThreadPoolExecutor(n_jobs) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))

    return TraceSet(pts, signal, design.sample_period, design.label, noise.seed, key)


def reduce_to_scalar(ts: TraceSet, design: DesignConfig) -> np.ndarray:
    """Per trace: mean of window2 minus mean of window1."""
    (a0, a1), (b0, b1) = design.window1, design.window2
    if max(a1, b1) > ts.n_samples:
        raise ValueError(f"window out of range for traces with {ts.n_samples} samples")
    return ts.samples[:, b0:b1].mean(axis=1) - ts.samples[:, a0:a1].mean(axis=1)


# -- plain-text design files ------------------------------------------------

_DESIGN_FIELDS = {"label", "nominal_power", "samples_per_trace", "sample_period", "window1", "window2"}
_INSTANCE_FIELDS = {f for f in InstanceConfig.__dataclass_fields__}


def _parse_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"expected a range 'lo:hi', got {text!r}")
    return int(lo), int(hi)


def parse_design_text(text: str, base: DesignConfig | None = None) -> DesignConfig:
    """Build a DesignConfig from ``key = value`` lines, overriding ``base`` if given.

    Instance fields use ``instance.<i>.<field>``; ``instances = <n>`` truncates or
    extends the instance list (new entries copy the last one).
    """
    top: dict = {}
    inst_over: dict[int, dict] = {}
    n_inst = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        name, value = name.strip(), value.strip()
        if not sep or not name:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        try:
            if name == "instances":
                n_inst = int(value)
            elif name.startswith("instance."):
                _, idx, fname = name.split(".", 2)
                if fname not in _INSTANCE_FIELDS:
                    raise ValueError(f"unknown instance field {fname!r}")
                inst_over.setdefault(int(idx), {})[fname] = _instance_value(fname, value)
            elif name in _DESIGN_FIELDS:
                top[name] = _design_value(name, value)
            else:
                raise ValueError(f"unknown field {name!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None

    instances = list(base.instances) if base else []
    if n_inst is None:
        n_inst = max([len(instances)] + [i + 1 for i in inst_over])
    while len(instances) < n_inst:
        instances.append(instances[-1] if instances else InstanceConfig())
    instances = instances[:n_inst]
    for idx, over in inst_over.items():
        if idx >= n_inst:
            raise ValueError(f"instance.{idx} given but design has {n_inst} instances")
        instances[idx] = replace(instances[idx], **over)

    if base is not None:
        return replace(base, instances=tuple(instances), **top)
    missing = {"label", "nominal_power"} - top.keys()
    if missing:
        raise ValueError(f"missing required field(s): {', '.join(sorted(missing))}")
    return DesignConfig(instances=tuple(instances), **top)


def _instance_value(name: str, value: str):
    if name == "transform":
        try:
            return TransformKind(value.lower())
        except ValueError:
            return TransformKind[value.upper()]
    if name == "time_offset":
        return int(value)
    return float(value)


def _design_value(name: str, value: str):
    if name == "label":
        return value
    if name == "samples_per_trace":
        return int(value)
    if name in ("window1", "window2"):
        return _parse_range(value)
    return float(value)


def load_design(path: str | Path, base: DesignConfig | None = None) -> DesignConfig:
    return parse_design_text(Path(path).read_text(), base)


def format_design(design: DesignConfig) -> str:
    """Inverse of :func:`parse_design_text`."""
    lines = [
        f"label = {design.label}",
        f"nominal_power = {design.nominal_power!r}",
        f"samples_per_trace = {design.samples_per_trace}",
        f"sample_period = {design.sample_period!r}",
        f"window1 = {design.window1[0]}:{design.window1[1]}",
        f"window2 = {design.window2[0]}:{design.window2[1]}",
        f"instances = {len(design.instances)}",
    ]
    for i, inst in enumerate(design.instances):
        lines += [
            f"instance.{i}.transform = {inst.transform.value}",
            f"instance.{i}.leak_coeff = {inst.leak_coeff!r}",
            f"instance.{i}.time_offset = {inst.time_offset}",
            f"instance.{i}.split_fraction = {inst.split_fraction!r}",
            f"instance.{i}.alg_noise_sigma = {inst.alg_noise_sigma!r}",
            f"instance.{i}.instance_power = {inst.instance_power!r}",
        ]
    return "\n".join(lines) + "\n"


def summarize(design: DesignConfig) -> str:
    kinds = ", ".join(f"{i.transform.value}@{i.instance_power:.2f}mW" for i in design.instances)
    return f"{design.label}: {len(design.instances)} instance(s) [{kinds}], nominal {design.nominal_power:.2f} mW"


def random_plaintexts(n: int, rng: np.random.Generator, vary_bytes=None, fill: int = 0) -> np.ndarray:
    """Uniform random plaintexts; restricting ``vary_bytes`` holds the rest at ``fill``."""
    pts = rng.integers(0, 256, size=(n, 16), dtype=np.uint8)
    if vary_bytes is not None:
        keep = np.zeros(16, dtype=bool)
        keep[list(vary_bytes)] = True
        pts[:, ~keep] = fill
    return pts


def zero_noise() -> NoiseParams:
    return NoiseParams(sigma_el_rel=0.0)


def without_alg_noise(design: DesignConfig) -> DesignConfig:
    return replace(design, instances=tuple(replace(i, alg_noise_sigma=0.0) for i in design.instances))


__all__ = [
    "TransformKind", "InstanceConfig", "DesignConfig", "NoiseParams", "TraceSet", "PRESETS",
    "preset", "design_for_label", "instance_target_flips", "simulate_traces", "reduce_to_scalar",
    "parse_design_text", "load_design", "format_design", "summarize", "random_plaintexts",
    "zero_noise", "without_alg_noise",
]
