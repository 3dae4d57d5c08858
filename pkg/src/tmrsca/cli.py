"""Command-line front end.

Exit codes: 0 success / key disclosed, 1 attack ran but key not disclosed,
2 usage error, 3 I/O or format error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .aes_core import PowerModel, as_block
from .analysis import experiment, mtd, normal_pdf_points
from .cpa import InsufficientDataError, key_rank, run_cpa, run_cpa_per_sample
from .leakage import (
    DEFAULT_SIGMA_EL_REL, DesignConfig, NoiseParams, design_for_label, load_design, preset,
    random_plaintexts, reduce_to_scalar, simulate_traces, summarize,
)
from .traceio import TraceFormatError, export_csv, read_traceset, write_traceset
from .vcd import VcdError, read_manifest, vcd_to_traceset

log = logging.getLogger("tmrsca")

EXIT_OK, EXIT_NOT_DISCLOSED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
DESIGNS = ("single", "tmr-ide", "tmr-opt", "tmr-dif")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _byte_index(text: str) -> int:
    value = int(text)
    if not 0 <= value <= 15:
        raise argparse.ArgumentTypeError("must be in 0..15")
    return value


def _key(text: str) -> bytes:
    if len(text) != 32:
        raise argparse.ArgumentTypeError("key must be exactly 32 hex digits")
    try:
        return as_block(text, "key")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _load_design(base: DesignConfig | None, config: str | None) -> DesignConfig | None:
    if config is None:
        return base
    try:
        return load_design(config, base)
    except OSError as exc:
        raise DataError(f"cannot read config {config}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(f"{config}: {exc}") from None


def _read_traces(path: str):
    try:
        return read_traceset(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except TraceFormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def _write(path: str, action) -> None:
    try:
        action(path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def _design_for_traces(ts, config: str | None) -> DesignConfig:
    base = design_for_label(ts.design_label) or DesignConfig(
        ts.design_label or "traces", (preset("single").instances[0],), 1.0,
        samples_per_trace=max(ts.n_samples, 4),
    )
    return _load_design(base, config)


def cmd_simulate(args) -> int:
    design = _load_design(preset(args.design), args.config)
    sigma = DEFAULT_SIGMA_EL_REL if args.sigma_el is None else args.sigma_el
    rng = np.random.default_rng(args.seed)
    pts = random_plaintexts(args.num_traces, rng)
    ts = simulate_traces(design, args.key, pts, NoiseParams(sigma, seed=args.seed),
                         n_jobs=args.threads)
    _write(args.out, lambda p: write_traceset(ts, p))
    print(summarize(design))
    print(f"wrote {ts.n_traces} traces x {ts.n_samples} samples to {args.out}")
    return EXIT_OK


def cmd_attack(args) -> int:
    ts = _read_traces(args.traces)
    design = _design_for_traces(ts, args.config)
    model = PowerModel.parse(args.model)
    selection = "max_abs" if args.abs else "max_signed"
    try:
        if args.per_sample:
            result = run_cpa_per_sample(ts, ts.plaintexts, args.byte_index, model, selection)
        else:
            scalars = reduce_to_scalar(ts, design)
            result = run_cpa(scalars, ts.plaintexts, args.byte_index, model, selection)
    except InsufficientDataError as exc:
        raise DataError(f"{args.traces}: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    true_byte = ts.known_key[args.byte_index] if ts.known_key is not None else None
    if args.report:
        _write(args.report, lambda p: export_csv("pcc_vs_guess", result, p, true_byte=true_byte))
    print(f"guessed=0x{result.guessed:02X} ({result.guessed})")
    if true_byte is None:
        return EXIT_OK
    rank = key_rank(result, true_byte)
    print(f"true=0x{true_byte:02X} ({true_byte}) rank={rank}")
    return EXIT_OK if rank == 1 else EXIT_NOT_DISCLOSED


def cmd_mtd(args) -> int:
    ts = _read_traces(args.traces)
    if args.step > ts.n_traces:
        raise UsageError(f"--step {args.step} exceeds the {ts.n_traces} traces in {args.traces}")
    if ts.known_key is None and args.true_byte is None:
        raise UsageError("trace file has no key; pass --true-byte")
    design = _design_for_traces(ts, args.config)
    outcome = mtd(ts, design, args.true_byte, args.step, args.mode, byte_index=args.byte_index)
    if args.report:
        _write(args.report, lambda p: export_csv("mtd_table", [outcome], p))
    if outcome.disclosed:
        print(f"disclosed key byte {outcome.key_byte} with {outcome.n_required} traces ({args.mode})")
        return EXIT_OK
    print(f"key byte {outcome.key_byte} not disclosed within {outcome.n_max} traces ({args.mode})")
    return EXIT_NOT_DISCLOSED


def cmd_experiment(args) -> int:
    if args.step > args.num_traces:
        raise UsageError(f"--step {args.step} exceeds --num-traces {args.num_traces}")
    design = _load_design(preset(args.design), args.config)
    res = experiment(design, args.num_keys, args.num_traces, args.step, args.seed,
                     sigma_el_rel=args.sigma_el, mode=args.mode, n_jobs=args.threads)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc.strerror}") from None
    _write(str(out / "mtd_table.csv"), lambda p: export_csv("mtd_table", res.outcomes, p))
    if res.fit is not None and res.fit.std > 0:
        points = normal_pdf_points(res.fit)
        _write(str(out / "normal_fit.csv"), lambda p: export_csv("normal_fit", points, p))
    elif res.fit is not None:
        log.info("all disclosed runs needed the same trace count; no density written")
    print(res.summary())
    return EXIT_OK if res.n_disclosed == len(res.outcomes) else EXIT_NOT_DISCLOSED


def cmd_vcd2trace(args) -> int:
    try:
        entries = read_manifest(args.manifest)
        ts = vcd_to_traceset(entries, args.window_ns, args.t_start, args.t_end, args.coeff,
                             args.xz_weight)
    except OSError as exc:
        raise DataError(f"{exc.filename}: {exc.strerror}") from None
    except (VcdError, ValueError) as exc:
        raise DataError(str(exc)) from None
    _write(args.out, lambda p: write_traceset(ts, p))
    print(f"wrote {ts.n_traces} traces x {ts.n_samples} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="tmrsca", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=1, help="random seed (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a trace set")
    p.add_argument("--design", choices=DESIGNS, required=True)
    p.add_argument("--key", type=_key, required=True, help="32 hex digits")
    p.add_argument("--num-traces", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma-el", type=_non_negative, help="electrical noise / nominal power")
    p.add_argument("--config", help="design override file (key = value)")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", parents=[common], help="CPA on one key byte")
    p.add_argument("--traces", required=True)
    p.add_argument("--byte-index", type=_byte_index, default=0)
    p.add_argument("--model", choices=("hw", "hd-plaintext"), default="hw")
    p.add_argument("--abs", action="store_true", help="rank by |r| instead of signed r")
    p.add_argument("--per-sample", action="store_true", help="correlate every sample, not the window difference")
    p.add_argument("--report", help="pcc_vs_guess CSV output")
    p.add_argument("--config", help="design file supplying the windows")
    p.set_defaults(func=cmd_attack)

    def mode_flags(q):
        g = q.add_mutually_exclusive_group()
        g.add_argument("--stable", dest="mode", action="store_const", const="stable")
        g.add_argument("--first-hit", dest="mode", action="store_const", const="first_hit")
        q.set_defaults(mode="stable")

    p = sub.add_parser("mtd", parents=[common], help="minimum traces to disclosure")
    p.add_argument("--traces", required=True)
    p.add_argument("--step", type=_positive_int, default=10)
    p.add_argument("--byte-index", type=_byte_index, default=0)
    p.add_argument("--true-byte", type=int, choices=range(256), metavar="0..255")
    p.add_argument("--report", help="mtd_table CSV output")
    p.add_argument("--config")
    mode_flags(p)
    p.set_defaults(func=cmd_mtd)

    p = sub.add_parser("experiment", parents=[common], help="MTD over repeated random keys")
    p.add_argument("--design", choices=DESIGNS, required=True)
    p.add_argument("--num-keys", type=_positive_int, default=10)
    p.add_argument("--num-traces", type=_positive_int, default=2000)
    p.add_argument("--step", type=_positive_int, default=10)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sigma-el", type=_non_negative)
    p.add_argument("--config")
    p.add_argument("--threads", type=_positive_int, default=1)
    mode_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("vcd2trace", parents=[common], help="build traces from VCD toggle counts")
    p.add_argument("--manifest", required=True, help="lines of 'path,hex-plaintext'")
    p.add_argument("--window-ns", type=float, required=True)
    p.add_argument("--t-start", type=float, default=0.0)
    p.add_argument("--t-end", type=float, help="default: last timestamp of each file")
    p.add_argument("--coeff", type=float, default=1.0, help="mW per toggle")
    p.add_argument("--xz-weight", type=float, choices=(0.0, 0.5, 1.0), default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vcd2trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "window_ns", 1.0) <= 0:
        parser.print_usage(sys.stderr)
        print("tmrsca: error: --window-ns must be > 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tmrsca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"tmrsca: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
