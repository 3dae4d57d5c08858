"""Side-channel laboratory for AES-128 under single and triple-modular-redundant designs."""
from .aes_core import (
    HD_PLAINTEXT, HW, PowerModel, PowerModelKind, encrypt, expand_key, hypothesis,
    intermediate_register, majority_vote, sbox,
)
from .analysis import MtdOutcome, NormalFit, experiment, mtd, normal_pdf_points
from .cpa import (
    CpaResult, PccAccumulator, acc_finalize, acc_merge, acc_update, build_hypotheses, key_rank,
    run_cpa, run_cpa_per_sample,
)
from .estimators import CPAAttack, LeakageSimulator, WindowDifference
from .leakage import (
    DesignConfig, InstanceConfig, NoiseParams, TraceSet, TransformKind, instance_target_flips,
    preset, reduce_to_scalar, simulate_traces,
)
from .traceio import export_csv, read_traceset, write_traceset
from .vcd import parse_vcd, toggle_counts, vcd_to_traceset

__version__ = "0.1.0"
