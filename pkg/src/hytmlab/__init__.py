"""hytmlab: a desk-scale hybrid transactional memory laboratory.

Software emulation of best-effort hardware transactional memory plus a
cooperating word-based software TM, nine synchronization policies over
one transaction-body interface, SSCA-2-style graph workload kernels,
and an experiment harness with per-thread statistics and CSV output.
"""

from .memory import WORD_BITS, WORD_MASK, OwnershipRecord, TmHeap
from .htm import (AbortCause, HtmConfig, HwAbort, HwTx, TxStatus, atomic_add,
                  atomic_store, hw_abort, hw_begin, hw_commit, hw_read,
                  hw_write, subscribe_lock)
from .stm import (GLOBAL_LOCK_ADDR, SPIN_LOCK_ADDR, SYNC_RESERVED_WORDS,
                  SwAbort, SwTx, episode_acquire, episode_release,
                  lock_counter, sw_abort, sw_begin, sw_commit, sw_read,
                  sw_write)
from .runtime import (CoopBarrier, CoopContext, CoopScheduler, ThreadBarrier,
                      ThreadContext, derive_rng, run_threaded)
from .stats import ThreadStats, aggregate
from .policies import (ALL_POLICY_KINDS, CommitPath, Fixed, HYTM_KINDS, Path,
                       PolicyConfig, PolicyKind, RetrySpec, SectionRunner,
                       Tuned, UniformRange, default_retry_spec,
                       parse_retry_spec, run_section, tune_stad)
from .workload import (EdgeTuple, RmatParams, SharedGraph, computation_kernel,
                       dump_edges, generation_kernel, insertion_bodies,
                       load_edges, max_weight_oracle, out_degrees,
                       packed_multiset, graph_packed_multiset,
                       rmat_edges, sequential_build)
from .harness import (CSV_COLUMNS, ExperimentSpec, ExperimentResult, Row,
                      StressOutcome, audit_csv, audit_rows, emit_csv,
                      run_experiment, run_stress_suite, stress_increments)

__version__ = "0.1.0"

__all__ = [
    "WORD_BITS", "WORD_MASK", "OwnershipRecord", "TmHeap",
    "AbortCause", "HtmConfig", "HwAbort", "HwTx", "TxStatus",
    "atomic_add", "atomic_store", "hw_abort", "hw_begin", "hw_commit",
    "hw_read", "hw_write", "subscribe_lock",
    "GLOBAL_LOCK_ADDR", "SPIN_LOCK_ADDR", "SYNC_RESERVED_WORDS",
    "SwAbort", "SwTx", "episode_acquire", "episode_release", "lock_counter",
    "sw_abort", "sw_begin", "sw_commit", "sw_read", "sw_write",
    "CoopBarrier", "CoopContext", "CoopScheduler", "ThreadBarrier",
    "ThreadContext", "derive_rng", "run_threaded",
    "ThreadStats", "aggregate",
    "ALL_POLICY_KINDS", "CommitPath", "Fixed", "HYTM_KINDS", "Path",
    "PolicyConfig", "PolicyKind", "RetrySpec", "SectionRunner", "Tuned",
    "UniformRange", "default_retry_spec", "parse_retry_spec", "run_section",
    "tune_stad",
    "EdgeTuple", "RmatParams", "SharedGraph", "computation_kernel",
    "dump_edges", "generation_kernel", "insertion_bodies", "load_edges",
    "max_weight_oracle", "out_degrees", "packed_multiset",
    "graph_packed_multiset", "rmat_edges", "sequential_build",
    "CSV_COLUMNS", "ExperimentSpec", "ExperimentResult", "Row",
    "StressOutcome", "audit_csv", "audit_rows", "emit_csv",
    "run_experiment", "run_stress_suite", "stress_increments",
]
