"""Experiment runner, CSV emission, stress suite, and statistics audit.

``run_experiment`` executes an :class:`ExperimentSpec` — runs × seeds
of the configured kernels under one policy — and returns one row per
(seed, run, kernel, thread) plus a per-run aggregate row.  Counters are
deterministic given the spec and seed; wall-clock durations are
reported but never asserted.

``stress_increments`` is the correctness workhorse: N workers each
increment a shared word M times through policy-run critical sections,
and the final value must be exactly N·M.

``audit_rows`` re-checks the conservation identities any reader could
check from the CSV alone.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import IO, List, Optional, Sequence

from .memory import TmHeap
from .htm import HtmConfig
from .policies import (ALL_POLICY_KINDS, PolicyConfig, PolicyKind, RetrySpec,
                       SectionRunner, default_retry_spec, hash_seed)
from .runtime import CoopScheduler, derive_rng
from .stats import ThreadStats, aggregate
from .stm import GLOBAL_LOCK_ADDR, SPIN_LOCK_ADDR
from .workload import (RmatParams, SharedGraph, computation_kernel,
                       generation_kernel, rmat_edges, sequential_build)

DEFAULT_MAX_HEAP_WORDS = 1 << 25

CSV_COLUMNS = (
    "policy", "scale", "edgefactor", "threads", "thread_id", "seed", "run",
    "kernel", "duration_ns", "htm_begins", "htm_commits", "aborts_conflict",
    "aborts_capacity", "aborts_lock", "aborts_explicit", "aborts_spurious",
    "htm_retries", "stm_begins", "stm_commits", "stm_aborts", "lock_commits",
    "fallback_episodes", "r_cap", "w_cap", "retry_spec",
)

_STATS_TO_CSV = (
    ("duration_ns", "duration_ns"),
    ("htm_begins", "htm_begins"),
    ("htm_commits", "htm_commits"),
    ("htm_aborts_conflict", "aborts_conflict"),
    ("htm_aborts_capacity", "aborts_capacity"),
    ("htm_aborts_lock_subscription", "aborts_lock"),
    ("htm_aborts_explicit", "aborts_explicit"),
    ("htm_aborts_spurious", "aborts_spurious"),
    ("htm_retries", "htm_retries"),
    ("stm_begins", "stm_begins"),
    ("stm_commits", "stm_commits"),
    ("stm_aborts", "stm_aborts"),
    ("lock_commits", "lock_commits"),
    ("fallback_episodes", "fallback_episodes"),
)

AGGREGATE_THREAD_ID = -1


@dataclass(frozen=True)
class ExperimentSpec:
    policy: PolicyKind
    retries: Optional[RetrySpec] = None
    scale: int = 10
    edgefactor: int = 8
    n_threads: int = 4
    r_cap: int = 512
    w_cap: int = 64
    spurious: float = 0.0
    seeds: Sequence[int] = (0,)
    runs: int = 1
    kernel: str = "both"
    switch_interval: int = 17
    slot_cap: Optional[int] = None
    words_per_line: int = 8
    max_heap_words: int = DEFAULT_MAX_HEAP_WORDS

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.n_threads < 1:
            raise ValueError("n_threads must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.kernel not in ("generate", "compute", "both"):
            raise ValueError("kernel must be generate, compute, or both")

    def policy_config(self, seed: int) -> PolicyConfig:
        return PolicyConfig(
            kind=self.policy,
            retries=self.retries if self.retries is not None
            else default_retry_spec(self.policy),
            htm=HtmConfig(r_cap=self.r_cap, w_cap=self.w_cap,
                          spurious_abort_probability=self.spurious),
            rng_seed=seed)


@dataclass
class Row:
    """One CSV row: a thread's (or the run aggregate's) counters."""
    policy: str
    scale: int
    edgefactor: int
    threads: int
    thread_id: int
    seed: int
    run: int
    kernel: str
    stats: ThreadStats
    r_cap: int
    w_cap: int
    retry_spec: str

    def as_record(self) -> list:
        rec = [self.policy, self.scale, self.edgefactor, self.threads,
               self.thread_id, self.seed, self.run, self.kernel]
        values = {csv_name: getattr(self.stats, attr)
                  for attr, csv_name in _STATS_TO_CSV}
        rec.extend(values[c] for c in CSV_COLUMNS[8:22])
        rec.extend([self.r_cap, self.w_cap, self.retry_spec])
        return rec


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: List[Row] = field(default_factory=list)

    def aggregate_rows(self) -> List[Row]:
        return [r for r in self.rows if r.thread_id == AGGREGATE_THREAD_ID]


class HeapBudgetError(ValueError):
    """The configured graph layout exceeds the allowed heap size."""


def check_heap_budget(spec: ExperimentSpec) -> int:
    words = SharedGraph.words_for(spec.scale, spec.edgefactor, spec.slot_cap,
                                  spec.words_per_line)
    if words > spec.max_heap_words:
        raise HeapBudgetError(
            f"scale {spec.scale} / edgefactor {spec.edgefactor} needs {words} "
            f"heap words, exceeding the budget of {spec.max_heap_words}")
    return words


def _post_run_checks(heap: TmHeap, per_thread: Sequence[ThreadStats]) -> None:
    counter = heap.words[GLOBAL_LOCK_ADDR]
    if counter != 0:
        raise AssertionError(f"global lock counter ended at {counter}, want 0")
    spin = heap.words[SPIN_LOCK_ADDR]
    if spin != 0:
        raise AssertionError(f"spin lock word ended at {spin}, want 0")
    if not heap.is_quiescent():
        raise AssertionError("heap still has live ownership after run")
    for s in per_thread:
        s.check_identities()


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Execute the spec; returns per-thread and aggregate rows per run."""
    check_heap_budget(spec)
    result = ExperimentResult(spec)
    retry_text = str(spec.retries if spec.retries is not None
                     else default_retry_spec(spec.policy))

    def emit(kernel: str, seed: int, run: int,
             per_thread: Sequence[ThreadStats]) -> None:
        common = dict(policy=spec.policy.value, scale=spec.scale,
                      edgefactor=spec.edgefactor, threads=spec.n_threads,
                      seed=seed, run=run, kernel=kernel, r_cap=spec.r_cap,
                      w_cap=spec.w_cap, retry_spec=retry_text)
        for tid, s in enumerate(per_thread):
            result.rows.append(Row(thread_id=tid, stats=s.copy(), **common))
        result.rows.append(Row(thread_id=AGGREGATE_THREAD_ID,
                               stats=aggregate(per_thread), **common))

    for seed in spec.seeds:
        params = RmatParams(scale=spec.scale, edgefactor=spec.edgefactor,
                            seed=seed)
        edges = rmat_edges(params)
        cfg = spec.policy_config(seed)
        for run in range(spec.runs):
            graph = SharedGraph(None, spec.scale, spec.edgefactor,
                                spec.slot_cap, spec.words_per_line)
            if spec.kernel in ("generate", "both"):
                per_thread = [ThreadStats() for _ in range(spec.n_threads)]
                t0 = time.perf_counter_ns()
                generation_kernel(edges, graph, cfg, spec.n_threads,
                                  per_thread, seed=seed, run=run,
                                  switch_interval=spec.switch_interval)
                elapsed = time.perf_counter_ns() - t0
                for s in per_thread:
                    s.duration_ns = elapsed
                _post_run_checks(graph.heap, per_thread)
                emit("generate", seed, run, per_thread)
            else:
                sequential_build(graph, edges)
            if spec.kernel in ("compute", "both"):
                per_thread = [ThreadStats() for _ in range(spec.n_threads)]
                t0 = time.perf_counter_ns()
                computation_kernel(graph, cfg, spec.n_threads, per_thread,
                                   seed=seed, run=run,
                                   switch_interval=spec.switch_interval)
                elapsed = time.perf_counter_ns() - t0
                for s in per_thread:
                    s.duration_ns = elapsed
                _post_run_checks(graph.heap, per_thread)
                emit("compute", seed, run, per_thread)
    return result


def emit_csv(result, sink: IO[str]) -> int:
    """Write the exact 25-column schema; returns the number of data rows."""
    rows = result.rows if isinstance(result, ExperimentResult) else list(result)
    try:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_record())
    except OSError as exc:
        raise OSError(f"failed writing CSV output: {exc}") from exc
    return len(rows)


# -- audit -------------------------------------------------------------------

_EXCLUSIVE_PATHS = {
    "coarse": ("lock",),
    "stm": ("software",),
    "alock": ("hardware", "lock"),
    "slock": ("hardware", "lock"),
    "hle": ("hardware", "lock"),
    "rnd": ("hardware", "software"),
    "fix": ("hardware", "software"),
    "stad": ("hardware", "software"),
    "dyad": ("hardware", "software"),
}

_COUNTER_COLUMNS = CSV_COLUMNS[8:24]  # duration_ns .. w_cap (all integral)


def audit_rows(records: Sequence[dict]) -> List[str]:
    """Check conservation identities on parsed CSV records.

    Returns a list of violation messages (empty = clean).  Checks, per
    row: non-negative integer counters; begins = commits + aborts;
    allowed commit paths for the row's policy.  Checks, per aggregate
    row: counters equal the sum over its thread rows and duration is
    their mean.  For generation rows, completed sections must equal the
    edge count implied by scale and edgefactor.
    """
    problems = []
    groups: dict = {}
    for i, rec in enumerate(records):
        where = f"row {i} ({rec.get('policy')}/{rec.get('kernel')}/seed {rec.get('seed')})"
        try:
            ints = {c: int(rec[c]) for c in _COUNTER_COLUMNS}
        except (KeyError, ValueError) as exc:
            problems.append(f"{where}: unparsable counters: {exc}")
            continue
        if any(v < 0 for v in ints.values()):
            problems.append(f"{where}: negative counter")
        aborts = (ints["aborts_conflict"] + ints["aborts_capacity"]
                  + ints["aborts_lock"] + ints["aborts_explicit"]
                  + ints["aborts_spurious"])
        if ints["htm_begins"] != ints["htm_commits"] + aborts:
            problems.append(
                f"{where}: htm_begins {ints['htm_begins']} != commits "
                f"{ints['htm_commits']} + aborts {aborts}")
        sections = ints["htm_commits"] + ints["stm_commits"] + ints["lock_commits"]
        policy = rec.get("policy", "")
        allowed = _EXCLUSIVE_PATHS.get(policy)
        if allowed is not None:
            if "hardware" not in allowed and ints["htm_begins"]:
                problems.append(f"{where}: hardware path forbidden for {policy}")
            if "software" not in allowed and ints["stm_begins"]:
                problems.append(f"{where}: software path forbidden for {policy}")
            if "lock" not in allowed and ints["lock_commits"]:
                problems.append(f"{where}: lock path forbidden for {policy}")
        if (rec.get("kernel") == "generate"
                and int(rec["thread_id"]) == AGGREGATE_THREAD_ID):
            expected = int(rec["edgefactor"]) << int(rec["scale"])
            if sections != expected:
                problems.append(
                    f"{where}: generation sections {sections} != edges {expected}")
        key = (rec["policy"], rec["scale"], rec["edgefactor"], rec["threads"],
               rec["seed"], rec["run"], rec["kernel"],
               rec["r_cap"], rec["w_cap"], rec["retry_spec"])
        groups.setdefault(key, []).append((int(rec["thread_id"]), ints))
    for key, members in groups.items():
        agg = [ints for tid, ints in members if tid == AGGREGATE_THREAD_ID]
        per_thread = [ints for tid, ints in members if tid != AGGREGATE_THREAD_ID]
        if len(agg) != 1:
            problems.append(f"group {key}: expected 1 aggregate row, got {len(agg)}")
            continue
        agg = agg[0]
        for col in _COUNTER_COLUMNS:
            if col in ("duration_ns", "r_cap", "w_cap"):
                continue
            total = sum(ints[col] for ints in per_thread)
            if agg[col] != total:
                problems.append(
                    f"group {key}: aggregate {col} {agg[col]} != thread sum {total}")
        if per_thread:
            mean = int(round(sum(i["duration_ns"] for i in per_thread)
                             / len(per_thread)))
            if abs(agg["duration_ns"] - mean) > 1:
                problems.append(
                    f"group {key}: aggregate duration {agg['duration_ns']} "
                    f"is not the thread mean {mean}")
    return problems


def audit_csv(source: IO[str]) -> List[str]:
    reader = csv.DictReader(source)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        return [f"bad header: {reader.fieldnames}"]
    return audit_rows(list(reader))


# -- counter-increment stress -------------------------------------------------


@dataclass
class StressOutcome:
    policy: PolicyKind
    n_threads: int
    increments: int
    seed: int
    final_value: int
    expected: int
    per_thread: List[ThreadStats]

    @property
    def ok(self) -> bool:
        return self.final_value == self.expected


def stress_increments(policy: PolicyKind, n_threads: int, increments: int,
                      seed: int, *, retries: Optional[RetrySpec] = None,
                      r_cap: int = 512, w_cap: int = 64,
                      switch_interval: int = 31) -> StressOutcome:
    """N workers × M policy-run increments of one shared word."""
    if n_threads < 1 or increments < 0:
        raise ValueError("need n_threads >= 1 and increments >= 0")
    wpl = 8
    base = wpl  # first full line after the sync words
    heap = TmHeap(base + 1, words_per_line=wpl)
    addr = base
    cfg = PolicyConfig(
        kind=policy,
        retries=retries if retries is not None else default_retry_spec(policy),
        htm=HtmConfig(r_cap=r_cap, w_cap=w_cap),
        rng_seed=seed)
    sched = CoopScheduler(seed=hash_seed("stress-sched", seed),
                          switch_interval=switch_interval)
    stats_list = [ThreadStats() for _ in range(n_threads)]

    def body(h) -> None:
        h.write(addr, h.read(addr) + 1)

    def make_worker(t: int):
        def work(ctx) -> None:
            runner = SectionRunner(heap, cfg, ctx)
            run_section = runner.run
            for _ in range(increments):
                run_section(body)
        return work

    for t in range(n_threads):
        sched.spawn(make_worker(t), thread_id=t,
                    rng=derive_rng("worker", seed, t, 0), stats=stats_list[t])
    sched.run()
    _post_run_checks(heap, stats_list)
    return StressOutcome(policy, n_threads, increments, seed,
                         heap.words[addr], n_threads * increments, stats_list)


def run_stress_suite(policies: Sequence[PolicyKind] = ALL_POLICY_KINDS,
                     thread_counts: Sequence[int] = (1, 2, 4, 8),
                     increments: int = 10000, n_seeds: int = 50,
                     base_seed: int = 0,
                     progress=None) -> List[StressOutcome]:
    """The full correctness sweep; returns every outcome (check ``.ok``)."""
    outcomes = []
    for policy in policies:
        for n_threads in thread_counts:
            for s in range(n_seeds):
                out = stress_increments(policy, n_threads, increments,
                                        hash_seed(base_seed, s))
                outcomes.append(out)
                if progress is not None:
                    progress(out)
    return outcomes
