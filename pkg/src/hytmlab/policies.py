"""The nine synchronization policies over a uniform transaction-body interface.

A critical section is a *body*: a callable taking a handle that exposes
``read(addr) -> word`` and ``write(addr, word)``.  The same body runs
unmodified as a hardware transaction, a software transaction, or a
direct execution under an exclusive lock — the policy decides which,
and with how many hardware retries.

Policies and their allowed commit paths:

==================  =======================================  ==============
kind                mechanism                                paths
==================  =======================================  ==============
``COARSE_LOCK``     global test-and-set spin word            Lock
``STM_ONLY``        software episode per section             Software
``HTM_ALOCK``       HTM, fallback takes the counter word     Hardware/Lock
``HTM_SLOCK``       HTM, fallback takes the spin word        Hardware/Lock
``HLE``             one elided attempt, then the spin word   Hardware/Lock
``HYTM_RND``        HTM + STM fallback, random retry draw    Hardware/Software
``HYTM_FIX``        HTM + STM fallback, fixed retries        Hardware/Software
``HYTM_STAD``       HTM + STM fallback, statically tuned     Hardware/Software
``HYTM_DYAD``       HTM + STM fallback, capacity-adaptive    Hardware/Software
==================  =======================================  ==============

Retry loops use decrement-then-test (``tries >= 0`` retries), so a
``Fixed(n)`` budget yields n+1 hardware attempts in total.  The
dynamically adaptive policy reacts to a Capacity abort by zeroing the
remaining budget, which permits exactly one further hardware attempt
before the software fallback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

from .htm import AbortCause, HtmConfig, HwAbort, HwTx, atomic_add, atomic_store
from .memory import TmHeap
from .runtime import CoopScheduler, derive_rng
from .stats import ThreadStats
from .stm import (GLOBAL_LOCK_ADDR, SPIN_LOCK_ADDR, SwAbort, SwTx,
                  episode_acquire, episode_release)

_CAPACITY = AbortCause.CAPACITY
_LOCK_SUBSCRIPTION = AbortCause.LOCK_SUBSCRIPTION


class PolicyKind(enum.Enum):
    COARSE_LOCK = "coarse"
    STM_ONLY = "stm"
    HTM_ALOCK = "alock"
    HTM_SLOCK = "slock"
    HLE = "hle"
    HYTM_RND = "rnd"
    HYTM_FIX = "fix"
    HYTM_STAD = "stad"
    HYTM_DYAD = "dyad"


ALL_POLICY_KINDS = tuple(PolicyKind)
HYTM_KINDS = frozenset({PolicyKind.HYTM_RND, PolicyKind.HYTM_FIX,
                        PolicyKind.HYTM_STAD, PolicyKind.HYTM_DYAD})


@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("Fixed retry count must be >= 0")

    def __str__(self) -> str:
        return f"fixed:{self.n}"


@dataclass(frozen=True)
class UniformRange:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not 1 <= self.lo <= self.hi:
            raise ValueError("UniformRange requires 1 <= lo <= hi")

    def __str__(self) -> str:
        return f"range:{self.lo}:{self.hi}"


@dataclass(frozen=True)
class Tuned:
    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("Tuned retry count must be >= 0")

    def __str__(self) -> str:
        return f"tuned:{self.n}"


RetrySpec = Union[Fixed, UniformRange, Tuned]


def parse_retry_spec(text: str) -> RetrySpec:
    """Inverse of ``str(spec)``: ``fixed:N`` / ``range:LO:HI`` / ``tuned:N``."""
    parts = text.split(":")
    try:
        if parts[0] == "fixed" and len(parts) == 2:
            return Fixed(int(parts[1]))
        if parts[0] == "range" and len(parts) == 3:
            return UniformRange(int(parts[1]), int(parts[2]))
        if parts[0] == "tuned" and len(parts) == 2:
            return Tuned(int(parts[1]))
    except ValueError as exc:
        raise ValueError(f"bad retry spec {text!r}: {exc}") from None
    raise ValueError(f"bad retry spec {text!r}")


class Path(enum.Enum):
    HARDWARE = "hardware"
    SOFTWARE = "software"
    LOCK = "lock"


class CommitPath(NamedTuple):
    """How one critical section finally committed."""
    path: Path
    retries_used: int


# Shared instances for the overwhelmingly common zero-retry outcomes.
_HW_0 = CommitPath(Path.HARDWARE, 0)
_SW_0 = CommitPath(Path.SOFTWARE, 0)
_LOCK_0 = CommitPath(Path.LOCK, 0)


_RETRY_KIND_RULES = {
    PolicyKind.HTM_ALOCK: (Fixed,),
    PolicyKind.HTM_SLOCK: (Fixed,),
    PolicyKind.HYTM_RND: (UniformRange,),
    PolicyKind.HYTM_FIX: (Fixed,),
    PolicyKind.HYTM_STAD: (Tuned,),
    PolicyKind.HYTM_DYAD: (Fixed,),
}


def default_retry_spec(kind: PolicyKind) -> RetrySpec:
    """Per-kind default budget: Fixed(10), or the 1-50 draw for RND."""
    if kind is PolicyKind.HYTM_RND:
        return UniformRange(1, 50)
    if kind is PolicyKind.HYTM_STAD:
        return Tuned(10)
    return Fixed(10)


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    retries: RetrySpec = None  # type: ignore[assignment]  # filled per kind
    htm: HtmConfig = HtmConfig()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.retries is None:
            object.__setattr__(self, "retries", default_retry_spec(self.kind))
        allowed = _RETRY_KIND_RULES.get(self.kind)
        if allowed is not None and not isinstance(self.retries, allowed):
            names = "/".join(t.__name__ for t in allowed)
            raise ValueError(
                f"policy {self.kind.value} requires a {names} retry spec, "
                f"got {self.retries}")


# -- transaction-body handles ------------------------------------------------


class HwHandle:
    """Routes body reads/writes through a hardware transaction.

    Each access burns one scheduler step (fuel decrements are inlined
    here — this is the hottest code path in the package).
    """

    __slots__ = ("tx", "ctx")

    def __init__(self):
        self.tx = None
        self.ctx = None

    def read(self, addr: int) -> int:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        return self.tx.read(addr)

    def write(self, addr: int, value: int) -> None:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        self.tx.write(addr, value)


class SwHandle:
    """Routes body reads/writes through a software transaction."""

    __slots__ = ("tx", "ctx")

    def __init__(self):
        self.tx = None
        self.ctx = None

    def read(self, addr: int) -> int:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        return self.tx.read(addr)

    def write(self, addr: int, value: int) -> None:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        self.tx.write(addr, value)


class DirectHandle:
    """Raw heap access for lock-protected direct execution.

    Safe because a direct executor only runs while it holds the lock,
    every speculative attempt subscribes that lock before touching data,
    and the acquisition store dooms all then-live subscribers.
    """

    __slots__ = ("words", "ctx")

    def __init__(self):
        self.words = None
        self.ctx = None

    def read(self, addr: int) -> int:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        return self.words[addr]

    def write(self, addr: int, value: int) -> None:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        self.words[addr] = value


TxBody = Callable[[object], None]


# -- the runner --------------------------------------------------------------


class SectionRunner:
    """Executes critical sections for one worker under one policy.

    Bind one runner per worker context; it owns pooled transaction
    objects and the per-worker statistics.  ``run(body)`` executes the
    body to completion under the configured policy and returns the
    :class:`CommitPath`.

    Under a cooperative context the emulator's one-op-at-a-time
    atomicity needs no locking.  Under a preemptive (real-thread)
    context each hardware/software attempt, lock transition, and
    episode boundary is serialized through the heap guard; waits happen
    outside it.
    """

    __slots__ = ("heap", "cfg", "ctx", "stats", "_hw", "_sw", "_hwh", "_swh",
                 "_dh", "_run", "_attempt", "_fixed_n", "_rnd_lo", "_rnd_span",
                 "_counter_clear")

    def __init__(self, heap: TmHeap, cfg: PolicyConfig, ctx):
        self.heap = heap
        self.cfg = cfg
        self.ctx = ctx
        self.stats = ctx.stats
        self._hw = None
        self._sw = None
        self._hwh = HwHandle()
        self._swh = SwHandle()
        self._dh = DirectHandle()
        self._hwh.ctx = ctx
        self._swh.ctx = ctx
        self._dh.ctx = ctx
        self._dh.words = heap.words
        retries = cfg.retries
        self._fixed_n = retries.n if isinstance(retries, (Fixed, Tuned)) else 0
        if isinstance(retries, UniformRange):
            self._rnd_lo, self._rnd_span = retries.lo, retries.hi - retries.lo + 1
        else:
            self._rnd_lo = self._rnd_span = 0
        self._attempt = (self._hw_attempt if ctx.guard is None
                         else self._hw_attempt_guarded)
        words = heap.words
        self._counter_clear = lambda: words[GLOBAL_LOCK_ADDR] == 0
        kind = cfg.kind
        self._run = {
            PolicyKind.COARSE_LOCK: self._run_coarse,
            PolicyKind.STM_ONLY: self._run_stm_only,
            PolicyKind.HTM_ALOCK: self._run_alock,
            PolicyKind.HTM_SLOCK: self._run_slock,
            PolicyKind.HLE: self._run_hle,
            PolicyKind.HYTM_RND: self._run_hytm,
            PolicyKind.HYTM_FIX: self._run_hytm,
            PolicyKind.HYTM_STAD: self._run_hytm,
            PolicyKind.HYTM_DYAD: self._run_dyad,
        }[kind]

    def run(self, body: TxBody) -> CommitPath:
        ctx = self.ctx
        ctx.steps += 1
        f = ctx._fuel - 1
        if f > 0:
            ctx._fuel = f
        else:
            ctx._switch()
        return self._run(body)

    # -- building blocks -------------------------------------------------

    def _hw_attempt(self, body: TxBody, lock_addr: int):
        """One speculative attempt; returns None on commit, else the cause."""
        tx = self._hw
        if tx is None:
            tx = self._hw = HwTx(self.heap, self.cfg.htm, self.stats,
                                 rng=self.ctx.rng)
            self._hwh.tx = tx
        else:
            tx.restart(self.stats)
        try:
            tx.subscribe_lock(lock_addr)
            body(self._hwh)
            tx.commit()
            return None
        except HwAbort as exc:
            return exc.cause

    def _hw_attempt_guarded(self, body: TxBody, lock_addr: int):
        guard = self.ctx.guard
        if guard is None:
            return self._hw_attempt(body, lock_addr)
        with guard:
            return self._hw_attempt(body, lock_addr)

    def _sw_attempt(self, body: TxBody) -> bool:
        tx = self._sw
        if tx is None:
            tx = self._sw = SwTx(self.heap, self.stats)
            self._swh.tx = tx
        else:
            tx.restart(self.stats)
        try:
            body(self._swh)
            tx.commit()
            return True
        except SwAbort:
            return False

    def _stm_episode(self, body: TxBody) -> None:
        """Counter++, software attempts until one commits, counter--."""
        heap = self.heap
        guard = self.ctx.guard
        if guard is None:
            episode_acquire(heap, self.stats)
            while not self._sw_attempt(body):
                pass
            episode_release(heap)
            return
        with guard:
            episode_acquire(heap, self.stats)
        while True:
            with guard:
                done = self._sw_attempt(body)
            if done:
                break
        with guard:
            episode_release(heap)

    def _acquire_word(self, addr: int) -> None:
        """Spin until the lock word is zero, then set it to one."""
        ctx = self.ctx
        heap = self.heap
        words = heap.words
        guard = ctx.guard
        while True:
            ctx.step()
            if guard is None:
                if words[addr] == 0:
                    atomic_store(heap, addr, 1)
                    return
            else:
                with guard:
                    if words[addr] == 0:
                        atomic_store(heap, addr, 1)
                        return
            ctx.yield_now()

    def _release_word(self, addr: int) -> None:
        guard = self.ctx.guard
        if guard is None:
            atomic_store(self.heap, addr, 0)
        else:
            with guard:
                atomic_store(self.heap, addr, 0)

    def _acquire_counter(self) -> None:
        """Spin until the counter is zero, then increment it (exclusive)."""
        ctx = self.ctx
        heap = self.heap
        words = heap.words
        guard = ctx.guard
        while True:
            ctx.step()
            if guard is None:
                if words[GLOBAL_LOCK_ADDR] == 0:
                    atomic_add(heap, GLOBAL_LOCK_ADDR, 1)
                    return
            else:
                with guard:
                    if words[GLOBAL_LOCK_ADDR] == 0:
                        atomic_add(heap, GLOBAL_LOCK_ADDR, 1)
                        return
            ctx.yield_now()

    def _release_counter(self) -> None:
        guard = self.ctx.guard
        if guard is None:
            atomic_add(self.heap, GLOBAL_LOCK_ADDR, -1)
        else:
            with guard:
                atomic_add(self.heap, GLOBAL_LOCK_ADDR, -1)

    def _wait_counter_clear(self) -> None:
        """Park until no software episode is live.

        Relaunching speculation while the counter is nonzero is futile
        (the subscription aborts it instantly), so a budgeted retry
        after a lock-subscription abort first waits the episodes out
        rather than burning the rest of the budget.
        """
        if self.heap.words[GLOBAL_LOCK_ADDR] != 0:
            self.ctx.wait_until(self._counter_clear)

    def _direct_body(self, body: TxBody) -> None:
        body(self._dh)
        self.stats.lock_commits += 1

    # -- policies --------------------------------------------------------

    def _run_coarse(self, body: TxBody) -> CommitPath:
        self._acquire_word(SPIN_LOCK_ADDR)
        self._direct_body(body)
        self._release_word(SPIN_LOCK_ADDR)
        return _LOCK_0

    def _run_stm_only(self, body: TxBody) -> CommitPath:
        self._stm_episode(body)
        return _SW_0

    def _htm_then_lock(self, body: TxBody, lock_addr: int,
                       acquire, release) -> CommitPath:
        tries = self._fixed_n
        attempts = 0
        while tries >= 0:
            cause = self._attempt(body, lock_addr)
            attempts += 1
            if cause is None:
                used = attempts - 1
                if used == 0:
                    return _HW_0
                self.stats.htm_retries += used
                return CommitPath(Path.HARDWARE, used)
            tries -= 1
        used = attempts - 1
        self.stats.htm_retries += used
        acquire()
        self._direct_body(body)
        release()
        return CommitPath(Path.LOCK, used)

    def _run_alock(self, body: TxBody) -> CommitPath:
        return self._htm_then_lock(body, GLOBAL_LOCK_ADDR,
                                   self._acquire_counter, self._release_counter)

    def _run_slock(self, body: TxBody) -> CommitPath:
        return self._htm_then_lock(
            body, SPIN_LOCK_ADDR,
            lambda: self._acquire_word(SPIN_LOCK_ADDR),
            lambda: self._release_word(SPIN_LOCK_ADDR))

    def _run_hle(self, body: TxBody) -> CommitPath:
        cause = self._attempt(body, SPIN_LOCK_ADDR)
        if cause is None:
            return _HW_0
        self._acquire_word(SPIN_LOCK_ADDR)
        self._direct_body(body)
        self._release_word(SPIN_LOCK_ADDR)
        return _LOCK_0

    def _run_hytm(self, body: TxBody) -> CommitPath:
        span = self._rnd_span
        if span:
            # Uniform draw over [lo, hi]; random() is much cheaper than
            # randint and the float has 53 bits for a span of ~100.
            tries = self._rnd_lo + int(self.ctx.rng.random() * span)
        else:
            tries = self._fixed_n
        attempts = 0
        while tries >= 0:
            cause = self._attempt(body, GLOBAL_LOCK_ADDR)
            attempts += 1
            if cause is None:
                used = attempts - 1
                if used == 0:
                    return _HW_0
                self.stats.htm_retries += used
                return CommitPath(Path.HARDWARE, used)
            tries -= 1
            if cause is _LOCK_SUBSCRIPTION and tries >= 0:
                self._wait_counter_clear()
        used = attempts - 1
        self.stats.htm_retries += used
        self._stm_episode(body)
        return CommitPath(Path.SOFTWARE, used)

    def _run_dyad(self, body: TxBody) -> CommitPath:
        tries = self._fixed_n
        attempts = 0
        capacity_seen = False
        while tries >= 0:
            cause = self._attempt(body, GLOBAL_LOCK_ADDR)
            attempts += 1
            if cause is None:
                used = attempts - 1
                if used == 0:
                    return _HW_0
                self.stats.htm_retries += used
                return CommitPath(Path.HARDWARE, used)
            if cause is _CAPACITY:
                # Capacity will not improve with retrying: force the
                # budget to zero, granting one last hardware attempt,
                # then fall back voluntarily.
                if capacity_seen:
                    break
                capacity_seen = True
                tries = 0
            else:
                tries -= 1
                if cause is _LOCK_SUBSCRIPTION and tries >= 0:
                    self._wait_counter_clear()
        used = attempts - 1
        self.stats.htm_retries += used
        self._stm_episode(body)
        return CommitPath(Path.SOFTWARE, used)


# -- one-shot convenience wrappers (single-worker use and tests) -------------


class _InlineContext:
    """Minimal context for running sections outside a scheduler."""

    __slots__ = ("thread_id", "rng", "stats", "steps", "guard", "_fuel")

    def __init__(self, stats=None, seed: int = 0):
        self.thread_id = 0
        self.rng = derive_rng("inline", seed)
        self.stats = stats if stats is not None else ThreadStats()
        self.steps = 0
        self.guard = None
        self._fuel = 1 << 30

    def step(self) -> None:
        self.steps += 1

    def _switch(self) -> None:
        self._fuel = 1 << 30

    def yield_now(self) -> None:
        self.steps += 1

    def wait_until(self, pred) -> None:
        if not pred():
            raise RuntimeError("inline context cannot wait on other workers")


def run_section(body: TxBody, heap: TmHeap, cfg: PolicyConfig, stats=None,
                ctx=None) -> CommitPath:
    """Run one critical section under ``cfg`` without a scheduler."""
    if ctx is None:
        ctx = _InlineContext(stats, cfg.rng_seed)
    return SectionRunner(heap, cfg, ctx).run(body)


def tune_stad(body_generator, heap: TmHeap, ranges: Sequence, trials: int,
              seed: int, n_threads: int = 4, switch_interval: int = 7) -> Tuned:
    """Offline design-space exploration for the statically tuned policy.

    Runs the tuning workload under each candidate retry range (as a
    uniform draw, RND-style), scores each range by its mean completion
    cost over ``trials`` runs, picks the best range, and fixes the
    static retry count at that range's midpoint.

    The completion cost is the total number of scheduler steps the run
    consumed — the simulator's deterministic stand-in for completion
    time, so the sweep is reproducible given ``seed``.

    ``body_generator(trial)`` must return the list of section bodies
    for one trial; it is invoked once per (range, trial) and may reset
    the heap it closes over.  Ties prefer the earlier range.
    """
    range_list = [r if isinstance(r, UniformRange) else UniformRange(*r)
                  for r in ranges]
    if not range_list:
        raise ValueError("tune_stad requires at least one candidate range")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    best_cost = None
    best = None
    for cand in range_list:
        total = 0
        for trial in range(trials):
            bodies = list(body_generator(trial))
            cfg = PolicyConfig(kind=PolicyKind.HYTM_RND, retries=cand,
                               rng_seed=seed)
            sched = CoopScheduler(seed=hash_seed(seed, cand.lo, cand.hi, trial),
                                  switch_interval=switch_interval)
            for tid in range(n_threads):
                part = bodies[tid::n_threads]
                sched.spawn(_tune_worker(heap, cfg, part), thread_id=tid,
                            rng=derive_rng("tune", seed, cand.lo,
                                           cand.hi, trial, tid))
            sched.run()
            total += sched.total_steps
        mean = total / trials
        if best_cost is None or mean < best_cost:
            best_cost = mean
            best = cand
    return Tuned((best.lo + best.hi) // 2)


def hash_seed(*parts) -> int:
    """Stable small integer from structured parts (for nested seeding)."""
    return derive_rng(*parts).getrandbits(32)


def _tune_worker(heap: TmHeap, cfg: PolicyConfig, bodies):
    def work(ctx):
        runner = SectionRunner(heap, cfg, ctx)
        for body in bodies:
            runner.run(body)
    return work
