"""Execution contexts: deterministic cooperative scheduling, real threads.

The laboratory's default execution mode multiplexes workers onto one OS
thread with greenlets.  Workers call :meth:`WorkerContext.step` between
shared-memory operations; every ``switch_interval``-th step the context
hands control to a pseudo-randomly chosen peer.  Because the stream of
switch decisions is drawn from one seeded generator and nothing else is
nondeterministic, a run is a pure function of its configuration and
seed — identical runs produce identical counters, and schedules can be
replayed at will.  ``switch_interval=1`` yields the finest interleaving
(a possible switch at every operation) for adversarial tests; larger
intervals amortize switch cost for bulk experiments.

A second mode runs workers on real ``threading.Thread``s for smoke
checks that the shared structures also tolerate preemptive scheduling;
those workers serialize each critical-section attempt through the
heap's guard lock and make no determinism promises.
"""

from __future__ import annotations

import threading
import time
from random import Random
from typing import Callable, Optional

from greenlet import greenlet

from .stats import ThreadStats


def derive_rng(*parts) -> Random:
    """Seed a generator from structured parts, stably across processes.

    String seeding hashes with SHA-512 internally, so the stream does
    not depend on ``PYTHONHASHSEED``.
    """
    return Random(":".join(str(p) for p in parts))


class CoopContext:
    """Per-worker handle inside a :class:`CoopScheduler` run."""

    __slots__ = ("scheduler", "thread_id", "rng", "stats", "steps",
                 "_fuel", "_interval", "_glet", "_fn", "guard")

    def __init__(self, scheduler: "CoopScheduler", thread_id: int,
                 fn: Callable[["CoopContext"], None],
                 rng: Optional[Random], stats: Optional[ThreadStats]):
        self.scheduler = scheduler
        self.thread_id = thread_id
        self.rng = rng if rng is not None else derive_rng("worker", thread_id)
        self.stats = stats if stats is not None else ThreadStats()
        self.steps = 0
        self._interval = scheduler.switch_interval
        self._fuel = self._interval
        self._fn = fn
        self._glet = greenlet(self._trampoline)
        self.guard = None  # cooperative workers never need the heap guard

    def _trampoline(self) -> None:
        try:
            self._fn(self)
        finally:
            self.scheduler._retire(self)

    def step(self) -> None:
        """Mark one unit of work; maybe hand control to a random peer."""
        self.steps += 1
        f = self._fuel - 1
        if f > 0:
            self._fuel = f
            return
        self._switch()

    def _switch(self) -> None:
        """Refuel and hand control to a pseudo-randomly chosen peer.

        Also the inlined slow path of :meth:`step`: transaction handles
        decrement ``_fuel`` themselves and call this when it runs out.
        """
        self._fuel = self._interval
        live = self.scheduler._live
        n = len(live)
        if n < 2:
            return
        j = self.scheduler.rng.randrange(n - 1)
        target = live[j]
        if target is self:
            target = live[n - 1]
        target._glet.switch()

    def yield_now(self) -> None:
        """Hand control to a random peer immediately (if any is live)."""
        self.steps += 1
        self._switch()

    def wait_until(self, pred: Callable[[], bool]) -> None:
        """Block until ``pred()`` holds, repeatedly yielding to peers."""
        while not pred():
            if len(self.scheduler._live) < 2:
                raise RuntimeError(
                    f"worker {self.thread_id} blocked with no runnable peer "
                    "(cooperative deadlock)")
            self.yield_now()


class CoopScheduler:
    """Deterministic round-free scheduler over greenlet workers.

    Spawn workers, then :meth:`run` drives them to completion.  Any
    exception in a worker propagates out of :meth:`run`.
    """

    def __init__(self, seed: int = 0, switch_interval: int = 17):
        if switch_interval < 1:
            raise ValueError("switch_interval must be at least 1")
        self.rng = derive_rng("sched", seed)
        self.switch_interval = switch_interval
        self.contexts: list = []
        self._live: list = []

    def spawn(self, fn: Callable[[CoopContext], None], thread_id: Optional[int] = None,
              rng: Optional[Random] = None, stats: Optional[ThreadStats] = None) -> CoopContext:
        if thread_id is None:
            thread_id = len(self.contexts)
        ctx = CoopContext(self, thread_id, fn, rng, stats)
        self.contexts.append(ctx)
        self._live.append(ctx)
        return ctx

    def _retire(self, ctx: CoopContext) -> None:
        self._live.remove(ctx)

    def run(self) -> None:
        live = self._live
        rng = self.rng
        while live:
            n = len(live)
            j = rng.randrange(n) if n > 1 else 0
            live[j]._glet.switch()

    @property
    def total_steps(self) -> int:
        return sum(ctx.steps for ctx in self.contexts)


class CoopBarrier:
    """Phase barrier for cooperative workers; ``wait`` takes the context."""

    __slots__ = ("parties", "_arrived", "_generation")

    def __init__(self, parties: int):
        if parties < 1:
            raise ValueError("parties must be at least 1")
        self.parties = parties
        self._arrived = 0
        self._generation = 0

    def wait(self, ctx: CoopContext) -> None:
        gen = self._generation
        self._arrived += 1
        if self._arrived == self.parties:
            self._arrived = 0
            self._generation = gen + 1
            return
        ctx.wait_until(lambda: self._generation != gen)


class ThreadContext:
    """Per-worker handle for preemptive (real-thread) execution.

    Carries the heap's guard lock so runners can serialize each
    critical-section attempt; stats counters are only touched by the
    owning worker, so they need no lock of their own.  The fuel
    machinery exists for interface parity with :class:`CoopContext`;
    running out of fuel merely offers the OS a reschedule point.
    """

    __slots__ = ("thread_id", "rng", "stats", "steps", "guard", "_fuel",
                 "_interval")

    def __init__(self, thread_id: int, guard, rng: Optional[Random] = None,
                 stats: Optional[ThreadStats] = None):
        self.thread_id = thread_id
        self.rng = rng if rng is not None else derive_rng("worker", thread_id)
        self.stats = stats if stats is not None else ThreadStats()
        self.steps = 0
        self.guard = guard
        self._interval = 256
        self._fuel = self._interval

    def step(self) -> None:
        self.steps += 1
        f = self._fuel - 1
        if f > 0:
            self._fuel = f
            return
        self._switch()

    def _switch(self) -> None:
        self._fuel = self._interval
        time.sleep(0)

    def yield_now(self) -> None:
        self.steps += 1
        time.sleep(0)

    def wait_until(self, pred: Callable[[], bool]) -> None:
        while not pred():
            time.sleep(0)


class ThreadBarrier:
    """Phase barrier for preemptive workers, context-compatible."""

    def __init__(self, parties: int):
        self.parties = parties
        self._barrier = threading.Barrier(parties)

    def wait(self, ctx) -> None:
        # A finite timeout turns a crashed peer into a visible error
        # instead of a hung join.
        self._barrier.wait(timeout=120.0)


def run_threaded(worker_fns, guard, seed: int = 0) -> list:
    """Run one function per real thread; returns the contexts.

    ``worker_fns`` is a sequence of callables taking a context.  Worker
    exceptions are re-raised here after all threads have been joined.
    """
    contexts = [ThreadContext(i, guard, rng=derive_rng("worker", seed, i))
                for i in range(len(worker_fns))]
    errors: list = []

    def _wrap(fn, ctx):
        try:
            fn(ctx)
        except BaseException as exc:  # noqa: BLE001 - reported to caller
            errors.append(exc)

    threads = [threading.Thread(target=_wrap, args=(fn, ctx), daemon=True)
               for fn, ctx in zip(worker_fns, contexts)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return contexts
