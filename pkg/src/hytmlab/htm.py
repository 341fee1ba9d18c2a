"""Best-effort hardware transactional memory, emulated.

Transactions track read/write sets at cacheline granularity against
flat capacity limits, buffer writes until commit, detect conflicts
eagerly, and support subscribing a lock word so that any committed
store to it dooms the subscriber.

Conflict resolution is requester-loses: an operation that runs into a
line write-owned by another live transaction aborts the requester,
while claiming write ownership of a line dooms its current subscribed
readers.  Doomed transactions fail lazily at their next operation or
at commit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from random import Random
from typing import Optional

from .memory import WORD_MASK, TmHeap


class AbortCause(enum.Enum):
    CONFLICT = "conflict"
    CAPACITY = "capacity"
    LOCK_SUBSCRIPTION = "lock_subscription"
    EXPLICIT = "explicit"
    SPURIOUS = "spurious"


class TxStatus(enum.Enum):
    ACTIVE = "active"
    DOOMED = "doomed"
    COMMITTED = "committed"
    ABORTED = "aborted"


_CONFLICT = AbortCause.CONFLICT
_CAPACITY = AbortCause.CAPACITY
_LOCK_SUB = AbortCause.LOCK_SUBSCRIPTION
_SPURIOUS = AbortCause.SPURIOUS
_ACTIVE = TxStatus.ACTIVE
_DOOMED = TxStatus.DOOMED
_COMMITTED = TxStatus.COMMITTED
_ABORTED = TxStatus.ABORTED


class HwAbort(Exception):
    """Raised when a hardware transaction aborts; bookkeeping is already done."""

    def __init__(self, cause: AbortCause):
        super().__init__(cause)
        self.cause = cause


@dataclass(frozen=True)
class HtmConfig:
    """Capacity limits and failure injection for the emulator.

    Capacities are counted in distinct cachelines; a written line counts
    against both limits through its read-set entry plus the write-line
    count.  ``spurious_abort_probability`` injects an abort chance at
    every operation to model environmental aborts (context switches,
    interrupts); it defaults to off.
    """

    r_cap: int = 512
    w_cap: int = 64
    spurious_abort_probability: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.r_cap < 1 or self.w_cap < 1:
            raise ValueError("capacity limits must be at least one line")
        if not 0.0 <= self.spurious_abort_probability <= 1.0:
            raise ValueError("spurious_abort_probability must lie in [0, 1]")


class HwTx:
    """One emulated hardware transaction bound to a heap.

    Use through ``hw_begin``/``hw_read``/``hw_write``/``subscribe_lock``/
    ``hw_commit``/``hw_abort`` or the equivalent methods.  All failure
    paths raise :class:`HwAbort` after rolling back; the heap is never
    left with this transaction's ownership after the raise.
    """

    __slots__ = ("heap", "stats", "tid", "status", "read_set", "write_buf",
                 "lock_lines", "abort_cause", "_r_cap", "_w_cap", "_spur_p",
                 "_rng", "_n_words")

    def __init__(self, heap: TmHeap, config: HtmConfig, stats, rng: Optional[Random] = None):
        self.heap = heap
        self.stats = stats
        self.read_set: set = set()
        self.write_buf: dict = {}
        self.lock_lines: set = set()
        self._r_cap = config.r_cap
        self._w_cap = config.w_cap
        self._spur_p = config.spurious_abort_probability
        if self._spur_p and rng is None:
            rng = Random(config.rng_seed)
        self._rng = rng
        self._n_words = len(heap.words)
        self.tid = heap.next_tx_id()
        self.status = _ACTIVE
        self.abort_cause = None
        stats.htm_begins += 1

    def restart(self, stats) -> "HwTx":
        """Begin a fresh transaction reusing this object's storage.

        Only valid once the previous use committed or aborted; both
        finishing paths leave the read/write/lock sets empty.
        """
        if self.status is _ACTIVE or self.status is _DOOMED:
            raise RuntimeError("cannot restart a live transaction")
        self.stats = stats
        heap = self.heap
        heap._next_tx_id = tid = heap._next_tx_id + 1
        self.tid = tid
        self.status = _ACTIVE
        self.abort_cause = None
        stats.htm_begins += 1
        return self

    # -- failure plumbing ------------------------------------------------

    def _abort_now(self, cause: AbortCause) -> None:
        heap = self.heap
        orecs = heap.orecs
        for line in self.write_buf:
            orec = orecs[line]
            if orec.writer is self:
                orec.writer = None
        for line in self.read_set:
            orecs[line].readers.discard(self)
        self.write_buf.clear()
        self.read_set.clear()
        self.lock_lines.clear()
        self.status = _ABORTED
        self.abort_cause = cause
        stats = self.stats
        if cause is _CONFLICT:
            stats.htm_aborts_conflict += 1
        elif cause is _CAPACITY:
            stats.htm_aborts_capacity += 1
        elif cause is _LOCK_SUB:
            stats.htm_aborts_lock_subscription += 1
        elif cause is _SPURIOUS:
            stats.htm_aborts_spurious += 1
        else:
            stats.htm_aborts_explicit += 1

    def _fail(self, cause: AbortCause):
        self._abort_now(cause)
        raise HwAbort(cause)

    def _entry_fail(self):
        """Cold path for an operation on a non-ACTIVE transaction."""
        status = self.status
        if status is _DOOMED:
            self._fail(self.abort_cause)
        raise RuntimeError(f"operation on finished transaction ({status.value})")

    # -- operations ------------------------------------------------------
    #
    # The ACTIVE/spurious entry checks are inlined in each operation;
    # these run once per body memory access, so call overhead matters.

    def subscribe_lock(self, lock_addr: int) -> None:
        """Put the lock word's line in the read set and require it to be zero.

        A nonzero value aborts immediately; afterwards any committed
        store to that line by another party dooms this transaction.
        """
        if self.status is not _ACTIVE:
            self._entry_fail()
        if self._spur_p and self._rng.random() < self._spur_p:
            self._fail(_SPURIOUS)
        heap = self.heap
        if lock_addr < 0 or lock_addr >= self._n_words:
            raise IndexError(f"address {lock_addr} out of bounds")
        line = lock_addr // heap.words_per_line
        rs = self.read_set
        if line not in rs:
            if len(rs) >= self._r_cap:
                self._fail(_CAPACITY)
            rs.add(line)
            heap.orecs[line].readers.add(self)
        self.lock_lines.add(line)
        if heap.words[lock_addr] != 0:
            self._fail(_LOCK_SUB)

    def read(self, addr: int) -> int:
        if self.status is not _ACTIVE:
            self._entry_fail()
        if self._spur_p and self._rng.random() < self._spur_p:
            self._fail(_SPURIOUS)
        if addr < 0 or addr >= self._n_words:
            raise IndexError(f"address {addr} out of bounds")
        heap = self.heap
        line = addr // heap.words_per_line
        buf = self.write_buf.get(line)
        if buf is not None:
            v = buf.get(addr)
            if v is not None:
                return v
        rs = self.read_set
        if line not in rs:
            if len(rs) >= self._r_cap:
                self._fail(_CAPACITY)
            orec = heap.orecs[line]
            w = orec.writer
            if w is not None and w is not self and w.status is _ACTIVE:
                self._fail(_CONFLICT)
            rs.add(line)
            orec.readers.add(self)
        return heap.words[addr]

    def write(self, addr: int, value: int) -> None:
        if self.status is not _ACTIVE:
            self._entry_fail()
        if self._spur_p and self._rng.random() < self._spur_p:
            self._fail(_SPURIOUS)
        if addr < 0 or addr >= self._n_words:
            raise IndexError(f"address {addr} out of bounds")
        if not 0 <= value <= WORD_MASK:
            raise ValueError(f"value {value} does not fit in a 64-bit word")
        heap = self.heap
        line = addr // heap.words_per_line
        wb = self.write_buf
        buf = wb.get(line)
        if buf is None:
            if len(wb) >= self._w_cap:
                self._fail(_CAPACITY)
            orec = heap.orecs[line]
            w = orec.writer
            if w is not None and w is not self and w.status is _ACTIVE:
                self._fail(_CONFLICT)
            rs = self.read_set
            if line not in rs:
                if len(rs) >= self._r_cap:
                    self._fail(_CAPACITY)
                rs.add(line)
                orec.readers.add(self)
            # Claiming write ownership dooms every other live subscriber.
            for r in orec.readers:
                if r is not self and r.status is _ACTIVE:
                    r.status = _DOOMED
                    r.abort_cause = _LOCK_SUB if line in r.lock_lines else _CONFLICT
            orec.writer = self
            wb[line] = buf = {}
        buf[addr] = value

    def commit(self) -> None:
        """Publish buffered writes indivisibly, bump line versions, release.

        A doomed transaction aborts here with its recorded cause.
        """
        if self.status is not _ACTIVE:
            status = self.status
            if status is _DOOMED:
                self._fail(self.abort_cause)
            raise RuntimeError(f"commit on finished transaction ({status.value})")
        if self._spur_p and self._rng.random() < self._spur_p:
            self._fail(_SPURIOUS)
        heap = self.heap
        wb = self.write_buf
        if wb:
            words = heap.words
            orecs = heap.orecs
            heap.clock += 1
            clk = heap.clock
            for line, buf in wb.items():
                for a, v in buf.items():
                    words[a] = v
                orec = orecs[line]
                orec.version += 1
                orec.stamp = clk
                if orec.writer is self:
                    orec.writer = None
                # Lock-word subscribers that joined after our claim survive
                # until publication; the committed store dooms them now.
                for r in orec.readers:
                    if r is not self and r.status is _ACTIVE:
                        r.status = _DOOMED
                        r.abort_cause = _LOCK_SUB if line in r.lock_lines else _CONFLICT
            wb.clear()
        orecs = heap.orecs
        rs = self.read_set
        for line in rs:
            orecs[line].readers.discard(self)
        rs.clear()
        self.lock_lines.clear()
        self.status = _COMMITTED
        self.stats.htm_commits += 1

    def abort(self, cause: AbortCause = AbortCause.EXPLICIT) -> None:
        """Discard the write buffer and release everything; never raises."""
        status = self.status
        if status is _DOOMED:
            self._abort_now(self.abort_cause)
        elif status is _ACTIVE:
            self._abort_now(cause)
        else:
            raise RuntimeError(f"abort on finished transaction ({status.value})")

    def __repr__(self) -> str:
        return f"HwTx(id={self.tid}, status={self.status.value}, cause={self.abort_cause})"


def hw_begin(heap: TmHeap, config: HtmConfig, stats, rng: Optional[Random] = None) -> HwTx:
    """Start a hardware transaction; begin itself always succeeds."""
    return HwTx(heap, config, stats, rng)


def subscribe_lock(tx: HwTx, lock_addr: int) -> None:
    tx.subscribe_lock(lock_addr)


def hw_read(tx: HwTx, addr: int) -> int:
    return tx.read(addr)


def hw_write(tx: HwTx, addr: int, value: int) -> None:
    tx.write(addr, value)


def hw_commit(tx: HwTx) -> None:
    tx.commit()


def hw_abort(tx: HwTx, cause: AbortCause = AbortCause.EXPLICIT) -> None:
    tx.abort(cause)


def atomic_store(heap: TmHeap, addr: int, value: int) -> None:
    """Committed non-transactional store through the conflict machinery.

    Publishes immediately, bumps the line version and the global clock,
    and dooms every live hardware transaction subscribed to the line
    (cause ``LOCK_SUBSCRIPTION`` for lock-word subscribers, ``CONFLICT``
    otherwise).  Backbone of lock words that cooperate with elision.
    """
    words = heap.words
    if addr < 0 or addr >= len(words):
        raise IndexError(f"address {addr} out of bounds")
    if not 0 <= value <= WORD_MASK:
        raise ValueError(f"value {value} does not fit in a 64-bit word")
    line = addr // heap.words_per_line
    orec = heap.orecs[line]
    words[addr] = value
    heap.clock += 1
    orec.version += 1
    orec.stamp = heap.clock
    for r in orec.readers:
        if r.status is _ACTIVE:
            r.status = _DOOMED
            r.abort_cause = _LOCK_SUB if line in r.lock_lines else _CONFLICT


def atomic_add(heap: TmHeap, addr: int, delta: int) -> int:
    """Atomic fetch-and-add with the same doom semantics as ``atomic_store``.

    Returns the new value; refuses to drive the word negative.
    """
    words = heap.words
    if addr < 0 or addr >= len(words):
        raise IndexError(f"address {addr} out of bounds")
    new = words[addr] + delta
    if new < 0:
        raise RuntimeError(f"atomic_add would drive word {addr} negative (value {new})")
    if new > WORD_MASK:
        raise ValueError(f"value {new} does not fit in a 64-bit word")
    line = addr // heap.words_per_line
    orec = heap.orecs[line]
    words[addr] = new
    heap.clock += 1
    orec.version += 1
    orec.stamp = heap.clock
    for r in orec.readers:
        if r.status is _ACTIVE:
            r.status = _DOOMED
            r.abort_cause = _LOCK_SUB if line in r.lock_lines else _CONFLICT
    return new
