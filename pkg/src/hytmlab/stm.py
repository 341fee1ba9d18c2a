"""Word-based software transactional memory with a global lock counter.

The STM is a versioned lazy-write-back design: reads log the owning
line's commit stamp and are revalidated (with timestamp extension)
whenever a stale stamp is observed, writes buffer until commit, and
commit publishes all writes in one indivisible step, bumping each
written line's version and the heap clock.

Software episodes coordinate with speculative hardware through one
shared word, the *global lock counter* at :data:`GLOBAL_LOCK_ADDR`.
A fallback episode increments the counter before its first software
attempt and decrements it exactly once after the episode ends, no
matter how many software attempts the episode needed.  The increment
is a committed store, so it dooms every hardware transaction currently
subscribed to the counter's line; hardware begun while the counter is
nonzero aborts at subscription time.  Because the word is a counter
rather than a binary lock, any number of software episodes may be in
flight at once, relying on commit-time validation against each other.
"""

from __future__ import annotations

from .memory import WORD_MASK, TmHeap
from .htm import AbortCause, TxStatus, atomic_add

GLOBAL_LOCK_ADDR = 0
SPIN_LOCK_ADDR = 1
SYNC_RESERVED_WORDS = 2

_ACTIVE = TxStatus.ACTIVE
_COMMITTED = TxStatus.COMMITTED
_ABORTED = TxStatus.ABORTED
_LOCK_SUB = AbortCause.LOCK_SUBSCRIPTION
_CONFLICT = AbortCause.CONFLICT


class SwAbort(Exception):
    """Raised when a software transaction fails validation; bookkeeping done."""


def lock_counter(heap: TmHeap) -> int:
    """Current value of the global lock counter (number of live episodes)."""
    return heap.words[GLOBAL_LOCK_ADDR]


def episode_acquire(heap: TmHeap, stats) -> None:
    """Enter a software episode: bump the counter, dooming HW subscribers."""
    stats.fallback_episodes += 1
    atomic_add(heap, GLOBAL_LOCK_ADDR, 1)


def episode_release(heap: TmHeap) -> None:
    """Leave a software episode.  Call exactly once per episode, after the
    episode's final software attempt has committed (not once per attempt)."""
    atomic_add(heap, GLOBAL_LOCK_ADDR, -1)


class SwTx:
    """One software transaction attempt bound to a heap."""

    __slots__ = ("heap", "stats", "tid", "status", "start_stamp",
                 "read_log", "write_set", "_n_words")

    def __init__(self, heap: TmHeap, stats):
        self.heap = heap
        self.stats = stats
        self.tid = heap.next_tx_id()
        self.status = _ACTIVE
        self.start_stamp = heap.clock
        self.read_log: dict = {}
        self.write_set: dict = {}
        self._n_words = len(heap.words)
        stats.stm_begins += 1

    def restart(self, stats) -> "SwTx":
        """Begin a fresh attempt reusing this object's storage.

        Only valid once the previous attempt committed or aborted; both
        finishing paths leave the read log and write set empty.
        """
        if self.status is _ACTIVE:
            raise RuntimeError("cannot restart a live transaction")
        self.stats = stats
        heap = self.heap
        heap._next_tx_id = tid = heap._next_tx_id + 1
        self.tid = tid
        self.status = _ACTIVE
        self.start_stamp = heap.clock
        stats.stm_begins += 1
        return self

    # -- internal --------------------------------------------------------
    #
    # The ACTIVE entry checks are inlined in each operation; _check_live
    # is the cold path that raises for a finished transaction.

    def _check_live(self) -> None:
        if self.status is not _ACTIVE:
            raise RuntimeError(f"operation on finished transaction ({self.status.value})")

    def _fail(self):
        self.write_set.clear()
        self.read_log.clear()
        self.status = _ABORTED
        self.stats.stm_aborts += 1
        raise SwAbort()

    def _revalidate(self) -> bool:
        """True if every logged read still matches its line's stamp."""
        orecs = self.heap.orecs
        for line, seen in self.read_log.items():
            if orecs[line].stamp != seen:
                return False
        return True

    def _extend(self) -> None:
        if not self._revalidate():
            self._fail()
        self.start_stamp = self.heap.clock

    # -- operations ------------------------------------------------------

    def read(self, addr: int) -> int:
        if self.status is not _ACTIVE:
            self._check_live()
        ws = self.write_set
        if addr in ws:
            return ws[addr]
        if addr < 0 or addr >= self._n_words:
            raise IndexError(f"address {addr} out of bounds")
        heap = self.heap
        line = addr // heap.words_per_line
        orec = heap.orecs[line]
        w = orec.writer
        if w is not None and w is not self and w.status is _ACTIVE:
            self._fail()
        stamp = orec.stamp
        if stamp > self.start_stamp:
            # Stale against our snapshot: extend the snapshot if every
            # prior read is still valid, else this attempt is lost.
            self._extend()
            stamp = orec.stamp
        log = self.read_log
        if line not in log:
            log[line] = stamp
        elif log[line] != stamp:
            self._fail()
        return heap.words[addr]

    def write(self, addr: int, value: int) -> None:
        if self.status is not _ACTIVE:
            self._check_live()
        if addr < 0 or addr >= self._n_words:
            raise IndexError(f"address {addr} out of bounds")
        if not 0 <= value <= WORD_MASK:
            raise ValueError(f"value {value} does not fit in a 64-bit word")
        self.write_set[addr] = value

    def commit(self) -> None:
        """Validate and publish in one indivisible step.

        Read-only transactions need only final validation.  Writers
        acquire ownership of every written line, validate the read log,
        publish, bump each written line's version and stamp, advance the
        heap clock once, and release.
        """
        if self.status is not _ACTIVE:
            self._check_live()
        heap = self.heap
        ws = self.write_set
        if not ws:
            if not self._revalidate():
                self._fail()
            self.read_log.clear()
            self.status = _COMMITTED
            self.stats.stm_commits += 1
            return
        orecs = heap.orecs
        wpl = heap.words_per_line
        lines = {}
        for addr in ws:
            line = addr // wpl
            if line not in lines:
                lines[line] = orecs[line]
        acquired = []
        ok = True
        for line, orec in lines.items():
            w = orec.writer
            if w is not None and w is not self and w.status is _ACTIVE:
                ok = False
                break
            orec.writer = self
            acquired.append(orec)
        if ok:
            ok = self._revalidate()
        if not ok:
            for orec in acquired:
                if orec.writer is self:
                    orec.writer = None
            self._fail()
        words = heap.words
        heap.clock += 1
        clk = heap.clock
        for addr, value in ws.items():
            words[addr] = value
        for line, orec in lines.items():
            orec.version += 1
            orec.stamp = clk
            orec.writer = None
            # A committed store dooms live hardware readers of the line.
            for r in orec.readers:
                if r.status is _ACTIVE:
                    r.status = TxStatus.DOOMED
                    r.abort_cause = _LOCK_SUB if line in r.lock_lines else _CONFLICT
        ws.clear()
        self.read_log.clear()
        self.status = _COMMITTED
        self.stats.stm_commits += 1

    def abort(self) -> None:
        """Voluntarily drop this attempt; never raises."""
        self._check_live()
        self.write_set.clear()
        self.read_log.clear()
        self.status = _ABORTED
        self.stats.stm_aborts += 1

    def __repr__(self) -> str:
        return f"SwTx(id={self.tid}, status={self.status.value})"


def sw_begin(heap: TmHeap, stats) -> SwTx:
    return SwTx(heap, stats)


def sw_read(tx: SwTx, addr: int) -> int:
    return tx.read(addr)


def sw_write(tx: SwTx, addr: int, value: int) -> None:
    tx.write(addr, value)


def sw_commit(tx: SwTx) -> None:
    tx.commit()


def sw_abort(tx: SwTx) -> None:
    tx.abort()
