"""Shared transactional heap.

A flat array of 64-bit words partitioned into fixed-size cachelines.
Every line carries an ownership record (version counter, exclusive
writer slot, subscribed-reader set) that both the hardware-transaction
emulator and the software TM consult for conflict detection.

Execution model: every mutating operation on the heap is a single
indivisible transition.  The bundled cooperative runner interleaves
workers only at operation boundaries, so transitions are atomic by
construction; preemptive threads must serialize transitions through
``TmHeap.guard`` (the threaded runner in ``runtime`` does this).
"""

from __future__ import annotations

import threading

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1


class OwnershipRecord:
    """Per-cacheline conflict-tracking record.

    ``version`` counts successful commits that wrote the line (exactly
    one increment per such commit).  ``stamp`` is the global-clock value
    of the most recent commit that wrote the line; the software TM uses
    it to notice lines modified after a transaction began.  ``writer``
    holds the one transaction currently owning the line for writing,
    ``readers`` the hardware transactions subscribed to it.
    """

    __slots__ = ("version", "stamp", "writer", "readers")

    def __init__(self) -> None:
        self.version = 0
        self.stamp = 0
        self.writer = None
        self.readers: set = set()

    def __repr__(self) -> str:
        return (
            f"OwnershipRecord(version={self.version}, stamp={self.stamp}, "
            f"writer={self.writer!r}, readers={len(self.readers)})"
        )


class TmHeap:
    """Word-addressed shared memory with per-line ownership records.

    The word count is fixed at creation.  Address ``a`` belongs to line
    ``a // words_per_line``; lines are contiguous, disjoint, and cover
    the heap.  ``clock`` is the global commit clock, bumped once by
    every commit that wrote at least one word.
    """

    __slots__ = ("words", "words_per_line", "n_lines", "orecs", "clock",
                 "guard", "_next_tx_id")

    def __init__(self, n_words: int, words_per_line: int = 8) -> None:
        if n_words < 1:
            raise ValueError(f"heap needs at least one word, got {n_words}")
        if words_per_line < 1:
            raise ValueError(f"words_per_line must be positive, got {words_per_line}")
        self.words = [0] * n_words
        self.words_per_line = words_per_line
        self.n_lines = (n_words + words_per_line - 1) // words_per_line
        self.orecs = [OwnershipRecord() for _ in range(self.n_lines)]
        self.clock = 0
        # Serializes transitions when workers are preemptive OS threads.
        self.guard = threading.Lock()
        self._next_tx_id = 0

    def __len__(self) -> int:
        return len(self.words)

    def check_addr(self, addr: int) -> None:
        if not 0 <= addr < len(self.words):
            raise IndexError(f"address {addr} out of bounds for heap of {len(self.words)} words")

    def line_of(self, addr: int) -> int:
        """Line id owning ``addr``."""
        self.check_addr(addr)
        return addr // self.words_per_line

    def raw_read(self, addr: int) -> int:
        """Non-transactional read of the committed value.

        Only valid under quiescence (no transaction active on the heap);
        used for setup and oracle verification.
        """
        self.check_addr(addr)
        return self.words[addr]

    def raw_write(self, addr: int, value: int) -> None:
        """Non-transactional store; does not touch versions or the clock.

        Same quiescence requirement as ``raw_read``.
        """
        self.check_addr(addr)
        if not 0 <= value <= WORD_MASK:
            raise ValueError(f"value {value} does not fit in a 64-bit word")
        self.words[addr] = value

    def next_tx_id(self) -> int:
        tid = self._next_tx_id
        self._next_tx_id = tid + 1
        return tid

    def is_quiescent(self) -> bool:
        """True when no line has a writer or subscribed readers."""
        return all(o.writer is None and not o.readers for o in self.orecs)

    def line_versions(self) -> list:
        return [o.version for o in self.orecs]
