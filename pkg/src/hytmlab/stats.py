"""Per-thread execution counters and their aggregation.

Every policy runner owns one :class:`ThreadStats` per worker.  The
counters are designed so two identities hold for any completed run:

* ``htm_begins == htm_commits + sum(all abort-cause counters)``
* every critical section completes exactly once, so the number of
  section executions equals ``htm_commits + stm_commits + lock_commits``.

``htm_retries`` counts hardware begins beyond the first attempt of each
critical section, i.e. ``htm_begins`` minus the number of sections that
entered hardware at least once.
"""

from __future__ import annotations

COUNTER_FIELDS = (
    "htm_begins",
    "htm_commits",
    "htm_aborts_conflict",
    "htm_aborts_capacity",
    "htm_aborts_lock_subscription",
    "htm_aborts_explicit",
    "htm_aborts_spurious",
    "htm_retries",
    "stm_begins",
    "stm_commits",
    "stm_aborts",
    "lock_commits",
    "fallback_episodes",
)

ABORT_FIELDS = (
    "htm_aborts_conflict",
    "htm_aborts_capacity",
    "htm_aborts_lock_subscription",
    "htm_aborts_explicit",
    "htm_aborts_spurious",
)


class ThreadStats:
    """Mutable counter block for one worker thread."""

    __slots__ = COUNTER_FIELDS + ("duration_ns",)

    def __init__(self) -> None:
        for f in COUNTER_FIELDS:
            setattr(self, f, 0)
        self.duration_ns = 0

    # -- derived quantities ---------------------------------------------

    @property
    def htm_aborts_total(self) -> int:
        return (self.htm_aborts_conflict + self.htm_aborts_capacity
                + self.htm_aborts_lock_subscription + self.htm_aborts_explicit
                + self.htm_aborts_spurious)

    @property
    def sections_completed(self) -> int:
        return self.htm_commits + self.stm_commits + self.lock_commits

    def check_identities(self) -> None:
        """Raise AssertionError if the counter identities are violated."""
        assert self.htm_begins == self.htm_commits + self.htm_aborts_total, (
            f"htm_begins {self.htm_begins} != commits {self.htm_commits} "
            f"+ aborts {self.htm_aborts_total}")
        assert 0 <= self.htm_retries <= max(self.htm_begins - 1, 0), (
            f"htm_retries {self.htm_retries} inconsistent with begins {self.htm_begins}")

    # -- aggregation -----------------------------------------------------

    def merge(self, other: "ThreadStats") -> "ThreadStats":
        for f in COUNTER_FIELDS:
            setattr(self, f, getattr(self, f) + getattr(other, f))
        self.duration_ns += other.duration_ns
        return self

    def copy(self) -> "ThreadStats":
        out = ThreadStats()
        out.merge(self)
        return out

    def as_dict(self) -> dict:
        d = {f: getattr(self, f) for f in COUNTER_FIELDS}
        d["duration_ns"] = self.duration_ns
        return d

    def __repr__(self) -> str:
        parts = ", ".join(f"{f}={getattr(self, f)}" for f in COUNTER_FIELDS
                          if getattr(self, f))
        return f"ThreadStats({parts or 'zero'})"


def aggregate(per_thread) -> ThreadStats:
    """Sum counters across workers; duration becomes the arithmetic mean.

    The mean is rounded to the nearest nanosecond so aggregate rows stay
    integral like per-thread rows.
    """
    stats_list = list(per_thread)
    if not stats_list:
        return ThreadStats()
    out = ThreadStats()
    for s in stats_list:
        out.merge(s)
    out.duration_ns = int(round(out.duration_ns / len(stats_list)))
    return out
