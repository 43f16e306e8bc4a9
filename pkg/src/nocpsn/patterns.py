"""Flit injection schedules for the mesh.

A pattern is periodic: ``burst_len`` consecutive cycles in which every router
injects one flit into its local channel, followed by ``idle_len`` cycles with
no injection. The every-other-cycle schedule is the period-2 special case with
a single injection cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

EVERY_OTHER = "every-other"
BURST = "burst"


@dataclass(frozen=True)
class InjectionPattern:
    """Periodic injection schedule: ``burst_len`` on-cycles, then ``idle_len`` off."""

    kind: str
    burst_len: int
    idle_len: int

    def __post_init__(self) -> None:
        if self.kind not in (EVERY_OTHER, BURST):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.burst_len < 1 or self.idle_len < 1:
            raise ValueError(
                f"pattern needs burst_len >= 1 and idle_len >= 1, "
                f"got burst={self.burst_len} idle={self.idle_len}"
            )

    @classmethod
    def every_other(cls) -> "InjectionPattern":
        return cls(EVERY_OTHER, 1, 1)

    @classmethod
    def burst(cls, burst_len: int, idle_len: int) -> "InjectionPattern":
        return cls(BURST, burst_len, idle_len)

    @classmethod
    def parse(cls, text: str) -> "InjectionPattern":
        """Parse ``every-other`` or ``burst:<b>,<i>``."""
        text = text.strip()
        if text == EVERY_OTHER:
            return cls.every_other()
        if text.startswith("burst:"):
            body = text[len("burst:"):]
            parts = body.split(",")
            if len(parts) != 2:
                raise ValueError(f"expected burst:<b>,<i>, got {text!r}")
            try:
                b, i = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ValueError(f"expected burst:<b>,<i>, got {text!r}") from exc
            return cls.burst(b, i)
        raise ValueError(f"cannot parse injection pattern {text!r}")

    @property
    def period(self) -> int:
        return self.burst_len + self.idle_len

    def injects(self, phase: int) -> bool:
        """True if the cycle starting at ``phase`` is an injection cycle."""
        return phase < self.burst_len

    @property
    def flits_per_cycle(self) -> float:
        """Long-run injected flits per router per cycle."""
        return self.burst_len / self.period

    def label(self) -> str:
        if self.kind == EVERY_OTHER:
            return EVERY_OTHER
        return f"burst:{self.burst_len},{self.idle_len}"
