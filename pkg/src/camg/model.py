"""Domain types shared by the protocol, the simulator and the analysis code.

Public information is the attendance transcript; private information is an
agent's own choice history and random stream. Decision code only ever sees a
:class:`PublicTranscript` and a single :class:`AgentView`.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol, Sequence

MAX_SEED = (1 << 64) - 1


class Choice(enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Choice":
        return Choice.B if self is Choice.A else Choice.A


@dataclass(frozen=True)
class GameConfig:
    """A game with ``2N + 1`` agents."""

    n_big: int
    master_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n_big, int) or self.n_big < 1:
            raise ValueError(f"N must be a positive integer, got {self.n_big!r}")
        if not 0 <= self.master_seed <= MAX_SEED:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def n_agents(self) -> int:
        return 2 * self.n_big + 1


@dataclass(frozen=True)
class DayRecord:
    attendance_a: int
    attendance_b: int

    def __post_init__(self):
        if self.attendance_a < 0 or self.attendance_b < 0:
            raise ValueError("attendance cannot be negative")

    @property
    def total(self) -> int:
        return self.attendance_a + self.attendance_b

    def attendance(self, choice: Choice) -> int:
        return self.attendance_a if choice is Choice.A else self.attendance_b

    def minority(self) -> Choice:
        """The strictly less crowded restaurant (totals are odd, so never tied)."""
        return Choice.A if self.attendance_a < self.attendance_b else Choice.B

    @classmethod
    def from_choices(cls, choices: Iterable[Choice]) -> "DayRecord":
        a = b = 0
        for c in choices:
            if c is Choice.A:
                a += 1
            else:
                b += 1
        return cls(a, b)


@dataclass
class PublicTranscript:
    """Append-only attendance record; day ``k`` is ``days[k - 1]``."""

    n_big: int
    days: list[DayRecord] = field(default_factory=list)

    def __post_init__(self):
        self.days = list(self.days)
        for record in self.days:
            self._check(record)

    def _check(self, record: DayRecord) -> None:
        if record.total != 2 * self.n_big + 1:
            raise ValueError(
                f"attendance {record.attendance_a}+{record.attendance_b} "
                f"does not sum to {2 * self.n_big + 1}"
            )

    def append(self, record: DayRecord) -> None:
        self._check(record)
        self.days.append(record)

    def __len__(self) -> int:
        return len(self.days)

    def __iter__(self) -> Iterator[DayRecord]:
        return iter(self.days)

    def __getitem__(self, day: int) -> DayRecord:
        """1-based day lookup."""
        if day < 1:
            raise IndexError("days are numbered from 1")
        return self.days[day - 1]

    def prefix(self, n_days: int) -> "PublicTranscript":
        return PublicTranscript(self.n_big, self.days[:n_days])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["day", "attendance_a", "attendance_b"])
        for day, rec in enumerate(self.days, start=1):
            writer.writerow([day, rec.attendance_a, rec.attendance_b])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_big: int) -> "PublicTranscript":
        rows = list(csv.DictReader(io.StringIO(text)))
        for expected, row in enumerate(rows, start=1):
            if int(row["day"]) != expected:
                raise ValueError(f"day column out of order at row {expected}")
        return cls(n_big, [DayRecord(int(r["attendance_a"]), int(r["attendance_b"])) for r in rows])

    def to_dict(self) -> dict:
        return {
            "n_big": self.n_big,
            "days": [
                {"day": d, "attendance_a": r.attendance_a, "attendance_b": r.attendance_b}
                for d, r in enumerate(self.days, start=1)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PublicTranscript":
        data = json.loads(text)
        return cls(
            data["n_big"],
            [DayRecord(d["attendance_a"], d["attendance_b"]) for d in data["days"]],
        )


class RandomStream(Protocol):
    def uniform(self, day: int) -> float: ...


@dataclass
class AgentView:
    """Everything one agent privately knows.

    ``agent_index`` is a label for the simulation driver; decision code must
    not use it.
    """

    agent_index: int
    rng_stream: RandomStream
    own_choices: list[Choice] = field(default_factory=list)

    def previous_choice(self) -> Choice:
        # before day 1 every agent counts as having been in A
        return self.own_choices[-1] if self.own_choices else Choice.A

    @property
    def next_day(self) -> int:
        return len(self.own_choices) + 1


def validate_transcript(t: PublicTranscript | Sequence[DayRecord], c: GameConfig) -> bool:
    days = t.days if isinstance(t, PublicTranscript) else t
    return all(rec.total == c.n_agents for rec in days)


def validate_agent_id(agent_id: int, n_big: int) -> int:
    if not 0 <= agent_id <= n_big + 1:
        raise ValueError(f"agent ID {agent_id} outside [0, {n_big + 1}]")
    return agent_id
