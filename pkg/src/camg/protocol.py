"""The two-stage coordination strategy and its cyclic schedule.

The public state of the protocol is a pure function of the attendance
transcript (:func:`replay_protocol_state`). An agent combines it with her own
choice history to work out which pending set she belongs to and, eventually,
her ID (:class:`AgentMemory`). Decisions are computed from
``(PublicTranscript, AgentView)`` only.

Stage one drives the population to an exact ``N : N+1`` split; the ``N``
agents on the minority side take ID 0. Stage two assigns IDs ``1..N+1`` to the
others by recursive fair-coin splitting, processed depth first with the first
set on top of an explicit stack. Sets of size 0 or 1 are resolved without
spending a day.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence, Union

from camg.model import (
    AgentView,
    Choice,
    DayRecord,
    GameConfig,
    PublicTranscript,
    validate_agent_id,
)


class ProtocolDeviation(RuntimeError):
    """The transcript cannot come from agents following the common strategy."""


class ContractViolation(RuntimeError):
    """A decision function was called in the wrong protocol phase."""


@dataclass(frozen=True)
class StageOneState:
    """``delta`` is the shortfall: the minority restaurant holds ``N - delta``.

    ``opening`` marks day 1, where every agent picks at random; by convention
    all agents sat in A the day before, so ``delta = N`` and B is the minority.
    """

    delta: int
    minority: Choice
    opening: bool = False

    def shift_probability(self, n_big: int) -> float:
        return self.delta / (n_big + self.delta + 1)


@dataclass(frozen=True)
class PendingSet:
    size: int
    first_id: int
    location: Choice

    @property
    def id_range(self) -> range:
        return range(self.first_id, self.first_id + self.size)

    @property
    def last_id(self) -> int:
        return self.first_id + self.size - 1


@dataclass(frozen=True)
class StageTwoState:
    """``stack[-1]`` is the set currently splitting."""

    stack: tuple[PendingSet, ...]
    assigned: int
    zero_location: Choice

    @property
    def top(self) -> PendingSet:
        return self.stack[-1]

    @property
    def pending(self) -> int:
        return sum(s.size for s in self.stack)


@dataclass(frozen=True)
class CyclicState:
    start_day: int


Phase = Union[StageOneState, StageTwoState, CyclicState]


@dataclass(frozen=True)
class ProtocolState:
    """Public protocol state after ``day`` days of the transcript."""

    phase: Phase
    day: int = 0
    stage_one_end: int | None = None

    @property
    def name(self) -> str:
        if isinstance(self.phase, StageOneState):
            return "stage_one"
        if isinstance(self.phase, StageTwoState):
            return "stage_two"
        return "cyclic"

    def to_dict(self) -> dict:
        out: dict = {"phase": self.name, "day": self.day, "stage_one_end": self.stage_one_end}
        p = self.phase
        if isinstance(p, StageOneState):
            out.update(delta=p.delta, minority=p.minority.value, opening=p.opening)
        elif isinstance(p, StageTwoState):
            out.update(
                stack=[
                    {"size": s.size, "first_id": s.first_id, "location": s.location.value}
                    for s in p.stack
                ],
                assigned=p.assigned,
                zero_location=p.zero_location.value,
            )
        else:
            out.update(start_day=p.start_day)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class SplitOutcome:
    j: int
    first_set_size: int
    tie_broken_by_shift: bool
    first_is_shifted: bool


def initial_state(config: GameConfig) -> ProtocolState:
    return ProtocolState(StageOneState(delta=config.n_big, minority=Choice.B, opening=True))


# --- decisions ---------------------------------------------------------------


def stage_one_decision(state: StageOneState, view: AgentView, n_big: int) -> Choice:
    if state.delta == 0:
        raise ContractViolation("stage one is already over (delta = 0)")
    u = view.rng_stream.uniform(view.next_day)
    if state.opening:
        return Choice.A if u <= 0.5 else Choice.B
    prev = view.previous_choice()
    if prev is state.minority:
        return prev
    return prev.other if u < state.shift_probability(n_big) else prev


def stage_two_decision(state: StageTwoState, view: AgentView, in_splitting_set: bool) -> Choice:
    if not isinstance(state, StageTwoState):
        raise ContractViolation("stage-two decision outside stage two")
    prev = view.previous_choice()
    if not in_splitting_set:
        return prev
    return prev.other if view.rng_stream.uniform(view.next_day) < 0.5 else prev


def cyclic_choice(agent_id: int, day_offset: int, n_big: int) -> Choice:
    """ID 0 always goes to A; ID r goes to A only when ``day_offset = 2r - 1 (mod 2N+1)``."""
    validate_agent_id(agent_id, n_big)
    if day_offset < 1:
        raise ValueError("day offsets start at 1")
    if agent_id == 0:
        return Choice.A
    return Choice.A if (day_offset - (2 * agent_id - 1)) % (2 * n_big + 1) == 0 else Choice.B


# --- transitions -------------------------------------------------------------


def infer_split(prev: DayRecord, cur: DayRecord, pending: PendingSet) -> SplitOutcome:
    j = prev.attendance(pending.location) - cur.attendance(pending.location)
    r = pending.size
    if not 0 <= j <= r:
        raise ProtocolDeviation(
            f"attendance at {pending.location.value} changed by {-j}, "
            f"but only {r} agents were splitting"
        )
    tie = 2 * j == r
    first_is_shifted = tie or j < r - j
    return SplitOutcome(
        j=j,
        first_set_size=min(j, r - j),
        tie_broken_by_shift=tie,
        first_is_shifted=first_is_shifted,
    )


def _cascade(stack: list[PendingSet], assigned: int) -> int:
    while stack and stack[-1].size <= 1:
        assigned += stack.pop().size
    return assigned


def split_resolution(state: StageTwoState, outcome: SplitOutcome) -> StageTwoState:
    """Replace the splitting set by its two halves and resolve trivial sets.

    May return a state with an empty stack; the caller turns that into the
    cyclic phase.
    """
    top = state.top
    moved_to = top.location.other
    j1 = outcome.first_set_size
    if outcome.first_is_shifted:
        first_loc, second_loc = moved_to, top.location
    else:
        first_loc, second_loc = top.location, moved_to
    first = PendingSet(j1, top.first_id, first_loc)
    second = PendingSet(top.size - j1, top.first_id + j1, second_loc)
    stack = list(state.stack[:-1])
    stack.append(second)
    stack.append(first)
    assigned = _cascade(stack, state.assigned)
    return StageTwoState(tuple(stack), assigned, state.zero_location)


def _stage_one_step(state: ProtocolState, prev: DayRecord | None, cur: DayRecord, n_big: int) -> ProtocolState:
    phase: StageOneState = state.phase
    day = state.day + 1
    if not phase.opening and prev is not None:
        if cur.attendance(phase.minority) < prev.attendance(phase.minority):
            raise ProtocolDeviation(f"day {day}: agents left the minority restaurant in stage one")
    minority = cur.minority()
    delta = n_big - cur.attendance(minority)
    if delta > 0:
        return ProtocolState(StageOneState(delta, minority), day=day)
    stack = [PendingSet(n_big + 1, 1, minority.other)]
    assigned = _cascade(stack, 0)
    two = StageTwoState(tuple(stack), assigned, minority)
    if not stack:
        return ProtocolState(CyclicState(day + 1), day=day, stage_one_end=day)
    return ProtocolState(two, day=day, stage_one_end=day)


def _cyclic_expected_a(offset: int, n_big: int) -> int:
    return n_big + 1 if offset % 2 == 1 else n_big


def advance(state: ProtocolState, prev: DayRecord | None, cur: DayRecord, config: GameConfig) -> tuple[ProtocolState, SplitOutcome | None]:
    """Consume one more day of the transcript."""
    n_big = config.n_big
    if cur.total != config.n_agents:
        raise ProtocolDeviation(f"day {state.day + 1}: attendance does not sum to {config.n_agents}")
    phase = state.phase
    if isinstance(phase, StageOneState):
        return _stage_one_step(state, prev, cur, n_big), None
    if isinstance(phase, StageTwoState):
        outcome = infer_split(prev, cur, phase.top)
        nxt = split_resolution(phase, outcome)
        day = state.day + 1
        if not nxt.stack:
            return replace(state, phase=CyclicState(day + 1), day=day), outcome
        return replace(state, phase=nxt, day=day), outcome
    day = state.day + 1
    offset = cyclic_offset(phase, day, n_big)
    if cur.attendance_a != _cyclic_expected_a(offset, n_big):
        raise ProtocolDeviation(f"day {day}: attendance {cur} breaks the cyclic schedule")
    return replace(state, day=day), None


def cyclic_offset(phase: CyclicState, day: int, n_big: int) -> int:
    """Offset in ``1..2N+1`` of ``day`` within the cyclic schedule."""
    return (day - phase.start_day) % (2 * n_big + 1) + 1


class ProtocolTracker:
    """Incremental replay of the public protocol state."""

    def __init__(self, config: GameConfig):
        self.config = config
        self.state = initial_state(config)
        self.last: DayRecord | None = None

    def feed(self, record: DayRecord) -> SplitOutcome | None:
        self.state, outcome = advance(self.state, self.last, record, self.config)
        self.last = record
        return outcome


def replay_protocol_state(t: PublicTranscript | Sequence[DayRecord], c: GameConfig) -> ProtocolState:
    tracker = ProtocolTracker(c)
    for record in t:
        tracker.feed(record)
    return tracker.state


# --- private side ------------------------------------------------------------


class AgentMemory:
    """What one agent infers about herself from the transcript and her own choices.

    ``agent_id`` is set once known. While pending, ``set_first_id`` names the
    pending set she belongs to (nonempty sets have distinct first IDs).
    """

    def __init__(self, config: GameConfig):
        self.tracker = ProtocolTracker(config)
        self.agent_id: int | None = None
        self.set_first_id: int | None = None
        self._seen = 0

    @property
    def state(self) -> ProtocolState:
        return self.tracker.state

    def catch_up(self, transcript: PublicTranscript | Sequence[DayRecord], own_choices: Sequence[Choice]) -> None:
        days = transcript.days if isinstance(transcript, PublicTranscript) else transcript
        if len(own_choices) != len(days):
            raise ValueError("own choice history and transcript differ in length")
        while self._seen < len(days):
            self._step(days[self._seen], own_choices, self._seen)
            self._seen += 1

    def _step(self, record: DayRecord, own_choices: Sequence[Choice], idx: int) -> None:
        before = self.tracker.state
        outcome = self.tracker.feed(record)
        after = self.tracker.state
        mine = own_choices[idx]
        if isinstance(before.phase, StageOneState) and after.stage_one_end is not None:
            if mine is record.minority():
                self.agent_id = 0
            else:
                self.set_first_id = 1
            return
        if outcome is None or self.agent_id is not None:
            return
        top = before.phase.top
        if self.set_first_id != top.first_id:
            return
        prev_choice = own_choices[idx - 1]
        shifted = mine is not prev_choice
        in_first = shifted == outcome.first_is_shifted
        self.set_first_id = top.first_id + (0 if in_first else outcome.first_set_size)
        if in_first:
            size = outcome.first_set_size
        else:
            size = top.size - outcome.first_set_size
        if size == 1:
            self.agent_id = self.set_first_id
            self.set_first_id = None

    def in_splitting_set(self) -> bool:
        phase = self.state.phase
        return (
            isinstance(phase, StageTwoState)
            and self.agent_id is None
            and self.set_first_id == phase.top.first_id
        )


def decide_with_memory(memory: AgentMemory, view: AgentView, n_big: int) -> Choice:
    state = memory.state
    phase = state.phase
    if isinstance(phase, StageOneState):
        return stage_one_decision(phase, view, n_big)
    if isinstance(phase, StageTwoState):
        return stage_two_decision(phase, view, memory.in_splitting_set())
    if memory.agent_id is None:
        raise ProtocolDeviation("cyclic phase reached but the agent has no ID")
    return cyclic_choice(memory.agent_id, cyclic_offset(phase, view.next_day, n_big), n_big)


def decide(transcript: PublicTranscript, view: AgentView, config: GameConfig) -> Choice:
    """Tomorrow's choice, recomputed from scratch from public and own data only."""
    memory = AgentMemory(config)
    memory.catch_up(transcript, view.own_choices)
    return decide_with_memory(memory, view, config.n_big)


def replay_agent(transcript: PublicTranscript, own_choices: Sequence[Choice], config: GameConfig) -> AgentMemory:
    memory = AgentMemory(config)
    memory.catch_up(transcript, own_choices)
    return memory
