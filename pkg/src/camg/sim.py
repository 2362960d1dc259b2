"""Monte Carlo driver, payoff accounting and the phase-shift baseline.

The reference driver gives every agent her own :class:`AgentView` and her own
:class:`~camg.protocol.AgentMemory`; the only thing passed between agents is
the public transcript. The driver separately keeps ground truth (who actually
moved) to check the IDs agents derive for themselves.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from typing import Iterable, Mapping, Sequence

import numpy as np

from camg import engine
from camg.exact import exact_expected_time
from camg.model import AgentView, Choice, DayRecord, GameConfig, PublicTranscript
from camg.protocol import (
    AgentMemory,
    CyclicState,
    ProtocolTracker,
    StageTwoState,
    cyclic_choice,
    decide_with_memory,
)
from camg.rng import CounterStream, stream_key, uniform_at

log = logging.getLogger(__name__)


class EpisodeCapExceeded(RuntimeError):
    pass


class BaselineTimeout(RuntimeError):
    pass


def default_day_cap(config: GameConfig) -> int:
    return 10_000 + 100 * config.n_agents


@dataclass
class EpisodeResult:
    stage_one_days: int
    stage_two_days: int
    ids: dict[int, int]
    transcript: PublicTranscript
    self_ids: dict[int, int] = field(default_factory=dict)
    choices: list[list[Choice]] | None = None
    deviation: str | None = None

    @property
    def total_days(self) -> int:
        return self.stage_one_days + self.stage_two_days

    def to_dict(self) -> dict:
        return {
            "stage_one_days": self.stage_one_days,
            "stage_two_days": self.stage_two_days,
            "ids": {str(k): v for k, v in sorted(self.ids.items())},
            "transcript": self.transcript.to_dict(),
            "deviation": self.deviation,
        }


class _GroundTruth:
    """Driver-side ID bookkeeping from actual moves, independent of agents' reasoning."""

    def __init__(self, config: GameConfig):
        self.config = config
        self.ids: dict[int, int] = {}
        self.stack: list[list[int]] = []
        self.next_id = 1
        self.started = False

    def start(self, choices: Sequence[Choice], record: DayRecord) -> None:
        minority = record.minority()
        rest = []
        for i, c in enumerate(choices):
            if c is minority:
                self.ids[i] = 0
            else:
                rest.append(i)
        self.stack = [rest]
        self.started = True
        self._pop_trivial()

    def split(self, prev: Sequence[Choice], cur: Sequence[Choice]) -> None:
        members = self.stack.pop()
        shifted = [i for i in members if cur[i] is not prev[i]]
        stayed = [i for i in members if cur[i] is prev[i]]
        if 2 * len(shifted) == len(members) or len(shifted) < len(stayed):
            first, second = shifted, stayed
        else:
            first, second = stayed, shifted
        self.stack.append(second)
        self.stack.append(first)
        self._pop_trivial()

    def _pop_trivial(self) -> None:
        while self.stack and len(self.stack[-1]) <= 1:
            done = self.stack.pop()
            for i in done:
                self.ids[i] = self.next_id
                self.next_id += 1

    @property
    def finished(self) -> bool:
        return self.started and not self.stack


def _make_views(config: GameConfig, trial_index: int, streams) -> list[AgentView]:
    n = config.n_agents
    if streams is None:
        streams = [CounterStream.for_agent(config.master_seed, trial_index, i) for i in range(n)]
    if len(streams) != n:
        raise ValueError(f"need {n} streams, got {len(streams)}")
    return [AgentView(i, s) for i, s in enumerate(streams)]


def _run_reference(config: GameConfig, trial_index: int, streams, day_cap: int, check_consensus: bool) -> EpisodeResult:
    views = _make_views(config, trial_index, streams)
    memories = [AgentMemory(config) for _ in views]
    driver = ProtocolTracker(config)
    truth = _GroundTruth(config)
    transcript = PublicTranscript(config.n_big)
    prev_choices: list[Choice] | None = None
    stage_one_days = None
    while not isinstance(driver.state.phase, CyclicState):
        if len(transcript) >= day_cap:
            raise EpisodeCapExceeded(f"no cyclic state after {day_cap} days")
        choices = [decide_with_memory(m, v, config.n_big) for m, v in zip(memories, views)]
        record = DayRecord.from_choices(choices)
        transcript.append(record)
        for v, c in zip(views, choices):
            v.own_choices.append(c)
        for m, v in zip(memories, views):
            m.catch_up(transcript, v.own_choices)
        was_stage_two = isinstance(driver.state.phase, StageTwoState)
        driver.feed(record)
        if was_stage_two:
            truth.split(prev_choices, choices)
        elif driver.state.stage_one_end is not None:
            stage_one_days = driver.state.stage_one_end
            truth.start(choices, record)
        if check_consensus:
            reference = driver.state.to_json()
            for m in memories:
                if m.state.to_json() != reference:
                    raise AssertionError(f"day {len(transcript)}: agents disagree on public state")
        prev_choices = choices
    if not truth.finished:
        raise AssertionError("protocol reached the cyclic phase before ground truth finished")
    self_ids = {v.agent_index: m.agent_id for v, m in zip(views, memories)}
    return EpisodeResult(
        stage_one_days=stage_one_days,
        stage_two_days=len(transcript) - stage_one_days,
        ids=dict(truth.ids),
        transcript=transcript,
        self_ids=self_ids,
        choices=[list(v.own_choices) for v in views],
    )


def _run_fast(config: GameConfig, trial_index: int, day_cap: int) -> EpisodeResult:
    status, s1, s2, att, ids = engine.run_single(config.n_big, config.master_seed, trial_index, day_cap=day_cap)
    if status == engine.CAP_HIT:
        raise EpisodeCapExceeded(f"no cyclic state after {day_cap} days")
    n = config.n_agents
    transcript = PublicTranscript(config.n_big, [DayRecord(int(a), n - int(a)) for a in att])
    id_map = {i: int(v) for i, v in enumerate(ids)}
    return EpisodeResult(int(s1), int(s2), id_map, transcript, self_ids=dict(id_map))


def run_episode(
    config: GameConfig,
    trial_index: int = 0,
    *,
    engine_name: str = "reference",
    streams=None,
    day_cap: int | None = None,
    check_consensus: bool = False,
) -> EpisodeResult:
    """Simulate one episode up to the start of the cyclic phase.

    Agent ``i`` draws from a stream keyed by ``(master_seed, trial_index, i)``
    unless ``streams`` supplies one per agent (reference engine only).
    """
    cap = day_cap or default_day_cap(config)
    if engine_name == "reference":
        return _run_reference(config, trial_index, streams, cap, check_consensus)
    if engine_name == "fast":
        if streams is not None:
            raise ValueError("custom streams need the reference engine")
        return _run_fast(config, trial_index, cap)
    raise ValueError(f"unknown engine {engine_name!r}")


# --- statistics --------------------------------------------------------------


@dataclass
class McStats:
    """Integer-duration sample summary; merging is exact and order independent."""

    trials: int = 0
    total: int = 0
    total_sq: int = 0
    histogram: Counter = field(default_factory=Counter)

    @classmethod
    def from_values(cls, values: Iterable[int]) -> "McStats":
        hist = Counter(int(v) for v in values)
        return cls(
            trials=sum(hist.values()),
            total=sum(k * c for k, c in hist.items()),
            total_sq=sum(k * k * c for k, c in hist.items()),
            histogram=hist,
        )

    def merge(self, other: "McStats") -> "McStats":
        return McStats(
            self.trials + other.trials,
            self.total + other.total,
            self.total_sq + other.total_sq,
            self.histogram + other.histogram,
        )

    @property
    def mean(self) -> float:
        return self.total / self.trials

    @property
    def std_error(self) -> float:
        if self.trials < 2:
            return 0.0
        n = self.trials
        var = Fraction(n * self.total_sq - self.total**2, n * (n - 1))
        return sqrt(var / n)

    def z_score(self, expected: float) -> float:
        return (self.mean - float(expected)) / self.std_error

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "mean": self.mean,
            "std_error": self.std_error,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


@dataclass
class MonteCarloReport:
    n_big: int
    stage_one: McStats
    stage_two: McStats
    subsets: dict[int, McStats] = field(default_factory=dict)

    @property
    def n_set(self) -> int:
        return self.n_big + 1

    @property
    def exact_stage_two(self) -> Fraction:
        return exact_expected_time(self.n_set)

    @property
    def total_mean(self) -> float:
        return (self.stage_one.total + self.stage_two.total) / self.stage_two.trials


def split_durations(transcript: PublicTranscript, config: GameConfig) -> list[tuple[int, int]]:
    """``(size, days)`` for every pending set of size >= 2 that was ever split.

    A set's duration counts the stage-two days whose splitting set lies inside
    its ID range; sets of equal size are disjoint, so their durations are
    independent samples of ``T_size``.
    """
    tracker = ProtocolTracker(config)
    tops: list[tuple[int, int]] = []
    for record in transcript:
        phase = tracker.state.phase
        if isinstance(phase, StageTwoState):
            tops.append((phase.top.first_id, phase.top.size))
        tracker.feed(record)
    out = []
    for first, size in sorted(set(tops)):
        last = first + size - 1
        days = sum(1 for f, s in tops if f >= first and f + s - 1 <= last)
        out.append((size, days))
    return out


def _batch_stats(args) -> tuple[McStats, McStats, int]:
    config, start, count, stage_one_only, cap = args
    s1, s2, status = engine.run_batch(
        config.n_big, config.master_seed, start, count, stage_one_only=stage_one_only, day_cap=cap
    )
    return McStats.from_values(s1.tolist()), McStats.from_values(s2.tolist()), int((status != engine.OK).sum())


def _chunks(trials: int, n_chunks: int) -> list[tuple[int, int]]:
    size = -(-trials // n_chunks)
    return [(s, min(size, trials - s)) for s in range(0, trials, size)]


def run_monte_carlo(
    config: GameConfig,
    trials: int,
    *,
    engine_name: str = "fast",
    workers: int = 1,
    trial_offset: int = 0,
    collect_subsets: bool = False,
    stage_one_only: bool = False,
    day_cap: int | None = None,
) -> MonteCarloReport:
    """Aggregate independent episodes ``trial_offset .. trial_offset + trials - 1``.

    Results depend only on the configuration and the trial indices, never on
    ``workers`` or scheduling.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    cap = day_cap or default_day_cap(config)
    if engine_name == "fast" and not collect_subsets:
        jobs = [
            (config, trial_offset + s, c, stage_one_only, cap)
            for s, c in _chunks(trials, max(1, workers) * 4 if workers > 1 else 1)
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_batch_stats, jobs))
        else:
            parts = [_batch_stats(j) for j in jobs]
        one, two = McStats(), McStats()
        capped = 0
        for a, b, c in parts:
            one, two, capped = one.merge(a), two.merge(b), capped + c
        if capped:
            raise EpisodeCapExceeded(f"{capped} episodes hit the {cap}-day cap")
        return MonteCarloReport(config.n_big, one, two)

    s1, s2 = [], []
    subsets: dict[int, list[int]] = {}
    for k in range(trials):
        ep = run_episode(config, trial_offset + k, engine_name=engine_name, day_cap=cap)
        s1.append(ep.stage_one_days)
        s2.append(ep.stage_two_days)
        if collect_subsets:
            for size, days in split_durations(ep.transcript, config):
                subsets.setdefault(size, []).append(days)
    return MonteCarloReport(
        config.n_big,
        McStats.from_values(s1),
        McStats.from_values(s2),
        {size: McStats.from_values(v) for size, v in sorted(subsets.items())},
    )


def stage_one_scaling(n_values: Sequence[int], trials: int, master_seed: int = 0) -> dict[int, McStats]:
    """Mean stage-one duration per ``N``; episodes stop once the split is exact."""
    out = {}
    for n_big in n_values:
        cfg = GameConfig(n_big, master_seed)
        out[n_big] = run_monte_carlo(cfg, trials, stage_one_only=True).stage_one
        log.info("stage one N=%d: mean %.3f days", n_big, out[n_big].mean)
    return out


# --- cyclic phase ------------------------------------------------------------


@dataclass
class CyclicReport:
    n_big: int
    horizon: int
    attendance_a: list[int]
    wins: dict[int, list[bool]]
    wins_per_period: dict[int, list[int]]
    attendance_errors: list[int]
    violations: list[tuple[int, int, int, int]]  # (agent, m, start_day, wins)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.attendance_errors and self.periods_ok

    @property
    def periods_ok(self) -> bool:
        return all(w == self.n_big for ws in self.wins_per_period.values() for w in ws)

    def to_dict(self) -> dict:
        return {
            "n_big": self.n_big,
            "horizon": self.horizon,
            "attendance_a": self.attendance_a,
            "wins_per_period": {str(k): v for k, v in self.wins_per_period.items()},
            "attendance_errors": self.attendance_errors,
            "violations": [list(v) for v in self.violations],
            "ok": self.ok,
        }


def validate_cyclic(config: GameConfig, ids: Mapping[int, int], horizon: int) -> CyclicReport:
    """Play the cyclic schedule for ``horizon`` days and audit it.

    Every window of ``2m`` consecutive days (``m <= 2N + 1``) inside the
    horizon is checked for ``m - 1 <= wins <= m``.
    """
    n_big = config.n_big
    period = config.n_agents
    if horizon < 2 * period:
        raise ValueError(f"horizon must cover two periods ({2 * period} days)")
    agents = sorted(ids)
    wins: dict[int, list[bool]] = {i: [] for i in agents}
    attendance = []
    errors = []
    for day in range(1, horizon + 1):
        choices = {i: cyclic_choice(ids[i], day, n_big) for i in agents}
        a = sum(c is Choice.A for c in choices.values())
        attendance.append(a)
        if a != _expected_a(day, n_big):
            errors.append(day)
        winner = Choice.A if a <= n_big else Choice.B
        for i in agents:
            wins[i].append(choices[i] is winner)
    per_period = {
        i: [sum(wins[i][p * period : (p + 1) * period]) for p in range(horizon // period)] for i in agents
    }
    violations = []
    for i in agents:
        prefix = np.concatenate([[0], np.cumsum(wins[i])])
        for m in range(1, period + 1):
            for start in range(0, horizon - 2 * m + 1):
                w = int(prefix[start + 2 * m] - prefix[start])
                if not m - 1 <= w <= m:
                    violations.append((i, m, start + 1, w))
    return CyclicReport(n_big, horizon, attendance, wins, per_period, errors, violations)


def _expected_a(day: int, n_big: int) -> int:
    offset = (day - 1) % (2 * n_big + 1) + 1
    return n_big + 1 if offset % 2 == 1 else n_big


# --- payoffs -----------------------------------------------------------------


@dataclass
class PayoffLedger:
    wins: list[int]
    horizon: int
    winners_per_day: list[int]

    @property
    def n_agents(self) -> int:
        return len(self.wins)

    @property
    def mean_payoff(self) -> Fraction:
        """Average payoff per agent per day."""
        return Fraction(sum(self.wins), self.horizon * self.n_agents)

    def bound(self) -> Fraction:
        n_big = (self.n_agents - 1) // 2
        return Fraction(n_big, self.n_agents)


def payoff_audit(t: PublicTranscript, choices: Sequence[Sequence[Choice]]) -> PayoffLedger:
    """Count wins; the winners each day are the attendees of the smaller restaurant."""
    horizon = len(t)
    if any(len(c) < horizon for c in choices):
        raise ValueError("choice histories shorter than the transcript")
    wins = [0] * len(choices)
    winners = []
    for d, record in enumerate(t):
        day_choices = [c[d] for c in choices]
        if DayRecord.from_choices(day_choices) != record:
            raise ValueError(f"day {d + 1}: choices do not match the recorded attendance")
        minority = record.minority()
        count = 0
        for i, c in enumerate(day_choices):
            if c is minority:
                wins[i] += 1
                count += 1
        winners.append(count)
    return PayoffLedger(wins, horizon, winners)


# --- baseline ----------------------------------------------------------------

BASELINE_SALT = 0xBA5E_11_7E5_0F_A1


def phase_template(n_big: int) -> np.ndarray:
    """``AABABA...B`` of length ``2N + 1``; 1 marks A."""
    L = 2 * n_big + 1
    t = np.zeros(L, dtype=np.int64)
    t[0] = 1
    t[1::2] = 1
    return t


class BaselineStalled(BaselineTimeout):
    """No agent is eligible to move, so the schedule can never change again."""


TRIGGERS = ("attendance", "start_day")


def baseline_phase_shift(
    config: GameConfig,
    readjust_prob: float = 0.1,
    max_rounds: int = 100_000,
    trial_index: int = 0,
    trigger: str = "start_day",
    initial_phases: Sequence[int] | None = None,
) -> int:
    """Periods until trial-and-error phase shifting puts ``N + 1`` in A every day.

    Each agent plays the template from a random start day. After each period
    every day with more than ``N + 1`` in A is crowded. With
    ``trigger="attendance"`` an agent who sat in A on a crowded day is
    eligible to move; with ``trigger="start_day"`` only an agent whose start
    day was crowded is. Eligible agents move with probability
    ``readjust_prob`` to a random start day that had at most ``N`` in A.

    ``initial_phases`` overrides the random opening draw. Raises
    :class:`BaselineTimeout` after ``max_rounds`` periods, or
    :class:`BaselineStalled` as soon as no agent can ever move again.
    """
    if not 0 <= readjust_prob <= 1:
        raise ValueError("readjust_prob must lie in [0, 1]")
    if trigger not in TRIGGERS:
        raise ValueError(f"trigger must be one of {TRIGGERS}")
    n_big = config.n_big
    L = config.n_agents
    keys = [stream_key(config.master_seed ^ BASELINE_SALT, trial_index, i) for i in range(L)]
    if initial_phases is None:
        phases = [int(uniform_at(k, 0) * L) for k in keys]
    else:
        phases = [int(p) for p in initial_phases]
        if len(phases) != L or not all(0 <= p < L for p in phases):
            raise ValueError(f"need {L} phases in [0, {L - 1}]")
    a_pos = [0] + list(range(1, L, 2))
    for period in range(1, max_rounds + 1):
        att = [0] * L
        for s in phases:
            for p in a_pos:
                att[(s + p) % L] += 1
        if all(a == n_big + 1 for a in att):
            return period
        crowded = [a > n_big + 1 for a in att]
        quiet = [d for d, a in enumerate(att) if a <= n_big]
        if trigger == "attendance":
            eligible = [any(crowded[(s + p) % L] for p in a_pos) for s in phases]
        else:
            eligible = [crowded[s] for s in phases]
        if not any(eligible) or readjust_prob == 0:
            raise BaselineStalled(f"stalled after {period} periods")
        for i, key in enumerate(keys):
            if eligible[i] and uniform_at(key, 2 * period - 1) < readjust_prob:
                phases[i] = quiet[int(uniform_at(key, 2 * period) * len(quiet))]
    raise BaselineTimeout(f"no coordination within {max_rounds} periods")


@dataclass
class BaselineReport:
    n_big: int
    readjust_prob: float
    periods: McStats
    timeouts: int
    stalled: int
    max_rounds: int

    @property
    def mean_days(self) -> float:
        return self.periods.mean * (2 * self.n_big + 1)

    def to_dict(self) -> dict:
        return {
            "n_big": self.n_big,
            "readjust_prob": self.readjust_prob,
            "trials": self.periods.trials,
            "mean_periods": self.periods.mean,
            "std_error_periods": self.periods.std_error,
            "mean_days": self.mean_days,
            "timeouts": self.timeouts,
            "stalled": self.stalled,
            "max_rounds": self.max_rounds,
        }


def run_baseline(
    config: GameConfig,
    readjust_prob: float,
    trials: int,
    max_rounds: int = 100_000,
    trigger: str = "start_day",
) -> BaselineReport:
    """Compiled batch of baseline trials.

    Trials that time out or stall enter the statistics at ``max_rounds``
    periods, so the reported mean is a lower bound whenever either count is
    nonzero.
    """
    if not 0 <= readjust_prob <= 1:
        raise ValueError("readjust_prob must lie in [0, 1]")
    if trigger not in TRIGGERS:
        raise ValueError(f"trigger must be one of {TRIGGERS}")
    if trials < 1 or max_rounds < 1:
        raise ValueError("trials and max_rounds must be positive")
    status = np.empty(trials, dtype=np.int64)
    periods = np.empty(trials, dtype=np.int64)
    engine.baseline_batch(
        config.n_big,
        np.uint64(config.master_seed ^ BASELINE_SALT),
        0,
        trials,
        float(readjust_prob),
        max_rounds,
        trigger == "attendance",
        status,
        periods,
    )
    periods = np.where(status == engine.OK, periods, max_rounds)
    return BaselineReport(
        config.n_big,
        readjust_prob,
        McStats.from_values(periods.tolist()),
        timeouts=int((status == engine.CAP_HIT).sum()),
        stalled=int((status == engine.STALLED).sum()),
        max_rounds=max_rounds,
    )
