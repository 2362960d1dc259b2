"""Property-based checks of the protocol, statistics and series code."""

import random
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from camg.asymptotics import h_star
from camg.model import AgentView, Choice, DayRecord, GameConfig, PublicTranscript
from camg.protocol import (
    PendingSet,
    StageTwoState,
    decide,
    infer_split,
    replay_protocol_state,
    split_resolution,
)
from camg.rng import CounterStream
from camg.sim import McStats, run_episode

seeds = st.integers(min_value=0, max_value=2**64 - 1)


@settings(max_examples=40)
@given(n_big=st.integers(1, 12), seed=seeds, trial=st.integers(0, 10**6))
def test_episode_invariants(n_big, seed, trial):
    cfg = GameConfig(n_big, seed)
    ep = run_episode(cfg, trial, check_consensus=True)
    assert sorted(ep.ids.values()) == [0] * n_big + list(range(1, n_big + 2))
    assert ep.self_ids == ep.ids
    assert all(r.total == cfg.n_agents for r in ep.transcript)
    # stage one ends exactly on the first N : N+1 day
    one = ep.transcript[ep.stage_one_days]
    assert min(one.attendance_a, one.attendance_b) == n_big
    assert all(min(r.attendance_a, r.attendance_b) < n_big for r in list(ep.transcript)[: ep.stage_one_days - 1])


@settings(max_examples=25)
@given(n_big=st.integers(1, 8), seed=seeds, data=st.data())
def test_decision_ignores_other_agents_private_data(n_big, seed, data):
    """Overwrite every other agent's history and stream; one agent's choice is unchanged."""
    cfg = GameConfig(n_big, seed)
    ep = run_episode(cfg, 0)
    agent = data.draw(st.integers(0, cfg.n_agents - 1))
    day = data.draw(st.integers(0, len(ep.transcript) - 1))
    views = [
        AgentView(i, CounterStream.for_agent(seed, 0, i), ep.choices[i][:day]) for i in range(cfg.n_agents)
    ]
    before = decide(ep.transcript.prefix(day), views[agent], cfg)
    assert before is ep.choices[agent][day]
    for i, view in enumerate(views):
        if i != agent:
            view.own_choices[:] = [Choice.B] * day
            view.rng_stream = CounterStream(data.draw(seeds))
    assert decide(ep.transcript.prefix(day), views[agent], cfg) is before


@settings(max_examples=20)
@given(n_big=st.integers(1, 8), seed=seeds, perm=st.data())
def test_relabelling_agents_relabels_outcomes(n_big, seed, perm):
    """Agents are anonymous: permuting who sits at which index permutes the results."""
    cfg = GameConfig(n_big, seed)
    streams = [CounterStream.for_agent(seed, 0, i) for i in range(cfg.n_agents)]
    order = perm.draw(st.permutations(range(cfg.n_agents)))
    plain = run_episode(cfg, streams=streams)
    shuffled = run_episode(cfg, streams=[streams[k] for k in order])
    assert shuffled.transcript.days == plain.transcript.days
    for pos, k in enumerate(order):
        assert shuffled.choices[pos] == plain.choices[k]
        assert shuffled.ids[pos] == plain.ids[k]


@settings(max_examples=30)
@given(n_big=st.integers(1, 10), seed=seeds)
def test_replay_is_a_pure_function_of_the_transcript(n_big, seed):
    cfg = GameConfig(n_big, seed)
    ep = run_episode(cfg, 1, engine_name="fast")
    copy = PublicTranscript.from_csv(ep.transcript.to_csv(), n_big)
    assert replay_protocol_state(ep.transcript, cfg).to_json() == replay_protocol_state(copy, cfg).to_json()
    assert replay_protocol_state(copy, cfg).name == "cyclic"


@given(sizes=st.lists(st.integers(2, 9), min_size=1, max_size=4), flip_seed=st.integers(0, 2**32))
def test_split_bookkeeping_conserves_ids(sizes, flip_seed):
    rng = random.Random(flip_seed)
    first = 1
    stack = []
    for size in sizes:
        stack.append(PendingSet(size, first, Choice.A))
        first += size
    total = first - 1
    state = StageTwoState(tuple(reversed(stack)), 0, Choice.B)
    while state.stack:
        top = state.top
        j = sum(rng.random() < 0.5 for _ in range(top.size))
        a = top.size + 5 if top.location is Choice.A else 5
        prev = DayRecord(a, 100 - a)
        delta = -j if top.location is Choice.A else j
        cur = DayRecord(a + delta, 100 - a - delta)
        state = split_resolution(state, infer_split(prev, cur, top))
        assert state.pending + state.assigned == total
        ranges = sorted((s.first_id, s.last_id) for s in state.stack)
        assert all(hi < lo2 for (_, hi), (lo2, _) in zip(ranges, ranges[1:]))
        assert all(s.size >= 2 for s in state.stack)


@given(st.lists(st.lists(st.integers(0, 50), min_size=1, max_size=20), min_size=1, max_size=5))
def test_stats_merge_matches_pooled(parts):
    merged = McStats()
    for part in reversed(parts):
        merged = McStats.from_values(part).merge(merged)
    pooled = McStats.from_values([v for part in parts for v in part])
    assert merged == pooled
    assert merged.std_error >= 0


@given(st.floats(min_value=-40, max_value=40, allow_nan=False))
def test_h_star_period_and_band(log2_y):
    y = 2.0**log2_y
    assert h_star(2 * y) == h_star(y)
    assert abs(h_star(y) - 1.4426950408889634) < 8e-11


@given(st.integers(1, 30), st.integers(0, 30))
def test_transcript_serialisation_round_trip(n_big, length):
    rng = random.Random(n_big * 31 + length)
    days = []
    for _ in range(length):
        a = rng.randint(0, 2 * n_big + 1)
        days.append(DayRecord(a, 2 * n_big + 1 - a))
    t = PublicTranscript(n_big, days)
    assert PublicTranscript.from_json(t.to_json()).days == days
    assert PublicTranscript.from_csv(t.to_csv(), n_big).days == days


def test_exact_fraction_type():
    from camg.exact import exact_expected_time

    assert isinstance(exact_expected_time(7), Fraction)
