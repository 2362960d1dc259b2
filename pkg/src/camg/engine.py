"""Compiled agent-level episode engine.

A numba port of the reference driver in :mod:`camg.sim`. Each agent still
acts on the public state plus her own arrays (previous choice, the first ID of
the set she believes she is in, her stream key), and draws from the same
counter-based stream as :mod:`camg.rng`, so a fast episode is bit-identical to
a reference episode with the same ``(master_seed, trial_index)``. The
reference engine is the one the privacy and consensus tests exercise; this one
exists for Monte Carlo volume.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from camg.rng import GOLDEN as _GOLDEN_INT

_GOLDEN = np.uint64(_GOLDEN_INT)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / (1 << 53)

OK = 0
CAP_HIT = 1


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True)
def _key(seed, trial, agent):
    k = _mix(seed + _GOLDEN)
    k = _mix((k ^ trial) + _GOLDEN)
    return _mix((k ^ agent) + _GOLDEN)


@njit(cache=True)
def _uniform(key, day):
    return np.float64(_mix(key + np.uint64(day) * _GOLDEN) >> _S11) * _INV_2_53


@njit(cache=True)
def _count_a(choice):
    a = 0
    for c in choice:
        if c == 0:
            a += 1
    return a


@njit(cache=True)
def episode_kernel(n_big, seed, trial, stage_one_only, day_cap, att_out, ids_out):
    """Run one episode; returns ``(status, stage_one_days, stage_two_days)``.

    ``att_out[d - 1]`` receives day ``d``'s attendance at A when it fits;
    ``ids_out`` receives each agent's self-derived ID (0 for the zero group).
    Choices are coded 0 for A and 1 for B.
    """
    n_agents = 2 * n_big + 1
    keys = np.empty(n_agents, dtype=np.uint64)
    trial_u = np.uint64(trial)
    for i in range(n_agents):
        keys[i] = _key(seed, trial_u, np.uint64(i))
    choice = np.zeros(n_agents, dtype=np.int8)
    rec_len = att_out.shape[0]

    # stage one, day 1: A iff the draw is <= 1/2
    day = 1
    for i in range(n_agents):
        choice[i] = 0 if _uniform(keys[i], day) <= 0.5 else 1
    a = _count_a(choice)
    if rec_len >= 1:
        att_out[0] = a
    while True:
        b = n_agents - a
        if a < b:
            minority = 0
            msize = a
        else:
            minority = 1
            msize = b
        delta = n_big - msize
        if delta == 0:
            break
        if day >= day_cap:
            return CAP_HIT, day, 0
        day += 1
        p = delta / (n_big + delta + 1)
        for i in range(n_agents):
            if choice[i] != minority:
                if _uniform(keys[i], day) < p:
                    choice[i] = minority
        a = _count_a(choice)
        if day <= rec_len:
            att_out[day - 1] = a
    s1 = day
    if stage_one_only:
        return OK, s1, 0

    # stage two
    tag = np.empty(n_agents, dtype=np.int64)
    for i in range(n_agents):
        if choice[i] == minority:
            tag[i] = -1
            ids_out[i] = 0
        else:
            tag[i] = 1
            ids_out[i] = -1
    depth = 2 * (n_big + 2) + 4
    st_first = np.empty(depth, dtype=np.int64)
    st_size = np.empty(depth, dtype=np.int64)
    st_loc = np.empty(depth, dtype=np.int8)
    st_first[0] = 1
    st_size[0] = n_big + 1
    st_loc[0] = 1 - minority
    top = 1
    moved = np.zeros(n_agents, dtype=np.bool_)
    while top > 0:
        if day >= day_cap:
            return CAP_HIT, s1, day - s1
        day += 1
        f = st_first[top - 1]
        r = st_size[top - 1]
        loc = st_loc[top - 1]
        before = a if loc == 0 else n_agents - a
        for i in range(n_agents):
            moved[i] = False
            if ids_out[i] == -1 and tag[i] == f:
                if _uniform(keys[i], day) < 0.5:
                    choice[i] = 1 - choice[i]
                    moved[i] = True
        a = _count_a(choice)
        if day <= rec_len:
            att_out[day - 1] = a
        after = a if loc == 0 else n_agents - a
        j = before - after
        first_shifted = 2 * j == r or j < r - j
        j1 = min(j, r - j)
        top -= 1
        st_first[top] = f + j1
        st_size[top] = r - j1
        st_loc[top] = loc if first_shifted else 1 - loc
        st_first[top + 1] = f
        st_size[top + 1] = j1
        st_loc[top + 1] = 1 - loc if first_shifted else loc
        top += 2
        for i in range(n_agents):
            if ids_out[i] == -1 and tag[i] == f:
                if moved[i] == first_shifted:
                    size = j1
                else:
                    tag[i] = f + j1
                    size = r - j1
                if size == 1:
                    ids_out[i] = tag[i]
        while top > 0 and st_size[top - 1] <= 1:
            top -= 1
    return OK, s1, day - s1


@njit(cache=True)
def batch_kernel(n_big, seed, trial_start, count, stage_one_only, day_cap, s1_out, s2_out, status_out):
    att = np.empty(0, dtype=np.int64)
    ids = np.empty(2 * n_big + 1, dtype=np.int64)
    for k in range(count):
        status, s1, s2 = episode_kernel(n_big, seed, trial_start + k, stage_one_only, day_cap, att, ids)
        s1_out[k] = s1
        s2_out[k] = s2
        status_out[k] = status


def run_batch(n_big: int, master_seed: int, trial_start: int, count: int, *, stage_one_only: bool = False, day_cap: int):
    s1 = np.empty(count, dtype=np.int64)
    s2 = np.empty(count, dtype=np.int64)
    status = np.empty(count, dtype=np.int64)
    batch_kernel(n_big, np.uint64(master_seed), trial_start, count, stage_one_only, day_cap, s1, s2, status)
    return s1, s2, status


def run_single(n_big: int, master_seed: int, trial_index: int, *, day_cap: int):
    """One recorded episode: ``(status, s1, s2, attendance_a, ids)``."""
    att = np.empty(day_cap, dtype=np.int64)
    ids = np.empty(2 * n_big + 1, dtype=np.int64)
    status, s1, s2 = episode_kernel(n_big, np.uint64(master_seed), trial_index, False, day_cap, att, ids)
    return status, s1, s2, att[: s1 + s2].copy(), ids


STALLED = 2


@njit(cache=True)
def baseline_kernel(n_big, key_seed, trial, readjust_prob, max_rounds, by_attendance):
    """Trial-and-error phase shifting; returns ``(status, periods)``.

    Mirrors :func:`camg.sim.baseline_phase_shift` draw for draw.
    """
    L = 2 * n_big + 1
    a_pos = np.empty(n_big + 1, dtype=np.int64)
    a_pos[0] = 0
    for k in range(n_big):
        a_pos[k + 1] = 2 * k + 1
    keys = np.empty(L, dtype=np.uint64)
    phases = np.empty(L, dtype=np.int64)
    trial_u = np.uint64(trial)
    for i in range(L):
        keys[i] = _key(key_seed, trial_u, np.uint64(i))
        phases[i] = int(_uniform(keys[i], 0) * L)
    att = np.empty(L, dtype=np.int64)
    crowded = np.empty(L, dtype=np.bool_)
    quiet = np.empty(L, dtype=np.int64)
    eligible = np.empty(L, dtype=np.bool_)
    for period in range(1, max_rounds + 1):
        att[:] = 0
        for i in range(L):
            for p in a_pos:
                att[(phases[i] + p) % L] += 1
        perfect = True
        n_quiet = 0
        for d in range(L):
            crowded[d] = att[d] > n_big + 1
            if att[d] != n_big + 1:
                perfect = False
            if att[d] <= n_big:
                quiet[n_quiet] = d
                n_quiet += 1
        if perfect:
            return OK, period
        any_eligible = False
        for i in range(L):
            if by_attendance:
                e = False
                for p in a_pos:
                    if crowded[(phases[i] + p) % L]:
                        e = True
                        break
            else:
                e = crowded[phases[i]]
            eligible[i] = e
            any_eligible = any_eligible or e
        if not any_eligible or readjust_prob == 0.0:
            return STALLED, period
        for i in range(L):
            if eligible[i] and _uniform(keys[i], 2 * period - 1) < readjust_prob:
                phases[i] = quiet[int(_uniform(keys[i], 2 * period) * n_quiet)]
    return CAP_HIT, max_rounds


@njit(cache=True)
def baseline_batch(n_big, key_seed, trial_start, count, readjust_prob, max_rounds, by_attendance, status_out, periods_out):
    for k in range(count):
        s, p = baseline_kernel(n_big, key_seed, trial_start + k, readjust_prob, max_rounds, by_attendance)
        status_out[k] = s
        periods_out[k] = p
