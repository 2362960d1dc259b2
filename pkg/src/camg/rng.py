"""Counter-based random streams.

Every agent owns a stream keyed by ``(master_seed, trial_index, agent_index)``.
The draw for a given day is a pure function of the key and the day number, so
an agent's decision can be recomputed from the transcript and her own view
without carrying mutable generator state around. The compiled engine in
:mod:`camg.engine` uses the same arithmetic and reproduces these draws bit for
bit.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, trial_index: int, agent_index: int) -> int:
    k = mix64(master_seed + GOLDEN)
    k = mix64((k ^ trial_index) + GOLDEN)
    return mix64((k ^ agent_index) + GOLDEN)


def uniform_at(key: int, counter: int) -> float:
    """Uniform draw in [0, 1) at position ``counter`` of the stream ``key``."""
    return (mix64(key + counter * GOLDEN) >> 11) * _INV_2_53


class CounterStream:
    """Deterministic stream; ``uniform(day)`` is the agent's draw for that day."""

    __slots__ = ("key",)

    def __init__(self, key: int):
        self.key = key & MASK64

    @classmethod
    def for_agent(cls, master_seed: int, trial_index: int, agent_index: int) -> "CounterStream":
        return cls(stream_key(master_seed, trial_index, agent_index))

    def uniform(self, day: int) -> float:
        return uniform_at(self.key, day)

    def __repr__(self) -> str:
        return f"CounterStream(key={self.key:#018x})"


class ScriptedStream:
    """Stream returning prescribed draws on chosen days, falling back otherwise.

    Used to replay hand-constructed scenarios such as a worked example.
    """

    def __init__(self, script: dict[int, float], fallback: CounterStream | None = None):
        self.script = dict(script)
        self.fallback = fallback or CounterStream(0)

    def uniform(self, day: int) -> float:
        if day in self.script:
            return self.script[day]
        return self.fallback.uniform(day)
