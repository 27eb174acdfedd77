"""Canonical Minority Game.

``N`` agents each hold ``S`` fixed lookup tables over the ``2**M`` possible
strings of recent attendance signs. Every round each agent plays its active
table, attendance ``A = sum(b) / sqrt(N)`` is formed, every table of every
agent is scored with ``v <- v - A * table[history]`` and each agent switches
to a best-scoring table.

Random draws come from one ``numpy.random.Generator`` per game, consumed in a
fixed order so that any independent transcription can replay a trajectory:

``init_game``
    1. strategy entries, ``integers(0, 2, size=(N, S, 2**M))`` mapped to ±1;
    2. initial history, ``integers(0, 2, size=M)`` mapped to ±1, oldest first;
    3. initial selection: every agent is tied across all ``S`` zero
       valuations, so for ``S > 1`` each agent in index order draws
       ``integers(S)``.

``step``
    1. if the action sum is zero, one ``integers(2)`` draw picks the minority
       sign (0 -> -1, 1 -> +1);
    2. for each agent in index order whose maximum valuation is shared by
       ``t > 1`` tables, ``integers(t)`` picks among the tied tables in
       ascending index order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, ContractError

MAX_MEMORY = 24


@dataclass(frozen=True)
class MgConfig:
    num_agents: int
    memory: int
    strategies_per_agent: int
    rounds: int
    seed: int = 0

    def __post_init__(self):
        for name in ("num_agents", "memory", "strategies_per_agent"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if self.memory > MAX_MEMORY:
            raise ConfigError("memory", f"2**memory tables are limited to memory <= {MAX_MEMORY}")
        if not isinstance(self.rounds, (int, np.integer)) or self.rounds < 0:
            raise ConfigError("rounds", f"must be a non-negative integer, got {self.rounds!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def table_size(self):
        return 1 << self.memory


class StrategyTable:
    """Immutable ±1 lookup table with ``2**M`` entries."""

    __slots__ = ("_entries",)

    def __init__(self, entries):
        arr = np.array(entries, dtype=np.int8)
        if arr.ndim != 1 or arr.size == 0 or arr.size & (arr.size - 1):
            raise ContractError("a strategy table needs 2**M entries")
        if not np.all(np.abs(arr) == 1):
            raise ContractError("strategy entries must be -1 or +1")
        arr.flags.writeable = False
        self._entries = arr

    @property
    def entries(self):
        return self._entries

    @property
    def memory(self):
        return self._entries.size.bit_length() - 1

    def __len__(self):
        return self._entries.size

    def __getitem__(self, index):
        return int(self._entries[index])

    def __call__(self, history):
        return int(self._entries[history_index(history)])

    def __eq__(self, other):
        return isinstance(other, StrategyTable) and np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"StrategyTable({self._entries.tolist()})"


@dataclass(frozen=True)
class MgAgent:
    """Snapshot of one agent, detached from the population arrays."""

    strategies: tuple
    valuations: tuple
    active_strategy: int


class MgPopulation:
    """All agents of one game, stored as arrays.

    ``strategies`` has shape ``(N, S, 2**M)`` (int8, read-only),
    ``valuations`` shape ``(N, S)`` and ``active`` shape ``(N,)``.
    """

    def __init__(self, strategies, valuations, active):
        self.strategies = np.ascontiguousarray(strategies, dtype=np.int8)
        self.strategies.flags.writeable = False
        self.valuations = np.ascontiguousarray(valuations, dtype=np.float64)
        self.active = np.ascontiguousarray(active, dtype=np.int64)

    def __len__(self):
        return self.strategies.shape[0]

    def __getitem__(self, i):
        return MgAgent(
            strategies=tuple(StrategyTable(t) for t in self.strategies[i]),
            valuations=tuple(float(v) for v in self.valuations[i]),
            active_strategy=int(self.active[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def copy(self):
        return MgPopulation(self.strategies.copy(), self.valuations.copy(), self.active.copy())


@dataclass
class MgState:
    history: np.ndarray
    rng: np.random.Generator
    num_agents: int
    rounds: int
    round: int = 0
    attendance_series: list = field(default_factory=list)
    zero_attendance_count: int = 0
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class MgRoundOutcome:
    attendance: float
    minority_sign: int
    actions: np.ndarray
    history_index: int
    zero_attendance: bool = False


@dataclass
class MgTimeSeries:
    config: MgConfig
    attendance: np.ndarray
    minority_signs: np.ndarray
    action_sums: np.ndarray
    history_indices: np.ndarray
    final_valuations: np.ndarray
    zero_attendance_count: int
    warnings: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "attendance", "minority_sign"])
        for t, (a, m) in enumerate(zip(self.attendance, self.minority_signs)):
            w.writerow([t, repr(float(a)), int(m)])
        return buf.getvalue()

    def metadata(self):
        cfg = self.config
        vol = volatility(self.attendance, cfg.num_agents) if len(self.attendance) else None
        return {
            "config": {
                "num_agents": cfg.num_agents,
                "memory": cfg.memory,
                "strategies_per_agent": cfg.strategies_per_agent,
                "rounds": cfg.rounds,
                "seed": int(cfg.seed),
            },
            "zero_attendance_count": self.zero_attendance_count,
            "zero_attendance_rule": "minority sign drawn uniformly from {-1,+1}; history appends its negation",
            "volatility": None if vol is None else {
                "var_attendance": vol.var_attendance,
                "var_action_sum_per_agent": vol.var_action_sum_per_agent,
                "definition": "population variances of A and of sqrt(N)*A divided by N",
            },
            "final_valuations": self.final_valuations.tolist(),
            "warnings": list(self.warnings),
            "backend": _backend.BACKEND,
        }

    def to_json(self):
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


def history_index(history, memory=None):
    """Pack a ±1 history (oldest first) into an integer, +1 as bit 1.

    >>> history_index([1, -1])
    2
    """
    if memory is not None:
        _check_history_length(history, memory)
    idx = 0
    for h in history:
        if h == 1:
            idx = (idx << 1) | 1
        elif h == -1:
            idx <<= 1
        else:
            raise ContractError(f"history entries must be -1 or +1, got {h!r}")
    return idx


def _check_history_length(history, memory):
    if len(history) != memory:
        raise ContractError(f"history has length {len(history)}, expected {memory}")


def _select(valuations_row, rng):
    top = valuations_row.max()
    tied = np.flatnonzero(valuations_row == top)
    if tied.size == 1:
        return int(tied[0])
    return int(tied[rng.integers(tied.size)])


def init_game(config):
    """Draw strategy tables and the initial history; all valuations start at 0."""
    if not isinstance(config, MgConfig):
        raise ConfigError("config", "expected an MgConfig")
    warns = []
    if config.num_agents % 2 == 0:
        msg = f"even num_agents={config.num_agents}: zero attendance is possible"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        warns.append(msg)
    rng = np.random.default_rng(int(config.seed))
    n, s, p = config.num_agents, config.strategies_per_agent, config.table_size
    strategies = rng.integers(0, 2, size=(n, s, p)).astype(np.int8) * 2 - 1
    history = rng.integers(0, 2, size=config.memory).astype(np.int8) * 2 - 1
    valuations = np.zeros((n, s))
    active = np.zeros(n, dtype=np.int64)
    if s > 1:
        for i in range(n):
            active[i] = rng.integers(s)
    state = MgState(history=history, rng=rng, num_agents=n, rounds=config.rounds, warnings=warns)
    return MgPopulation(strategies, valuations, active), state


def step(agents, state):
    """Play one round in place and return its outcome."""
    if state.round >= state.rounds:
        raise ContractError(f"game already played its {state.rounds} rounds")
    memory = agents.strategies.shape[2].bit_length() - 1
    idx = history_index(state.history, memory)
    actions, total = _backend.mg_play(agents.strategies, agents.active, idx)
    n = state.num_agents
    attendance = total / math.sqrt(n)
    zero = total == 0
    if zero:
        minority = 1 if state.rng.integers(2) else -1
        state.zero_attendance_count += 1
    else:
        minority = -1 if total > 0 else 1
    best, ties = _backend.mg_update(agents.strategies, agents.valuations, idx, attendance)
    for i in np.flatnonzero(ties > 1):
        best[i] = _select(agents.valuations[i], state.rng)
    agents.active[:] = best
    state.history = np.concatenate([state.history[1:], np.array([-minority], dtype=np.int8)])
    state.round += 1
    state.attendance_series.append(attendance)
    return MgRoundOutcome(
        attendance=attendance,
        minority_sign=minority,
        actions=np.asarray(actions),
        history_index=idx,
        zero_attendance=bool(zero),
    )


def run(config):
    agents, state = init_game(config)
    T = config.rounds
    signs = np.empty(T, dtype=np.int8)
    sums = np.empty(T, dtype=np.int64)
    indices = np.empty(T, dtype=np.int64)
    for t in range(T):
        out = step(agents, state)
        signs[t] = out.minority_sign
        sums[t] = int(np.sum(out.actions, dtype=np.int64))
        indices[t] = out.history_index
    return MgTimeSeries(
        config=config,
        attendance=np.array(state.attendance_series, dtype=np.float64),
        minority_signs=signs,
        action_sums=sums,
        history_indices=indices,
        final_valuations=agents.valuations.copy(),
        zero_attendance_count=state.zero_attendance_count,
        warnings=list(state.warnings),
    )


@dataclass(frozen=True)
class Volatility:
    var_attendance: float
    var_action_sum_per_agent: float


def volatility(series, num_agents):
    """Population variance of ``A`` and of ``sqrt(N) * A`` scaled by ``1/N``.

    The two numbers coincide analytically; both are reported because the
    second is the customary ``sigma^2 / N`` of the action sum.
    """
    a = np.asarray(series, dtype=np.float64)
    if a.size == 0:
        raise ContractError("volatility of an empty series")
    if num_agents < 1:
        raise ContractError("num_agents must be positive")
    s = a * math.sqrt(num_agents)
    return Volatility(float(np.var(a)), float(np.var(s)) / num_agents)
