"""Median-threshold minority bidding simulation.

Each round every agent submits its current bid, agents strictly below the
median bid win one impression, and an adaptive agent that has lost each of
its last ``history_length`` rounds perturbs its bid by a uniform draw and
clamps it back into ``[bid_min, bid_max]``. Optional majority-tracking agents
re-bid around the crowd's mean every round.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ContractError


class AgentKind(str, Enum):
    MINORITY_ADAPTIVE = "minority_adaptive"
    MAJORITY_TRACKING = "majority_tracking"


@dataclass(frozen=True)
class SimParams:
    num_agents: int = 100
    num_rounds: int = 50
    history_length: int = 5
    bid_min: float = 5.0
    bid_max: float = 10.0
    adjust_min: float = -0.5
    adjust_max: float = 0.5
    minority_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.num_agents, (int, np.integer)) or self.num_agents < 1:
            raise ConfigError("num_agents", f"must be a positive integer, got {self.num_agents!r}")
        if not isinstance(self.num_rounds, (int, np.integer)) or self.num_rounds < 0:
            raise ConfigError("num_rounds", f"must be a non-negative integer, got {self.num_rounds!r}")
        if not isinstance(self.history_length, (int, np.integer)) or self.history_length < 1:
            raise ConfigError("history_length", f"must be a positive integer, got {self.history_length!r}")
        for name in ("bid_min", "bid_max", "adjust_min", "adjust_max", "minority_fraction"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if self.bid_min <= 0:
            raise ConfigError("bid_min", "must be positive so that efficiency (impressions / bid) is defined")
        if not self.bid_min < self.bid_max:
            raise ConfigError("bid_max", f"bid_min={self.bid_min} must be below bid_max={self.bid_max}")
        if not self.adjust_min < self.adjust_max:
            raise ConfigError("adjust_max", f"adjust_min={self.adjust_min} must be below adjust_max={self.adjust_max}")
        if not 0.0 <= self.minority_fraction <= 1.0:
            raise ConfigError("minority_fraction", f"must lie in [0, 1], got {self.minority_fraction!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def num_minority(self):
        # tolerance keeps e.g. 0.29 * 100 from flooring to 28
        return math.floor(self.minority_fraction * self.num_agents + 1e-9)

    def replace(self, **changes):
        return SimParams(**{**asdict(self), **changes})


@dataclass
class BidAgentState:
    bid: float
    memory: list
    success_count: int
    kind: AgentKind


class BidPopulation:
    """Array-backed agents; indexing yields :class:`BidAgentState` snapshots."""

    def __init__(self, bids, kinds):
        self.bids = np.asarray(bids, dtype=np.float64).copy()
        self.kinds = np.empty(len(kinds), dtype=object)
        self.kinds[:] = [AgentKind(k) for k in kinds]
        self.adaptive = np.array([k is AgentKind.MINORITY_ADAPTIVE for k in self.kinds])
        self.wins = []  # one bool row per played round
        self.success_count = np.zeros(self.bids.size, dtype=np.int64)

    def __len__(self):
        return self.bids.size

    def __getitem__(self, i):
        return BidAgentState(
            bid=float(self.bids[i]),
            memory=[int(row[i]) for row in self.wins],
            success_count=int(self.success_count[i]),
            kind=self.kinds[i],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def rounds_played(self):
        return len(self.wins)

    def recent_wins(self, window):
        if len(self.wins) < window:
            return None
        return np.sum(self.wins[-window:], axis=0)


class UnitImpressions:
    """Every winner gets exactly one impression."""

    name = "unit"

    def __call__(self, bids, winners):
        return winners.astype(np.int64)


class SupplyCurve:
    """Winners get the impressions a landscape offers at their bid level.

    ``levels`` are ascending bid prices and ``impressions`` the (mean)
    impressions available there; a bid maps to the highest level not above it.
    """

    name = "supply_curve"

    def __init__(self, levels, impressions):
        levels = np.asarray(levels, dtype=np.float64)
        order = np.argsort(levels)
        self.levels = levels[order]
        self.impressions = np.asarray(impressions, dtype=np.float64)[order]
        if self.levels.size == 0:
            raise ContractError("supply curve needs at least one level")

    @classmethod
    def from_landscape(cls, dataset):
        bid = np.round(dataset.columns["bid"] * 10).astype(np.int64)
        imps = dataset.columns["imps_hour"].astype(np.float64)
        keys, inverse = np.unique(bid, return_inverse=True)
        means = np.bincount(inverse, weights=imps) / np.bincount(inverse)
        return cls(keys / 10.0, means)

    def __call__(self, bids, winners):
        pos = np.searchsorted(self.levels, bids + 1e-9, side="right") - 1
        avail = np.where(pos >= 0, self.impressions[np.clip(pos, 0, None)], 0.0)
        return np.where(winners, np.rint(avail), 0).astype(np.int64)


@dataclass
class RoundRecord:
    round: int
    median_bid: float
    avg_bid: float
    num_winners: int
    winner_ids: frozenset
    bids: np.ndarray
    impressions: np.ndarray

    @property
    def impressions_awarded(self):
        return {int(i): int(self.impressions[i]) for i in np.flatnonzero(self.impressions)}

    @property
    def tie_free(self):
        return np.unique(self.bids).size == self.bids.size


@dataclass
class EfficiencySeries:
    """Per-round efficiency ``impressions / bid`` with shape ``(rounds, agents)``."""

    values: np.ndarray

    @property
    def rounds(self):
        return self.values.shape[0]

    def cesaro(self, horizon):
        return cesaro_average(self.values, horizon)


@dataclass
class SimResult:
    params: SimParams
    records: list
    efficiency: EfficiencySeries
    agents: BidPopulation
    impression_model: str = "unit"
    extra: dict = field(default_factory=dict)

    @property
    def avg_bids(self):
        return np.array([r.avg_bid for r in self.records])

    @property
    def num_winners(self):
        return np.array([r.num_winners for r in self.records], dtype=np.int64)

    @property
    def bid_matrix(self):
        """Submitted bids, shape ``(rounds, agents)``."""
        if not self.records:
            return np.empty((0, self.params.num_agents))
        return np.vstack([r.bids for r in self.records])

    @property
    def win_matrix(self):
        if not self.records:
            return np.empty((0, self.params.num_agents), dtype=bool)
        return np.vstack(self.agents.wins)

    def tie_counts(self):
        tied = sum(1 for r in self.records if not r.tie_free)
        at_median = sum(int(np.sum(r.bids == r.median_bid)) for r in self.records)
        return {"rounds_with_tied_bids": tied, "bids_equal_to_median": at_median}

    def rounds_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "median_bid", "avg_bid", "num_winners"])
        for r in self.records:
            w.writerow([r.round, f"{r.median_bid:.4f}", f"{r.avg_bid:.4f}", r.num_winners])
        return buf.getvalue()

    def agents_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent_id", "kind", "final_bid", "success_count"])
        for i, a in enumerate(self.agents):
            w.writerow([i, a.kind.value, f"{a.bid:.4f}", a.success_count])
        return buf.getvalue()

    def agent_rounds_csv(self):
        """Per-agent bid and impressions per round (bid-vs-impression scatter data)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "agent_id", "bid", "impressions"])
        for r in self.records:
            for i in range(r.bids.size):
                w.writerow([r.round, i, f"{r.bids[i]:.4f}", int(r.impressions[i])])
        return buf.getvalue()

    def manifest(self):
        return {
            "params": {k: (int(v) if isinstance(v, (int, np.integer)) else v) for k, v in asdict(self.params).items()},
            "impression_model": self.impression_model,
            "num_minority_adaptive": int(self.agents.adaptive.sum()),
            "tie_counts": self.tie_counts(),
            **self.extra,
        }


def median(values):
    """Median with the mean-of-middle-pair convention for even counts."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        raise ContractError("median of an empty sequence")
    mid = n // 2
    if n % 2:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) / 2.0


def init_agents(params, rng=None):
    """Uniform initial bids, then a seeded shuffle picks the adaptive agents."""
    if not isinstance(params, SimParams):
        raise ConfigError("params", "expected SimParams")
    if rng is None:
        rng = np.random.default_rng(int(params.seed))
    n = params.num_agents
    bids = rng.uniform(params.bid_min, params.bid_max, size=n)
    order = rng.permutation(n)
    minority = set(order[: params.num_minority].tolist())
    kinds = [AgentKind.MINORITY_ADAPTIVE if i in minority else AgentKind.MAJORITY_TRACKING for i in range(n)]
    return BidPopulation(bids, kinds)


def run_auction_round(agents, params, rng, impression_model=None, round_number=None):
    """Clear one round in place and return its record.

    Adjustment draws are taken in agent-index order, one per agent that moves
    this round (a losing-streak adaptive agent or any majority-tracking agent).
    """
    if len(agents) == 0:
        raise ContractError("no agents")
    model = impression_model or UnitImpressions()
    submitted = agents.bids.copy()
    med = median(submitted)
    winners = submitted < med
    avg = float(np.mean(submitted))

    agents.wins.append(winners)
    agents.success_count += winners

    recent = agents.recent_wins(params.history_length)
    move_adaptive = agents.adaptive & (recent == 0) if recent is not None else np.zeros(len(agents), bool)
    tracking = ~agents.adaptive
    movers = np.flatnonzero(move_adaptive | tracking)
    if movers.size:
        noise = rng.uniform(params.adjust_min, params.adjust_max, size=movers.size)
        base = np.where(tracking[movers], avg, agents.bids[movers])
        agents.bids[movers] = np.clip(base + noise, params.bid_min, params.bid_max)

    imps = np.asarray(model(submitted, winners), dtype=np.int64)
    return RoundRecord(
        round=agents.rounds_played if round_number is None else round_number,
        median_bid=med,
        avg_bid=avg,
        num_winners=int(winners.sum()),
        winner_ids=frozenset(int(i) for i in np.flatnonzero(winners)),
        bids=submitted,
        impressions=imps,
    )


def run_simulation(params, impression_model=None):
    rng = np.random.default_rng(int(params.seed))
    agents = init_agents(params, rng)
    model = impression_model or UnitImpressions()
    records = [run_auction_round(agents, params, rng, model) for _ in range(params.num_rounds)]
    if records:
        bids = np.vstack([r.bids for r in records])
        imps = np.vstack([r.impressions for r in records])
        eff = imps / bids
    else:
        eff = np.empty((0, params.num_agents))
    return SimResult(params, records, EfficiencySeries(eff), agents, getattr(model, "name", "custom"))


def cesaro_average(series, horizon):
    """Mean of the first ``horizon`` values along axis 0 (per agent)."""
    values = series.values if isinstance(series, EfficiencySeries) else np.asarray(series, dtype=np.float64)
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    if horizon > values.shape[0]:
        raise ContractError(f"horizon {horizon} exceeds the {values.shape[0]} recorded rounds")
    return values[:horizon].sum(axis=0) / horizon
