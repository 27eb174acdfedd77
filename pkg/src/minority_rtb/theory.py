"""Executable checks of the minority-bidding results.

Covers bin occupancy and occupied-minority-bin existence, exact partitions of
the bid grid, conditional bid-shading ledgers, Cesaro efficiency gaps (the
eventual-gap algebra and the ergodic-mean comparison) and the minority-share
adjustment dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bidding import cesaro_average, run_simulation
from .errors import ContractError, EvaluationError

PASS, FAIL, DESCRIPTIVE = "pass", "fail", "descriptive"


@dataclass
class Verdict:
    check: str
    result: str
    status: str
    numbers: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def passed(self):
        return self.status != FAIL

    def to_json(self):
        return {
            "check": self.check,
            "result": self.result,
            "status": self.status,
            "numbers": _jsonable(self.numbers),
            "tolerances": _jsonable(self.tolerances),
            "notes": self.notes,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, Fraction):
        return float(obj)
    return obj


# ------------------------------------------------------------ bin occupancy

class BinAssignment:
    """A total map from agents to a finite set of bins.

    Stored as an array of bin positions (``codes``) into ``bins``, so large
    random assignments stay cheap to count.
    """

    def __init__(self, bins, codes):
        self.bins = tuple(bins)
        if len(set(self.bins)) != len(self.bins):
            raise ContractError("bins must be distinct")
        self.codes = np.asarray(codes, dtype=np.int64)
        if self.codes.ndim != 1:
            raise ContractError("codes must be one-dimensional")
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= len(self.bins)):
            raise ContractError("every agent must map to one of the declared bins")
        self._index = {b: i for i, b in enumerate(self.bins)}
        self.agents = tuple(range(self.codes.size))

    @classmethod
    def from_mapping(cls, mapping, bins):
        bins = tuple(bins)
        index = {b: i for i, b in enumerate(bins)}
        try:
            codes = [index[mapping[a]] for a in mapping]
        except KeyError as exc:
            raise ContractError(f"agent mapped to undeclared bin {exc.args[0]!r}") from None
        out = cls(bins, codes)
        out.agents = tuple(mapping)
        return out

    @property
    def num_agents(self):
        return self.codes.size

    def counts(self):
        return np.bincount(self.codes, minlength=len(self.bins))


def bin_count(assignment, bin):
    try:
        pos = assignment._index[bin]
    except KeyError:
        raise ContractError(f"unknown bin {bin!r}") from None
    return int(np.count_nonzero(assignment.codes == pos))


def minority_bins(assignment):
    """Occupied bins whose count no other occupied bin undercuts."""
    if assignment.num_agents == 0:
        raise ContractError("minority bins need at least one agent")
    counts = assignment.counts()
    occupied = counts > 0
    least = counts[occupied].min()
    return {assignment.bins[i] for i in np.flatnonzero(occupied & (counts == least))}


def minority_bin_fuzz(trials=10_000, max_agents=1_000, max_bins=100, seed=0):
    """Random assignments; minority set must be non-empty and match a direct scan."""
    rng = np.random.default_rng(int(seed))
    mismatches = 0
    empty = 0
    for _ in range(trials):
        n = int(rng.integers(1, max_agents + 1))
        k = int(rng.integers(1, max_bins + 1))
        codes = rng.integers(0, k, size=n)
        found = minority_bins(BinAssignment(range(k), codes))
        if not found:
            empty += 1
        if found != _scan_minority(codes, k):
            mismatches += 1
    status = PASS if mismatches == 0 and empty == 0 else FAIL
    return Verdict(
        "minority-bin existence",
        "every non-empty finite assignment has an occupied minority bin",
        status,
        {"trials": trials, "empty_results": empty, "oracle_mismatches": mismatches},
        {"max_agents": max_agents, "max_bins": max_bins},
    )


def _scan_minority(codes, k):
    tally = [0] * k
    for c in codes.tolist():
        tally[c] += 1
    occupied = [t for t in tally if t > 0]
    low = min(occupied)
    return {b for b, t in enumerate(tally) if t == low}


# ------------------------------------------------------------ bid-space cover

@dataclass(frozen=True)
class BidSpacePartition:
    """Half-open intervals ``[lo, hi)`` over ``[0, upper)``.

    Built either from explicit ``intervals`` or from ``width`` (or
    ``num_bins``); when the width does not divide ``upper`` the last interval
    is truncated at ``upper``.
    """

    intervals: tuple
    upper: float = 50.0
    convention: str = "half-open [lo, hi)"

    @classmethod
    def regular(cls, upper=50.0, width=None, num_bins=None):
        if (width is None) == (num_bins is None):
            raise ContractError("give exactly one of width or num_bins")
        up = _exact(upper)
        w = up / num_bins if width is None else _exact(width)
        if w <= 0:
            raise ContractError("bin width must be positive")
        count = math.ceil(up / w)
        edges = [min(w * i, up) for i in range(count + 1)]
        conv = "half-open [lo, hi)"
        if w * count != up:
            conv += "; last interval truncated at the upper bound"
        return cls(tuple(zip(edges[:-1], edges[1:])), upper, conv)


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(str(x))


def bid_grid(upper=50.0, step=0.1):
    """Grid points ``step, 2*step, ...`` strictly below ``upper`` as exact fractions."""
    up, st = _exact(upper), _exact(step)
    n = math.ceil(up / st)
    return [st * i for i in range(1, n) if st * i < up]


def verify_partition(partition, grid=None):
    intervals = [(_exact(lo), _exact(hi)) for lo, hi in partition.intervals]
    grid = bid_grid(partition.upper) if grid is None else [_exact(g) for g in grid]
    bad = [(float(lo), float(hi)) for lo, hi in intervals if not lo < hi]
    overlaps = []
    for i in range(len(intervals)):
        for j in range(i + 1, len(intervals)):
            (a, b), (c, d) = intervals[i], intervals[j]
            if max(a, c) < min(b, d):
                overlaps.append((i, j))
    uncovered, multiple = [], []
    for g in grid:
        hits = sum(1 for lo, hi in intervals if lo <= g < hi)
        if hits == 0:
            uncovered.append(float(g))
        elif hits > 1:
            multiple.append(float(g))
    up = _exact(partition.upper)
    ordered = sorted(intervals)
    spans = bool(ordered) and ordered[0][0] == 0 and max(hi for _, hi in ordered) == up and all(
        ordered[i][1] >= ordered[i + 1][0] for i in range(len(ordered) - 1)
    )
    ok = not bad and not overlaps and not uncovered and not multiple and spans
    return Verdict(
        "bid-space partition",
        "intervals are pairwise disjoint and cover the bid grid exactly once",
        PASS if ok else FAIL,
        {
            "intervals": len(intervals),
            "grid_points": len(grid),
            "empty_intervals": bad,
            "overlapping_pairs": overlaps,
            "uncovered_points": uncovered,
            "multiply_covered_points": multiple,
            "covers_range": spans,
        },
        notes=partition.convention,
    )


# ------------------------------------------------------------ shading

@dataclass
class ShadingLedger:
    valuations: np.ndarray
    mean_bid: np.ndarray
    win_rate: np.ndarray
    persistent: np.ndarray

    @property
    def margin(self):
        return self.valuations - self.mean_bid


def shading_report(sim, valuations, persistence=0.5):
    """Compare each agent's mean submitted bid with a supplied private value.

    ``persistent`` marks agents winning in at least ``persistence`` of the
    rounds; for them the margin must be strictly positive.
    """
    if valuations is None:
        raise ContractError("private valuations are required")
    n = sim.params.num_agents
    v = np.broadcast_to(np.asarray(valuations, dtype=np.float64), (n,)).copy()
    if np.any(~(v > 0)):
        raise ContractError("valuations must be positive")
    if len(sim.records) < sim.params.history_length:
        raise ContractError("simulation must run at least history_length rounds")
    bids = sim.bid_matrix
    wins = sim.win_matrix
    ledger = ShadingLedger(v, bids.mean(axis=0), wins.mean(axis=0), wins.mean(axis=0) >= persistence)
    margin = ledger.margin
    shaded = margin > 0
    pers_ok = bool(np.all(margin[ledger.persistent] > 0))
    status = PASS if shaded.all() and pers_ok else FAIL
    verdict = Verdict(
        "bid shading",
        "expected bid below private value, strictly for persistent minority agents",
        status,
        {
            "agents": n,
            "shaded_fraction": float(shaded.mean()),
            "violations": np.flatnonzero(~shaded),
            "persistent_agents": int(ledger.persistent.sum()),
            "margin_min": float(margin.min()),
            "margin_mean": float(margin.mean()),
            "margin_max": float(margin.max()),
            "persistent_margin_min": float(margin[ledger.persistent].min()) if ledger.persistent.any() else None,
        },
        {"persistence_threshold": persistence, "strict_margin": 0.0},
    )
    return ledger, verdict


def shading_ensemble(params, valuation, seeds, persistence=0.5):
    """Shading verdicts over several seeds plus the pooled margin sample."""
    margins = []
    failures = 0
    for s in seeds:
        sim = run_simulation(params.replace(seed=int(s)))
        ledger, v = shading_report(sim, valuation, persistence)
        margins.append(ledger.margin)
        failures += v.status == FAIL
    pooled = np.concatenate(margins)
    quant = np.quantile(pooled, [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
    verdict = Verdict(
        "bid shading ensemble",
        "expected bid below private value",
        PASS if failures == 0 and np.all(pooled > 0) else FAIL,
        {
            "seeds": len(margins),
            "agents": int(pooled.size),
            "shaded_fraction": float(np.mean(pooled > 0)),
            "failing_seeds": int(failures),
            "margin_quantiles": dict(zip(["min", "q05", "q25", "median", "q75", "q95", "max"], quant)),
        },
        {"valuation": valuation, "persistence_threshold": persistence},
    )
    return pooled, verdict


# ------------------------------------------------------------ efficiency

@dataclass
class RouteA:
    """``mean(d[:tau]) = C/tau + (tau - T0 + 1)/tau * eps + R/tau``.

    ``d`` is the per-round efficiency gap, ``T0`` (1-based) the onset of a
    sustained gap ``eps``, ``C`` the gap accumulated before ``T0`` and ``R``
    the excess of the realised gap over ``eps`` from ``T0`` on (zero when the
    gap is exactly ``eps`` after onset).
    """

    tau: int
    onset: int | None
    epsilon: float | None
    head: float | None
    residual: float | None
    cesaro_gap: float

    @property
    def decomposition(self):
        if self.onset is None:
            return None
        return self.head / self.tau + (self.tau - self.onset + 1) / self.tau * self.epsilon

    def to_json(self):
        return _jsonable(self.__dict__ | {"decomposition": self.decomposition})


def detect_onset(gap):
    """Earliest 1-based round after which the gap stays positive, and its floor."""
    gap = np.asarray(gap, dtype=np.float64)
    if gap.size == 0 or not gap[-1] > 0:
        return None, None
    tail_min = np.minimum.accumulate(gap[::-1])[::-1]
    positive = tail_min > 0
    first = int(np.argmax(positive))
    return first + 1, float(tail_min[first])


def route_a(gap, tau, onset=None, epsilon=None):
    gap = np.asarray(gap, dtype=np.float64)
    if tau < 1 or tau > gap.size:
        raise ContractError(f"tau must lie in 1..{gap.size}")
    d = gap[:tau]
    if onset is None:
        onset, detected = detect_onset(d)
        if epsilon is None:
            epsilon = detected
    elif epsilon is None:
        epsilon = float(d[onset - 1 :].min())
    cesaro = math.fsum(d) / tau
    if onset is None:
        return RouteA(tau, None, None, None, None, cesaro)
    if not 1 <= onset <= tau:
        raise ContractError(f"onset must lie in 1..{tau}")
    head = math.fsum(d[: onset - 1])
    residual = math.fsum(d[onset - 1 :] - epsilon)
    return RouteA(tau, onset, epsilon, head, residual, cesaro)


def efficiency_compare(efficiency, minority, majority, tau, onset=None, epsilon=None):
    """Cesaro efficiency of every minority agent against every majority agent.

    ``efficiency`` is a ``(rounds, agents)`` array (or an ``EfficiencySeries``).
    The eventual-gap decomposition is taken on the group-mean gap series,
    whose Cesaro mean equals the mean pairwise gap.
    """
    values = getattr(efficiency, "values", efficiency)
    values = np.asarray(values, dtype=np.float64)
    minority = np.asarray(list(minority), dtype=np.int64)
    majority = np.asarray(list(majority), dtype=np.int64)
    if minority.size == 0 or majority.size == 0:
        raise ContractError("both agent groups must be non-empty")
    ces = cesaro_average(values, tau)
    pair = ces[minority][:, None] - ces[majority][None, :]
    series = values[:, minority].mean(axis=1) - values[:, majority].mean(axis=1)
    ra = route_a(series, tau, onset, epsilon)
    return {
        "tau": tau,
        "min_pairwise_gap": float(pair.min()),
        "mean_pairwise_gap": float(pair.mean()),
        "max_pairwise_gap": float(pair.max()),
        "fraction_pairs_positive": float(np.mean(pair > 0)),
        "route_a": ra,
    }


def route_a_identity(epsilon=0.05, onset=100, tau=10_000, seed=0, tol=1e-9):
    """Inject a gap of exactly ``epsilon`` from ``onset`` and check the algebra."""
    rng = np.random.default_rng(int(seed))
    majority = rng.uniform(0.0, 0.2, size=tau)
    minority = majority.copy()
    minority[: onset - 1] += rng.normal(0.0, 0.05, size=onset - 1)
    minority[onset - 1 :] += epsilon
    eff = np.column_stack([minority, majority])
    out = efficiency_compare(eff, [0], [1], tau, onset=onset, epsilon=epsilon)
    ra = out["route_a"]
    head = math.fsum(minority[: onset - 1] - majority[: onset - 1])
    closed_form = head / tau + (tau - onset + 1) / tau * epsilon
    err = abs(out["mean_pairwise_gap"] - closed_form)
    return Verdict(
        "eventual-gap algebra",
        "Cesaro gap equals C/tau + (tau - T0 + 1)/tau * eps for a sustained gap eps after T0",
        PASS if err <= tol else FAIL,
        {
            "cesaro_gap": out["mean_pairwise_gap"],
            "closed_form": closed_form,
            "abs_error": err,
            "head_C": head,
            "decomposition": ra.decomposition,
        },
        {"abs": tol, "epsilon": epsilon, "onset": onset, "tau": tau},
    )


def bootstrap_ci(samples, level=0.95, resamples=2000, seed=0):
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ContractError("bootstrap needs samples")
    rng = np.random.default_rng(int(seed))
    idx = rng.integers(0, x.size, size=(resamples, x.size))
    means = x[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def group_gap(sim):
    """Mean efficiency of minority-adaptive minus majority-tracking agents."""
    kinds = sim.agents.adaptive
    if kinds.all() or not kinds.any():
        raise ContractError("both agent kinds must be present")
    e = sim.efficiency.values
    return float(e[:, kinds].mean() - e[:, ~kinds].mean())


def route_b(params, seeds, level=0.95):
    """Per-seed ergodic-mean efficiency gaps with a bootstrap interval."""
    gaps = np.array([group_gap(run_simulation(params.replace(seed=int(s)))) for s in seeds])
    lo, hi = bootstrap_ci(gaps, level, seed=int(params.seed))
    mean = float(gaps.mean())
    return Verdict(
        "ergodic-mean efficiency gap",
        "minority-adaptive minus majority-tracking mean efficiency across seeds",
        DESCRIPTIVE,
        {"seeds": len(gaps), "mean_gap": mean, "sign": int(np.sign(mean)), "ci": (lo, hi), "per_seed": gaps},
        {"confidence": level},
        notes="sign reported with its bootstrap interval; no truth value is asserted",
    )


# ------------------------------------------------------------ share dynamics

@dataclass
class ShareDynamics:
    trajectory: np.ndarray
    fixed_point: float | None
    monotone: bool
    converged: bool
    verdict: str


def _eval(delta, a):
    try:
        v = float(delta(a))
    except Exception as exc:  # surface any failure with the point
        raise EvaluationError(a, f"gap function raised {exc!r}") from exc
    if not math.isfinite(v):
        raise EvaluationError(a, f"gap function returned {v!r}")
    return v


def bisect_root(delta, lo=0.0, hi=1.0, tol=1e-12, max_iter=200):
    f_lo, f_hi = _eval(delta, lo), _eval(delta, hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise ContractError("bisection needs a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = _eval(delta, mid)
        if f_mid == 0 or hi - lo < tol:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def share_dynamics(delta, a0, eta, iterations, tol=1e-3):
    """Iterate ``a <- clip(a + eta * delta(a), 0, 1)`` and locate the interior root.

    The root is sought by bisection only when ``delta(0) > 0 > delta(1)``.
    ``converged`` means the final share is within ``tol`` of the root (or of
    the boundary the gap pushes toward when there is no interior root).
    """
    if not eta > 0:
        raise ContractError("step size must be positive")
    if not 0.0 <= a0 <= 1.0:
        raise ContractError("initial share must lie in [0, 1]")
    traj = [float(a0)]
    a = float(a0)
    for _ in range(iterations):
        a = min(1.0, max(0.0, a + eta * _eval(delta, a)))
        traj.append(a)
    traj = np.array(traj)
    d0, d1 = _eval(delta, 0.0), _eval(delta, 1.0)
    root = None
    if d0 > 0 > d1:
        root = bisect_root(delta)
        verdict = "interior equilibrium"
        target = root
    else:
        verdict = "no interior equilibrium"
        target = 1.0 if d0 > 0 and d1 > 0 else 0.0 if d0 < 0 and d1 < 0 else None
    steps = np.diff(traj)
    monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
    if target is not None:
        dist = np.abs(traj - target)
        monotone = monotone and bool(np.all(np.diff(dist) <= 1e-15))
        converged = bool(dist[-1] <= tol)
    else:
        converged = False
    return ShareDynamics(traj, root, monotone, converged, verdict)


def stability_check(delta=None, starts=(0.1, 0.9), eta=0.1, max_steps=200, tol=1e-3, root_tol=1e-6, expected=0.5):
    """Fixed point and two-sided convergence for a decreasing gap function."""
    delta = delta or (lambda a: 0.5 - a)
    root = bisect_root(delta)
    runs = {}
    for a0 in starts:
        res = share_dynamics(delta, a0, eta, max_steps, tol)
        hit = np.flatnonzero(np.abs(res.trajectory - root) <= tol)
        runs[a0] = {
            "monotone": res.monotone,
            "converged": res.converged,
            "steps_to_tol": int(hit[0]) if hit.size else None,
            "final": float(res.trajectory[-1]),
        }
    ok = abs(root - expected) <= root_tol and all(r["monotone"] and r["converged"] for r in runs.values())
    return Verdict(
        "adaptive stability",
        "minority share returns to the interior root from both sides",
        PASS if ok else FAIL,
        {"fixed_point": root, "runs": runs},
        {"root": root_tol, "trajectory": tol, "eta": eta, "max_steps": max_steps},
    )


def empirical_gap_curve(params, shares=tuple(np.round(np.arange(0.1, 1.0, 0.1), 1)), seeds=range(20)):
    """Ensemble-mean efficiency gap (minority minus majority) at each minority share."""
    means, ses = [], []
    for a in shares:
        gaps = np.array([group_gap(run_simulation(params.replace(minority_fraction=float(a), seed=int(s)))) for s in seeds])
        means.append(gaps.mean())
        ses.append(gaps.std(ddof=1) / math.sqrt(gaps.size) if gaps.size > 1 else math.nan)
    return np.asarray(shares, dtype=np.float64), np.array(means), np.array(ses)


def empirical_stability(params, shares=tuple(np.round(np.arange(0.1, 1.0, 0.1), 1)), seeds=range(20)):
    """Descriptive: interpolate the ensemble gap curve and look for a root."""
    a, mean, se = empirical_gap_curve(params, shares, seeds)
    numbers = {"shares": a, "gap_mean": mean, "gap_se": se}
    crossing = np.flatnonzero(np.sign(mean[:-1]) != np.sign(mean[1:]))
    if crossing.size:
        i = int(crossing[0])

        def curve(x):
            return float(np.interp(x, a, mean))

        root = bisect_root(curve, a[i], a[i + 1])
        band = float(np.interp(root, a, se))
        numbers.update(fixed_point=root, gap_at_root=curve(root), se_band=band, decreasing=bool(np.all(np.diff(mean) < 0)))
    else:
        numbers.update(fixed_point=None)
    return Verdict(
        "empirical adaptive stability",
        "minority share dynamics under simulated efficiency gaps",
        DESCRIPTIVE,
        numbers,
        notes="gap curve from ensemble means, linear interpolation between shares",
    )


__all__ = [
    "BinAssignment",
    "BidSpacePartition",
    "ShadingLedger",
    "ShareDynamics",
    "Verdict",
    "bin_count",
    "bisect_root",
    "efficiency_compare",
    "minority_bin_fuzz",
    "minority_bins",
    "route_a",
    "route_a_identity",
    "route_b",
    "shading_report",
    "share_dynamics",
    "stability_check",
    "verify_partition",
]
