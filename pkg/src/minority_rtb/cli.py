"""Command-line entry point: ``minority-rtb <subcommand>``.

Exit codes: 0 success, 1 data or verdict failure, 2 usage or configuration
error. Every run writes ``manifest.json`` into its output directory, which
defaults to ``$MINORITY_RTB_OUT`` or ``./out``.

Options may also come from ``--config FILE``, a flat ``key = value`` file
whose keys are the long option names (``bid-min = 4``). Flags given on the
command line win over the file, which wins over built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, _backend, analytics, svg, theory
from .bidding import SimParams, SupplyCurve, run_simulation
from .errors import ConfigError, ContractError, DegenerateInputError, RowError, SchemaError
from .landscape import GenConfig, parse_csv, summarize, summary_csv, summary_json, synth_generate
from .mg_engine import MgConfig, run as run_mg

OUT_ENV = "MINORITY_RTB_OUT"


class UsageError(Exception):
    pass


class Run:
    """Collects artifacts of one invocation and writes its manifest."""

    def __init__(self, command, args):
        self.command = command
        self.args = args
        self.out = Path(args.out or os.environ.get(OUT_ENV) or "out").resolve()
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.inputs = []
        self.seeds = []
        self.started = time.perf_counter()

    def path(self, name):
        p = (self.out / name).resolve()
        if self.out not in p.parents and p != self.out:
            raise UsageError(f"artifact {name!r} would leave the output directory")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write(self, name, text):
        p = self.path(name)
        p.write_text(text)
        self.artifacts.append(str(p.relative_to(self.out)))
        return p

    def write_json(self, name, obj):
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")

    def finish(self, **extra):
        params = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        manifest = {
            "subcommand": self.command,
            "parameters": params,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "output_dir": str(self.out),
            "artifacts": sorted(self.artifacts),
            "version": __version__,
            "backend": _backend.BACKEND,
            "duration_s": round(time.perf_counter() - self.started, 6),
            **extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "to_json"):
        return o.to_json()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _floats(text):
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ------------------------------------------------------------- simulate-mg

def cmd_simulate_mg(args):
    run = Run("simulate-mg", args)
    cfg = MgConfig(args.agents, args.memory, args.strategies, args.rounds, _seed(args))
    run.seeds = [cfg.seed]
    series = run_mg(cfg)
    run.write("attendance.csv", series.to_csv())
    run.write("metadata.json", series.to_json() + "\n")
    run.finish()
    return 0


# ------------------------------------------------------- simulate-bidding

def _bidding_params(args, seed):
    return SimParams(
        num_agents=args.agents,
        num_rounds=args.rounds,
        history_length=args.history,
        bid_min=args.bid_min,
        bid_max=args.bid_max,
        adjust_min=args.adjust_min,
        adjust_max=args.adjust_max,
        minority_fraction=args.minority_fraction,
        seed=seed,
    )


def _bidding_job(params, curve_path, svg_out):
    curve = SupplyCurve.from_landscape(parse_csv(curve_path, "lenient")) if curve_path else None
    sim = run_simulation(params, curve)
    files = {
        "rounds.csv": sim.rounds_csv(),
        "agents.csv": sim.agents_csv(),
        "agent_rounds.csv": sim.agent_rounds_csv(),
        "run.json": json.dumps(sim.manifest(), indent=2, sort_keys=True, default=_default) + "\n",
    }
    if svg_out and sim.records:
        r = np.arange(1, len(sim.records) + 1)
        files["avg_bid.svg"] = svg.line_chart({"avg bid": (r, sim.avg_bids)}, "Average bid per round", "round", "bid")
        files["winners.svg"] = svg.line_chart({"winners": (r, sim.num_winners)}, "Winners per round", "round", "winners")
    summary = {
        "seed": params.seed,
        "avg_bid_first5": float(sim.avg_bids[:5].mean()) if sim.records else None,
        "avg_bid_last5": float(sim.avg_bids[-5:].mean()) if sim.records else None,
        "mean_winners": float(sim.num_winners.mean()) if sim.records else None,
    }
    return files, summary


def cmd_simulate_bidding(args):
    run = Run("simulate-bidding", args)
    base = _bidding_params(args, _seed(args))
    if args.supply_curve:
        run.inputs.append(str(Path(args.supply_curve).resolve()))
    if args.seeds is None:
        run.seeds = [base.seed]
        files, _ = _bidding_job(base, args.supply_curve, args.svg)
        for name, text in files.items():
            run.write(name, text)
        run.finish()
        return 0

    if args.seeds < 1:
        raise ConfigError("seeds", "must be positive")
    seeds = [(base.seed + i) % 2**64 for i in range(args.seeds)]
    run.seeds = seeds
    jobs = [base.replace(seed=s) for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_bidding_job, jobs, [args.supply_curve] * len(jobs), [args.svg] * len(jobs)))
    else:
        results = [_bidding_job(p, args.supply_curve, args.svg) for p in jobs]
    rows = ["seed,avg_bid_first5,avg_bid_last5,mean_winners"]
    for s, (files, summary) in zip(seeds, results):
        sub = f"seed_{s}"
        written = []
        for name, text in files.items():
            run.write(f"{sub}/{name}", text)
            written.append(name)
        (run.out / sub / "manifest.json").write_text(json.dumps({
            "subcommand": "simulate-bidding",
            "seed": s,
            "artifacts": sorted(written),
            "version": __version__,
        }, indent=2, sort_keys=True) + "\n")
        run.artifacts.append(f"{sub}/manifest.json")
        rows.append(",".join(_cell(summary[k]) for k in ("seed", "avg_bid_first5", "avg_bid_last5", "mean_winners")))
    run.write("ensemble.csv", "\n".join(rows) + "\n")
    run.finish()
    return 0


def _cell(v):
    if v is None:
        return ""
    return f"{v:.4f}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------- generate

def cmd_generate(args):
    run = Run("generate", args)
    model = args.model.replace("-", "_")
    kwargs = dict(
        model=model,
        num_ads=args.ads,
        date_start=args.date_start,
        date_end=args.date_end,
        hours=args.hours,
        full_grid=args.grid if args.grid is not None else model != "heteroscedastic",
        num_rows=args.rows,
        seed=_seed(args),
        dispersion=args.dispersion,
    )
    if args.regime_means is not None:
        kwargs["regime_imps_means"] = args.regime_means
    if args.variance_schedule is not None:
        kwargs["variance_schedule"] = args.variance_schedule
        if args.imps_bin_edges is None:
            k = len(args.variance_schedule)
            kwargs["imps_bin_edges"] = tuple(1000 * i for i in range(k + 1))
    if args.imps_bin_edges is not None:
        kwargs["imps_bin_edges"] = args.imps_bin_edges
    cfg = GenConfig(**kwargs)
    run.seeds = [cfg.seed]
    ds = synth_generate(cfg)
    path = run.path(args.output)
    ds.to_csv(path)
    run.artifacts.append(str(path.relative_to(run.out)))
    run.write_json(Path(args.output).stem + ".manifest.json", ds.manifest)
    print(f"{len(ds)} rows -> {path}")
    run.finish(rows=len(ds))
    return 0


# ----------------------------------------------------------------- analyze

def cmd_analyze(args):
    run = Run("analyze", args)
    run.inputs.append(str(Path(args.input).resolve()))
    ds = parse_csv(args.input, args.mode)
    if ds.diagnostics.dropped:
        print(f"lenient parse: {ds.diagnostics.message}; {dict(ds.diagnostics.dropped)}", file=sys.stderr)
    if len(ds) == 0:
        print(f"no usable rows ({ds.diagnostics.message})", file=sys.stderr)
        run.finish()
        return 1

    if args.which == "summary":
        rows = summarize(ds)
        run.write("summary.csv", summary_csv(rows))
        run.write_json("summary.json", summary_json(rows))
        for r in rows:
            print(f"{r.variable:16s} n={r.n} mean={r.mean:.2f} sd={r.sd:.2f} skew={r.skew:.2f} kurt={r.kurtosis:.2f}")

    elif args.which == "cluster":
        seed = _seed(args)
        run.seeds = [seed]
        res = analytics.cluster_dataset(ds, args.k, seed, standardize=not args.raw_features)
        run.write("clusters.csv", res.cluster_csv())
        run.write("cluster_scatter.csv", analytics.scatter_csv(ds, res))
        report = {
            "k": res.k,
            "sizes": res.sizes,
            "centroids": res.centroids,
            "inertia": res.inertia,
            "iterations": res.iterations,
            "converged": res.converged,
            "standardized": res.standardized,
        }
        if res.k == 2:
            mc = analytics.identify_minority_cluster(res)
            sk = analytics.cluster_skewness(ds, res)
            report["minority_cluster"] = {"cluster": mc.cluster, "label": mc.label, "rationale": mc.rationale}
            report["bid_skew"] = {"skew": sk.skew, "median": sk.median, "low_bid_concentration": sk.verdict, "rule": sk.rule}
        run.write_json("cluster.json", report)
        if args.svg:
            run.write("cluster.svg", svg.scatter(ds.columns["bid"], ds.columns["imps_hour"], res.assignments,
                                                 "Bid vs hourly impressions by cluster", "bid", "imps_hour"))
        for c in range(res.k):
            print(f"cluster {c}: size={res.sizes[c]} mean_imps_hour={res.mean_imps_hour[c]:.4f}")

    elif args.which == "variance":
        rep = analytics.variance_scaling(ds, args.bins, args.binning.replace("-", "_"))
        run.write("variance.csv", rep.to_csv())
        run.write_json("variance.json", rep.to_json())
        if args.svg:
            b = np.arange(rep.effective_bins)
            run.write("variance.svg", svg.line_chart({"bid variance": (b, rep.variances)},
                                                     "Bid variance by hourly-impression bin", "bin", "variance"))
        for b in range(rep.effective_bins):
            print(f"bin {b}: [{rep.edges[b]:.1f}, {rep.edges[b + 1]:.1f}) n={rep.counts[b]} var={rep.variances[b]:.3f}")

    else:
        for ad, (bid, imps) in analytics.per_ad_series(ds).items():
            lines = ["bid,imps_hour"] + [f"{b!r},{h}" for b, h in zip(bid.tolist(), imps.tolist())]
            run.write(f"scatter/ad_{ad}.csv", "\n".join(lines) + "\n")
            if args.svg:
                run.write(f"scatter/ad_{ad}.svg", svg.scatter(bid, imps, None, f"Ad {ad}: bid vs hourly impressions", "bid", "imps_hour"))
        run.write("scatter.csv", analytics.scatter_csv(ds))
    run.finish(rows=len(ds), diagnostics={"dropped": dict(ds.diagnostics.dropped), "message": ds.diagnostics.message})
    return 0


# ------------------------------------------------------------------ verify

def _print_verdicts(verdicts):
    width = max(len(v.check) for v in verdicts)
    for v in verdicts:
        nums = ", ".join(f"{k}={_short(x)}" for k, x in v.numbers.items() if not isinstance(x, (list, dict, np.ndarray)))
        print(f"{v.check:<{width}}  {v.status.upper():<11}  {nums}")


def _short(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def cmd_verify(args):
    run = Run("verify", args)
    checks = ["lemma1", "partition", "shading", "route-a", "route-b", "stability"] if args.check == "all" else [args.check]
    seed = _seed(args)
    run.seeds = [seed]
    verdicts = []
    for check in checks:
        if check in ("lemma1", "minority-bins"):
            verdicts.append(theory.minority_bin_fuzz(args.fuzz, args.max_agents, args.max_bins, seed))
        elif check == "partition":
            part = theory.BidSpacePartition.regular(args.upper, width=args.width, num_bins=None if args.width else args.bins)
            verdicts.append(theory.verify_partition(part))
        elif check == "shading":
            params = _bidding_params(args, seed)
            value = args.valuation if args.valuation is not None else params.bid_max + 2
            seeds = [(seed + i) % 2**64 for i in range(args.seeds)]
            margins, v = theory.shading_ensemble(params, value, seeds, args.persistence)
            run.write("shading_margins.csv", "margin\n" + "".join(f"{m:.6f}\n" for m in margins))
            verdicts.append(v)
        elif check == "route-a":
            verdicts.append(theory.route_a_identity(args.eps, args.t0, args.tau, seed))
        elif check == "route-b":
            params = _bidding_params(args, seed).replace(minority_fraction=args.mixed_fraction)
            verdicts.append(theory.route_b(params, [(seed + i) % 2**64 for i in range(args.seeds)]))
        elif check == "stability":
            verdicts.append(theory.stability_check(eta=args.eta, max_steps=args.steps))
            if args.empirical:
                params = _bidding_params(args, seed)
                verdicts.append(theory.empirical_stability(params, seeds=[(seed + i) % 2**64 for i in range(args.seeds)]))
    run.write_json("verdicts.json", [v.to_json() for v in verdicts])
    _print_verdicts(verdicts)
    ok = all(v.passed for v in verdicts)
    run.finish(all_hard_checks_pass=ok)
    return 0 if ok else 1


# ------------------------------------------------------------------ parser

def _common(p, seed=True):
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--config", help="flat key = value file of option defaults")
    if seed:
        p.add_argument("--seed", type=int, help="random seed (generated and printed when omitted)")


def _bidding_flags(p):
    p.add_argument("--agents", type=int, default=100)
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--history", type=int, default=5)
    p.add_argument("--bid-min", type=float, default=5.0)
    p.add_argument("--bid-max", type=float, default=10.0)
    p.add_argument("--adjust-min", type=float, default=-0.5)
    p.add_argument("--adjust-max", type=float, default=0.5)
    p.add_argument("--minority-fraction", type=float, default=1.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="minority-rtb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-mg", help="run the canonical Minority Game")
    _common(p)
    p.add_argument("--agents", type=int, default=101)
    p.add_argument("--memory", type=int, default=3)
    p.add_argument("--strategies", type=int, default=2)
    p.add_argument("--rounds", type=int, default=1000)
    p.set_defaults(func=cmd_simulate_mg)

    p = sub.add_parser("simulate-bidding", help="run the median-threshold minority bidding simulation")
    _common(p)
    _bidding_flags(p)
    p.add_argument("--seeds", type=int, help="run an ensemble of this many consecutive seeds")
    p.add_argument("--workers", type=int, default=1, help="worker processes for ensembles")
    p.add_argument("--supply-curve", help="landscape CSV; winners get its impressions at their bid")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_simulate_bidding)

    p = sub.add_parser("generate", help="write a synthetic landscape CSV")
    _common(p)
    p.add_argument("--model", default="supply-curve",
                   choices=["two-regime", "supply-curve", "heteroscedastic", "two_regime", "supply_curve"])
    p.add_argument("--ads", type=int, default=1)
    p.add_argument("--date-start", type=int, default=43082)
    p.add_argument("--date-end", type=int)
    p.add_argument("--hours", type=_ints, default=(13,))
    p.add_argument("--grid", action=argparse.BooleanOptionalAction, default=None,
                   help="include every bid level per cell (default on, off for heteroscedastic)")
    p.add_argument("--rows", type=int, help="row count when --no-grid")
    p.add_argument("--dispersion", type=float, default=0.0)
    p.add_argument("--regime-means", type=_floats)
    p.add_argument("--variance-schedule", type=_floats)
    p.add_argument("--imps-bin-edges", type=_ints)
    p.add_argument("--output", default="landscape.csv", help="file name inside the output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="summaries, clustering, variance scaling, scatter series")
    _common(p)
    p.add_argument("which", choices=["summary", "cluster", "variance", "scatter"])
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["strict", "lenient"], default="strict")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--raw-features", action="store_true", help="cluster without standardizing")
    p.add_argument("--bins", type=int, default=6)
    p.add_argument("--binning", choices=["quantile", "equal-width"], default="quantile")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="property checks of the minority-bidding results")
    _common(p)
    p.add_argument("check", choices=["lemma1", "minority-bins", "partition", "shading", "route-a", "route-b", "stability", "all"])
    p.add_argument("--fuzz", type=int, default=10_000)
    p.add_argument("--max-agents", type=int, default=1_000)
    p.add_argument("--max-bins", type=int, default=100)
    p.add_argument("--upper", type=float, default=50.0)
    p.add_argument("--width", type=float)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--valuation", type=float, help="private value for every agent (default bid-max + 2)")
    p.add_argument("--persistence", type=float, default=0.5)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--t0", type=int, default=100)
    p.add_argument("--tau", type=int, default=10_000)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--mixed-fraction", type=float, default=0.5,
                   help="minority-adaptive share for the route-b efficiency comparison")
    p.add_argument("--empirical", action="store_true", help="also estimate the gap curve by simulation")
    _bidding_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def load_config(path):
    values = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(parser, argv, args):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    dests = {a.dest: a for a in sub._actions}
    values = load_config(args.config)
    converted = {}
    for key, raw in values.items():
        action = dests.get(key)
        if action is None or key in ("config", "help", "func"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
            converted[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            converted[key] = raw  # argparse applies ``type`` to string defaults
    sub.set_defaults(**converted)
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for row, msg in getattr(exc, "errors", [])[:20]:
            print(f"  row {row}: {msg}", file=sys.stderr)
        return 1
    except (SchemaError, ContractError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
