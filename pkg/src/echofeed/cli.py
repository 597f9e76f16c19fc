"""Command-line pipeline: ingest, estimate, equilibrium, optimize, simulate, synth."""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import io as fio
from .equilibrium import ConvergenceError, solve_equilibrium, solver_trace
from .estimation import estimate_rates, replay_empirical
from .graph import DatasetError, InactiveLeaderError, largest_scc, load_dataset, load_graph, preprocess, validate
from .metrics import aggregate, compare
from .optimizer import (
    OptimizerConfig,
    maximize_diversity,
    no_diffusion_mix,
    optimize_no_diffusion,
    relative_gain,
)
from .simulator import SimConfig, SimulationError, simulate
from .synthetic import SyntheticSpec, generate

EXIT_CODES = {
    "input-error": 2,
    "parse-error": 3,
    "validation-error": 4,
    "convergence-error": 5,
    "config-error": 6,
}


class ValidationFailed(ValueError):
    pass


def _budget_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad budget list {text!r}") from None
    if not values or any(not 0.0 <= v < 1.0 for v in values):
        raise argparse.ArgumentTypeError("budgets must lie in [0, 1)")
    return values


def _range(text):
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def budget_tag(b: float) -> str:
    return f"{b:g}"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, args, extra=None):
    inputs = {}
    for name in ("users", "edges", "events", "parties", "rates", "policy"):
        value = getattr(args, name, None)
        if value:
            inputs[name] = {"path": str(value), "sha256": _sha256(value)}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out") and k not in inputs}
    manifest = {
        "command": args.command,
        "inputs": inputs,
        "config": config,
        "seed": getattr(args, "seed", None),
        "versions": {
            "echofeed": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        manifest.update(extra)
    fio.write_json(out / "manifest.json", manifest)


def load_instance(args, need_events=False):
    """Graph (largest SCC), rates, and the event log when one was given."""
    events = None
    if args.events:
        graph, events = load_dataset(args.users, args.edges, args.events, args.parties)
        graph, events = preprocess(graph, events)
        rates = fio.read_rates_csv(args.rates, graph) if getattr(args, "rates", None) else estimate_rates(events, graph)
    else:
        if need_events:
            raise FileNotFoundError("this command needs --events")
        if not getattr(args, "rates", None):
            raise FileNotFoundError("need --events or --rates")
        graph = largest_scc(load_graph(args.users, args.edges, args.parties))
        rates = fio.read_rates_csv(args.rates, graph)
    diag = validate(graph, rates)
    return graph, rates, events, diag


def _require_valid(diag):
    if not diag.ok:
        raise ValidationFailed("; ".join(diag.failures))


def _report_dict(report, graph):
    return report.summary(graph.parties)


def cmd_ingest(args):
    out = Path(args.out)
    raw_graph, raw_events = load_dataset(args.users, args.edges, args.events, args.parties)
    graph, events = preprocess(raw_graph, raw_events)
    fio.write_graph(out, graph)
    fio.write_event_log(out / "events.jsonl", events, graph.parties)
    fio.write_json(out / "summary.json", {
        "users_after_filtering": raw_graph.n_users,
        "users": graph.n_users,
        "edges": graph.n_edges,
        "events": len(events),
        "parties": list(graph.parties.labels),
    })
    write_manifest(out, args)


def cmd_estimate(args):
    out = Path(args.out)
    graph, rates, events, diag = load_instance(args, need_events=True)
    state = replay_empirical(events, graph)
    report = aggregate(state, graph)
    fio.write_rates_csv(out / "rates.csv", rates, graph)
    fio.write_state_csv(out / "state_empirical.csv", state, graph)
    fio.write_histograms_csv(out / "histograms_empirical.csv", report)
    summary = _report_dict(report, graph)
    summary["dual_affiliation_rule"] = "dual-affiliation posts count half for each party"
    summary["validation"] = diag.to_dict()
    fio.write_json(out / "report_empirical.json", summary)
    write_manifest(out, args)


def cmd_equilibrium(args):
    out = Path(args.out)
    graph, rates, events, diag = load_instance(args)
    _require_valid(diag)
    state = solve_equilibrium(graph, rates, tol=args.tol, max_iter=args.max_iter, trace=True)
    report = aggregate(state, graph)
    summary = _report_dict(report, graph)
    summary["validation"] = diag.to_dict()
    if events is not None:
        empirical = replay_empirical(events, graph)
        summary["comparison_with_empirical"] = compare(state, empirical, graph).to_dict(graph.parties)
    if args.compare:
        other = fio.read_state_csv(args.compare, graph)
        summary["comparison"] = compare(state, other, graph).to_dict(graph.parties)
    fio.write_state_csv(out / "state_equilibrium.csv", state, graph)
    fio.write_histograms_csv(out / "histograms_equilibrium.csv", report)
    fio.write_json(out / "report_equilibrium.json", summary)
    fio.write_json(out / "trace_equilibrium.json", solver_trace(state))
    write_manifest(out, args)


def _optimize_one(graph, rates, budget, max_iter, tol):
    cfg = OptimizerConfig(budget=budget, max_iter=max_iter, tol=tol)
    return maximize_diversity(graph, rates, cfg)


def cmd_optimize(args):
    out = Path(args.out)
    graph, rates, events, diag = load_instance(args)
    _require_valid(diag)
    budgets = sorted(set(args.budget))
    if events is not None:
        baseline = replay_empirical(events, graph)
        baseline_source = "empirical replay"
    else:
        baseline = solve_equilibrium(graph, rates, tol=args.tol)
        baseline_source = "model equilibrium without recommendations"

    if args.jobs > 1 and len(budgets) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_optimize_one, graph, rates, b, args.max_iter, args.opt_tol) for b in budgets]
            results = [f.result() for f in futures]
    else:
        results = [_optimize_one(graph, rates, b, args.max_iter, args.opt_tol) for b in budgets]

    sweep = {}
    for b, (policy, state, trace) in zip(budgets, results):
        tag = budget_tag(b)
        report = aggregate(state, graph, policy)
        summary = {"budget": b, "diffusion": _report_dict(report, graph), "optimizer_status": trace.status}
        summary["baseline_source"] = baseline_source
        if b > 0:
            same = no_diffusion_mix(baseline, policy)
            summary["no_diffusion_same_policy"] = _report_dict(aggregate(same, graph, policy), graph)
            reopt = optimize_no_diffusion(baseline, graph, rates, b)
            summary["no_diffusion_reoptimised"] = _report_dict(
                aggregate(no_diffusion_mix(baseline, reopt), graph, reopt), graph
            )
        summary["note"] = state.meta.get("non_unique_policy_note")
        fio.write_json(out / f"report_{tag}.json", summary)
        fio.write_policy_csv(out / f"policy_{tag}.csv", policy, graph)
        fio.write_state_csv(out / f"state_{tag}.csv", state, graph)
        fio.write_json(out / f"trace_{tag}.json", trace.to_dict())
        fio.write_histograms_csv(out / f"histograms_{tag}.csv", report)
        sweep[b] = (report.mean_diversity, report.mean_echo)

    gains = {}
    if 0.0 in sweep:
        gains = {
            budget_tag(b): g for b, g in relative_gain({k: v[0] for k, v in sweep.items()}).items()
        }
    fio.write_json(out / "sweep.json", {
        "mean_diversity": {budget_tag(b): v[0] for b, v in sweep.items()},
        "mean_echo": {budget_tag(b): v[1] for b, v in sweep.items()},
        "relative_gain_per_budget_unit": gains,
    })
    write_manifest(out, args)


def cmd_simulate(args):
    out = Path(args.out)
    graph, rates, events, diag = load_instance(args)
    _require_valid(diag)
    policy = None
    if args.policy:
        if args.budget is None or len(args.budget) != 1:
            raise SimulationError("--policy needs a single --budget value")
        policy = fio.read_policy_csv(args.policy, graph, args.budget[0])
    cfg = SimConfig(args.horizon, args.feed_size, args.burn_in, args.seed, policy)
    result = simulate(graph, rates, cfg)
    if policy is None:
        model = solve_equilibrium(graph, rates, tol=args.tol)
    else:
        from .equilibrium import solve_with_recommendations

        model = solve_with_recommendations(graph, rates, policy, tol=args.tol)
    ok = result.state.valid & model.valid
    err = np.abs(result.state.p[ok] - model.p[ok])
    fio.write_state_csv(out / "state_simulated.csv", result.state, graph)
    fio.write_json(out / "diagnostics_simulated.json", result.diagnostics())
    agreement = compare(result.state, model, graph).to_dict(graph.parties)
    agreement["max_abs_error"] = float(err.max()) if err.size else None
    agreement["max_half_width_99"] = float(np.nanmax(result.half_width)) if ok.any() else None
    agreement["tolerance"] = args.agreement_tol
    agreement["within_tolerance"] = bool(err.size and err.max() <= args.agreement_tol)
    fio.write_json(out / "agreement.json", agreement)
    write_manifest(out, args)


def cmd_synth(args):
    out = Path(args.out)
    spec = SyntheticSpec(
        n_users=args.n_users, n_parties=args.n_parties, p_intra=args.p_intra, p_inter=args.p_inter,
        selfpost_range=args.selfpost_range, repost_range=args.repost_range, seed=args.seed,
    )
    graph, rates = generate(spec)
    fio.write_graph(out, graph)
    fio.write_rates_csv(out / "rates.csv", rates, graph)
    repair = [(graph.user_ids[a], graph.user_ids[b]) for a, b in graph.metadata["repair_edges"]]
    fio.write_json(out / "metadata.json", {"repair_edges": repair, "users": graph.n_users, "edges": graph.n_edges})
    write_manifest(out, args)


def build_parser():
    parser = argparse.ArgumentParser(prog="echofeed", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, max_iter=100_000, max_iter_help="power-iteration cap"):
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--users", required=True, help="user table CSV (user_id,affiliation)")
            p.add_argument("--edges", required=True, help="edge table CSV (follower_id,leader_id)")
            p.add_argument("--events", help="event log (JSON lines)")
            p.add_argument("--parties", help="ordered party list")
            p.add_argument("--rates", help="rate table CSV; overrides estimation from --events")
            p.add_argument("--tol", type=float, default=1e-10, help="power-iteration tolerance")
            p.add_argument("--max-iter", type=int, default=max_iter, dest="max_iter", help=max_iter_help)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="preprocess a raw dataset and write the canonical tables")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", help="activity rates and empirical feed composition")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("equilibrium", help="model equilibrium and comparison with data")
    common(p)
    p.add_argument("--compare", help="state CSV to compare the equilibrium against")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("optimize", help="diversity-maximising recommendations over a budget sweep")
    common(p, max_iter=2000, max_iter_help="outer ascent iterations")
    p.add_argument("--budget", type=_budget_list, default=[0.0, 0.02, 0.05, 0.1, 0.2, 0.5])
    p.add_argument("--opt-tol", type=float, default=1e-8, dest="opt_tol")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo check of the equilibrium")
    common(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--feed-size", type=int, default=10, dest="feed_size")
    p.add_argument("--burn-in", type=float, default=0.2, dest="burn_in")
    p.add_argument("--policy", help="policy CSV to inject as recommendations")
    p.add_argument("--budget", type=_budget_list, help="budget the policy was built for")
    p.add_argument("--agreement-tol", type=float, default=0.02, dest="agreement_tol")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="generate a synthetic homophilic instance")
    common(p, data=False)
    p.add_argument("--n-users", type=int, default=300, dest="n_users")
    p.add_argument("--n-parties", type=int, default=5, dest="n_parties")
    p.add_argument("--p-intra", type=float, default=0.1, dest="p_intra")
    p.add_argument("--p-inter", type=float, default=0.01, dest="p_inter")
    p.add_argument("--selfpost-range", type=_range, default=(0.1, 1.0), dest="selfpost_range")
    p.add_argument("--repost-range", type=_range, default=(0.1, 3.0), dest="repost_range")
    p.set_defaults(func=cmd_synth)
    return parser


def classify(exc) -> str:
    if isinstance(exc, FileNotFoundError):
        return "input-error"
    if isinstance(exc, DatasetError):
        return "parse-error"
    if isinstance(exc, (ValidationFailed, InactiveLeaderError)):
        return "validation-error"
    if isinstance(exc, ConvergenceError):
        return "convergence-error"
    return "config-error"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (FileNotFoundError, DatasetError, ValidationFailed, InactiveLeaderError,
            ConvergenceError, SimulationError, ValueError) as exc:
        kind = classify(exc)
        message = str(exc).replace("\n", " ")
        if isinstance(exc, FileNotFoundError) and exc.filename:
            message = f"no such file: {exc.filename}"
        print(f"error: {kind}: {message}", file=sys.stderr)
        return EXIT_CODES[kind]
    return 0


if __name__ == "__main__":
    sys.exit(main())
