"""Command-line pipeline: stage, generate, simulate, analyze, plot.

Layout under the experiment output directory:

    out/
      plan.json                 experiment parameters and input paths
      net-<i>/config.json       generated network i
      net-<i>/sim-<j>/          one simulation run (metrics + manifest)
      estimates/<metric>.csv    cross-network quantile estimates

Every random draw derives from the plan's master seed: network i uses
seed path (master, i), simulation (i, j) uses (master, i, j), so the
whole pipeline is reproducible byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from multiprocessing import get_context
from pathlib import Path

from . import inetmap, netgen, staging, stats, traffic
from .sim import engine, metrics as simmetrics

log = logging.getLogger("torsim")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

DEFAULT_DURATION_S = 3600.0
DEFAULT_WARMUP_S = 1200.0

METRIC_KINDS = ("perf50k", "perf1m", "perf5m", "markov")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- plan ---------------------------------------------------------------


def write_plan(outdir: Path, plan: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "plan.json", "w") as f:
        json.dump(plan, f, indent=1, sort_keys=True)
        f.write("\n")


def read_plan(outdir: Path) -> dict:
    path = outdir / "plan.json"
    if not path.exists():
        raise UsageError(f"{path} not found; run `torsim generate` first")
    with open(path) as f:
        return json.load(f)


# -- subcommands --------------------------------------------------------


def cmd_stage(args) -> int:
    snapshots = staging.load_snapshots(args.snapshots)
    if not snapshots:
        raise staging.StagingError(f"no snapshots found under {args.snapshots}")
    descriptors = staging.load_descriptors(args.descriptors)
    user_counts = staging.load_user_counts(args.users)
    model = staging.stage(snapshots, descriptors, user_counts)
    staging.write_staged(model, args.out)
    log.info(
        "staged %d relays over %d consensuses -> %s",
        len(model.relays), model.consensus_count, args.out,
    )
    return EXIT_OK


def cmd_generate(args) -> int:
    outdir = Path(args.out)
    staged = staging.read_staged(args.staged)
    imap = inetmap.load_map(args.map)
    plan = {
        "staged": str(args.staged),
        "map": str(args.map),
        "scale": args.scale,
        "load": args.load,
        "pscale": args.pscale,
        "networks": args.networks,
        "sims_per_net": args.sims_per_net,
        "seed": args.seed,
        "duration_s": args.duration,
        "warmup_s": args.warmup,
    }
    if plan["warmup_s"] >= plan["duration_s"]:
        raise UsageError("--warmup must be smaller than --duration")
    write_plan(outdir, plan)
    for i in range(args.networks):
        params = netgen.ScaleParams(
            scale=args.scale,
            load=args.load,
            pscale=args.pscale,
            seed=traffic.derive_seed(args.seed, i),
        )
        config = netgen.generate(staged, imap, params)
        netdir = outdir / f"net-{i}"
        netdir.mkdir(parents=True, exist_ok=True)
        netgen.write_config(config, netdir / "config.json")
        log.info("net-%d: %d hosts -> %s", i, len(config.hosts), netdir / "config.json")
    return EXIT_OK


def _run_one(spec: tuple) -> tuple:
    """Worker: run simulation (i, j); isolated, writes its own files."""
    i, j, config_path, map_path, duration_s, seed, outdir = spec
    try:
        config = netgen.read_config(config_path)
        imap = inetmap.load_map(map_path)
        record = engine.run(config, imap, duration_s, seed)
        simmetrics.write_metrics(record, outdir)
        simmetrics.write_manifest(
            outdir, i, j, seed, netgen.config_hash(config), duration_s, "ok"
        )
        return (i, j, "ok", "")
    except Exception as exc:  # isolate per-run failures
        Path(outdir).mkdir(parents=True, exist_ok=True)
        simmetrics.write_manifest(outdir, i, j, seed, "", duration_s, "failed")
        return (i, j, "failed", str(exc))


def cmd_simulate(args) -> int:
    outdir = Path(args.out)
    plan = read_plan(outdir)
    duration = args.duration if args.duration is not None else plan["duration_s"]
    master = plan["seed"]
    m = args.sims_per_net if args.sims_per_net is not None else plan["sims_per_net"]
    specs = []
    for i in range(plan["networks"]):
        config_path = outdir / f"net-{i}" / "config.json"
        if not config_path.exists():
            raise UsageError(f"{config_path} missing; run `torsim generate` first")
        for j in range(m):
            specs.append(
                (
                    i, j, str(config_path), plan["map"], duration,
                    traffic.derive_seed(master, i, j),
                    str(outdir / f"net-{i}" / f"sim-{j}"),
                )
            )
    if args.parallelism > 1:
        with get_context("spawn").Pool(args.parallelism) as pool:
            results = pool.map(_run_one, specs)
    else:
        results = [_run_one(s) for s in specs]
    failures = [r for r in results if r[2] != "ok"]
    for i, j, _, msg in failures:
        log.error("sim (%d,%d) failed: %s", i, j, msg)
    log.info("%d/%d simulations ok", len(results) - len(failures), len(results))
    return EXIT_RUNTIME if len(failures) == len(results) and results else EXIT_OK


def _collect_groups(outdir: Path, plan: dict) -> dict[int, list[dict]]:
    manifests = []
    for mpath in sorted(outdir.glob("net-*/sim-*/manifest.json")):
        man = simmetrics.read_manifest(mpath)
        if man.get("status") == "ok":
            man["dir"] = str(mpath.parent)
            manifests.append(man)
    if not manifests:
        raise stats.StatsError(f"no successful runs under {outdir}")
    return stats.group_runs(manifests)


def _metric_samples(metric: str, rundir: Path, warmup_s: float) -> list[float]:
    """Post-warmup samples of one metric from one run directory."""
    if metric == "goodput":
        import csv as _csv

        with open(rundir / simmetrics.GOODPUT_CSV, newline="") as f:
            return [
                float(r["goodput_bits"])
                for r in _csv.DictReader(f)
                if float(r["second"]) >= warmup_s
            ]
    downloads = simmetrics.read_downloads(rundir / simmetrics.DOWNLOADS_CSV)
    downloads = [d for d in downloads if float(d["start_s"]) >= warmup_s]
    if metric == "error_rate":
        per_client: dict[str, list[int]] = {}
        for d in downloads:
            per_client.setdefault(d["client"], []).append(int(d["outcome"] != "ok"))
        return [sum(v) / len(v) for _, v in sorted(per_client.items())]
    field, _, kind = metric.partition(":")
    if field not in ("ttfb", "ttlb") or (kind and kind not in METRIC_KINDS):
        raise UsageError(
            f"unknown metric {metric!r}; use ttfb[:KIND], ttlb[:KIND], "
            f"error_rate, or goodput (KIND in {METRIC_KINDS})"
        )
    col = f"{field}_s"
    return [
        float(d[col])
        for d in downloads
        if d["outcome"] == "ok" and (not kind or d["kind"] == kind) and d[col] != ""
    ]


def cmd_analyze(args) -> int:
    import csv as _csv

    outdir = Path(args.out)
    plan = read_plan(outdir)
    warmup = args.warmup if args.warmup is not None else plan["warmup_s"]
    groups = _collect_groups(outdir, plan)
    grid = stats.default_grid()
    estdir = outdir / "estimates"
    estdir.mkdir(parents=True, exist_ok=True)
    for metric in args.metric:
        net_estimates = []
        for net, runs in groups.items():
            dists = []
            for man in runs:
                samples = _metric_samples(metric, Path(man["dir"]), warmup)
                if not samples:
                    raise stats.StatsError(
                        f"metric {metric!r}: no post-warmup samples in "
                        f"net-{net}/sim-{man['sim']}"
                    )
                dists.append(
                    stats.EmpiricalDistribution.from_samples(samples, args.resolution)
                )
            net_estimates.append(stats.network_estimate(dists, grid, args.alpha))
        est = stats.true_estimate(net_estimates, args.alpha)
        name = metric.replace(":", "_")
        path = estdir / f"{name}.csv"
        with open(path, "w", newline="") as f:
            writer = _csv.DictWriter(
                f,
                fieldnames=(
                    "q", "mu", "sigma", "delta", "epsilon",
                    "ci_lo", "ci_hi", "n", "alpha",
                ),
            )
            writer.writeheader()
            writer.writerows(stats.estimate_to_rows(est))
        log.info("metric %s: n=%d networks -> %s", metric, est.n, path)
    return EXIT_OK


def cmd_plot(args) -> int:
    from . import plotting

    labels = args.labels or [Path(p).stem for p in args.estimates]
    if len(labels) != len(args.estimates):
        raise UsageError("--labels must match the number of estimate files")
    inputs = [
        (label, plotting.read_estimate_csv(path))
        for label, path in zip(labels, args.estimates)
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plotting.plot_cdf_estimates(
        inputs, out, out.with_suffix(".csv"), tail_log=args.tail_log
    )
    log.info("wrote %s and %s", out, out.with_suffix(".csv"))
    return EXIT_OK


def cmd_ci_width_study(args) -> int:
    from . import plotting

    results = stats.ci_width_study(
        range(2, args.max_networks + 1),
        trials=args.trials,
        seed=args.seed,
        alpha=args.alpha,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plotting.plot_ci_width(results, out, out.with_suffix(".csv"))
    log.info("wrote %s and %s", out, out.with_suffix(".csv"))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="torsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stage", help="compute the staged model from snapshot data")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--descriptors", required=True)
    p.add_argument("--users", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stage)

    p = sub.add_parser("generate", help="generate n scaled network configs")
    p.add_argument("--staged", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--load", type=float, default=1.0)
    p.add_argument("--pscale", type=float, required=True)
    p.add_argument("--networks", type=int, default=1)
    p.add_argument("--sims-per-net", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=DEFAULT_DURATION_S)
    p.add_argument("--warmup", type=float, default=DEFAULT_WARMUP_S)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run all n x m simulations")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--sims-per-net", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="estimate quantiles with CIs per metric")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--metric", action="append", required=True,
        help="ttfb[:KIND], ttlb[:KIND], error_rate, or goodput; repeatable",
    )
    p.add_argument("--alpha", type=float, default=stats.DEFAULT_ALPHA)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--resolution", type=float, default=stats.DEFAULT_RESOLUTION_S)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="plot estimate CSVs as CDFs with CI bands")
    p.add_argument("--estimates", nargs="+", required=True)
    p.add_argument("--labels", nargs="*", default=None)
    p.add_argument("--tail-log", action="store_true")
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser(
        "ci-width-study", help="Monte-Carlo CI width vs number of networks"
    )
    p.add_argument("--max-networks", type=int, default=100)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=stats.DEFAULT_ALPHA)
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=cmd_ci_width_study)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        staging.StagingError,
        inetmap.MapError,
        netgen.GenerationError,
        stats.StatsError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except engine.SimulationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
