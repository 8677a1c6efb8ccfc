"""Command-line front end: ``icasim run|batch|cache-sweep|report|lars-eval|validate``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .lars import LarsError, answer_stream_stratified, answer_streams_bruteforce, format_stream, parse_program, parse_stream
from .sim import MetricsReport, hit_distance, hit_ratio, run as simulate
from .workload import STRATEGIES, ConfigError, load_scenario

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("icasim")

EXIT_CONFIG = 2
EXIT_RUN = 1

SUMMARY_COLUMNS = [
    "scenario", "digest", "strategy", "seed", "horizon", "phase_starts", "requests", "hits",
    "hit_ratio", "hit_distance", "issued", "satisfied", "expired", "stray", "pit_expired",
]
RUN_ROW_COLUMNS = [
    "scenario", "digest", "strategy", "seed", "cache_chunks", "requests", "hits",
    "hit_ratio", "hit_distance", "expired", "hit_ratio_vs_random",
]
AGGREGATE_COLUMNS = [
    "scenario", "strategy", "cache_chunks", "runs",
    "hit_ratio_mean", "hit_ratio_q1", "hit_ratio_median", "hit_ratio_q3",
    "vs_random_mean", "vs_random_q1", "vs_random_median", "vs_random_q3",
    "hit_distance_mean",
]
DEFAULT_SWEEP = (0.1, 0.5, 1.0, 4.0, 10.0)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_csv(path: Path, columns: list, rows: list) -> None:
    """Write atomically: readers never see a half-written file."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    os.replace(tmp, path)


def parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, "expected key=value")
        out[key.strip()] = parse_value(value.strip())
    return out


def scenario_from_args(args, **extra):
    overrides = parse_sets(getattr(args, "set", None))
    if getattr(args, "program", None):
        overrides["program"] = str(Path(args.program).resolve())
    overrides.update({k: v for k, v in extra.items() if v is not None})
    return load_scenario(args.scenario, **overrides)


# -- per-run records -----------------------------------------------------------


def run_series(report: MetricsReport) -> tuple[list, list]:
    bounds = list(report.phase_starts)
    columns = ["t", "phase", "requests", "hits", "deliveries", "hit_ratio", "hit_distance", "active_downloads"]
    columns += [f"policy_{r}" for r in report.routers]
    rows = []
    phase = 0
    for t in range(report.horizon):
        while phase + 1 < len(bounds) and t >= bounds[phase + 1]:
            phase += 1
        row = {
            "t": t,
            "phase": phase,
            "requests": report.requests[t],
            "hits": report.hits[t],
            "deliveries": report.deliveries[t],
            "hit_ratio": report.hits[t] / report.requests[t] if report.requests[t] else 0.0,
            "hit_distance": report.distance_sum[t] / report.deliveries[t] if report.deliveries[t] else None,
            "active_downloads": report.active_downloads[t],
        }
        for r in report.routers:
            row[f"policy_{r}"] = report.policies[r][t]
        rows.append(row)
    return columns, rows


def summary_row(report: MetricsReport) -> dict:
    return {
        "scenario": report.scenario,
        "digest": report.digest,
        "strategy": report.strategy,
        "seed": report.seed,
        "horizon": report.horizon,
        "phase_starts": " ".join(map(str, report.phase_starts)),
        "requests": report.total_requests,
        "hits": report.total_hits,
        "hit_ratio": hit_ratio(report)[0],
        "hit_distance": hit_distance(report),
        "issued": report.issued,
        "satisfied": report.satisfied,
        "expired": report.expired,
        "stray": report.stray,
        "pit_expired": report.pit_expired,
    }


def policy_log_rows(report: MetricsReport) -> list:
    return [
        {"router": r, "ms": ms, "second": ms // 1000, "policy": p.value}
        for r in report.routers
        for ms, p in report.policy_log[r]
    ]


def write_run(report: MetricsReport, out: Path) -> None:
    columns, rows = run_series(report)
    write_csv(out / "run.csv", columns, rows)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summary_row(report)])
    write_csv(out / "policy_log.csv", ["router", "ms", "second", "policy"], policy_log_rows(report))


def cmd_run(args) -> int:
    cfg = scenario_from_args(args, strategy=args.strategy, seed=args.seed)
    report = simulate(cfg)
    out = Path(args.out)
    write_run(report, out)
    s = summary_row(report)
    print(f"{cfg.name} {cfg.strategy} seed={cfg.seed} digest={s['digest']} "
          f"hit_ratio={fmt(s['hit_ratio'])} hit_distance={fmt(s['hit_distance'])} -> {out}")
    return 0


# -- batches -------------------------------------------------------------------


def _run_cell(cfg) -> dict:
    report = simulate(cfg)
    return {
        "scenario": cfg.name,
        "digest": report.digest,
        "strategy": cfg.strategy,
        "seed": cfg.seed,
        "cache_chunks": cfg.cache_size,
        "requests": report.total_requests,
        "hits": report.total_hits,
        "hit_ratio": round(hit_ratio(report)[0], 6),
        "hit_distance": None if hit_distance(report) is None else round(hit_distance(report), 6),
        "expired": report.expired,
    }


def worker_count(requested: int | None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("CCNSIM_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("CCNSIM_THREADS", f"expected an integer, got {cap!r}") from None
    return max(1, n)


def execute(configs: list, jobs: int) -> tuple[list, Exception | None]:
    """Run every config; on the first failure return the rows finished so far."""
    rows, error = [], None
    if jobs <= 1:
        for cfg in configs:
            try:
                rows.append(_run_cell(cfg))
            except Exception as exc:  # noqa: BLE001 - reported to the caller
                error = exc
                break
        return rows, error
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_cell, cfg) for cfg in configs]
        for f in futures:
            try:
                rows.append(f.result())
            except Exception as exc:  # noqa: BLE001
                error = exc
                for g in futures:
                    g.cancel()
                break
    return rows, error


def normalize(rows: list) -> list:
    """Add hit_ratio_vs_random: percent of the Random run with equal scenario, cache and seed."""
    base = {
        (r["scenario"], r["cache_chunks"], r["seed"]): r["hit_ratio"]
        for r in rows
        if r["strategy"] == "random"
    }
    for r in rows:
        b = base.get((r["scenario"], r["cache_chunks"], r["seed"]))
        r["hit_ratio_vs_random"] = round(100.0 * r["hit_ratio"] / b, 6) if b else None
    return rows


def quartiles(values: list) -> tuple:
    if not values:
        return None, None, None
    if len(values) == 1:
        return values[0], values[0], values[0]
    q1, q2, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q1, q2, q3


def _num(v):
    if v is None or v == "":
        return None
    return float(v)


def aggregate(rows: list) -> list:
    """Per (scenario, strategy, cache) summary computed from run rows alone."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["strategy"], int(r["cache_chunks"])), []).append(r)
    out = []
    for (scenario, strategy, cache), rs in groups.items():
        hr = [_num(r["hit_ratio"]) for r in rs]
        rel = [v for v in (_num(r.get("hit_ratio_vs_random")) for r in rs) if v is not None]
        hd = [v for v in (_num(r["hit_distance"]) for r in rs) if v is not None]
        q = quartiles(hr)
        qr = quartiles(rel)
        out.append({
            "scenario": scenario,
            "strategy": strategy,
            "cache_chunks": cache,
            "runs": len(rs),
            "hit_ratio_mean": statistics.fmean(hr),
            "hit_ratio_q1": q[0],
            "hit_ratio_median": q[1],
            "hit_ratio_q3": q[2],
            "vs_random_mean": statistics.fmean(rel) if rel else None,
            "vs_random_q1": qr[0],
            "vs_random_median": qr[1],
            "vs_random_q3": qr[2],
            "hit_distance_mean": statistics.fmean(hd) if hd else None,
        })
    return out


def _strategies(text: str) -> list:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in STRATEGIES]
    if not names or bad:
        raise ConfigError("strategies", f"unknown strategy {', '.join(bad) or '(none)'}; expected {', '.join(STRATEGIES)}")
    return names


def _finish_batch(rows: list, error, out: Path, runs_name: str, agg_name: str) -> int:
    rows = normalize(rows)
    write_csv(out / runs_name, RUN_ROW_COLUMNS + (["cache_percent"] if rows and "cache_percent" in rows[0] else []), rows)
    if error is not None:
        print(f"error: batch aborted after {len(rows)} completed runs: {error}", file=sys.stderr)
        print(f"partial results kept in {out / runs_name}", file=sys.stderr)
        return EXIT_RUN
    write_csv(out / agg_name, AGGREGATE_COLUMNS, aggregate(rows))
    print(f"{len(rows)} runs -> {out / runs_name}, {out / agg_name}")
    return 0


def cmd_batch(args) -> int:
    if args.seeds < 1:
        raise ConfigError("seeds", "must be >= 1")
    strategies = _strategies(args.strategies)
    configs = []
    for name in args.scenario or ["lhl-desk"]:
        args.scenario = name
        for strategy in strategies:
            for seed in range(1, args.seeds + 1):
                configs.append(scenario_from_args(args, strategy=strategy, seed=seed))
    rows, error = execute(configs, worker_count(args.jobs))
    return _finish_batch(rows, error, Path(args.out), "runs.csv", "aggregate.csv")


def cmd_cache_sweep(args) -> int:
    if args.seeds < 1:
        raise ConfigError("seeds", "must be >= 1")
    try:
        percents = [float(p) for p in args.percentages.split(",") if p.strip()]
    except ValueError:
        raise ConfigError("percentages", f"expected comma-separated numbers, got {args.percentages!r}") from None
    if not percents:
        raise ConfigError("percentages", "at least one percentage is required")
    strategies = _strategies(args.strategies)
    configs = []
    for p in percents:
        for strategy in strategies:
            for seed in range(1, args.seeds + 1):
                configs.append(scenario_from_args(args, strategy=strategy, seed=seed, cache_percent=p))
    rows, error = execute(configs, worker_count(args.jobs))
    for cfg, r in zip(configs, rows):
        r["cache_percent"] = cfg.cache_percent
    return _finish_batch(rows, error, Path(args.out), "sweep.csv", "sweep_aggregate.csv")


# -- report --------------------------------------------------------------------


class ReportError(Exception):
    pass


def read_rows(path: Path) -> tuple[list, list]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"{path}: {exc.strerror}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header:
        raise ReportError(f"{path}: empty input")
    rows = []
    for lineno, values in enumerate(reader, 2):
        if not values:
            continue
        if len(values) != len(header):
            raise ReportError(f"{path}:{lineno}: expected {len(header)} fields, found {len(values)}")
        rows.append(dict(zip(header, values)))
    if not rows:
        raise ReportError(f"{path}: no data rows")
    return header, rows


def _floats(path: Path, rows: list, column: str, allow_blank: bool = False) -> list:
    out = []
    for lineno, r in enumerate(rows, 2):
        v = r[column]
        if v == "" and allow_blank:
            out.append(None)
            continue
        try:
            out.append(float(v))
        except ValueError:
            raise ReportError(f"{path}:{lineno}: column {column}: not a number: {v!r}") from None
    return out


def _plot_setup():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "icasim"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def report_batch(path: Path, header: list, rows: list, out: Path) -> tuple:
    for col in ("scenario", "strategy", "hit_ratio"):
        if col not in header:
            raise ReportError(f"{path}: missing column {col}")
    hr = _floats(path, rows, "hit_ratio")
    rel = _floats(path, rows, "hit_ratio_vs_random", allow_blank=True) if "hit_ratio_vs_random" in header else [None] * len(rows)
    by_scenario: dict = {}
    for r, h, v in zip(rows, hr, rel):
        by_scenario.setdefault(r["scenario"], {}).setdefault(r["strategy"], []).append((h, v))
    plt = _plot_setup()
    lines, files = [], []
    lines.append(f"{'scenario':<14} {'strategy':<8} {'runs':>4} {'median':>9} {'IQR':>9} {'vs random':>10}")
    for scenario, strat in by_scenario.items():
        names = [s for s in STRATEGIES if s in strat] + sorted(s for s in strat if s not in STRATEGIES)
        use_rel = all(v is not None for s in names for _, v in strat[s])
        data = [[v if use_rel else h for h, v in strat[s]] for s in names]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.boxplot(data)
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylabel("hit ratio relative to Random (%)" if use_rel else "hit ratio")
        ax.set_title(scenario)
        f = out / f"box_{scenario}.svg"
        _save(fig, f)
        plt.close(fig)
        files.append(f)
        for s in names:
            vals = [h for h, _ in strat[s]]
            q1, med, q3 = quartiles(vals)
            rels = [v for _, v in strat[s] if v is not None]
            rel_med = quartiles(rels)[1] if rels else None
            rel_txt = f"{rel_med:9.1f}%" if rel_med is not None else f"{'':>10}"
            lines.append(f"{scenario:<14} {s:<8} {len(vals):>4} {med:9.4f} {q3 - q1:9.4f} {rel_txt}")
    return lines, files


def report_run(path: Path, header: list, rows: list, out: Path) -> tuple:
    t = _floats(path, rows, "t")
    hits = _floats(path, rows, "hits")
    req = _floats(path, rows, "requests")
    phase = _floats(path, rows, "phase") if "phase" in header else [0] * len(rows)
    bounds = [t[i] for i in range(1, len(t)) if phase[i] != phase[i - 1]]
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(t, hits, linewidth=0.8, label="hits/s")
    for b in bounds:
        ax.axvline(b, color="black", linestyle="--", linewidth=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("cache hits per second")
    ax.legend(loc="upper right")
    f = out / f"hits_{path.parent.name or 'run'}.svg"
    _save(fig, f)
    plt.close(fig)
    total = sum(req)
    lines = [f"{path}: {int(total)} requests, hit ratio {sum(hits) / total if total else 0.0:.4f}, "
             f"phase boundaries at {', '.join(str(int(b)) for b in bounds) or 'none'}"]
    seconds = [h / r if r else 0.0 for h, r in zip(hits, req)]
    q1, med, q3 = quartiles(seconds)
    lines.append(f"per-second hit ratio: median {med:.4f}, IQR {q3 - q1:.4f}")
    return lines, [f]


def cmd_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text, files = [], []
    for name in args.inputs:
        path = Path(name)
        header, rows = read_rows(path)
        if "t" in header and "hits" in header:
            lines, fs = report_run(path, header, rows, out)
        elif "strategy" in header and "hit_ratio" in header:
            lines, fs = report_batch(path, header, rows, out)
        else:
            raise ReportError(f"{path}: unrecognized columns {', '.join(header)}")
        text += lines
        files += fs
    (out / "report.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
    print("\n".join(text))
    for f in files:
        print(f"wrote {f}")
    return 0


# -- LARS ----------------------------------------------------------------------


def cmd_lars_eval(args) -> int:
    program = parse_program(Path(args.program).read_text(encoding="utf-8"))
    stream = parse_stream(Path(args.stream).read_text(encoding="utf-8"))
    if args.oracle:
        answers = sorted(answer_streams_bruteforce(program, stream, args.t, budget=args.budget), key=format_stream)
        if not answers:
            print("% no answer stream")
            return EXIT_RUN
        for i, s in enumerate(answers):
            if len(answers) > 1:
                print(f"% answer {i + 1} of {len(answers)}")
            sys.stdout.write(format_stream(s))
        return 0
    sys.stdout.write(format_stream(answer_stream_stratified(program, stream, args.t)))
    return 0


def cmd_validate(args) -> int:
    cfg = scenario_from_args(args)
    if cfg.program:
        parse_program(Path(cfg.program).read_text(encoding="utf-8"))
    for _, p in cfg.program_swaps:
        parse_program(Path(p).read_text(encoding="utf-8"))
    if cfg.topology != "abilene":
        from .sim import build_fib, load_topology

        build_fib(load_topology(cfg.topology, cfg.link_delay_ms), cfg.producer_node)
    print(f"ok {cfg.name} digest={cfg.digest()} horizon={cfg.horizon}s cache={cfg.cache_size} chunks")
    return 0


# -- argument parsing ----------------------------------------------------------


def _scenario_opts(p, multiple: bool = False) -> None:
    if multiple:
        p.add_argument("--scenario", action="append", help="built-in name or TOML file (repeatable)")
    else:
        p.add_argument("--scenario", default="lhl-desk", help="built-in name or TOML file (default: lhl-desk)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario field")
    p.add_argument("--program", help="rules file replacing the default decision program")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icasim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _scenario_opts(p)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="all strategy/seed combinations")
    _scenario_opts(p, multiple=True)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--strategies", default="random,lfu,admin,ica")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("cache-sweep", help="hit ratio across cache sizes")
    _scenario_opts(p)
    p.add_argument("--percentages", default=",".join(str(x) for x in DEFAULT_SWEEP))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--strategies", default="lfu,random")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_cache_sweep)

    p = sub.add_parser("report", help="plots and summary table from CSV output")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("lars-eval", help="evaluate a rules file on a stream")
    p.add_argument("program")
    p.add_argument("stream")
    p.add_argument("--t", type=int, required=True, help="evaluation time point")
    p.add_argument("--oracle", action="store_true", help="use the brute-force answer stream search")
    p.add_argument("--budget", type=int, default=2**20)
    p.set_defaults(func=cmd_lars_eval)

    p = sub.add_parser("validate", help="check a scenario and its referenced files")
    _scenario_opts(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReportError, LarsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # malformed stream files and similar input errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
