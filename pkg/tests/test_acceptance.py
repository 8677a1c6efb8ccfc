"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line; the lines are
repeated in the pytest terminal summary. Criterion 7 runs the full 10-seed
desk batch and takes several minutes on one CPU.
"""

import csv
import math
import random
import statistics
import time

from icasim.agent import default_program, estimate_alpha
from icasim.cache import ContentStore, PolicyKind
from icasim.cli import main
from icasim.lars import (
    AtomNode,
    Box,
    Stream,
    Structure,
    Timeline,
    Window,
    answer_stream_stratified,
    answer_streams_bruteforce,
    atom,
    entails,
    window_time,
)
from icasim.workload import load_scenario, zipf_pmf, zipf_sample
from lars_oracle import random_case
from synthetic import converged
from test_cache import RefFIFO, RefLFU, RefLRU, random_ops, trace
from test_workload import chi_square_p


def read(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def means(rows, scenario, column):
    out = {}
    for s in ("random", "lfu", "admin", "ica"):
        vals = [float(r[column]) for r in rows if r["scenario"] == scenario and r["strategy"] == s]
        out[s] = statistics.fmean(vals)
    return out


def test_criterion_1_textbook_examples(verdict):
    start = time.perf_counter()
    rtm, high = atom("rtm50"), atom("high")
    w = window_time(Stream(Timeline(0, 1800), {42: {rtm}, 987: {rtm}}), 70, 30)
    window_ok = w.timeline == Timeline(40, 70) and dict(w.evaluation) == {42: frozenset({rtm})}

    s = Stream(Timeline(0, 1800), {t: {high} for t in range(600, 1201)})
    box = Window(30, Box(AtomNode(high)))
    entail_ok = entails(Structure(s), s, 750, box) and not entails(Structure(s), s, 610, box)

    d = Stream(Timeline(0, 1800), {t: {atom("alpha", 20)} for t in range(600, 1201)})
    fast = answer_stream_stratified(default_program(), d, 750)
    slow = answer_streams_bruteforce(default_program(), d, 750)
    chosen = {a for a in fast.at(750) if a.predicate in ("use", "done")}
    answer_ok = (
        slow == {fast}
        and chosen == {atom("use", "lfu"), atom("done")}
        and {t for t, a in fast.atoms() if a == high} == set(range(720, 751))
    )
    elapsed = time.perf_counter() - start
    ok = window_ok and entail_ok and answer_ok and elapsed < 1.0
    verdict(1, ok, f"window={window_ok} entailment={entail_ok} answer={answer_ok} in {elapsed:.2f}s (limit 1s)")


def test_criterion_2_solver_oracle(verdict):
    start = time.perf_counter()
    n, agree = 150, 0
    for seed in range(n):
        _, p, d, t = random_case(10_000 + seed)
        agree += answer_streams_bruteforce(p, d, t) == {answer_stream_stratified(p, d, t)}
    elapsed = time.perf_counter() - start
    verdict(2, agree == n and elapsed < 30, f"{agree}/{n} random stratified programs agree in {elapsed:.1f}s (limit 30s)")


def test_criterion_3_cache_oracles(verdict):
    start = time.perf_counter()
    mismatches = []
    for seed in (101, 102, 103):
        ops = random_ops(seed)
        unique = [(c, i) for i, (c, _) in enumerate(ops)]
        for policy, ref, trace_ops in (
            (PolicyKind.LRU, RefLRU, unique),
            (PolicyKind.FIFO, RefFIFO, unique),
            (PolicyKind.LFU, RefLFU, ops),
        ):
            if trace(ContentStore(17, policy), trace_ops) != trace(ref(17), trace_ops):
                mismatches.append(f"{policy.value}/{seed}")
        a = trace(ContentStore(17, PolicyKind.RANDOM, rng_seed=seed), ops)
        b = trace(ContentStore(17, PolicyKind.RANDOM, rng_seed=seed), ops)
        if a != b:
            mismatches.append(f"random/{seed}")
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 10
    verdict(3, ok, f"mismatches={mismatches or 'none'} over 10^4-op traces in {elapsed:.1f}s (limit 10s)")


def test_criterion_4_zipf(verdict):
    worst = max(
        abs(math.fsum(zipf_pmf(a, c, i) for i in range(1, c + 1)) - 1.0)
        for a in (0, 0.4, 1, 1.5, 2.5)
        for c in (2, 50, 1000)
    )
    pvalues = {a: chi_square_p(a, 50, 100_000, seed=77)[0] for a in (0, 2.5)}
    ok = worst <= 1e-12 and all(p > 0.01 for p in pvalues.values())
    detail = ", ".join(f"alpha={a}: p={p:.3f}" for a, p in pvalues.items())
    verdict(4, ok, f"max normalization error {worst:.1e}; chi-square {detail}")


def test_criterion_5_estimator_recovery(verdict):
    rates = {}
    for alpha in (0.4, 1.5, 2.5):
        good = 0
        for trial in range(100):
            rng = random.Random(f"c5:{alpha}:{trial}")
            counts: dict = {}
            for _ in range(10_000):
                k = zipf_sample(rng, alpha, 50)
                counts[k] = counts.get(k, 0) + 1
            good += abs(estimate_alpha(counts) / 10 - alpha) <= 0.15
        rates[alpha] = good
    ok = all(g >= 95 for g in rates.values())
    verdict(5, ok, "within 0.15: " + ", ".join(f"alpha={a}: {g}/100" for a, g in rates.items()))


def test_criterion_6_reaction_bound(verdict):
    failures = []
    for seed in range(100, 120):
        good, detail = converged(seed)
        if not good:
            failures.append(f"seed {seed}: {detail}")
    detail = f"{20 - len(failures)}/20 step scenarios settled by step + window + period"
    verdict(6, not failures, detail + "".join(f"; {f}" for f in failures[:2]))


def test_criterion_7_directional(verdict, tmp_path):
    start = time.perf_counter()
    argv = ["batch", "--scenario", "lhl-desk", "--scenario", "hlh-desk", "--seeds", "10", "--out", str(tmp_path)]
    assert main(argv) == 0
    elapsed = time.perf_counter() - start
    rows = read(tmp_path / "runs.csv")
    lhl, hlh = means(rows, "lhl-desk", "hit_ratio"), means(rows, "hlh-desk", "hit_ratio")
    dist = means(rows, "hlh-desk", "hit_distance")
    checks = {
        "lhl ica>=random": lhl["ica"] >= lhl["random"],
        "lhl ica>=lfu": lhl["ica"] >= lhl["lfu"],
        "lhl admin>=static": lhl["admin"] >= max(lhl["random"], lhl["lfu"]),
        "hlh ica>=admin-2pp": hlh["ica"] >= hlh["admin"] - 0.02,
        "hlh distance dynamic<=random": max(dist["admin"], dist["ica"]) <= dist["random"],
        "under 15 min": elapsed < 900,
    }
    failed = [k for k, v in checks.items() if not v]
    table = " ".join(f"{s}={lhl[s]:.4f}/{hlh[s]:.4f}" for s in lhl)
    verdict(
        7,
        not failed,
        f"hit ratio lhl/hlh {table}; hlh distance "
        + " ".join(f"{s}={d:.3f}" for s, d in dist.items())
        + f"; {elapsed:.0f}s; failed={failed or 'none'}",
    )


def test_criterion_8_cache_monotonicity(verdict, tmp_path):
    argv = ["cache-sweep", "--scenario", "lhl-desk", "--percentages", "0.1,0.5,1,4", "--seeds", "5",
            "--strategies", "lfu,random", "--out", str(tmp_path)]
    assert main(argv) == 0
    rows = read(tmp_path / "sweep.csv")
    curves, ok = {}, True
    for strategy in ("lfu", "random"):
        sizes = sorted({float(r["cache_percent"]) for r in rows})
        curve = [
            statistics.fmean(float(r["hit_ratio"]) for r in rows
                             if r["strategy"] == strategy and float(r["cache_percent"]) == p)
            for p in sizes
        ]
        curves[strategy] = curve
        ok = ok and all(a <= b for a, b in zip(curve, curve[1:]))
    detail = "; ".join(f"{s}: " + " ".join(f"{v:.4f}" for v in c) for s, c in curves.items())
    verdict(8, ok, f"mean hit ratio at 0.1/0.5/1/4% {detail}")


def test_criterion_9_admin_exactness(verdict, tmp_path):
    bad = []
    runs = 0
    for scenario in ("lhl-desk", "hlh-desk"):
        boundaries = {p[0] * 1000 for p in load_scenario(scenario).phases[1:]}
        for seed in (1, 2):
            out = tmp_path / f"{scenario}-{seed}"
            assert main(["run", "--scenario", scenario, "--strategy", "admin", "--seed", str(seed), "--out", str(out)]) == 0
            runs += 1
            switches = {int(r["ms"]) for r in read(out / "policy_log.csv") if int(r["ms"]) > 0}
            if switches != boundaries:
                bad.append(f"{scenario}/{seed}: {sorted(switches)}")
            series = read(out / "run.csv")
            cols = [c for c in series[0] if c.startswith("policy_")]
            for c in cols:
                changes = {int(series[t]["t"]) * 1000 for t in range(1, len(series)) if series[t][c] != series[t - 1][c]}
                if changes != boundaries:
                    bad.append(f"{scenario}/{seed}/{c}: {sorted(changes)}")
    verdict(9, not bad, f"{runs} admin runs, switches only at phase boundaries; violations={bad[:3] or 'none'}")


def test_criterion_10_determinism(verdict, tmp_path):
    differing = []
    for strategy in ("ica", "random"):
        for d in ("a", "b"):
            argv = ["run", "--scenario", "hlh-desk", "--strategy", strategy, "--seed", "7", "--out", str(tmp_path / strategy / d)]
            assert main(argv) == 0
        for name in ("run.csv", "summary.csv", "policy_log.csv"):
            if (tmp_path / strategy / "a" / name).read_bytes() != (tmp_path / strategy / "b" / name).read_bytes():
                differing.append(f"{strategy}/{name}")
    verdict(10, not differing, f"repeated runs byte-identical; differing={differing or 'none'}")
