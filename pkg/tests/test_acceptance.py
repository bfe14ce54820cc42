"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -s`` (the lines are printed
even without ``-s``).
"""
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

import oracles
from blockbn import bench
from blockbn.cli import main as cli_main
from blockbn.compress import HAMMING, MOST_FREQUENT, CombinationStats, Codebook, Infeasible, build_most_frequent_codebook
from blockbn.dataio import forward_sample, random_network, write_network
from blockbn.infotheory import divergence_matrix, entropy, mutual_information, nmi
from blockbn.pipeline import (
    BlockConfig,
    BlockInfeasible,
    FittedNetwork,
    evaluate_imputation,
    impute_one,
    learn_block,
    learn_classic,
    separated_network,
)
from blockbn.search import SearchConfig, hill_climb
from conftest import make_dataset

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail

    return emit


def rows_of(data):
    return [dict(zip(data.names, r)) for r in data.matrix().tolist()]


# 1 ---------------------------------------------------------------------------


def test_criterion_1_search_oracle(verdict):
    t0 = time.perf_counter()
    hits = total = above = 0
    for nodes, count in ((3, 50), (4, 20)):
        names = [f"X{i}" for i in range(nodes)]
        for seed in range(count):
            net = random_network(nodes, 1000 * nodes + seed, max_parents=2, edge_prob=0.6, arity=(2, 3))
            data = forward_sample(net, 200, seed)
            _, value, _ = hill_climb(data)
            best = oracles.best_bic(rows_of(data), dict(zip(data.names, data.arities)), names)
            total += 1
            hits += abs(value.total - best) <= 1e-9
            above += value.total > best + 1e-9
    elapsed = time.perf_counter() - t0
    ok = hits >= 0.8 * total and above == 0 and elapsed < 60
    verdict(1, ok, f"optimum reached {hits}/{total}, above oracle {above}, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------


def test_criterion_2_estimators(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    invariants = True
    for _ in range(100):
        n = int(rng.integers(1, 60))
        x, y = rng.integers(0, rng.integers(1, 5), n), rng.integers(0, rng.integers(1, 6), n)
        worst = max(
            worst,
            abs(entropy(x) - oracles.entropy(x.tolist())),
            abs(mutual_information(x, y) - oracles.mutual_information(x.tolist(), y.tolist())),
            abs(nmi(x, y) - min(1.0, max(0.0, oracles.nmi(x.tolist(), y.tolist())))),
        )
        p = int(rng.integers(1, 6))
        data = make_dataset({f"v{j}": rng.integers(0, 3, n) for j in range(p)}, {f"v{j}": 3 for j in range(p)})
        d = divergence_matrix(data).values
        invariants &= bool(
            np.array_equal(d, d.T) and np.all(np.diag(d) == 0) and np.all(d >= 0) and np.all(d <= 1)
        )
    verdict(2, worst <= 1e-12 and invariants, f"max abs error {worst:.2e}, matrix invariants {invariants}")


# 3 ---------------------------------------------------------------------------


def random_profile(rng):
    width = int(rng.integers(1, 5))
    k = int(rng.integers(1, 40))
    combos = sorted({tuple(int(v) for v in rng.integers(0, 3, width)) for _ in range(k)})
    weights = rng.zipf(1.6, len(combos)).astype(float)
    n = int(rng.integers(50, 3000))
    counts = rng.multinomial(n, weights / weights.sum())
    items = sorted(((c, int(m)) for c, m in zip(combos, counts) if m > 0), key=lambda kv: (-kv[1], kv[0]))
    return CombinationStats(tuple(c for c, _ in items), tuple(m for _, m in items), sum(m for _, m in items))


def test_criterion_3_most_frequent_codebook(verdict):
    rng = np.random.default_rng(3)
    boundary = coverage = counts_ok = True
    feasible = infeasible = 0
    target = 1 - Fraction(5, 100)
    for _ in range(100):
        stats = random_profile(rng)
        out = build_most_frequent_codebook(stats, 0.05, 5)
        l = out.l if isinstance(out, Infeasible) else out.n_codes
        cum = [sum(stats.counts[:i]) for i in range(len(stats.counts) + 1)]
        boundary &= Fraction(cum[l - 1], stats.n) < target <= Fraction(cum[l], stats.n)
        coverage &= cum[l] / stats.n >= 0.95
        if isinstance(out, Infeasible):
            infeasible += 1
            counts_ok &= any(m < 5 for m in stats.counts[:l]) and all(m < 5 for _, m in out.offending)
        else:
            feasible += 1
            counts_ok &= all(m >= 5 for m in out.counts[:l]) and isinstance(out, Codebook)
    ok = boundary and coverage and counts_ok
    verdict(3, ok, f"boundary {boundary}, coverage {coverage}, min-count {counts_ok} "
                   f"({feasible} feasible, {infeasible} flagged infeasible)")


# 4 ---------------------------------------------------------------------------


def test_criterion_4_structural_invariants(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    acyclic = counts = reduction = True
    runs = infeasible = reduced = 0
    for i in range(200):
        p = int(rng.integers(2, 11))
        net = random_network(p, 4000 + i, n_modules=int(rng.integers(1, 4)), concentration=float(rng.uniform(0.1, 1)))
        data = forward_sample(net, int(rng.integers(100, 800)), i)
        search = SearchConfig(score=str(rng.choice(["bic", "mi"])), max_parents=int(rng.integers(1, 5)))
        threshold = "auto" if rng.random() < 0.5 else float(rng.uniform(0, 1))
        cfg = BlockConfig(threshold=threshold, compression=str(rng.choice([MOST_FREQUENT, HAMMING])),
                          search=search, seed=i, fit=False)
        model = learn_block(data, cfg)
        runs += 1
        if isinstance(model, BlockInfeasible):
            infeasible += 1
        else:
            combined = model.combined
            acyclic &= len(combined.topological_order()) == len(combined.nodes)
            counts &= len(combined.nodes) == p + 2 * len(model.codebooks)
        single = learn_block(data, BlockConfig(threshold=0.0, search=search, fit=False))
        if single.clustering.n_clusters == p:
            reduced += 1
            reduction &= single.combined == learn_classic(data, search)[0]
    elapsed = time.perf_counter() - t0
    ok = acyclic and counts and reduction and reduced >= 190 and elapsed < 120
    verdict(4, ok, f"{runs} runs ({infeasible} infeasible): acyclic {acyclic}, node count {counts}, "
                   f"reduction law {reduction} ({reduced} all-singleton runs), {elapsed:.1f}s")


# 5 ---------------------------------------------------------------------------


def test_criterion_5_speedup(verdict):
    # wall-clock timings are noisy, so each one is the median of three
    # repetitions on the same sample
    t0 = time.perf_counter()
    net = random_network(70, 5)
    data = forward_sample(net, 3000, 5)
    results = [bench.run_bench(net, 3000, 5, dataset="synthetic70", data=data) for _ in range(3)]
    checks, lines = [], []
    for score in ("bic", "mi"):
        classic_ms = statistics.median(r.select(score, status="classic")[0].elapsed_classic_ms for r in results)
        for comp in (MOST_FREQUENT, HAMMING):
            recs = [r.recommended(score, comp) for r in results]
            means = [r.grid_mean_ms(score, comp) for r in results]
            if any(rec is None or rec.status != "ok" for rec in recs) or None in means:
                lines.append(f"{score}/{comp} recommended run not ok")
                checks.append(False)
                continue
            rec_ms = statistics.median(rec.elapsed_block_ms for rec in recs)
            mean_ms = statistics.median(means)
            ratio = rec_ms / classic_ms - 1
            checks.append(ratio < 0 and rec_ms <= mean_ms)
            lines.append(f"{score}/{comp} t={recs[0].threshold} ratio {ratio:+.3f} "
                         f"rec {rec_ms:.0f}ms vs grid mean {mean_ms:.0f}ms")
    elapsed = time.perf_counter() - t0
    verdict(5, all(checks) and elapsed < 900, "; ".join(lines) + f"; {elapsed:.0f}s")


# 6 ---------------------------------------------------------------------------


def test_criterion_6_structure_quality(verdict):
    t0 = time.perf_counter()
    medians, lines = {}, []
    for p in (15, 24):
        ratios = {MOST_FREQUENT: [], HAMMING: []}
        for seed in range(5):
            net = random_network(p, 600 + 10 * p + seed)
            result = bench.run_bench(net, 4500, seed, scores=["bic"], dataset=f"synthetic{p}")
            for comp in ratios:
                rec = result.recommended("bic", comp)
                ok_row = rec is not None and rec.status == "ok" and rec.shd_ratio is not None
                ratios[comp].append(rec.shd_ratio if ok_row else math.nan)
        for comp, vals in ratios.items():
            finite = [v for v in vals if not math.isnan(v)]
            med = statistics.median(finite) if finite else math.nan
            medians[(p, comp)] = med
            lines.append(f"p={p} {comp} median {med:+.3f} [{', '.join(f'{v:+.2f}' for v in vals)}]")
    elapsed = time.perf_counter() - t0
    ok = all(m <= 0.25 for m in medians.values()) and elapsed < 600
    verdict(6, ok, "; ".join(lines) + f"; {elapsed:.0f}s")


# 7 ---------------------------------------------------------------------------


def test_criterion_7_imputation(verdict):
    agree = total = 0
    for seed in range(30):
        # 3 binary nodes or 2 nodes of arity up to 3: at most 9 joint states
        size, arity = (3, (2, 2)) if seed % 2 else (2, (2, 3))
        net = random_network(size, 700 + seed, max_parents=2, edge_prob=0.7, arity=arity, concentration=1.0)
        nodes, parents, cpt, ar = oracles.network_tables(net)
        assert math.prod(ar.values()) <= 12
        fitted = FittedNetwork.from_ground_truth(net)
        rng = np.random.default_rng(seed)
        for _ in range(100):
            row = {v: int(rng.integers(0, ar[v])) for v in nodes}
            target = nodes[int(rng.integers(0, len(nodes)))]
            total += 1
            agree += impute_one(fitted, row, target) == oracles.posterior_argmax(nodes, parents, cpt, ar, row, target)

    net = random_network(25, 77, n_modules=5, concentration=0.3)
    data = forward_sample(net, 3000, 7)
    reports = []
    for workers in (1, 1, 4):
        model = learn_block(data, BlockConfig(seed=7, workers=workers))
        reports.append(evaluate_imputation(model, separated_network(model, data), data, workers=workers))
    ratio = reports[0].ratio
    deterministic = all(r.to_dict() == reports[0].to_dict() for r in reports)
    finite = ratio is not None and math.isfinite(ratio)
    ok = finite and deterministic and agree == total
    verdict(7, ok, f"ratio {ratio if ratio is None else f'{ratio:+.4f}'} "
                   f"(connected {reports[0].overall_connected:.4f}, separated {reports[0].overall_separated:.4f}), "
                   f"oracle agreement {agree}/{total}, deterministic {deterministic}")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_determinism(verdict, tmp_path, capsys):
    net = random_network(12, 8, n_modules=3, concentration=0.3)
    write_network(net, tmp_path / "net.json")
    data_args = ["--codes", "--data", str(tmp_path / "d.csv")]
    commands = {
        "sample": ["sample", "--network", str(tmp_path / "net.json"), "--n", "1500", "--seed", "8"],
        "divergence": ["divergence", *data_args],
        "cluster": ["cluster", *data_args],
    }
    for score in ("bic", "mi"):
        commands[f"classic-{score}"] = ["learn", "--mode", "classic", "--score", score, *data_args]
        for comp in (MOST_FREQUENT, HAMMING):
            commands[f"block-{score}-{comp}"] = ["learn", "--score", score, "--compression", comp,
                                                  "--min-count", "1", "--seed", "8", *data_args]
    outputs = {}
    same = True
    failures = []
    for rep, workers in enumerate((1, 1, 4)):
        for name, argv in commands.items():
            out = tmp_path / f"{name}.{rep}"
            argv = [*argv, "--out", str(out)]
            if name in ("divergence",) or name.startswith("block"):
                argv += ["--workers", str(workers)]
            code = cli_main(argv)
            if code != 0:
                failures.append(f"{name} exit {code}")
                continue
            if name == "sample" and rep == 0:
                (tmp_path / "d.csv").write_bytes(out.read_bytes())
            blob = out.read_bytes()
            same &= outputs.setdefault(name, blob) == blob
        model = tmp_path / f"block-bic-{HAMMING}.{rep}"
        out = tmp_path / f"impute.{rep}"
        code = cli_main(["impute-eval", *data_args, "--model", str(model), "--workers", str(workers), "--out", str(out)])
        if code != 0:
            failures.append(f"impute-eval exit {code}")
        else:
            same &= outputs.setdefault("impute-eval", out.read_bytes()) == out.read_bytes()
    capsys.readouterr()
    ok = same and not failures
    verdict(8, ok, f"{len(outputs)} commands x 3 runs (workers 1, 1, 4) bit-identical: {same}"
                   + (f"; failures {failures}" if failures else ""))
