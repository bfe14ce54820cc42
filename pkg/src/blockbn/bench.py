"""Classic vs block Hill-Climbing: time and SHD ratios over a threshold grid."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

from .compress import HAMMING, MOST_FREQUENT
from .dataio import DiscreteDataset, GroundTruthNetwork, forward_sample
from .graph import Dag, shd
from .pipeline import AUTO, BlockConfig, BlockInfeasible, learn_block, learn_classic
from .search import BIC, MI, SearchConfig
from .varcluster import threshold_grid

log = logging.getLogger(__name__)

HEADER = (
    "dataset,p,n,score,compression,threshold,recommended,elapsed_block_ms,"
    "elapsed_classic_ms,time_ratio,shd_block,shd_classic,shd_ratio,status"
).split(",")

OK, INFEASIBLE, CLASSIC, SUMMARY, FAILED = "ok", "compression_infeasible", "classic", "summary", "failed"


@dataclass
class BenchRow:
    dataset: str
    p: int
    n: int
    score: str
    compression: str
    threshold: float | str
    recommended: bool
    elapsed_block_ms: float | None
    elapsed_classic_ms: float
    time_ratio: float | None
    shd_block: float | None
    shd_classic: int
    shd_ratio: float | None
    status: str


def ratio_minus_one(value: float | None, baseline: float) -> float | None:
    if value is None or baseline == 0:
        return None
    return value / baseline - 1.0


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def write_report(rows: Sequence[BenchRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[h]) for h in HEADER])


def read_report(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


@dataclass
class BenchResult:
    rows: list[BenchRow]

    def select(self, score: str, compression: str | None = None, status: str | None = OK) -> list[BenchRow]:
        return [
            r
            for r in self.rows
            if r.score == score
            and (compression is None or r.compression == compression)
            and (status is None or r.status == status)
        ]

    def recommended(self, score: str, compression: str) -> BenchRow | None:
        rows = [r for r in self.select(score, compression, status=None) if r.recommended]
        return rows[0] if rows else None

    def grid_mean_ms(self, score: str, compression: str) -> float | None:
        times = [r.elapsed_block_ms for r in self.select(score, compression) if not r.recommended]
        return sum(times) / len(times) if times else None


def run_bench(
    truth: GroundTruthNetwork,
    n: int,
    seed: int,
    scores: Sequence[str] = (BIC, MI),
    compressions: Sequence[str] = (MOST_FREQUENT, HAMMING),
    grid_step: float = 0.1,
    dataset: str = "network",
    max_parents: int = 4,
    parallel: int = 1,
    data: DiscreteDataset | None = None,
) -> BenchResult:
    """Sample once, then run classic and every block configuration on that sample."""
    data = data if data is not None else forward_sample(truth, n, seed)
    truth_dag = Dag(truth.names, truth.edges)
    grid = threshold_grid(grid_step)
    rows: list[BenchRow] = []
    status_ok = OK if parallel <= 1 else "ok_parallel_timing"
    base = dict(dataset=dataset, p=data.n_vars, n=data.n_rows)

    for score in scores:
        search = SearchConfig(score=score, max_parents=max_parents)
        dag, _, elapsed = learn_classic(data, search)
        classic_ms = elapsed * 1000.0
        shd_classic = shd(dag, truth_dag)
        log.info("classic %s: %.1f ms, shd %d", score, classic_ms, shd_classic)
        rows.append(
            BenchRow(
                **base, score=score, compression="none", threshold="", recommended=False,
                elapsed_block_ms=classic_ms, elapsed_classic_ms=classic_ms,
                time_ratio=ratio_minus_one(classic_ms, classic_ms), shd_block=shd_classic,
                shd_classic=shd_classic, shd_ratio=ratio_minus_one(shd_classic, shd_classic),
                status=CLASSIC,
            )
        )
        for comp in compressions:
            jobs = [(t, False) for t in grid] + [(AUTO, True)]

            def run(job):
                threshold, rec = job
                cfg = BlockConfig(threshold=threshold, grid_step=grid_step, compression=comp,
                                  search=search, seed=seed, fit=False)
                try:
                    model = learn_block(data, cfg)
                except Exception as exc:  # recorded, the sweep goes on
                    log.exception("block run failed")
                    return BenchRow(**base, score=score, compression=comp, threshold=threshold,
                                    recommended=rec, elapsed_block_ms=None, elapsed_classic_ms=classic_ms,
                                    time_ratio=None, shd_block=None, shd_classic=shd_classic,
                                    shd_ratio=None, status=f"{FAILED}:{type(exc).__name__}")
                if isinstance(model, BlockInfeasible):
                    return BenchRow(**base, score=score, compression=comp, threshold=model.threshold,
                                    recommended=rec, elapsed_block_ms=None, elapsed_classic_ms=classic_ms,
                                    time_ratio=None, shd_block=None, shd_classic=shd_classic,
                                    shd_ratio=None, status=INFEASIBLE)
                ms = model.structure_ms
                s = shd(model.original_dag(), truth_dag)
                return BenchRow(**base, score=score, compression=comp,
                                threshold=model.provenance["threshold"], recommended=rec,
                                elapsed_block_ms=ms, elapsed_classic_ms=classic_ms,
                                time_ratio=ratio_minus_one(ms, classic_ms), shd_block=s,
                                shd_classic=shd_classic, shd_ratio=ratio_minus_one(s, shd_classic),
                                status=status_ok)

            if parallel > 1:
                with ThreadPoolExecutor(parallel) as ex:
                    block_rows = list(ex.map(run, jobs))
            else:
                block_rows = [run(j) for j in jobs]
            rows.extend(block_rows)
            grid_ok = [r for r in block_rows if not r.recommended and r.status == status_ok]
            if grid_ok:
                mean_ms = sum(r.elapsed_block_ms for r in grid_ok) / len(grid_ok)
                mean_shd = sum(r.shd_block for r in grid_ok) / len(grid_ok)
                rows.append(
                    BenchRow(**base, score=score, compression=comp, threshold="grid_mean",
                             recommended=False, elapsed_block_ms=mean_ms, elapsed_classic_ms=classic_ms,
                             time_ratio=ratio_minus_one(mean_ms, classic_ms), shd_block=mean_shd,
                             shd_classic=shd_classic, shd_ratio=ratio_minus_one(mean_shd, shd_classic),
                             status=SUMMARY)
                )
    return BenchResult(rows)
