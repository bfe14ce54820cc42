"""Command-line entry point: ``blockbn <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as benchmod
from .compress import HAMMING, METHODS
from .dataio import (
    CODES,
    DataFormatError,
    NetworkValidationError,
    discretize,
    forward_sample,
    random_network,
    read_csv,
    read_network,
    write_dataset_csv,
    write_network,
)
from .graph import Dag, shd
from .infotheory import divergence_matrix, write_divergence_csv
from .pipeline import (
    AUTO,
    BlockConfig,
    BlockInfeasible,
    BlockModel,
    classic_document,
    document_dag,
    evaluate_imputation,
    fit_cpts,
    learn_block,
    learn_classic,
    read_document,
    separated_network,
    write_document,
)
from .search import SCORES, SearchConfig, format_trace, hill_climb
from .varcluster import agglomerate, format_clustering, recommend_threshold, threshold_grid

EXIT_ERROR = 1
EXIT_INFEASIBLE = 3


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_ERROR):
        self.kind, self.message, self.code = kind, message, code
        super().__init__(message)


def _threshold(value: str):
    if value == AUTO:
        return AUTO
    t = float(value)
    if not 0.0 <= t <= 1.0:
        raise argparse.ArgumentTypeError("threshold must be 'auto' or in [0, 1]")
    return t


def _load(args):
    schema = None
    if args.codes:
        header = Path(args.data).read_text(encoding="utf-8").splitlines()[0].split(",")
        schema = {h.strip(): CODES for h in header}
    data, _ = discretize(read_csv(args.data, schema), args.bins)
    return data


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--bins", type=int, default=5, help="equal-frequency bins for numeric columns")
    p.add_argument("--codes", action="store_true",
                   help="treat every column as integer category codes (as written by 'sample')")


def cmd_sample(args):
    net = read_network(args.network)
    write_dataset_csv(forward_sample(net, args.n, args.seed), args.out)


def cmd_make_network(args):
    net = random_network(args.nodes, args.seed, max_parents=args.max_parents,
                         arity=(args.min_arity, args.max_arity), n_modules=args.modules,
                         concentration=args.concentration)
    write_network(net, args.out)


def cmd_divergence(args):
    write_divergence_csv(divergence_matrix(_load(args), workers=args.workers), args.out)


def cmd_cluster(args):
    div = divergence_matrix(_load(args))
    if args.threshold == AUTO:
        _, clustering = recommend_threshold(div, threshold_grid(args.grid_step))
    else:
        clustering = agglomerate(div, args.threshold)
    text = format_clustering(clustering)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_learn(args):
    data = _load(args)
    search = SearchConfig(score=args.score, max_parents=args.max_parents, epsilon=args.epsilon)
    prov = {"score": args.score, "max_parents": args.max_parents, "seed": args.seed}
    if args.mode == "classic":
        if args.trace:
            dag, value, stats = hill_climb(data, data.names, search, trace=True)
            Path(args.trace).write_text(format_trace(stats), encoding="utf-8")
        else:
            dag, value, _ = learn_classic(data, search)
        doc = classic_document(data, dag, value, fit_cpts(dag, data, args.smoothing), prov)
        write_document(doc, args.out)
        return
    cfg = BlockConfig(threshold=args.threshold, grid_step=args.grid_step, compression=args.compression,
                      alpha=args.alpha, min_count=args.min_count, hamming_threshold=args.hamming_threshold,
                      search=search, smoothing=args.smoothing, workers=args.workers, seed=args.seed)
    model = learn_block(data, cfg)
    if isinstance(model, BlockInfeasible):
        report = {"status": model.status, "threshold": model.threshold, "clusters": model.clusters,
                  "detail": [r.describe() for r in model.reports]}
        write_document(report, args.out)
        raise CliError(model.status, model.describe(), EXIT_INFEASIBLE)
    write_document(model.to_document(include_timings=args.timings), args.out)


def cmd_shd(args):
    learned = document_dag(read_document(args.learned))
    net = read_network(args.truth)
    truth = Dag(net.names, net.edges)
    if set(learned.nodes) != set(truth.nodes):
        raise CliError("node_mismatch", "learned model and truth network have different variables")
    print(shd(learned, truth))


def cmd_impute_eval(args):
    doc = read_document(args.model)
    if doc.get("mode") != "block":
        raise CliError("bad_model", "impute-eval needs a block model document")
    model = BlockModel.from_document(doc)
    data = _load(args).subset(model.names)
    sep = separated_network(model, data, args.smoothing)
    report = evaluate_imputation(model, sep, data, workers=args.workers)
    text = json.dumps(report.to_dict(), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_bench(args):
    net = read_network(args.network)
    result = benchmod.run_bench(
        net, args.n, args.seed,
        scores=args.scores.split(","), compressions=args.compressions.split(","),
        grid_step=args.grid_step, dataset=args.dataset or Path(args.network).stem,
        max_parents=args.max_parents, parallel=args.parallel,
    )
    benchmod.write_report(result.rows, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockbn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="forward-sample a dataset from a network file")
    p.add_argument("--network", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("make-network", help="write a random synthetic network file")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--min-arity", type=int, default=2)
    p.add_argument("--max-arity", type=int, default=4)
    p.add_argument("--modules", type=int, default=None)
    p.add_argument("--concentration", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_network)

    p = sub.add_parser("divergence", help="pairwise 1 - NMI matrix as CSV")
    _add_data_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("cluster", help="agglomerative variable clustering")
    _add_data_args(p)
    p.add_argument("--threshold", type=_threshold, default=AUTO)
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("learn", help="learn a structure (classic or block)")
    _add_data_args(p)
    p.add_argument("--mode", choices=("classic", "block"), default="block")
    p.add_argument("--score", choices=SCORES, default="bic")
    p.add_argument("--threshold", type=_threshold, default=AUTO)
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--compression", choices=METHODS, default=HAMMING)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--hamming-threshold", type=float, default=0.95)
    p.add_argument("--max-parents", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="classic mode: write applied moves as iter,kind,parent,child,gain")
    p.add_argument("--timings", action="store_true", help="embed per-stage wall times (not reproducible)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("shd", help="structural Hamming distance to a ground-truth network")
    p.add_argument("--learned", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_shd)

    p = sub.add_parser("impute-eval", help="connected vs separated gap-recovery accuracy")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_impute_eval)

    p = sub.add_parser("bench", help="classic vs block sweep over the threshold grid")
    p.add_argument("--network", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scores", default="bic,mi")
    p.add_argument("--compressions", default="freq,hamming")
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--max-parents", type=int, default=4)
    p.add_argument("--parallel", type=int, default=1, help="concurrent block runs (timings contend)")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error kind={exc.kind} message={json.dumps(exc.message)}", file=sys.stderr)
        return exc.code
    except (DataFormatError, NetworkValidationError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error kind={type(exc).__name__} message={json.dumps(str(exc))}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
