"""Command-line interface.

Workflow is two-phase: `keys` emits the texts an offline encoder must
embed, a separate exporter tool writes the EMBV1 file, and the compute
subcommands consume it. For experiments without a neural encoder,
--embeddings accepts the literal scheme ``hash:<dim>:<seed>`` selecting
the deterministic bag-of-tokens test embedder.

Exit codes: 0 success, 2 usage, 3 data errors, 4 numerical failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .corpus import Corpus, load_corpus
from .distributions import build_profile
from .embedding import (
    EmbeddingKey,
    HashEmbedder,
    KeyKind,
    load_embeddings,
    merge_embedding_sets,
)
from .errors import NumericalFailure, TaskDiffError
from .evaluate import (
    EvalReport,
    ablation_run,
    cluster,
    cluster_csv,
    knn_classify,
    reorder_perturb,
)
from .masking import mask_turn
from .metric import (
    MetricConfig,
    SinkhornParams,
    component_distances,
    load_distance_matrix,
    pairwise_matrix,
    save_distance_matrix,
)


def _metric_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma-intents", type=float, default=2.0)
    p.add_argument("--gamma-utterances", type=float, default=1.0)
    p.add_argument("--gamma-slots", type=float, default=1.0)
    p.add_argument("--mask", action=argparse.BooleanOptionalAction, default=True,
                   help="replace slot values with <slot_name> before embedding lookups")
    p.add_argument("--include-system", action=argparse.BooleanOptionalAction,
                   default=True, help="system turns contribute utterance mass")
    p.add_argument("--solver", choices=["exact", "sinkhorn"], default="exact")
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="sinkhorn regularization strength")
    p.add_argument("--sinkhorn-max-iters", type=int, default=10000)
    p.add_argument("--sinkhorn-tol", type=float, default=1e-8)
    p.add_argument("--empty-policy", choices=["skip", "max_penalty"], default="skip",
                   help="scoring of components empty on one side")
    p.add_argument("--empty-penalty", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for pairwise computation")


def _io_flags(p: argparse.ArgumentParser, embeddings: bool = True) -> None:
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--format", choices=["canonical", "sgd"], default="canonical")
    if embeddings:
        p.add_argument("--embeddings", action="append", required=True,
                       help="EMBV1 file (repeatable; sets are merged) or hash:<dim>:<seed>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskdiff",
        description="Optimal-transport similarity for task-oriented conversations. "
                    "Reported values are distances: 0 means identical.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keys", help="emit the embedding keys a corpus needs")
    _io_flags(p, embeddings=False)
    p.add_argument("--mask", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--include-system", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keys)

    p = sub.add_parser("profile", help="dump one conversation's three distributions")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("dist", help="distance between two conversations, with breakdown")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--id1", required=True)
    p.add_argument("--id2", required=True)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("matrix", help="pairwise distance matrix to a DMATV1 file")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--metric", choices=["taskdiff", "sbert", "conved"], default="taskdiff")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("knn", help="k-NN domain classification")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--metric", choices=["taskdiff", "sbert", "conved"], default="taskdiff")
    p.add_argument("--matrix", help="reuse a precomputed DMATV1 file")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("cluster", help="k-medoids clustering with MDS coordinates")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--metric", choices=["taskdiff", "sbert", "conved"], default="taskdiff")
    p.add_argument("--matrix", help="reuse a precomputed DMATV1 file")
    p.add_argument("--k", type=int, default=0,
                   help="cluster count; 0 means the number of distinct domains")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("ablate", help="k-NN accuracy per metric configuration")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--sample-size", type=int, default=200)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("perturb", help="robustness to turn reordering")
    _io_flags(p)
    _metric_flags(p)
    p.add_argument("--fraction", type=float, default=0.3)
    p.add_argument("--metrics", default="taskdiff,sbert,conved",
                   help="comma-separated metric names")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_perturb)

    return parser


def _config(args) -> MetricConfig:
    return MetricConfig(
        gamma_intents=args.gamma_intents,
        gamma_utterances=args.gamma_utterances,
        gamma_slots=args.gamma_slots,
        masking_enabled=args.mask,
        include_system=args.include_system,
        solver=args.solver,
        sinkhorn=SinkhornParams(
            epsilon=args.epsilon,
            max_iters=args.sinkhorn_max_iters,
            tol=args.sinkhorn_tol,
        ),
        empty_component_policy=args.empty_policy,
        empty_component_penalty=args.empty_penalty,
    )


def _embeddings(args):
    specs = args.embeddings
    hash_specs = [s for s in specs if s.startswith("hash:")]
    if hash_specs:
        if len(specs) > 1:
            raise TaskDiffError("hash:<dim>:<seed> cannot be combined with files")
        _, dim, seed = hash_specs[0].split(":")
        return HashEmbedder(dim=int(dim), seed=int(seed))
    return merge_embedding_sets([load_embeddings(p) for p in specs])


def _manifest(args, path: Path, command: str, config: MetricConfig | None) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "inputs": {
            "corpus": args.corpus,
            "format": args.format,
            "embeddings": getattr(args, "embeddings", None),
            "matrix": getattr(args, "matrix", None),
        },
        "config": asdict(config) if config else None,
        "seed": getattr(args, "seed", None),
        "params": {
            k: getattr(args, k)
            for k in ("metric", "k", "folds", "iterations", "fraction",
                      "sample_size", "metrics", "jobs", "mask", "include_system")
            if hasattr(args, k)
        },
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _collect_keys(corpus: Corpus, mask: bool, include_system: bool) -> list[str]:
    keys: list[str] = []
    seen: set[str] = set()
    for conv in corpus.conversations:
        for turn in conv.turns:
            if not include_system and turn.speaker.value != "user":
                continue
            text = mask_turn(turn).text if mask else turn.utterance
            k = EmbeddingKey(KeyKind.UTTERANCE, text).encoded()
            if k not in seen:
                seen.add(k)
                keys.append(k)
    used_intents: set[str] = set()
    used_slots: set[str] = set()
    for conv in corpus.conversations:
        for turn in conv.turns:
            used_intents.update(turn.active_intents)
            used_slots.update(f.slot_name for f in turn.slot_fillings)
    for name in corpus.ontology.intents:
        if name in used_intents:
            keys.append(EmbeddingKey(KeyKind.INTENT_NAME, name).encoded())
    for name in corpus.ontology.slots:
        if name in used_slots:
            keys.append(EmbeddingKey(KeyKind.SLOT_NAME, name).encoded())
    return keys


def cmd_keys(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    keys = _collect_keys(corpus, args.mask, args.include_system)
    out = Path(args.out)
    out.write_text("\n".join(keys) + "\n", encoding="utf-8")
    _manifest(args, out.with_suffix(out.suffix + ".manifest.json"), "keys", None)
    print(f"{len(keys)} keys -> {args.out}")
    return 0


def cmd_profile(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    profile = build_profile(
        corpus.get(args.id),
        _embeddings(args),
        include_system=config.include_system,
        mask=config.masking_enabled,
        allow_empty=True,
    )
    dump = {"conversation_id": profile.conversation_id}
    for name in ("utterances", "intents", "slots"):
        dist = getattr(profile, name)
        dump[name] = (
            None
            if dist is None
            else {"labels": list(dist.labels), "weights": [float(w) for w in dist.weights]}
        )
    print(json.dumps(dump, ensure_ascii=False, indent=2))
    return 0


def cmd_dist(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    embeddings = _embeddings(args)
    profiles = [
        build_profile(corpus.get(cid), embeddings,
                      include_system=config.include_system,
                      mask=config.masking_enabled, allow_empty=True)
        for cid in (args.id1, args.id2)
    ]
    terms = component_distances(profiles[0], profiles[1], config)
    total = 0.0
    gammas = {
        "utterances": config.gamma_utterances,
        "intents": config.gamma_intents,
        "slots": config.gamma_slots,
    }
    for name in ("utterances", "intents", "slots"):
        term = terms[name]
        if term is None:
            print(f"{name:<10}  skipped (empty on one side)")
        else:
            contribution = gammas[name] * term
            total += contribution
            print(f"{name:<10}  w1={term:.6f}  gamma={gammas[name]:g}  "
                  f"term={contribution:.6f}")
    print(f"taskdiff {total:.6f}")
    return 0


def cmd_matrix(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    matrix = pairwise_matrix(corpus, _embeddings(args), config,
                             metric=args.metric, jobs=args.jobs)
    out = Path(args.out)
    save_distance_matrix(matrix, out)
    _manifest(args, out.with_suffix(out.suffix + ".manifest.json"), "matrix", config)
    print(f"{len(matrix.ids)}x{len(matrix.ids)} matrix -> {out}")
    return 0


def _matrix_for(args, corpus: Corpus, config: MetricConfig):
    if getattr(args, "matrix", None):
        return load_distance_matrix(args.matrix)
    return pairwise_matrix(corpus, _embeddings(args), config,
                           metric=args.metric, jobs=args.jobs)


def _write_report(args, report: EvalReport, out_dir: Path,
                  config: MetricConfig | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    _manifest(args, out_dir / "manifest.json", report.protocol, config)


def cmd_knn(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    matrix = _matrix_for(args, corpus, config)
    report = knn_classify(matrix, corpus.labels(), k=args.k, folds=args.folds,
                          seed=args.seed)
    report.metric_name = args.metric
    out_dir = Path(args.out_dir)
    _write_report(args, report, out_dir, config)
    if args.figures:
        from .plotting import render_bar_figure

        folds = {k: v for k, v in report.numbers.items() if k.startswith("fold")}
        render_bar_figure(folds, out_dir / "accuracy.png",
                          f"{args.metric} k-NN (mean {report.numbers['accuracy']:.3f})",
                          "accuracy")
    print(f"accuracy {report.numbers['accuracy']:.4f}")
    return 0


def cmd_cluster(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    labels = corpus.labels()
    matrix = _matrix_for(args, corpus, config)
    k = args.k if args.k > 0 else len(set(labels.values()))
    report = cluster(matrix, labels, k=k, iterations=args.iterations, seed=args.seed)
    report.metric_name = args.metric
    out_dir = Path(args.out_dir)
    _write_report(args, report, out_dir, config)
    (out_dir / "clusters.csv").write_text(cluster_csv(report), encoding="utf-8")
    if args.figures:
        from .plotting import render_cluster_figure

        render_cluster_figure(report, out_dir / "clusters.png")
    print(f"purity {report.numbers['purity']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    report = ablation_run(corpus, _embeddings(args), k=args.k, seed=args.seed,
                          folds=args.folds, sample_size=args.sample_size,
                          jobs=args.jobs)
    out_dir = Path(args.out_dir)
    _write_report(args, report, out_dir, config)
    if args.figures:
        from .plotting import render_bar_figure

        rows = {k: v for k, v in report.numbers.items() if k != "n_dialogues"}
        render_bar_figure(rows, out_dir / "ablation.png",
                          "k-NN accuracy by configuration", "accuracy")
    for k, v in report.numbers.items():
        print(f"{k} {v:.4f}")
    return 0


def cmd_perturb(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    config = _config(args)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    report = reorder_perturb(corpus, args.fraction, args.seed, metrics,
                             _embeddings(args), config)
    out_dir = Path(args.out_dir)
    _write_report(args, report, out_dir, config)
    if args.figures:
        from .plotting import render_bar_figure

        rows = {k: v for k, v in report.numbers.items() if k.endswith("avg_distance")}
        render_bar_figure(rows, out_dir / "perturb.png",
                          f"mean distance after reordering {args.fraction:.0%} of turns",
                          "avg distance")
    for name in metrics:
        print(f"{name} avg_distance {report.numbers[f'{name}_avg_distance']:.6f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as e:
        _report_error(e)
        return 4
    except (TaskDiffError, KeyError, FileNotFoundError) as e:
        _report_error(e)
        return 3


def _report_error(e: Exception) -> None:
    record = {"error": type(e).__name__, "message": str(e)}
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
