"""Evaluation protocols over precomputed distance matrices.

Four harnesses: stratified cross-validated k-NN domain classification,
k-medoids clustering (plus classical MDS coordinates for plotting),
an ablation sweep over metric configurations, and the turn-reordering
robustness probe. All are deterministic given their seeds; reports are
emitted as tabular text, JSON records, and (for clustering) CSV.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Conversation, Corpus
from .errors import DegenerateMatrix, InsufficientData
from .metric import (
    CONV_ED,
    SBERT_COSINE,
    TASKDIFF,
    DistanceMatrix,
    MetricConfig,
    _pair_distance,
    _profile_reps,
    _utterance_vectors,
    pairwise_matrix,
)


@dataclass
class EvalReport:
    protocol: str  # knn | cluster | ablation | reorder
    metric_name: str
    numbers: dict[str, float]
    per_item: list[dict] | None = None

    def __post_init__(self):
        for name, value in self.numbers.items():
            if name.endswith("accuracy") and not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} out of [0, 1]: {value}")
            if "avg_distance" in name and value < 0:
                raise ValueError(f"{name} negative: {value}")

    def to_text(self) -> str:
        width = max(len(k) for k in self.numbers) if self.numbers else 1
        lines = [f"protocol: {self.protocol}", f"metric: {self.metric_name}"]
        for k, v in self.numbers.items():
            lines.append(f"{k:<{width}}  {v:.6f}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> list[dict]:
        head = {"protocol": self.protocol, "metric": self.metric_name}
        rows = [dict(head, measure=k, value=v) for k, v in self.numbers.items()]
        for item in self.per_item or []:
            rows.append(dict(head, **item))
        return rows

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, ensure_ascii=False) for r in self.to_records()) + "\n"


# ---------------------------------------------------------------------------
# k-NN classification


def _stratified_folds(
    ids: tuple[str, ...], labels: dict[str, str], folds: int, seed: int
) -> list[list[int]]:
    by_class: dict[str, list[int]] = {}
    for idx, cid in enumerate(ids):
        by_class.setdefault(labels[cid], []).append(idx)
    rng = np.random.default_rng(seed)
    assignment: list[list[int]] = [[] for _ in range(folds)]
    for cls in sorted(by_class):
        members = by_class[cls]
        if len(members) < folds:
            raise InsufficientData(
                f"class '{cls}' has {len(members)} items, fewer than {folds} folds"
            )
        order = rng.permutation(len(members))
        for t, oi in enumerate(order):
            assignment[t % folds].append(members[oi])
    return assignment


def knn_classify(
    matrix: DistanceMatrix,
    labels: dict[str, str],
    k: int = 5,
    folds: int = 5,
    seed: int = 0,
) -> EvalReport:
    """Stratified leave-fold-out k-NN over a distance matrix.

    Majority vote among the k nearest training items; vote ties fall back
    to the single nearest neighbor's label.
    """
    if k < 1:
        raise InsufficientData(f"k must be >= 1, got {k}")
    if folds < 2:
        raise InsufficientData(f"folds must be >= 2, got {folds}")
    missing = [cid for cid in matrix.ids if cid not in labels]
    if missing:
        raise InsufficientData(f"unlabeled ids: {missing[:3]}")
    fold_members = _stratified_folds(matrix.ids, labels, folds, seed)
    n = len(matrix.ids)
    min_train = min(n - len(f) for f in fold_members)
    if k > min_train:
        raise InsufficientData(f"k={k} exceeds smallest training split ({min_train})")

    per_item: list[dict] = []
    fold_accuracy = []
    for f in range(folds):
        test = sorted(fold_members[f])
        train = np.array(sorted(set(range(n)) - set(test)), dtype=np.int64)
        correct = 0
        for idx in test:
            dists = matrix.values[idx, train]
            order = np.argsort(dists, kind="stable")
            top = train[order[:k]]
            votes: dict[str, int] = {}
            for t in top:
                lab = labels[matrix.ids[t]]
                votes[lab] = votes.get(lab, 0) + 1
            best = max(votes.values())
            winners = [lab for lab, c in votes.items() if c == best]
            if len(winners) == 1:
                predicted = winners[0]
            else:
                predicted = labels[matrix.ids[train[order[0]]]]
            truth = labels[matrix.ids[idx]]
            correct += int(predicted == truth)
            per_item.append(
                {"id": matrix.ids[idx], "fold": f, "predicted": predicted, "label": truth}
            )
        fold_accuracy.append(correct / len(test))
    return EvalReport(
        protocol="knn",
        metric_name="",
        numbers={
            "accuracy": float(np.mean(fold_accuracy)),
            **{f"fold{f}_accuracy": acc for f, acc in enumerate(fold_accuracy)},
        },
        per_item=per_item,
    )


# ---------------------------------------------------------------------------
# k-medoids clustering and classical MDS


def _assignment_cost(values: np.ndarray, medoids: np.ndarray):
    d = values[:, medoids]  # (n, k)
    nearest = np.argmin(d, axis=1)  # ties: lowest medoid position
    d1 = d[np.arange(values.shape[0]), nearest]
    return nearest, d1


def _kmedoids(values: np.ndarray, k: int, iterations: int, seed: int):
    n = values.shape[0]
    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    if k == n:
        return medoids, np.arange(n), np.zeros(n)
    nearest, d1 = _assignment_cost(values, medoids)
    for _ in range(iterations):
        # second-nearest medoid distance, needed to price medoid removal
        dmed = values[:, medoids]
        if k > 1:
            d2 = np.partition(dmed, 1, axis=1)[:, 1]
        else:
            d2 = np.full(values.shape[0], np.inf)
        best_delta = -1e-12
        best_swap = None
        in_medoids = np.zeros(n, dtype=bool)
        in_medoids[medoids] = True
        candidates = np.flatnonzero(~in_medoids)
        base = d1.sum()
        for mi in range(k):
            removed_mask = nearest == mi
            keep = np.where(removed_mask, d2, d1)
            for c in candidates:
                dc = values[:, c]
                new_cost = np.minimum(keep, dc).sum()
                delta = new_cost - base
                if delta < best_delta:
                    best_delta = delta
                    best_swap = (mi, c)
        if best_swap is None:
            break
        mi, c = best_swap
        medoids = np.sort(np.concatenate([np.delete(medoids, mi), [c]]))
        nearest, d1 = _assignment_cost(values, medoids)
    return medoids, nearest, d1


def mds_coordinates(values: np.ndarray, ndim: int = 2) -> np.ndarray:
    """Classical metric MDS from a symmetric distance matrix.

    Double-centers the squared distances, takes the top eigenvectors,
    and fixes each axis's sign by making its largest-magnitude component
    positive, so coordinates are deterministic.
    """
    n = values.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (values ** 2) @ J
    B = (B + B.T) / 2.0
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    coords = np.zeros((n, ndim))
    for axis in range(min(ndim, n)):
        lam = evals[order[axis]]
        if lam <= 0:
            break
        vec = evecs[:, order[axis]]
        flip = -1.0 if vec[np.argmax(np.abs(vec))] < 0 else 1.0
        coords[:, axis] = flip * vec * math.sqrt(lam)
    return coords


def cluster_purity(assignment: np.ndarray, truth: list[str]) -> float:
    n = len(truth)
    total = 0
    for c in np.unique(assignment):
        members = [truth[i] for i in np.flatnonzero(assignment == c)]
        counts: dict[str, int] = {}
        for lab in members:
            counts[lab] = counts.get(lab, 0) + 1
        total += max(counts.values())
    return total / n


def cluster(
    matrix: DistanceMatrix,
    labels: dict[str, str],
    k: int,
    iterations: int = 20,
    seed: int = 0,
) -> EvalReport:
    """k-medoids (PAM swap phase) plus 2D MDS coordinates for plotting."""
    n = len(matrix.ids)
    if not (1 <= k <= n):
        raise InsufficientData(f"k={k} outside [1, {n}]")
    if k > 1 and np.all(matrix.values == 0):
        raise DegenerateMatrix("all distances are zero; clusters are undefined")
    medoids, assignment, d1 = _kmedoids(matrix.values, k, iterations, seed)
    truth = [labels.get(cid, "") for cid in matrix.ids]
    coords = mds_coordinates(matrix.values, ndim=2)
    per_item = [
        {
            "id": matrix.ids[i],
            "cluster": int(assignment[i]),
            "domain": truth[i],
            "x": float(coords[i, 0]),
            "y": float(coords[i, 1]),
        }
        for i in range(n)
    ]
    return EvalReport(
        protocol="cluster",
        metric_name="",
        numbers={
            "purity": cluster_purity(assignment, truth),
            "avg_distance": float(d1.mean()),
            "k": float(k),
        },
        per_item=per_item,
    )


def cluster_csv(report: EvalReport) -> str:
    lines = ["id,x,y,cluster,domain"]
    for item in report.per_item or []:
        lines.append(
            f"{item['id']},{item['x']:.10g},{item['y']:.10g},"
            f"{item['cluster']},{item['domain']}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# ablation sweep


def table_preset(base: MetricConfig | None = None) -> list[tuple[str, str, MetricConfig]]:
    """The five standard ablation rows: cosine and utterance-only OT with
    and without masking, then the full metric."""
    base = base or MetricConfig()
    utt_only = {"gamma_intents": 0.0, "gamma_utterances": 1.0, "gamma_slots": 0.0}
    return [
        ("sbert", SBERT_COSINE, replace(base, masking_enabled=False)),
        ("sbert+masking", SBERT_COSINE, replace(base, masking_enabled=True)),
        ("sbert+ot", TASKDIFF, replace(base, masking_enabled=False, **utt_only)),
        ("sbert+ot+masking", TASKDIFF, replace(base, masking_enabled=True, **utt_only)),
        ("taskdiff", TASKDIFF, replace(base, masking_enabled=True)),
    ]


def sample_corpus(corpus: Corpus, size: int, seed: int) -> Corpus:
    if len(corpus) <= size:
        return corpus
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(corpus), size=size, replace=False))
    return Corpus(
        ontology=corpus.ontology,
        conversations=tuple(corpus.conversations[i] for i in chosen),
    )


def ablation_run(
    corpus: Corpus,
    embeddings,
    configs: list[tuple[str, str, MetricConfig]] | None = None,
    k: int = 5,
    seed: int = 0,
    folds: int = 5,
    sample_size: int = 200,
    jobs: int = 1,
) -> EvalReport:
    """k-NN accuracy per metric configuration on a seeded dialogue sample."""
    configs = configs or table_preset()
    if not configs:
        raise InsufficientData("no configurations to ablate")
    sub = sample_corpus(corpus, sample_size, seed)
    labels = sub.labels()
    numbers: dict[str, float] = {"n_dialogues": float(len(sub))}
    for name, metric, config in configs:
        matrix = pairwise_matrix(sub, embeddings, config, metric=metric, jobs=jobs)
        report = knn_classify(matrix, labels, k=k, folds=folds, seed=seed)
        numbers[name] = report.numbers["accuracy"]
    return EvalReport(
        protocol="ablation",
        metric_name=",".join(name for name, _, _ in configs),
        numbers=numbers,
    )


# ---------------------------------------------------------------------------
# reorder-perturbation robustness


def _derangement(rng: np.random.Generator, m: int) -> np.ndarray:
    while True:
        perm = rng.permutation(m)
        if not np.any(perm == np.arange(m)):
            return perm


def reorder_turns(
    conversation: Conversation, fraction: float, rng: np.random.Generator
) -> Conversation:
    """Move a random derangement of ceil(fraction * turns) whole turns.

    Turn payloads travel intact (utterance with its intents and slot
    fillings). Fewer than two selected turns leaves the conversation
    unperturbed.
    """
    n = len(conversation.turns)
    m = math.ceil(fraction * n)
    if m < 2:
        return conversation
    positions = np.sort(rng.choice(n, size=m, replace=False))
    perm = _derangement(rng, m)
    turns = list(conversation.turns)
    for t in range(m):
        turns[positions[t]] = conversation.turns[positions[perm[t]]]
    return replace(conversation, turns=tuple(turns))


def reorder_perturb(
    corpus: Corpus,
    fraction: float,
    seed: int,
    metrics: list[str],
    embeddings,
    config: MetricConfig | None = None,
) -> EvalReport:
    """Mean distance(original, reordered) per metric over the corpus."""
    if not (0.0 <= fraction <= 1.0):
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    config = config or MetricConfig()
    baseline_config = replace(config, masking_enabled=False)
    rng = np.random.default_rng(seed)
    perturbed = [reorder_turns(c, fraction, rng) for c in corpus.conversations]

    per_item: list[dict] = []
    sums = {name: 0.0 for name in metrics}
    for orig, pert in zip(corpus.conversations, perturbed):
        row: dict = {"id": orig.id}
        pair = Corpus(
            ontology=corpus.ontology,
            conversations=(orig, replace(pert, id=orig.id + "#reordered")),
        )
        for name in metrics:
            cfg = config if name == TASKDIFF else baseline_config
            if name == TASKDIFF:
                reps = _profile_reps(pair, embeddings, cfg)
            else:
                reps = [_utterance_vectors(c, embeddings, cfg) for c in pair.conversations]
            d = _pair_distance(name, reps, 0, 1, cfg)
            sums[name] += d
            row[name] = d
        per_item.append(row)
    n = len(corpus.conversations)
    numbers = {f"{name}_avg_distance": sums[name] / n for name in metrics}
    numbers["fraction"] = fraction
    return EvalReport(
        protocol="reorder",
        metric_name=",".join(metrics),
        numbers=numbers,
        per_item=per_item,
    )
