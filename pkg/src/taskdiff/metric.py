"""The conversation distance: weighted per-component W1 terms.

A pair of conversations is scored as

    sum_k  gamma_k * W1(component_k of one, component_k of the other)

over the utterance, intent, and slot distributions. Defaults follow the
tuned weighting (intents 2, utterances 1, slots 1). Also here: the two
baselines (mean-embedding cosine and embedding edit distance) and the
pairwise distance-matrix harness with its on-disk format.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Conversation, Corpus, Speaker
from .distributions import ComponentKind, ConversationProfile, build_profile
from .embedding import EmbeddingKey, KeyKind, lookup
from .errors import MissingEmbedding, NumericalFailure, ParseError
from .masking import mask_turn
from .ot import cost_matrix, wasserstein1_exact, wasserstein1_sinkhorn

DMAT_MAGIC = "DMATV1"

EXACT = "exact"
SINKHORN = "sinkhorn"
SKIP = "skip"
MAX_PENALTY = "max_penalty"

TASKDIFF = "taskdiff"
SBERT_COSINE = "sbert"
CONV_ED = "conved"
BASELINES = (SBERT_COSINE, CONV_ED)
METRICS = (TASKDIFF,) + BASELINES

_COMPONENTS = (ComponentKind.UTTERANCES, ComponentKind.INTENTS, ComponentKind.SLOTS)


@dataclass(frozen=True)
class SinkhornParams:
    epsilon: float = 0.01
    max_iters: int = 10000
    tol: float = 1e-8


@dataclass(frozen=True)
class MetricConfig:
    gamma_intents: float = 2.0
    gamma_utterances: float = 1.0
    gamma_slots: float = 1.0
    masking_enabled: bool = True
    include_system: bool = True
    solver: str = EXACT
    sinkhorn: SinkhornParams = field(default=SinkhornParams())
    empty_component_policy: str = SKIP
    empty_component_penalty: float = 2.0

    def __post_init__(self):
        gammas = (self.gamma_intents, self.gamma_utterances, self.gamma_slots)
        if any(g < 0 for g in gammas):
            raise ValueError("gamma weights must be nonnegative")
        if not any(g > 0 for g in gammas):
            raise ValueError("at least one gamma must be positive")
        if self.solver not in (EXACT, SINKHORN):
            raise ValueError(f"unknown solver '{self.solver}'")
        if self.empty_component_policy not in (SKIP, MAX_PENALTY):
            raise ValueError(
                f"unknown empty-component policy '{self.empty_component_policy}'"
            )

    def gamma(self, kind: ComponentKind) -> float:
        return {
            ComponentKind.UTTERANCES: self.gamma_utterances,
            ComponentKind.INTENTS: self.gamma_intents,
            ComponentKind.SLOTS: self.gamma_slots,
        }[kind]


def _w1(dist_a, dist_b, config: MetricConfig) -> float:
    C = cost_matrix(dist_a.support, dist_b.support)
    if config.solver == SINKHORN:
        p = config.sinkhorn
        plan = wasserstein1_sinkhorn(dist_a, dist_b, C, p.epsilon, p.max_iters, p.tol)
    else:
        plan = wasserstein1_exact(dist_a, dist_b, C)
    return plan.objective


def _component_term(
    p1: ConversationProfile,
    p2: ConversationProfile,
    kind: ComponentKind,
    config: MetricConfig,
) -> float | None:
    """One component's W1 term before gamma weighting.

    None means the component was skipped (empty on one side under the
    skip policy). Empty on both sides contributes 0: the components are
    identical, and anything else would break the identity axiom.
    """
    d1 = p1.component(kind)
    d2 = p2.component(kind)
    if d1 is None and d2 is None:
        return 0.0
    if d1 is None or d2 is None:
        if config.empty_component_policy == MAX_PENALTY:
            return config.empty_component_penalty
        return None
    return _w1(d1, d2, config)


def component_distances(
    p1: ConversationProfile, p2: ConversationProfile, config: MetricConfig
) -> dict[str, float | None]:
    """Per-component W1 terms before gamma weighting."""
    return {k.value: _component_term(p1, p2, k, config) for k in _COMPONENTS}


def taskdiff_distance(
    p1: ConversationProfile, p2: ConversationProfile, config: MetricConfig | None = None
) -> float:
    """Weighted sum of per-component W1 distances (0 = identical)."""
    config = config or MetricConfig()
    total = 0.0
    for kind in _COMPONENTS:
        gamma = config.gamma(kind)
        if gamma == 0.0:
            continue
        term = _component_term(p1, p2, kind, config)
        if term is not None:
            total += gamma * term
    return total


# ---------------------------------------------------------------------------
# baselines


def _utterance_vectors(conv: Conversation, embeddings, config: MetricConfig) -> np.ndarray:
    vecs = []
    for turn in conv.turns:
        if not config.include_system and turn.speaker is not Speaker.USER:
            continue
        text = mask_turn(turn).text if config.masking_enabled else turn.utterance
        vecs.append(
            np.asarray(lookup(embeddings, EmbeddingKey(KeyKind.UTTERANCE, text)),
                       dtype=np.float64)
        )
    if not vecs:
        raise NumericalFailure(f"conversation '{conv.id}' retains no turns")
    return np.stack(vecs)


def sbert_cosine_distance(v1: np.ndarray, v2: np.ndarray) -> float:
    m1 = v1.mean(axis=0)
    m2 = v2.mean(axis=0)
    if np.array_equal(m1, m2):  # identical conversations score exactly 0
        return 0.0
    n1 = np.linalg.norm(m1)
    n2 = np.linalg.norm(m2)
    if n1 == 0.0 or n2 == 0.0:
        raise NumericalFailure("zero-norm mean utterance vector")
    cos = float(m1 @ m2 / (n1 * n2))
    return float(min(max(1.0 - cos, 0.0), 2.0))


def conved_distance(v1: np.ndarray, v2: np.ndarray) -> float:
    """Edit distance over utterance sequences in embedding space.

    Substitution costs the Euclidean gap between the aligned utterance
    embeddings; inserting or deleting an utterance costs its embedding
    norm (the gap to aligning it with nothing).
    """
    n1 = v1.shape[0]
    n2 = v2.shape[0]
    ins1 = np.linalg.norm(v1, axis=1)
    ins2 = np.linalg.norm(v2, axis=1)
    diff = v1[:, None, :] - v2[None, :, :]
    sub = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    dp = np.zeros((n1 + 1, n2 + 1))
    dp[1:, 0] = np.cumsum(ins1)
    dp[0, 1:] = np.cumsum(ins2)
    for i in range(1, n1 + 1):
        for j in range(1, n2 + 1):
            dp[i, j] = min(
                dp[i - 1, j - 1] + sub[i - 1, j - 1],
                dp[i - 1, j] + ins1[i - 1],
                dp[i, j - 1] + ins2[j - 1],
            )
    return float(dp[n1, n2])


def baseline_distance(
    kind: str,
    c1: Conversation,
    c2: Conversation,
    embeddings,
    config: MetricConfig | None = None,
) -> float:
    """One of the reference metrics; unmasked utterances by default."""
    config = config or MetricConfig(masking_enabled=False)
    v1 = _utterance_vectors(c1, embeddings, config)
    v2 = _utterance_vectors(c2, embeddings, config)
    if kind == SBERT_COSINE:
        return sbert_cosine_distance(v1, v2)
    if kind == CONV_ED:
        return conved_distance(v1, v2)
    raise ValueError(f"unknown baseline '{kind}'")


# ---------------------------------------------------------------------------
# pairwise matrices


@dataclass(frozen=True)
class DistanceMatrix:
    ids: tuple[str, ...]
    values: np.ndarray  # (n, n) float64, symmetric, zero diagonal

    def __post_init__(self):
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ValueError("matrix shape does not match id count")

    def index_of(self, conversation_id: str) -> int:
        return self.ids.index(conversation_id)


def _profile_reps(corpus: Corpus, embeddings, config: MetricConfig):
    reps = []
    for conv in corpus.conversations:
        try:
            reps.append(
                build_profile(
                    conv,
                    embeddings,
                    include_system=config.include_system,
                    mask=config.masking_enabled,
                    allow_empty=True,
                )
            )
        except MissingEmbedding as e:
            raise MissingEmbedding(e.key, context=f"conversation '{conv.id}'") from e
    return reps


_worker_state: dict = {}


def _pool_init(metric, reps, config):
    _worker_state["metric"] = metric
    _worker_state["reps"] = reps
    _worker_state["config"] = config


def _pool_chunk(pairs):
    metric = _worker_state["metric"]
    reps = _worker_state["reps"]
    config = _worker_state["config"]
    return [(i, j, _pair_distance(metric, reps, i, j, config)) for i, j in pairs]


def _pair_distance(metric, reps, i, j, config) -> float:
    if metric == TASKDIFF:
        return taskdiff_distance(reps[i], reps[j], config)
    if metric == SBERT_COSINE:
        return sbert_cosine_distance(reps[i], reps[j])
    return conved_distance(reps[i], reps[j])


def pairwise_matrix(
    corpus: Corpus,
    embeddings,
    config: MetricConfig | None = None,
    metric: str = TASKDIFF,
    jobs: int = 1,
) -> DistanceMatrix:
    """All n(n-1)/2 conversation distances, mirrored into a full matrix."""
    config = config or (
        MetricConfig() if metric == TASKDIFF else MetricConfig(masking_enabled=False)
    )
    if metric not in METRICS:
        raise ValueError(f"unknown metric '{metric}'")
    ids = tuple(corpus.ids())
    n = len(ids)
    if metric == TASKDIFF:
        reps = _profile_reps(corpus, embeddings, config)
    else:
        reps = [_utterance_vectors(c, embeddings, config) for c in corpus.conversations]

    values = np.zeros((n, n), dtype=np.float64)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if jobs > 1 and len(pairs) > 64:
        chunks = [pairs[k::jobs * 4] for k in range(jobs * 4) if pairs[k::jobs * 4]]
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init, initargs=(metric, reps, config)
        ) as pool:
            for chunk_result in pool.map(_pool_chunk, chunks):
                for i, j, d in chunk_result:
                    values[i, j] = d
                    values[j, i] = d
    else:
        for i, j in pairs:
            try:
                d = _pair_distance(metric, reps, i, j, config)
            except NumericalFailure as e:
                raise NumericalFailure(f"pair ({ids[i]}, {ids[j]}): {e}") from e
            values[i, j] = d
            values[j, i] = d
    return DistanceMatrix(ids=ids, values=values)


def save_distance_matrix(matrix: DistanceMatrix, path: str | Path) -> None:
    """DMATV1: header, length-prefixed id lines, then the strict lower
    triangle row-major as little-endian float64 hex (16 chars per value)."""
    n = len(matrix.ids)
    with open(path, "wb") as fh:
        fh.write(f"{DMAT_MAGIC} {n}\n".encode())
        for cid in matrix.ids:
            cb = cid.encode("utf-8")
            fh.write(b"%d " % len(cb) + cb + b"\n")
        for i in range(1, n):
            row = np.ascontiguousarray(matrix.values[i, :i], dtype="<f8")
            fh.write(row.tobytes().hex().encode("ascii") + b"\n")


def load_distance_matrix(path: str | Path) -> DistanceMatrix:
    path = Path(path)
    try:
        lines = path.read_bytes().split(b"\n")
    except OSError as e:
        raise ParseError(f"cannot read matrix: {e}", path=str(path)) from e
    header = lines[0].decode("utf-8", errors="replace").split()
    if len(header) != 2 or header[0] != DMAT_MAGIC:
        raise ParseError("missing DMATV1 header", path=str(path), record=1)
    n = int(header[1])
    ids = []
    for k in range(n):
        line = lines[1 + k]
        length_bytes, sep, id_bytes = line.partition(b" ")
        if not sep or len(id_bytes) != int(length_bytes):
            raise ParseError("malformed id line", path=str(path), record=2 + k)
        ids.append(id_bytes.decode("utf-8"))
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(1, n):
        line = lines[1 + n + i - 1]
        if len(line) != i * 16:
            raise ParseError(
                f"row {i} encodes {len(line) // 16} values, expected {i}",
                path=str(path), record=2 + n + i - 1,
            )
        row = np.frombuffer(bytes.fromhex(line.decode("ascii")), dtype="<f8")
        values[i, :i] = row
        values[:i, i] = row
    return DistanceMatrix(ids=tuple(ids), values=values)


