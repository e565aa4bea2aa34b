import dataclasses

import numpy as np
import pytest

from taskdiff.corpus import Conversation, Corpus, SlotFilling, Speaker, Turn
from taskdiff.distributions import build_profile
from taskdiff.errors import DuplicateKey
from taskdiff.metric import (
    CONV_ED,
    SBERT_COSINE,
    DistanceMatrix,
    MetricConfig,
    baseline_distance,
    component_distances,
    load_distance_matrix,
    pairwise_matrix,
    save_distance_matrix,
    taskdiff_distance,
)
from taskdiff.ot import cost_matrix, wasserstein1_exact

from corpora import make_figure_corpus, make_synthetic_corpus


@pytest.fixture(scope="module")
def profiles(figure_corpus, hash_embeddings):
    config = MetricConfig()
    return {
        c.id: build_profile(c, hash_embeddings, include_system=config.include_system,
                            mask=config.masking_enabled, allow_empty=True)
        for c in figure_corpus.conversations
    }


def test_identity(profiles):
    assert taskdiff_distance(profiles["user_a"], profiles["user_a"]) == 0.0


def test_reordered_tasks_distance_zero(profiles):
    # the reordered-task pair scores exactly zero
    assert taskdiff_distance(profiles["user_a"], profiles["user_b"]) == 0.0
    terms = component_distances(profiles["user_a"], profiles["user_b"], MetricConfig())
    assert terms == {"utterances": 0.0, "intents": 0.0, "slots": 0.0}


def test_revalued_slots_distance_zero_only_with_masking(figure_corpus, hash_embeddings):
    masked = {
        cid: build_profile(figure_corpus.get(cid), hash_embeddings, mask=True,
                           allow_empty=True)
        for cid in ("user_a", "user_d")
    }
    raw = {
        cid: build_profile(figure_corpus.get(cid), hash_embeddings, mask=False,
                           allow_empty=True)
        for cid in ("user_a", "user_d")
    }
    assert taskdiff_distance(masked["user_a"], masked["user_d"]) == 0.0
    assert taskdiff_distance(raw["user_a"], raw["user_d"]) > 0.0


def test_symmetry(profiles):
    for a in profiles.values():
        for b in profiles.values():
            fwd = taskdiff_distance(a, b)
            bwd = taskdiff_distance(b, a)
            assert abs(fwd - bwd) <= 1e-9


def test_paraphrase_decomposes_to_utterance_term(profiles):
    # user_c shares annotations with user_a but phrases turns differently
    config = MetricConfig()
    terms = component_distances(profiles["user_a"], profiles["user_c"], config)
    assert terms["intents"] == pytest.approx(0.0, abs=1e-12)
    assert terms["slots"] == pytest.approx(0.0, abs=1e-12)
    assert terms["utterances"] > 0

    # per-component oracle: the composed distance equals gamma-weighted W1
    p1, p2 = profiles["user_a"], profiles["user_c"]
    w1_utt = wasserstein1_exact(
        p1.utterances, p2.utterances,
        cost_matrix(p1.utterances.support, p2.utterances.support),
    ).objective
    total = taskdiff_distance(p1, p2, config)
    assert total == pytest.approx(1.0 * w1_utt, abs=1e-12)


def test_gamma_linearity(profiles):
    base = MetricConfig()
    tripled = dataclasses.replace(base, gamma_intents=6.0, gamma_utterances=3.0,
                                  gamma_slots=3.0)
    for a in ("user_a", "user_c"):
        for b in ("user_b", "user_d"):
            d1 = taskdiff_distance(profiles[a], profiles[b], base)
            d3 = taskdiff_distance(profiles[a], profiles[b], tripled)
            assert d3 == pytest.approx(3.0 * d1, rel=1e-12, abs=1e-12)


def test_monotonicity_adding_component(profiles):
    utt_only = MetricConfig(gamma_intents=0.0, gamma_utterances=1.0, gamma_slots=0.0)
    full = MetricConfig(gamma_intents=2.0, gamma_utterances=1.0, gamma_slots=1.0)
    for a in profiles.values():
        for b in profiles.values():
            assert (taskdiff_distance(a, b, full)
                    >= taskdiff_distance(a, b, utt_only) - 1e-12)


def test_gamma_validation():
    with pytest.raises(ValueError):
        MetricConfig(gamma_intents=0.0, gamma_utterances=0.0, gamma_slots=0.0)
    with pytest.raises(ValueError):
        MetricConfig(gamma_intents=-1.0)


def test_empty_component_policies(hash_embeddings):
    def conv_with(cid, slots):
        fillings = tuple(SlotFilling(s, v) for s, v in slots)
        return Conversation(
            id=cid, domain_label="d",
            turns=(Turn(speaker=Speaker.USER, utterance=f"hello from {cid}",
                        active_intents=("A",), slot_fillings=fillings),),
        )

    with_slots = build_profile(
        conv_with("a", [("city", "hello")]), hash_embeddings, allow_empty=True)
    without = build_profile(conv_with("b", []), hash_embeddings, allow_empty=True)
    assert without.slots is None

    skip = MetricConfig(empty_component_policy="skip")
    penal = MetricConfig(empty_component_policy="max_penalty",
                         empty_component_penalty=2.0)
    d_skip = taskdiff_distance(with_slots, without, skip)
    d_penalty = taskdiff_distance(with_slots, without, penal)
    assert d_penalty == pytest.approx(d_skip + skip.gamma_slots * 2.0)
    # both-empty contributes nothing under either policy (identity axiom)
    assert taskdiff_distance(without, without, penal) == 0.0


# --- baselines ---


def test_baselines_zero_on_identical(figure_corpus, hash_embeddings):
    c = figure_corpus.get("user_a")
    assert baseline_distance(SBERT_COSINE, c, c, hash_embeddings) == 0.0
    assert baseline_distance(CONV_ED, c, c, hash_embeddings) == 0.0


def test_conved_forced_insertion(hash_embeddings):
    t1 = Turn(speaker=Speaker.USER, utterance="shared line")
    t2 = Turn(speaker=Speaker.USER, utterance="an extra line")
    c1 = Conversation(id="a", domain_label="d", turns=(t1,))
    c2 = Conversation(id="b", domain_label="d", turns=(t1, t2))
    from taskdiff.embedding import EmbeddingKey, KeyKind

    expected = float(np.linalg.norm(
        np.asarray(hash_embeddings.lookup(EmbeddingKey(KeyKind.UTTERANCE,
                                                       "an extra line")),
                   dtype=np.float64)))
    got = baseline_distance(CONV_ED, c1, c2, hash_embeddings)
    assert got == pytest.approx(expected, abs=1e-12)


def test_conved_penalizes_reordering_taskdiff_does_not(figure_corpus,
                                                       hash_embeddings, profiles):
    a = figure_corpus.get("user_a")
    b = figure_corpus.get("user_b")
    conved = baseline_distance(CONV_ED, a, b, hash_embeddings)
    assert conved > 0.1
    assert taskdiff_distance(profiles["user_a"], profiles["user_b"]) == 0.0


def test_sbert_cosine_in_range(figure_corpus, hash_embeddings):
    for c1 in figure_corpus.conversations:
        for c2 in figure_corpus.conversations:
            d = baseline_distance(SBERT_COSINE, c1, c2, hash_embeddings)
            assert 0.0 <= d <= 2.0


# --- pairwise matrices ---


def test_pairwise_matches_independent_calls(figure_corpus, hash_embeddings, profiles):
    config = MetricConfig()
    matrix = pairwise_matrix(figure_corpus, hash_embeddings, config)
    n = len(matrix.ids)
    for i in range(n):
        for j in range(n):
            expected = taskdiff_distance(
                profiles[matrix.ids[i]], profiles[matrix.ids[j]], config)
            assert matrix.values[i, j] == pytest.approx(expected, abs=1e-12)
            assert matrix.values[i, j] == matrix.values[j, i]
    assert np.array_equal(np.diag(matrix.values), np.zeros(n))


def test_single_conversation_matrix(figure_corpus, hash_embeddings):
    sub = Corpus(ontology=figure_corpus.ontology,
                 conversations=figure_corpus.conversations[:1])
    matrix = pairwise_matrix(sub, hash_embeddings)
    assert matrix.values.shape == (1, 1)
    assert matrix.values[0, 0] == 0.0


def test_duplicated_conversation_zero_off_diagonal(figure_corpus, hash_embeddings):
    twin = dataclasses.replace(figure_corpus.get("user_a"), id="user_a_copy")
    doubled = Corpus(ontology=figure_corpus.ontology,
                     conversations=(figure_corpus.get("user_a"), twin))
    matrix = pairwise_matrix(doubled, hash_embeddings)
    assert matrix.values[0, 1] == 0.0


def test_matrix_round_trip(tmp_path, figure_corpus, hash_embeddings):
    matrix = pairwise_matrix(figure_corpus, hash_embeddings)
    path = tmp_path / "dist.dmat"
    save_distance_matrix(matrix, path)
    reloaded = load_distance_matrix(path)
    assert reloaded.ids == matrix.ids
    assert np.array_equal(reloaded.values, matrix.values)
    # byte determinism of the writer
    path2 = tmp_path / "dist2.dmat"
    save_distance_matrix(reloaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_matrix_ids_with_spaces(tmp_path):
    dm = DistanceMatrix(ids=("id one", "id two"),
                        values=np.array([[0.0, 1.5], [1.5, 0.0]]))
    path = tmp_path / "m.dmat"
    save_distance_matrix(dm, path)
    assert load_distance_matrix(path).ids == ("id one", "id two")


def test_pairwise_baseline_metrics(figure_corpus, hash_embeddings):
    for metric in (SBERT_COSINE, CONV_ED):
        matrix = pairwise_matrix(figure_corpus, hash_embeddings, metric=metric)
        assert np.allclose(matrix.values, matrix.values.T)
        assert np.array_equal(np.diag(matrix.values), np.zeros(len(matrix.ids)))


def test_pairwise_parallel_matches_serial(hash_embeddings):
    corpus = make_synthetic_corpus(n_per_domain=6, domains=["flights", "dining"],
                                   seed=31)
    serial = pairwise_matrix(corpus, hash_embeddings, jobs=1)
    parallel = pairwise_matrix(corpus, hash_embeddings, jobs=2)
    assert serial.ids == parallel.ids
    assert np.array_equal(serial.values, parallel.values)


def test_pairwise_profile_error_names_conversation(figure_corpus):
    from taskdiff.embedding import EmbeddingSet
    from taskdiff.errors import MissingEmbedding

    empty = EmbeddingSet(dim=8, entries={})
    with pytest.raises(MissingEmbedding) as err:
        pairwise_matrix(figure_corpus, empty)
    assert "user_a" in str(err.value)
    assert err.value.key.startswith("utt:")


def test_merge_duplicate_embeddings_guard():
    from taskdiff.embedding import EmbeddingSet, merge_embedding_sets

    a = EmbeddingSet(dim=8, entries={"utt:x": np.ones(8, dtype=np.float32)})
    b = EmbeddingSet(dim=8, entries={"utt:x": np.zeros(8, dtype=np.float32)})
    with pytest.raises(DuplicateKey):
        merge_embedding_sets([a, b])
