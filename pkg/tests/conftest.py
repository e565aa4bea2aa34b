"""Shared fixtures: fixture corpora on disk and in memory, the
deterministic test embedder, and a JIT warmup so timings are steady."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py, corpora.py

from taskdiff.corpus import save_corpus
from taskdiff.embedding import HashEmbedder
from taskdiff.ot import warmup

from corpora import make_figure_corpus, make_synthetic_corpus, write_sgd_mini


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    warmup()


@pytest.fixture(scope="session")
def figure_corpus():
    return make_figure_corpus()


@pytest.fixture(scope="session")
def figure_corpus_dir(figure_corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("figure_corpus")
    save_corpus(figure_corpus, root)
    return root


@pytest.fixture(scope="session")
def sgd_mini_dir(tmp_path_factory):
    return write_sgd_mini(tmp_path_factory.mktemp("sgd_mini"))


@pytest.fixture(scope="session")
def hash_embeddings():
    return HashEmbedder(dim=128, seed=7)


@pytest.fixture(scope="session")
def synthetic_corpus():
    # 3 domains with disjoint intent sets, 30 conversations each
    return make_synthetic_corpus(
        n_per_domain=30, domains=["flights", "banking", "dining"], seed=11
    )
