"""Optimal-transport similarity for task-oriented conversations.

Conversations are summarized as probability distributions over their
utterance embeddings and their intent/slot occurrence frequencies; the
distance between two conversations is a weighted sum of exact
1-Wasserstein transport costs between matching components.
"""

__version__ = "0.1.0"

from .corpus import (
    Conversation,
    Corpus,
    Ontology,
    SlotFilling,
    Speaker,
    Turn,
    extract_ontology,
    load_corpus,
    save_corpus,
)
from .distributions import (
    ComponentDistribution,
    ComponentKind,
    ConversationProfile,
    build_profile,
    categorical_distribution,
    utterance_distribution,
)
from .embedding import (
    EmbeddingKey,
    EmbeddingSet,
    HashEmbedder,
    KeyKind,
    hash_embed,
    load_embeddings,
    lookup,
    write_embeddings,
)
from .masking import MaskedUtterance, mask_conversation, mask_turn
from .metric import (
    DistanceMatrix,
    MetricConfig,
    SinkhornParams,
    baseline_distance,
    component_distances,
    load_distance_matrix,
    pairwise_matrix,
    save_distance_matrix,
    taskdiff_distance,
)
from .ot import (
    TransportPlan,
    cost_matrix,
    solve_exact,
    wasserstein1_exact,
    wasserstein1_sinkhorn,
)

__all__ = [
    "__version__",
    "Conversation",
    "Corpus",
    "Ontology",
    "SlotFilling",
    "Speaker",
    "Turn",
    "extract_ontology",
    "load_corpus",
    "save_corpus",
    "ComponentDistribution",
    "ComponentKind",
    "ConversationProfile",
    "build_profile",
    "categorical_distribution",
    "utterance_distribution",
    "EmbeddingKey",
    "EmbeddingSet",
    "HashEmbedder",
    "KeyKind",
    "hash_embed",
    "load_embeddings",
    "lookup",
    "write_embeddings",
    "MaskedUtterance",
    "mask_conversation",
    "mask_turn",
    "DistanceMatrix",
    "MetricConfig",
    "SinkhornParams",
    "baseline_distance",
    "component_distances",
    "load_distance_matrix",
    "pairwise_matrix",
    "save_distance_matrix",
    "taskdiff_distance",
    "TransportPlan",
    "cost_matrix",
    "solve_exact",
    "wasserstein1_exact",
    "wasserstein1_sinkhorn",
]
