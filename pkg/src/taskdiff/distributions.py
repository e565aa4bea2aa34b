"""Per-conversation component distributions.

Each conversation is summarized by three finite probability
distributions over embedding vectors: its masked utterances (uniform
over turns, duplicates merged), and its intent/slot occurrence
frequencies with canonical-name embeddings as support points.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import Conversation, Speaker
from .embedding import EmbeddingKey, KeyKind, lookup
from .errors import EmptySupport
from .masking import mask_turn


class ComponentKind(str, Enum):
    UTTERANCES = "utterances"
    INTENTS = "intents"
    SLOTS = "slots"


@dataclass(frozen=True)
class ComponentDistribution:
    """Weighted support points in embedding space for one component.

    weights are strictly positive and sum to 1 (within 1e-12); labels
    carry the masked texts or canonical names for diagnostics.
    """

    component: ComponentKind
    support: np.ndarray  # (n, dim) float64
    weights: np.ndarray  # (n,) float64
    labels: tuple[str, ...]

    def __post_init__(self):
        n = len(self.labels)
        if n < 1 or self.support.shape[0] != n or self.weights.shape != (n,):
            raise ValueError("support, weights, labels must share a positive length")
        if np.any(self.weights <= 0):
            raise ValueError("zero or negative weight; prune before constructing")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")


@dataclass(frozen=True)
class ConversationProfile:
    """The three component distributions of one conversation.

    Components that carry no mass (a conversation without slot fillings,
    say) are None when built with allow_empty; the metric layer decides
    how empty components are scored.
    """

    conversation_id: str
    utterances: ComponentDistribution | None
    intents: ComponentDistribution | None
    slots: ComponentDistribution | None

    def component(self, kind: ComponentKind) -> ComponentDistribution | None:
        return getattr(self, kind.value)


def _from_counts(
    component: ComponentKind,
    counts: dict[str, int],
    vectors: dict[str, np.ndarray],
) -> ComponentDistribution:
    # canonical (sorted) support order: conversations that carry the same
    # bags produce bit-identical distributions regardless of turn order,
    # so permuting turns yields an exactly-zero self distance
    labels = sorted(counts)
    total = sum(counts.values())
    weights = np.array([counts[l] for l in labels], dtype=np.float64) / total
    support = np.stack([np.asarray(vectors[l], dtype=np.float64) for l in labels])
    return ComponentDistribution(
        component=component, support=support, weights=weights, labels=tuple(labels)
    )


def utterance_distribution(
    conversation: Conversation,
    embeddings,
    include_system: bool = True,
    mask: bool = True,
) -> ComponentDistribution:
    """Uniform distribution over the retained turns' utterance embeddings.

    Identical masked texts merge their mass onto one support point; the
    support carries the distinct texts in sorted order.
    """
    counts: dict[str, int] = {}
    for turn in conversation.turns:
        if not include_system and turn.speaker is not Speaker.USER:
            continue
        text = mask_turn(turn).text if mask else turn.utterance
        counts[text] = counts.get(text, 0) + 1
    if not counts:
        raise EmptySupport(
            ComponentKind.UTTERANCES.value,
            f"conversation '{conversation.id}' retains no turns",
        )
    vectors = {
        t: lookup(embeddings, EmbeddingKey(KeyKind.UTTERANCE, t)) for t in counts
    }
    return _from_counts(ComponentKind.UTTERANCES, counts, vectors)


def categorical_distribution(
    conversation: Conversation,
    component: ComponentKind,
    embeddings,
) -> ComponentDistribution:
    """Occurrence-frequency distribution over intent or slot names.

    An intent contributes one count per turn it is active in; a slot one
    count per filling. Names with zero count are omitted from the support.
    """
    if component is ComponentKind.INTENTS:
        kind = KeyKind.INTENT_NAME
    elif component is ComponentKind.SLOTS:
        kind = KeyKind.SLOT_NAME
    else:
        raise ValueError("categorical_distribution handles intents or slots")

    counts: dict[str, int] = {}
    for turn in conversation.turns:
        if component is ComponentKind.INTENTS:
            for name in turn.active_intents:
                counts[name] = counts.get(name, 0) + 1
        else:
            for filling in turn.slot_fillings:
                counts[filling.slot_name] = counts.get(filling.slot_name, 0) + 1
    if not counts:
        raise EmptySupport(
            component.value, f"conversation '{conversation.id}' carries none"
        )
    vectors = {name: lookup(embeddings, EmbeddingKey(kind, name)) for name in counts}
    return _from_counts(component, counts, vectors)


def build_profile(
    conversation: Conversation,
    embeddings,
    include_system: bool = True,
    mask: bool = True,
    allow_empty: bool = False,
) -> ConversationProfile:
    """Assemble the three component distributions for one conversation.

    With allow_empty=False (default) an empty component raises
    EmptySupport naming the component; with allow_empty=True it becomes
    None and is resolved by the metric's empty-component policy.
    """

    def build(fn):
        try:
            return fn()
        except EmptySupport:
            if allow_empty:
                return None
            raise

    return ConversationProfile(
        conversation_id=conversation.id,
        utterances=build(
            lambda: utterance_distribution(conversation, embeddings, include_system, mask)
        ),
        intents=build(
            lambda: categorical_distribution(conversation, ComponentKind.INTENTS, embeddings)
        ),
        slots=build(
            lambda: categorical_distribution(conversation, ComponentKind.SLOTS, embeddings)
        ),
    )
