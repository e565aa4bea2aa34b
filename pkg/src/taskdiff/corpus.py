"""Conversation data model, ontology, and corpus ingestion.

Two on-disk layouts are supported, both rooted at a directory:

* canonical — ``ontology.json`` plus ``conversations.jsonl`` (one JSON
  record per line, fields mirroring the dataclasses below);
* sgd — the published Schema-Guided Dialogue layout: ``schema.json``
  plus ``dialogues_*.json``.

Loaded corpora are immutable and validated: every intent/slot name must
exist in the ontology and every slot span must slice its utterance to
exactly the annotated value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus, ParseError, SchemaError

CANONICAL_ONTOLOGY_FILE = "ontology.json"
CANONICAL_CONVERSATIONS_FILE = "conversations.jsonl"


class Speaker(str, Enum):
    USER = "user"
    SYSTEM = "system"


@dataclass(frozen=True)
class Ontology:
    """Global catalogue of intent and slot names.

    Ordering is fixed at construction and defines the index positions
    used by every downstream distribution.
    """

    intents: tuple[str, ...]
    slots: tuple[str, ...]
    domains: dict[str, int] | None = None

    def __post_init__(self):
        for kind, names in (("intent", self.intents), ("slot", self.slots)):
            if any(not n for n in names):
                raise SchemaError(f"empty {kind} name in ontology")
            if len(set(names)) != len(names):
                raise SchemaError(f"duplicate {kind} names in ontology")

    def has_intent(self, name: str) -> bool:
        return name in self.intents

    def has_slot(self, name: str) -> bool:
        return name in self.slots


@dataclass(frozen=True)
class SlotFilling:
    """One slot-value binding inside an utterance.

    ``span`` is (start, end) character offsets, end exclusive; when
    present the utterance must slice to exactly ``value``.
    """

    slot_name: str
    value: str
    span: tuple[int, int] | None = None


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    utterance: str
    active_intents: tuple[str, ...] = ()
    slot_fillings: tuple[SlotFilling, ...] = ()


@dataclass(frozen=True)
class Conversation:
    id: str
    domain_label: str
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class Corpus:
    ontology: Ontology
    conversations: tuple[Conversation, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {c.id: i for i, c in enumerate(self.conversations)}
        )

    def __len__(self) -> int:
        return len(self.conversations)

    def ids(self) -> list[str]:
        return [c.id for c in self.conversations]

    def labels(self) -> dict[str, str]:
        return {c.id: c.domain_label for c in self.conversations}

    def get(self, conversation_id: str) -> Conversation:
        try:
            return self.conversations[self._index[conversation_id]]
        except KeyError:
            raise KeyError(f"no conversation with id '{conversation_id}'") from None


def validate_conversation(conversation: Conversation, ontology: Ontology) -> None:
    """Raise SchemaError on any invariant violation."""
    if not conversation.turns:
        raise SchemaError(f"conversation '{conversation.id}' has no turns")
    if not any(t.speaker is Speaker.USER for t in conversation.turns):
        raise SchemaError(f"conversation '{conversation.id}' has no user turn")
    for ti, turn in enumerate(conversation.turns):
        where = f"conversation '{conversation.id}' turn {ti}"
        if not turn.utterance:
            raise SchemaError(f"{where}: empty utterance")
        if len(set(turn.active_intents)) != len(turn.active_intents):
            raise SchemaError(f"{where}: duplicate active intent")
        for name in turn.active_intents:
            if not ontology.has_intent(name):
                raise SchemaError(f"{where}: unknown intent '{name}'")
        for f in turn.slot_fillings:
            if not ontology.has_slot(f.slot_name):
                raise SchemaError(f"{where}: unknown slot '{f.slot_name}'")
            if f.span is not None:
                start, end = f.span
                if not (0 <= start < end <= len(turn.utterance)):
                    raise SchemaError(
                        f"{where}: bad span {f.span} for slot '{f.slot_name}'"
                    )
                if turn.utterance[start:end] != f.value:
                    raise SchemaError(
                        f"{where}: span {f.span} slices to "
                        f"{turn.utterance[start:end]!r}, not {f.value!r}"
                    )


def validate_corpus(corpus: Corpus) -> None:
    seen: set[str] = set()
    for conv in corpus.conversations:
        if conv.id in seen:
            raise SchemaError(f"duplicate conversation id '{conv.id}'")
        seen.add(conv.id)
        validate_conversation(conv, corpus.ontology)


# ---------------------------------------------------------------------------
# canonical format


def _ontology_from_dict(obj: dict, path: str) -> Ontology:
    try:
        intents = tuple(obj["intents"])
        slots = tuple(obj["slots"])
    except (KeyError, TypeError) as e:
        raise ParseError(f"ontology file missing field: {e}", path=path) from e
    domains = obj.get("domains")
    if domains is not None:
        domains = {str(k): int(v) for k, v in domains.items()}
    return Ontology(intents=intents, slots=slots, domains=domains)


def load_ontology(path: str | Path) -> Ontology:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read ontology: {e}", path=str(path)) from e
    if not isinstance(obj, dict):
        raise ParseError("ontology file must hold a JSON object", path=str(path))
    return _ontology_from_dict(obj, str(path))


def save_ontology(ontology: Ontology, path: str | Path) -> None:
    obj: dict = {"intents": list(ontology.intents), "slots": list(ontology.slots)}
    if ontology.domains is not None:
        obj["domains"] = ontology.domains
    Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n",
                          encoding="utf-8")


def _filling_from_dict(obj: dict, where: str, path: str, record: int) -> SlotFilling:
    try:
        span = obj.get("span")
        if span is not None:
            span = (int(span[0]), int(span[1]))
        return SlotFilling(slot_name=obj["slot_name"], value=obj["value"], span=span)
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise ParseError(f"bad slot filling in {where}: {e}", path=path, record=record) from e


def _conversation_from_dict(obj: dict, path: str, record: int) -> Conversation:
    try:
        cid = obj["id"]
        turns = []
        for ti, t in enumerate(obj["turns"]):
            fillings = tuple(
                _filling_from_dict(f, f"turn {ti}", path, record)
                for f in t.get("slot_fillings", [])
            )
            turns.append(
                Turn(
                    speaker=Speaker(t["speaker"]),
                    utterance=t["utterance"],
                    active_intents=tuple(t.get("active_intents", [])),
                    slot_fillings=fillings,
                )
            )
        return Conversation(
            id=cid,
            domain_label=obj.get("domain_label", ""),
            turns=tuple(turns),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad conversation record: {e}", path=path, record=record) from e


def _conversation_to_dict(conv: Conversation) -> dict:
    return {
        "id": conv.id,
        "domain_label": conv.domain_label,
        "turns": [
            {
                "speaker": t.speaker.value,
                "utterance": t.utterance,
                "active_intents": list(t.active_intents),
                "slot_fillings": [
                    {
                        "slot_name": f.slot_name,
                        "value": f.value,
                        "span": list(f.span) if f.span is not None else None,
                    }
                    for f in t.slot_fillings
                ],
            }
            for t in conv.turns
        ],
    }


def _load_canonical(root: Path) -> Corpus:
    if root.is_dir():
        onto_path = root / CANONICAL_ONTOLOGY_FILE
        conv_path = root / CANONICAL_CONVERSATIONS_FILE
    else:
        conv_path = root
        onto_path = root.parent / CANONICAL_ONTOLOGY_FILE
    ontology = load_ontology(onto_path)
    conversations = []
    try:
        lines = conv_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(f"cannot read corpus: {e}", path=str(conv_path)) from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"bad JSON record: {e}", path=str(conv_path), record=lineno) from e
        conversations.append(_conversation_from_dict(obj, str(conv_path), lineno))
    if not conversations:
        raise EmptyCorpus(f"no conversations in {conv_path}")
    corpus = Corpus(ontology=ontology, conversations=tuple(conversations))
    validate_corpus(corpus)
    return corpus


def save_corpus(corpus: Corpus, root: str | Path) -> None:
    """Write a corpus in the canonical layout under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_ontology(corpus.ontology, root / CANONICAL_ONTOLOGY_FILE)
    with open(root / CANONICAL_CONVERSATIONS_FILE, "w", encoding="utf-8") as fh:
        for conv in corpus.conversations:
            fh.write(json.dumps(_conversation_to_dict(conv), ensure_ascii=False))
            fh.write("\n")


# ---------------------------------------------------------------------------
# SGD format


def _sgd_schema_names(obj, path: str) -> tuple[list[str], list[str]]:
    if not isinstance(obj, list):
        raise ParseError("SGD schema file must hold a JSON array", path=path)
    intents: list[str] = []
    slots: list[str] = []
    for service in obj:
        try:
            intents.extend(i["name"] for i in service.get("intents", []))
            slots.extend(s["name"] for s in service.get("slots", []))
        except (TypeError, KeyError) as e:
            raise ParseError(f"bad SGD schema entry: {e}", path=path) from e
    return intents, slots


def _sgd_turn(turn: dict, ontology: Ontology, where: str) -> Turn:
    speaker_raw = turn.get("speaker", "")
    speaker = Speaker.USER if speaker_raw.upper() == "USER" else Speaker.SYSTEM
    utterance = turn.get("utterance", "")
    intents: list[str] = []
    fillings: list[SlotFilling] = []
    for frame in turn.get("frames", []):
        state = frame.get("state")
        if state:
            intent = state.get("active_intent")
            # "NONE" markers mean no active intent for the turn
            if intent and intent != "NONE" and intent not in intents:
                if not ontology.has_intent(intent):
                    raise SchemaError(f"{where}: unknown intent '{intent}'")
                intents.append(intent)
        for slot in frame.get("slots", []):
            try:
                name = slot["slot"]
                start = int(slot["start"])
                end = int(slot["exclusive_end"])
            except (KeyError, TypeError, ValueError) as e:
                raise SchemaError(f"{where}: bad slot annotation: {e}") from e
            if not ontology.has_slot(name):
                raise SchemaError(f"{where}: unknown slot '{name}'")
            if not (0 <= start < end <= len(utterance)):
                raise SchemaError(f"{where}: bad span ({start}, {end}) for slot '{name}'")
            fillings.append(SlotFilling(slot_name=name, value=utterance[start:end],
                                        span=(start, end)))
    return Turn(speaker=speaker, utterance=utterance,
                active_intents=tuple(intents), slot_fillings=tuple(fillings))


def _load_sgd(root: Path) -> Corpus:
    if not root.is_dir():
        raise ParseError("SGD corpus path must be a directory", path=str(root))
    schema_path = root / "schema.json"
    try:
        schema_obj = json.loads(schema_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read SGD schema: {e}", path=str(schema_path)) from e
    intents, slots = _sgd_schema_names(schema_obj, str(schema_path))
    ontology = Ontology(
        intents=tuple(sorted(set(intents))), slots=tuple(sorted(set(slots)))
    )

    conversations = []
    dialogue_files = sorted(root.glob("dialogues_*.json"))
    if not dialogue_files:
        raise ParseError("no dialogues_*.json files found", path=str(root))
    for dpath in dialogue_files:
        try:
            dialogues = json.loads(dpath.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"cannot read SGD dialogues: {e}", path=str(dpath)) from e
        if not isinstance(dialogues, list):
            raise ParseError("SGD dialogue file must hold a JSON array", path=str(dpath))
        for rec, dlg in enumerate(dialogues, start=1):
            try:
                did = dlg["dialogue_id"]
                services = dlg.get("services", [])
                raw_turns = dlg["turns"]
            except (TypeError, KeyError) as e:
                raise ParseError(f"bad SGD dialogue: {e}", path=str(dpath), record=rec) from e
            label = "+".join(sorted(set(services)))
            turns = tuple(
                _sgd_turn(t, ontology, f"dialogue '{did}' turn {ti}")
                for ti, t in enumerate(raw_turns)
            )
            conversations.append(Conversation(id=did, domain_label=label, turns=turns))
    if not conversations:
        raise EmptyCorpus(f"no dialogues in {root}")
    corpus = Corpus(ontology=ontology, conversations=tuple(conversations))
    validate_corpus(corpus)
    return corpus


def load_corpus(path: str | Path, format: str = "canonical") -> Corpus:
    """Load and validate a corpus from ``path`` in the given format."""
    path = Path(path)
    if not path.exists():
        raise ParseError("path does not exist", path=str(path))
    if format == "canonical":
        return _load_canonical(path)
    if format == "sgd":
        return _load_sgd(path)
    raise ValueError(f"unknown corpus format '{format}'")


def extract_ontology(corpus_paths: Sequence[str | Path]) -> Ontology:
    """Union of intents/slots declared across schema or ontology files.

    Accepts SGD ``schema.json`` files (JSON arrays) and canonical
    ontology files (JSON objects); names are deduplicated and sorted
    lexicographically for deterministic indexing.
    """
    intents: set[str] = set()
    slots: set[str] = set()
    for p in corpus_paths:
        p = Path(p)
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"cannot read schema: {e}", path=str(p)) from e
        if isinstance(obj, list):
            ints, slts = _sgd_schema_names(obj, str(p))
            intents.update(ints)
            slots.update(slts)
        elif isinstance(obj, dict):
            onto = _ontology_from_dict(obj, str(p))
            intents.update(onto.intents)
            slots.update(onto.slots)
        else:
            raise ParseError("not a schema or ontology file", path=str(p))
    return Ontology(intents=tuple(sorted(intents)), slots=tuple(sorted(slots)))


def conversation_intent_set(conversation: Conversation) -> tuple[str, ...]:
    """Conversation-level intent subset, derived from per-turn annotations."""
    seen: list[str] = []
    for turn in conversation.turns:
        for name in turn.active_intents:
            if name not in seen:
                seen.append(name)
    return tuple(seen)
