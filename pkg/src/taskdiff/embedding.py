"""Embedding storage, lookup, and the deterministic test embedder.

Vectors are stored at 32-bit precision; the on-disk EMBV1 format encodes
each float as little-endian hex so files round-trip bit-exactly across
platforms and languages. Distance arithmetic downstream is 64-bit.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DuplicateKey, MissingEmbedding, ParseError

EMB_MAGIC = "EMBV1"


class KeyKind(str, Enum):
    UTTERANCE = "utt"
    INTENT_NAME = "intent"
    SLOT_NAME = "slot"


@dataclass(frozen=True)
class EmbeddingKey:
    """Typed key: masked utterance text or a canonical component name."""

    kind: KeyKind
    text: str

    def encoded(self) -> str:
        # kind prefix + ':' separator is injective: kinds contain no ':'
        return f"{self.kind.value}:{self.text}"


def parse_key(encoded: str) -> EmbeddingKey:
    prefix, sep, text = encoded.partition(":")
    if not sep:
        raise ParseError(f"embedding key missing kind prefix: {encoded!r}")
    try:
        kind = KeyKind(prefix)
    except ValueError:
        raise ParseError(f"unknown embedding key kind: {prefix!r}") from None
    return EmbeddingKey(kind=kind, text=text)


class EmbeddingSet:
    """Immutable map from encoded key to a float32 vector of fixed dim."""

    def __init__(self, dim: int, entries: dict[str, np.ndarray]):
        if dim <= 0:
            raise DimensionMismatch(f"dimension must be positive, got {dim}")
        for key, vec in entries.items():
            if vec.shape != (dim,):
                raise DimensionMismatch(
                    f"vector for {key!r} has shape {vec.shape}, expected ({dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"non-finite component in vector for {key!r}")
        self.dim = dim
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: EmbeddingKey | str) -> bool:
        return _encode(key) in self.entries

    def lookup(self, key: EmbeddingKey | str) -> np.ndarray:
        encoded = _encode(key)
        try:
            return self.entries[encoded]
        except KeyError:
            raise MissingEmbedding(encoded) from None


def _encode(key: EmbeddingKey | str) -> str:
    return key.encoded() if isinstance(key, EmbeddingKey) else key


def lookup(embeddings, key: EmbeddingKey | str) -> np.ndarray:
    """Vector for ``key``; raises MissingEmbedding naming the exact key."""
    return embeddings.lookup(key)


def load_embeddings(path: str | Path) -> EmbeddingSet:
    """Parse an EMBV1 file; duplicate keys and dimension drift are rejected."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ParseError(f"cannot read embeddings: {e}", path=str(path)) from e
    lines = raw.split(b"\n")
    if not lines or not lines[0].startswith(EMB_MAGIC.encode()):
        raise ParseError("missing EMBV1 header", path=str(path), record=1)
    header = lines[0].decode("utf-8", errors="replace").split()
    if len(header) != 3:
        raise ParseError("malformed EMBV1 header", path=str(path), record=1)
    try:
        dim = int(header[1])
        count = int(header[2])
    except ValueError as e:
        raise ParseError(f"malformed EMBV1 header: {e}", path=str(path), record=1) from e
    if dim <= 0:
        raise DimensionMismatch(f"header declares dim {dim}")

    entries: dict[str, np.ndarray] = {}
    lineno = 1
    for n in range(count):
        key_line = lines[lineno] if lineno < len(lines) else None
        vec_line = lines[lineno + 1] if lineno + 1 < len(lines) else None
        if key_line is None or vec_line is None:
            raise ParseError(
                f"truncated file: expected {count} entries, got {n}",
                path=str(path), record=lineno + 1,
            )
        lineno += 2
        length_bytes, sep, key_bytes = key_line.partition(b" ")
        if not sep:
            raise ParseError("malformed key line", path=str(path), record=lineno - 1)
        try:
            key_len = int(length_bytes)
        except ValueError as e:
            raise ParseError(f"bad key length: {e}", path=str(path), record=lineno - 1) from e
        if len(key_bytes) != key_len:
            raise ParseError(
                f"key length {len(key_bytes)} != declared {key_len}",
                path=str(path), record=lineno - 1,
            )
        key = key_bytes.decode("utf-8")
        if key in entries:
            raise DuplicateKey(f"duplicate embedding key: {key!r}")
        if len(vec_line) != dim * 8:
            raise DimensionMismatch(
                f"entry {key!r} encodes {len(vec_line) // 8} floats, expected {dim}"
            )
        try:
            vec = np.frombuffer(bytes.fromhex(vec_line.decode("ascii")), dtype="<f4")
        except ValueError as e:
            raise ParseError(f"bad hex vector: {e}", path=str(path), record=lineno) from e
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"non-finite component for key {key!r}",
                             path=str(path), record=lineno)
        entries[key] = vec.astype(np.float32)
    return EmbeddingSet(dim=dim, entries=entries)


def write_embeddings(entries: dict[str, np.ndarray], dim: int, path: str | Path) -> None:
    """Write entries in the EMBV1 format, keys in insertion order."""
    with open(path, "wb") as fh:
        fh.write(f"{EMB_MAGIC} {dim} {len(entries)}\n".encode())
        for key, vec in entries.items():
            vec32 = np.asarray(vec, dtype="<f4")
            if vec32.shape != (dim,):
                raise DimensionMismatch(
                    f"vector for {key!r} has shape {vec32.shape}, expected ({dim},)"
                )
            kb = key.encode("utf-8")
            fh.write(b"%d " % len(kb) + kb + b"\n")
            fh.write(vec32.tobytes().hex().encode("ascii") + b"\n")


def merge_embedding_sets(sets: list[EmbeddingSet]) -> EmbeddingSet:
    """Union of several sets; overlapping keys must carry bitwise-equal vectors."""
    if not sets:
        raise ValueError("no embedding sets to merge")
    dim = sets[0].dim
    merged: dict[str, np.ndarray] = {}
    for s in sets:
        if s.dim != dim:
            raise DimensionMismatch(f"cannot merge dims {dim} and {s.dim}")
        for key, vec in s.entries.items():
            if key in merged:
                if merged[key].tobytes() != vec.tobytes():
                    raise DuplicateKey(
                        f"key {key!r} present in two sets with different vectors"
                    )
            else:
                merged[key] = vec
    return EmbeddingSet(dim=dim, entries=merged)


# ---------------------------------------------------------------------------
# deterministic test embedder

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _token_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=str(seed).encode("ascii")
    ).digest()
    return int.from_bytes(digest, "little")


def hash_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-tokens vector: signed hashing into ``dim`` buckets.

    Lowercased tokens (runs of [a-z0-9]) are hashed with ``seed`` into a
    bucket with a +/-1 sign; the bucket sums are L2-normalized. The empty
    token list yields the unit vector along dimension 0.
    """
    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    acc = np.zeros(dim, dtype=np.float64)
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        acc[0] = 1.0
        return acc.astype(np.float32)
    for token in tokens:
        h = _token_hash(token, seed)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        acc[h % dim] += sign
    norm = np.linalg.norm(acc)
    if norm == 0.0:  # colliding signs cancelled everything out
        acc[0] = 1.0
        norm = 1.0
    return (acc / norm).astype(np.float32)


class HashEmbedder:
    """Drop-in EmbeddingSet stand-in computing hash_embed vectors on demand."""

    def __init__(self, dim: int = 384, seed: int = 0):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def lookup(self, key: EmbeddingKey | str) -> np.ndarray:
        encoded = _encode(key)
        vec = self._cache.get(encoded)
        if vec is None:
            vec = hash_embed(parse_key(encoded).text, self.dim, self.seed)
            self._cache[encoded] = vec
        return vec

    def __contains__(self, key: EmbeddingKey | str) -> bool:
        return True
