"""Encoder backends.

Two schemes resolve from a model identifier string:

* anything else      — a sentence-transformers checkpoint (name or path),
                       mean-pooled sentence vectors;
* token-hash:<dim>:<seed> — an offline deterministic stand-in (signed
                       bag-of-tokens hashing, L2-normalized) for tests
                       and air-gapped runs.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .errors import ModelLoadError


class TokenHashEncoder:
    """Deterministic reference encoder; no model assets required."""

    _tokens = re.compile(r"[a-z0-9]+")

    def __init__(self, dim: int, seed: int):
        if dim < 8:
            raise ModelLoadError(f"token-hash dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = self._tokens.findall(text.lower())
            if not tokens:
                out[row, 0] = 1.0
                continue
            for token in tokens:
                digest = hashlib.blake2b(
                    token.encode("utf-8"), digest_size=8,
                    key=str(self.seed).encode("ascii"),
                ).digest()
                h = int.from_bytes(digest, "little")
                sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
                out[row, h % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, 0] = 1.0
            else:
                out[row] /= norm
        return out.astype(np.float32)


class SentenceTransformerEncoder:
    """sentence-transformers checkpoint, imported lazily."""

    def __init__(self, model_id: str, device: str | None = None):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise ModelLoadError(
                "sentence-transformers is not installed; "
                "install the [model] extra or use token-hash:<dim>:<seed>"
            ) from e
        try:
            self.model = SentenceTransformer(model_id, device=device)
        except Exception as e:
            raise ModelLoadError(f"cannot load model '{model_id}': {e}") from e
        probe = self.model.encode(["probe"], convert_to_numpy=True)
        self.dim = int(probe.shape[1])

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        vectors = self.model.encode(
            texts, batch_size=batch_size, convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def resolve_encoder(model_id: str, device: str | None = None):
    if model_id.startswith("token-hash:"):
        parts = model_id.split(":")
        if len(parts) != 3:
            raise ModelLoadError(
                f"expected token-hash:<dim>:<seed>, got '{model_id}'"
            )
        try:
            return TokenHashEncoder(dim=int(parts[1]), seed=int(parts[2]))
        except ValueError as e:
            raise ModelLoadError(f"bad token-hash parameters: {e}") from e
    return SentenceTransformerEncoder(model_id, device=device)
