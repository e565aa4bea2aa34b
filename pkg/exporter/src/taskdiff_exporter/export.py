"""Export and verify operations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embfile import key_text, load_embv1, read_key_list, write_embv1
from .encoder import resolve_encoder
from .errors import EncodeError, ExporterError, VerifyError


@dataclass(frozen=True)
class ExportJob:
    keys_path: str
    out_path: str
    model_id: str = "token-hash:384:0"
    batch_size: int = 32
    device: str | None = None


def export(job: ExportJob) -> int:
    """Encode every key's text and write the EMBV1 file plus a manifest
    sidecar recording the model id and dimension. Returns the entry count."""
    keys = read_key_list(job.keys_path)
    encoder = resolve_encoder(job.model_id, device=job.device)
    texts = [key_text(k) for k in keys]
    if texts:
        try:
            vectors = encoder.encode(texts, batch_size=job.batch_size)
        except ExporterError:
            raise
        except Exception as e:  # pinpoint the failing key for the caller
            vectors = _encode_one_by_one(encoder, texts)
            if vectors is None:
                raise EncodeError(0, str(e)) from e
        vectors = np.ascontiguousarray(vectors, dtype="<f4")
        if not np.all(np.isfinite(vectors)):
            bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
            raise EncodeError(bad, f"non-finite vector for key {keys[bad]!r}")
        dim = vectors.shape[1]
    else:
        dim = getattr(encoder, "dim", 0) or 384
        vectors = np.zeros((0, dim), dtype="<f4")
    try:
        write_embv1(job.out_path, keys, vectors)
    except OSError as e:
        raise ExporterError(f"cannot write {job.out_path}: {e}") from e
    manifest = {
        "model": job.model_id,
        "dim": int(dim),
        "count": len(keys),
        "batch_size": job.batch_size,
    }
    Path(job.out_path + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return len(keys)


def _encode_one_by_one(encoder, texts: list[str]):
    """Fallback pass that localizes the failing key index."""
    rows = []
    for index, text in enumerate(texts):
        try:
            rows.append(encoder.encode([text], batch_size=1)[0])
        except Exception as e:
            raise EncodeError(index, str(e)) from e
    return np.stack(rows)


def verify(embeddings_path: str, keys_path: str) -> dict:
    """Check key coverage, dimension consistency, and finiteness.

    Raises VerifyError naming the first violation; returns summary stats
    on success.
    """
    keys = read_key_list(keys_path)
    dim, entries = load_embv1(embeddings_path)
    for key in keys:
        if key not in entries:
            raise VerifyError(f"missing key: {key!r}")
    extra = [k for k in entries if k not in set(keys)]
    if extra:
        raise VerifyError(f"unexpected key not in list: {extra[0]!r}")
    for key, vec in entries.items():
        if vec.shape != (dim,):
            raise VerifyError(f"key {key!r}: dimension {vec.shape} != ({dim},)")
        if not np.all(np.isfinite(vec)):
            bad = int(np.flatnonzero(~np.isfinite(vec))[0])
            raise VerifyError(f"key {key!r}: non-finite component at index {bad}")
    return {"count": len(entries), "dim": dim}
