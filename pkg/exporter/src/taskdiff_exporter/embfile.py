"""EMBV1 file format and key-list parsing.

Layout: a header line ``EMBV1 <dim> <count>``, then per entry one line
``<key-length-in-bytes> <key>`` followed by one line holding exactly
``dim`` little-endian float32 values as lowercase hex. Hex (not decimal)
keeps files byte-reproducible across languages and platforms.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import KeyListError, VerifyError

MAGIC = "EMBV1"
KEY_PREFIXES = ("utt:", "intent:", "slot:")


def read_key_list(path: str | Path) -> list[str]:
    """Ordered, validated keys: prefixed, non-duplicate, newline-delimited."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    keys: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        if not line.startswith(KEY_PREFIXES):
            raise KeyListError(
                f"line {lineno}: key lacks a kind prefix {KEY_PREFIXES}: {line!r}"
            )
        if line in seen:
            raise KeyListError(f"line {lineno}: duplicate key {line!r}")
        seen.add(line)
        keys.append(line)
    return keys


def key_text(key: str) -> str:
    """The text payload an encoder sees (prefix stripped)."""
    return key.split(":", 1)[1]


def write_embv1(path: str | Path, keys: list[str], vectors: np.ndarray) -> None:
    """Write vectors (already float32) keyed in the given order."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(keys):
        raise ValueError(
            f"vector block {vectors.shape} does not match {len(keys)} keys"
        )
    dim = vectors.shape[1]
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {dim} {len(keys)}\n".encode())
        for key, vec in zip(keys, vectors):
            kb = key.encode("utf-8")
            fh.write(b"%d " % len(kb) + kb + b"\n")
            fh.write(vec.tobytes().hex().encode("ascii") + b"\n")


def load_embv1(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """Parse an EMBV1 file into (dim, ordered key->float32 vector map)."""
    lines = Path(path).read_bytes().split(b"\n")
    header = lines[0].decode("utf-8", errors="replace").split()
    if len(header) != 3 or header[0] != MAGIC:
        raise VerifyError("missing or malformed EMBV1 header")
    dim = int(header[1])
    count = int(header[2])
    if dim <= 0:
        raise VerifyError(f"non-positive dimension {dim}")
    entries: dict[str, np.ndarray] = {}
    lineno = 1
    for n in range(count):
        if lineno + 1 >= len(lines):
            raise VerifyError(f"truncated file: {n} of {count} entries present")
        key_line = lines[lineno]
        vec_line = lines[lineno + 1]
        lineno += 2
        length_bytes, sep, key_bytes = key_line.partition(b" ")
        if not sep or len(key_bytes) != int(length_bytes):
            raise VerifyError(f"entry {n}: malformed key line")
        key = key_bytes.decode("utf-8")
        if key in entries:
            raise VerifyError(f"entry {n}: duplicate key {key!r}")
        if len(vec_line) != dim * 8:
            raise VerifyError(
                f"entry {n} ({key!r}): {len(vec_line) // 8} floats, expected {dim}"
            )
        entries[key] = np.frombuffer(bytes.fromhex(vec_line.decode("ascii")),
                                     dtype="<f4")
    return dim, entries
