"""Offline embedding exporter.

Reads a key list (kind-prefixed texts, one per line), encodes each key's
text with a sentence-embedding model, and writes the EMBV1 hex format
consumed by the conversation-similarity toolkit. The file boundary is
bit-exact: vectors are truncated to 32-bit floats at export time.
"""

__version__ = "0.1.0"

from .embfile import load_embv1, read_key_list, write_embv1
from .encoder import resolve_encoder
from .export import ExportJob, export, verify

__all__ = [
    "__version__",
    "ExportJob",
    "export",
    "verify",
    "resolve_encoder",
    "load_embv1",
    "read_key_list",
    "write_embv1",
]
