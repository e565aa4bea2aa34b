class ExporterError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExporterError):
    """The model identifier could not be resolved to an encoder."""


class EncodeError(ExporterError):
    """Encoding failed; carries the index of the offending key."""

    def __init__(self, index: int, message: str):
        super().__init__(f"key {index}: {message}")
        self.index = index


class KeyListError(ExporterError):
    """The key list is malformed (bad prefix, duplicates, empty lines)."""


class VerifyError(ExporterError):
    """An exported file failed validation; message names the first violation."""
