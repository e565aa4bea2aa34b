"""Exception types shared across the package.

The CLI maps these onto exit codes: data errors (bad files, unknown
names, missing embeddings) exit 3, numerical failures exit 4.
"""


class TaskDiffError(Exception):
    """Base class for all package errors."""


class ParseError(TaskDiffError):
    """A file could not be parsed; carries a file/record locator."""

    def __init__(self, message: str, *, path: str | None = None, record: int | None = None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{record}" if record is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.record = record


class SchemaError(TaskDiffError):
    """Data references an unknown intent/slot or violates a span invariant."""


class EmptyCorpus(TaskDiffError):
    """A corpus file parsed but contained no conversations."""


class DimensionMismatch(TaskDiffError):
    """Vectors of incompatible dimensions were combined."""


class DuplicateKey(TaskDiffError):
    """An embedding file declared the same key twice."""


class MissingEmbedding(TaskDiffError):
    """No vector stored for a required key; names the key exactly."""

    def __init__(self, key: str, context: str = ""):
        message = f"no embedding for key: {key}"
        if context:
            message += f" ({context})"
        super().__init__(message)
        self.key = key


class EmptySupport(TaskDiffError):
    """A component distribution has no support points."""

    def __init__(self, component: str, detail: str = ""):
        msg = f"empty support for component '{component}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.component = component


class NumericalFailure(TaskDiffError):
    """An optimization failed (infeasible or non-finite inputs)."""


class NotConverged(NumericalFailure):
    """Sinkhorn stopped at the iteration budget above tolerance."""

    def __init__(self, violation: float, iterations: int):
        super().__init__(
            f"sinkhorn did not converge after {iterations} iterations "
            f"(marginal violation {violation:.3e})"
        )
        self.violation = violation
        self.iterations = iterations


class InsufficientData(TaskDiffError):
    """Not enough labeled data for the requested evaluation protocol."""


class DegenerateMatrix(TaskDiffError):
    """A distance matrix cannot support the requested clustering."""
