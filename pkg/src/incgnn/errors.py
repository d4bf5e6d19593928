"""Exception hierarchy shared by every module."""

from __future__ import annotations


class IncGNNError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(IncGNNError):
    pass


class DuplicateEdge(GraphError):
    pass


class MissingEdge(GraphError):
    pass


class DuplicateVertex(GraphError):
    pass


class MissingVertex(GraphError):
    pass


class EmptyGraph(GraphError):
    pass


class DimensionMismatch(IncGNNError):
    pass


class MismatchedDims(DimensionMismatch):
    """Old/new vectors handed to a delta kernel disagree in length."""


class MixedAggregator(IncGNNError):
    pass


class NegativeCount(IncGNNError):
    """A mean summary count dropped below zero: graph and summaries are out of sync."""


class ParseError(IncGNNError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InfeasibleConfig(IncGNNError):
    pass


class BadPartitionFile(IncGNNError):
    pass


class UnmappedVertex(IncGNNError):
    pass


class ProtocolError(IncGNNError):
    """Workers disagree on hop counters or a message arrived outside its barrier."""


class BatchError(IncGNNError):
    """An event inside a batch failed validation; nothing was applied."""

    def __init__(self, index: int, cause: IncGNNError):
        self.index = index
        self.cause = cause
        super().__init__(f"event #{index} rejected: {cause}")
