"""Interactive abstract state machines with persistent queries and late
replies: parser, evaluator, static origin analysis, and simulation runtime."""

from .histories import History, Query, issued, pending, is_coherent, is_complete, is_attainable
from .structures import Element, FALSE, Label, Location, StateStruct, TRUE, UNDEF, Update
from .syntax import Program, desugar_reply_locations, validate_program

__all__ = [
    "Element", "FALSE", "History", "Label", "Location", "Program", "Query",
    "StateStruct", "TRUE", "UNDEF", "Update", "desugar_reply_locations",
    "is_attainable", "is_coherent", "is_complete", "issued", "pending",
    "validate_program",
]
