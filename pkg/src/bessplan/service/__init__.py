"""HTTP service wrapping the solvers, plus the wire models it shares with
the command-line client.

``create_app`` is imported lazily so that in-process users of the handlers
and models never pay for (or depend on) the web stack.
"""
from .models import (
    AusRequest,
    AusResponse,
    CandidateModel,
    ConfigModel,
    DispatchRequest,
    DispatchResponse,
    NetworkModel,
    PtdfRequest,
    PtdfResponse,
    ScheduleRequest,
    ScheduleResponse,
    SearchRequest,
    SearchResponse,
)

__all__ = [
    "AusRequest",
    "AusResponse",
    "CandidateModel",
    "ConfigModel",
    "DispatchRequest",
    "DispatchResponse",
    "NetworkModel",
    "PtdfRequest",
    "PtdfResponse",
    "ScheduleRequest",
    "ScheduleResponse",
    "SearchRequest",
    "SearchResponse",
    "create_app",
]


def __getattr__(name: str):
    if name == "create_app":
        from .app import create_app

        return create_app
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
