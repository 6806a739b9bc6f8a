"""Input coercion for the estimator API."""

from __future__ import annotations

import os

from .errors import InvalidArgument
from .io import load_model
from .model import Event, Gap, ModelBundle, Peek, parse_item, validate_bundle


def check_bundle(model):
    """Accept a ModelBundle or a path to a model file; return a validated bundle."""
    if isinstance(model, (str, os.PathLike)):
        return load_model(model)
    if not isinstance(model, ModelBundle):
        raise InvalidArgument(f"expected a ModelBundle or a model path, got {type(model).__name__}")
    validate_bundle(model)
    return model


def check_item(item):
    if isinstance(item, (Event, Gap, Peek)):
        return item
    if isinstance(item, str):
        return parse_item(item) if " " in item.strip() else Event(item)
    raise InvalidArgument(f"cannot interpret {item!r} as a trace item")


def check_trace(trace, bundle=None):
    """Coerce one trace. Items may be TraceItems, ``"evt a"``-style strings
    or bare symbols (read as events)."""
    if isinstance(trace, str):
        raise InvalidArgument("a trace is a sequence of items, not a single string")
    items = [check_item(i) for i in trace]
    if bundle is not None:
        for item in items:
            bundle.check_item(item)
    return items


def check_traces(traces, bundle=None):
    """Coerce a collection of traces (``X`` in the estimator API)."""
    if isinstance(traces, (str, bytes)) or not hasattr(traces, "__iter__"):
        raise InvalidArgument("expected a sequence of traces")
    return [check_trace(t, bundle) for t in traces]


def check_symbol_traces(traces):
    """Gap-free training traces: sequences of symbols (or whitespace-separated strings)."""
    out = []
    for t in traces:
        seq = t.split() if isinstance(t, str) else list(t)
        for s in seq:
            if isinstance(s, (Gap, Peek)):
                raise InvalidArgument("training traces must be gap-free event sequences")
        out.append([s.symbol if isinstance(s, Event) else s for s in seq])
    return out
