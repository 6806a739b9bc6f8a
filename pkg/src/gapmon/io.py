"""Reading and writing model bundles (JSON) and trace files (line text).

Floats go through ``repr`` in :mod:`json`, which is the shortest decimal
that round-trips, so save/load reproduces every matrix bit-exactly.
"""

from __future__ import annotations

import json
import os
import re

import numpy as np

from .errors import ParseError
from .model import (
    Alphabet,
    Dfsm,
    Event,
    Gap,
    GapDist,
    Hmm,
    ModelBundle,
    Peek,
    PeekModel,
    Verdict,
    validate_bundle,
)


def _locate(text, token, start_key=None):
    """Best-effort (line, column) of the quoted ``token`` in ``text``,
    searching after ``start_key`` when given."""
    if text is None:
        return None, None
    offset = 0
    if start_key is not None:
        k = text.find(f'"{start_key}"')
        offset = max(k, 0)
    pos = text.find(json.dumps(token), offset)
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


class _Reader:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def fail(self, message, token=None, key=None):
        line, col = _locate(self.text, token, key) if token is not None else (None, None)
        raise ParseError(message, line, col, self.source)

    def get(self, obj, key, kind, where):
        if not isinstance(obj, dict) or key not in obj:
            self.fail(f"{where}: missing key {key!r}", token=key)
        value = obj[key]
        if kind is not None and not isinstance(value, kind):
            self.fail(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}", token=key)
        return value

    def matrix(self, value, where, ndim):
        try:
            arr = np.array(value, dtype=np.float64)
        except (TypeError, ValueError):
            self.fail(f"{where}: not a numeric array")
        if arr.ndim != ndim:
            self.fail(f"{where}: expected a {ndim}-d array")
        return arr


def bundle_from_dict(d, text=None, source=None):
    """Build and validate a ModelBundle from its JSON document form."""
    r = _Reader(text, source)
    if not isinstance(d, dict):
        r.fail("top level must be a JSON object")
    symbols = r.get(d, "alphabet", list, "model")
    if not all(isinstance(s, str) for s in symbols):
        r.fail("alphabet: symbols must be strings", token="alphabet")
    alphabet = Alphabet(symbols)
    sym_set = set(symbols)

    h = r.get(d, "hmm", dict, "model")
    hmm = Hmm(
        r.matrix(r.get(h, "pi", list, "hmm"), "hmm.pi", 1),
        r.matrix(r.get(h, "A", list, "hmm"), "hmm.A", 2),
        r.matrix(r.get(h, "B", list, "hmm"), "hmm.B", 2),
        alphabet,
    )

    f = r.get(d, "dfsm", dict, "model")
    states = r.get(f, "states", list, "dfsm")
    index = {s: i for i, s in enumerate(states)}
    rows = r.get(f, "delta", list, "dfsm")
    if len(rows) != len(states):
        r.fail(f"dfsm.delta: {len(rows)} rows for {len(states)} states", token="delta")
    delta = np.full((len(states), len(symbols)), -1, dtype=np.int64)
    for m, row in enumerate(rows):
        if not isinstance(row, dict):
            r.fail(f"dfsm.delta[{m}]: expected an object symbol -> state", token="delta")
        for sym, dst in row.items():
            if sym not in sym_set:
                r.fail(f"dfsm.delta[{m}]: unknown symbol {sym!r}", token=sym, key="delta")
            if dst not in index:
                r.fail(f"dfsm.delta[{m}][{sym}]: unknown state {dst!r}", token=dst, key="delta")
            delta[m, alphabet.index(sym)] = index[dst]
    initial = r.get(f, "initial", None, "dfsm")
    if isinstance(initial, str):
        if initial not in index:
            r.fail(f"dfsm.initial: unknown state {initial!r}", token=initial, key="initial")
        initial = index[initial]
    elif not isinstance(initial, int) or isinstance(initial, bool):
        r.fail("dfsm.initial: expected a state name or index", token="initial")
    verdicts = r.get(f, "verdict", list, "dfsm")
    try:
        verdicts = [Verdict(v) for v in verdicts]
    except ValueError as exc:
        r.fail(f"dfsm.verdict: {exc}", token="verdict")
    absorbing = f.get("absorbing_violations", False)
    if not isinstance(absorbing, bool):
        r.fail("dfsm.absorbing_violations: expected a boolean", token="absorbing_violations")
    dfsm = Dfsm(states, alphabet, delta, initial, verdicts, absorbing)

    peek = None
    if d.get("peek") is not None:
        p = r.get(d, "peek", dict, "model")
        peek = PeekModel(r.get(p, "values", list, "peek"), r.matrix(r.get(p, "C", list, "peek"), "peek.C", 2))

    gaps = {}
    for i, g in enumerate(d.get("gap_dists", [])):
        gid = r.get(g, "id", str, f"gap_dists[{i}]")
        if "geometric" in g:
            p = g["geometric"]
            if not isinstance(p, (int, float)) or isinstance(p, bool):
                r.fail(f"gap_dists[{i}].geometric: expected a number", token=gid)
            gaps[gid] = GapDist.geometric(gid, float(p))
            continue
        mass = r.get(g, "mass", list, f"gap_dists[{i}]")
        pairs = {}
        for pair in mass:
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not isinstance(pair[0], int)
                or isinstance(pair[0], bool)
                or not isinstance(pair[1], (int, float))
            ):
                r.fail(f"gap_dists[{i}].mass: entries must be [length, prob]", token=gid)
            if pair[0] in pairs:
                r.fail(f"gap_dists[{i}].mass: duplicate length {pair[0]}", token=gid)
            pairs[pair[0]] = float(pair[1])
        gaps[gid] = GapDist(gid, pairs)

    bundle = ModelBundle(hmm, dfsm, peek, gaps)
    validate_bundle(bundle)
    return bundle


def loads_model(text, source=None):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno, source) from None
    return bundle_from_dict(d, text, source)


def load_model(path):
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read model: {exc.strerror}", source=path) from None
    return loads_model(text, path)


def dumps_model(bundle):
    return json.dumps(bundle.to_dict(), indent=2) + "\n"


def save_model(bundle, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(bundle))


_KINDS = {"evt": Event, "gap": Gap, "peek": Peek}
_TOKEN = re.compile(r"\S+")


def parse_trace(text, source=None, events_only=False):
    """Parse the line-oriented trace format into a list of trace items."""
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]
        if not tokens:
            continue
        (kind, col), *rest = tokens
        if kind not in _KINDS:
            raise ParseError(f"unknown item kind {kind!r}", lineno, col, source)
        if len(rest) != 1:
            raise ParseError(f"'{kind}' takes exactly one argument", lineno, col, source)
        if events_only and kind != "evt":
            raise ParseError("training traces may only contain 'evt' lines", lineno, col, source)
        items.append(_KINDS[kind](rest[0][0]))
    return items


def load_trace(path, events_only=False):
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read trace: {exc.strerror}", source=path) from None
    return parse_trace(text, path, events_only)


def dumps_trace(items):
    return "".join(f"{item}\n" for item in items)


def save_trace(items, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_trace(items))
