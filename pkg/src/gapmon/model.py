"""Core domain types: alphabets, the HMM program model, the monitor DFSM,
gap-length distributions, the peek channel and trace items.

Every matrix is stored as a read-only float64 (or int64) numpy array so
the types can be shared freely between estimators.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidModel, UnknownLabel

PROB_TOL = 1e-9


class Verdict(str, enum.Enum):
    ACCEPTING = "Accepting"
    PENDING = "Pending"
    VIOLATED = "Violated"

    def __str__(self):
        return self.value


VERDICTS = (Verdict.ACCEPTING, Verdict.PENDING, Verdict.VIOLATED)


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @cached_property
    def _lookup(self):
        return {s: i for i, s in enumerate(self.symbols)}

    def index(self, symbol):
        try:
            return self._lookup[symbol]
        except KeyError:
            raise UnknownLabel(f"unknown symbol {symbol!r}") from None

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._lookup


@dataclass(frozen=True, eq=False)
class Hmm:
    """Hidden-state program model.

    ``pi`` is the distribution of a silent time-0 state; every later state
    is entered through ``A`` and emits one symbol through its ``B`` row.
    """

    pi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))
        if not isinstance(self.alphabet, Alphabet):
            object.__setattr__(self, "alphabet", Alphabet(self.alphabet))

    @property
    def n(self):
        return len(self.pi)

    def __eq__(self, other):
        if not isinstance(other, Hmm):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and np.array_equal(self.pi, other.pi)
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.B, other.B)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PeekModel:
    values: tuple[str, ...]
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "C", _frozen(self.C))

    @cached_property
    def _lookup(self):
        return {v: i for i, v in enumerate(self.values)}

    def index(self, value):
        try:
            return self._lookup[value]
        except KeyError:
            raise UnknownLabel(f"unknown peek value {value!r}") from None

    def __eq__(self, other):
        if not isinstance(other, PeekModel):
            return NotImplemented
        return self.values == other.values and np.array_equal(self.C, other.C)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dfsm:
    """Deterministic monitor. ``delta[m, o]`` is the successor of state ``m``
    on symbol index ``o``; ``-1`` marks a missing cell (rejected by
    :func:`validate_model`)."""

    states: tuple[str, ...]
    alphabet: Alphabet
    delta: np.ndarray
    initial: int
    verdict: tuple[Verdict, ...]
    absorbing_violations: bool = False

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not isinstance(self.alphabet, Alphabet):
            object.__setattr__(self, "alphabet", Alphabet(self.alphabet))
        object.__setattr__(self, "delta", _frozen(self.delta, dtype=np.int64))
        object.__setattr__(self, "verdict", tuple(Verdict(v) for v in self.verdict))
        object.__setattr__(self, "initial", int(self.initial))
        object.__setattr__(self, "absorbing_violations", bool(self.absorbing_violations))

    @property
    def n_states(self):
        return len(self.states)

    def state_index(self, name):
        try:
            return self.states.index(name)
        except ValueError:
            raise UnknownLabel(f"unknown monitor state {name!r}") from None

    @cached_property
    def transfer(self):
        """0/1 tensor T[o, m, m'] = 1 iff delta(m, o) = m'."""
        q, k = self.delta.shape
        t = np.zeros((k, q, q))
        for m in range(q):
            for o in range(k):
                t[o, m, self.delta[m, o]] = 1.0
        t.setflags(write=False)
        return t

    @cached_property
    def verdict_matrix(self):
        """|Q| x 3 indicator of each state's verdict, columns in VERDICTS order."""
        v = np.zeros((self.n_states, len(VERDICTS)))
        for m, label in enumerate(self.verdict):
            v[m, VERDICTS.index(label)] = 1.0
        v.setflags(write=False)
        return v

    def __eq__(self, other):
        if not isinstance(other, Dfsm):
            return NotImplemented
        return (
            self.states == other.states
            and self.alphabet == other.alphabet
            and np.array_equal(self.delta, other.delta)
            and self.initial == other.initial
            and self.verdict == other.verdict
            and self.absorbing_violations == other.absorbing_violations
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GapDist:
    """Finite-support distribution over the number of missed events."""

    id: str
    mass: Mapping[int, float]

    def __post_init__(self):
        items = sorted((int(k), float(v)) for k, v in dict(self.mass).items())
        object.__setattr__(self, "mass", dict(items))

    @classmethod
    def point(cls, id, length):
        return cls(id, {int(length): 1.0})

    @classmethod
    def geometric(cls, id, p, tail=1e-9):
        """mass(l) = p (1-p)^l for l >= 0, truncated at the smallest L with
        cumulative mass >= 1 - tail, then renormalized."""
        if not 0.0 < p <= 1.0:
            raise InvalidModel(f"gaps[{id}].geometric", "p must lie in (0, 1]")
        mass = {}
        total = 0.0
        length = 0
        while True:
            m = p * (1.0 - p) ** length
            mass[length] = m
            total += m
            if total >= 1.0 - tail:
                break
            length += 1
        return cls(id, {k: v / total for k, v in mass.items()})

    @property
    def lengths(self):
        return np.fromiter(self.mass.keys(), dtype=np.int64, count=len(self.mass))

    @property
    def probs(self):
        return np.fromiter(self.mass.values(), dtype=np.float64, count=len(self.mass))

    @property
    def max_length(self):
        return max(self.mass) if self.mass else 0

    def __eq__(self, other):
        if not isinstance(other, GapDist):
            return NotImplemented
        return self.id == other.id and self.mass == other.mass

    __hash__ = None


# Trace items double as the input labels of the precomputed table, so they
# are hashable and order-comparable through their (kind, token) pair.


@dataclass(frozen=True)
class Event:
    symbol: str
    kind = "evt"

    @property
    def token(self):
        return self.symbol

    def __str__(self):
        return f"evt {self.symbol}"


@dataclass(frozen=True)
class Gap:
    dist_id: str
    kind = "gap"

    @property
    def token(self):
        return self.dist_id

    def __str__(self):
        return f"gap {self.dist_id}"


@dataclass(frozen=True)
class Peek:
    value: str
    kind = "peek"

    @property
    def token(self):
        return self.value

    def __str__(self):
        return f"peek {self.value}"


TraceItem = Event | Gap | Peek

_ITEM_KINDS = {"evt": Event, "gap": Gap, "peek": Peek}


def parse_item(text):
    """Parse ``"evt a"``/``"gap g1"``/``"peek p0"`` into a trace item."""
    parts = text.split()
    if len(parts) != 2 or parts[0] not in _ITEM_KINDS:
        raise ValueError(f"malformed trace item {text!r}")
    return _ITEM_KINDS[parts[0]](parts[1])


@dataclass(frozen=True, eq=False)
class ModelBundle:
    hmm: Hmm
    dfsm: Dfsm
    peek: PeekModel | None = None
    gaps: Mapping[str, GapDist] = field(default_factory=dict)

    def __post_init__(self):
        gaps = self.gaps
        if not isinstance(gaps, Mapping):
            gaps = {g.id: g for g in gaps}
        object.__setattr__(self, "gaps", dict(gaps))

    @property
    def alphabet(self):
        return self.hmm.alphabet

    def gap(self, dist_id):
        try:
            return self.gaps[dist_id]
        except KeyError:
            raise UnknownLabel(f"unknown gap distribution {dist_id!r}") from None

    def labels(self):
        """Every input label the bundle can interpret, in canonical order:
        symbols, then gap ids, then peek values."""
        out = [Event(s) for s in self.alphabet]
        out += [Gap(g) for g in self.gaps]
        if self.peek is not None:
            out += [Peek(v) for v in self.peek.values]
        return out

    def check_item(self, item):
        """Raise UnknownLabel unless ``item`` resolves against this bundle."""
        if isinstance(item, Event):
            self.alphabet.index(item.symbol)
        elif isinstance(item, Gap):
            self.gap(item.dist_id)
        elif isinstance(item, Peek):
            if self.peek is None:
                raise UnknownLabel("trace contains a peek but the model has no peek channel")
            self.peek.index(item.value)
        else:
            raise TypeError(f"not a trace item: {item!r}")

    def with_gaps(self, extra):
        gaps = dict(self.gaps)
        for g in extra.values() if isinstance(extra, Mapping) else extra:
            gaps[g.id] = g
        return ModelBundle(self.hmm, self.dfsm, self.peek, gaps)

    def to_dict(self):
        d = {
            "alphabet": list(self.alphabet.symbols),
            "hmm": {
                "pi": self.hmm.pi.tolist(),
                "A": self.hmm.A.tolist(),
                "B": self.hmm.B.tolist(),
            },
            "dfsm": {
                "states": list(self.dfsm.states),
                "delta": [
                    {s: self.dfsm.states[t] for s, t in zip(self.alphabet.symbols, row) if t >= 0}
                    for row in self.dfsm.delta.tolist()
                ],
                "initial": self.dfsm.states[self.dfsm.initial],
                "verdict": [v.value for v in self.dfsm.verdict],
                "absorbing_violations": self.dfsm.absorbing_violations,
            },
            "gap_dists": [
                {"id": g.id, "mass": [[k, v] for k, v in g.mass.items()]}
                for g in self.gaps.values()
            ],
        }
        if self.peek is not None:
            d["peek"] = {"values": list(self.peek.values), "C": self.peek.C.tolist()}
        return d

    def digest(self):
        """sha256 over the canonical JSON form; identifies the model a
        precomputed table was built from."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.hmm == other.hmm
            and self.dfsm == other.dfsm
            and self.peek == other.peek
            and self.gaps == other.gaps
        )

    __hash__ = None


def _check_stochastic(vec, locator):
    vec = np.asarray(vec, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise InvalidModel(locator, "non-finite entry")
    if np.any(vec < 0.0) or np.any(vec > 1.0):
        raise InvalidModel(locator, "entry outside [0, 1]")
    if abs(vec.sum() - 1.0) > PROB_TOL:
        raise InvalidModel(locator, f"sums to {vec.sum()!r}, expected 1")


def _check_matrix(mat, rows, cols, name):
    if mat.ndim != 2 or mat.shape != (rows, cols):
        raise InvalidModel(name, f"shape {mat.shape}, expected ({rows}, {cols})")
    for i, row in enumerate(mat):
        _check_stochastic(row, f"{name}.row[{i}]")


def validate_model(hmm, dfsm, peek=None, gaps=()):
    """Check every invariant of the model components, raising InvalidModel
    at the first violation."""
    symbols = hmm.alphabet.symbols
    if not symbols:
        raise InvalidModel("alphabet", "empty")
    if len(set(symbols)) != len(symbols):
        raise InvalidModel("alphabet", "duplicate symbols")

    n = hmm.pi.shape[0] if hmm.pi.ndim == 1 else 0
    if n == 0:
        raise InvalidModel("hmm.pi", "must be a non-empty vector")
    _check_stochastic(hmm.pi, "hmm.pi")
    _check_matrix(hmm.A, n, n, "hmm.A")
    _check_matrix(hmm.B, n, len(symbols), "hmm.B")

    if peek is not None:
        if not peek.values or len(set(peek.values)) != len(peek.values):
            raise InvalidModel("peek.values", "empty or duplicate values")
        _check_matrix(peek.C, n, len(peek.values), "peek.C")

    if dfsm.alphabet != hmm.alphabet:
        raise InvalidModel("dfsm.alphabet", "differs from the HMM alphabet")
    q = len(dfsm.states)
    if q == 0 or len(set(dfsm.states)) != q:
        raise InvalidModel("dfsm.states", "empty or duplicate states")
    if dfsm.delta.shape != (q, len(symbols)):
        raise InvalidModel("dfsm.delta", f"shape {dfsm.delta.shape}, expected ({q}, {len(symbols)})")
    for m in range(q):
        for o, sym in enumerate(symbols):
            if not 0 <= dfsm.delta[m, o] < q:
                raise InvalidModel(f"dfsm.delta[{m}][{sym}]", "missing or out-of-range target")
    if not 0 <= dfsm.initial < q:
        raise InvalidModel("dfsm.initial", "out of range")
    if len(dfsm.verdict) != q:
        raise InvalidModel("dfsm.verdict", f"{len(dfsm.verdict)} labels for {q} states")
    if dfsm.absorbing_violations:
        for m in range(q):
            if dfsm.verdict[m] is not Verdict.VIOLATED:
                continue
            for o, sym in enumerate(symbols):
                if dfsm.verdict[dfsm.delta[m, o]] is not Verdict.VIOLATED:
                    raise InvalidModel(f"dfsm.delta[{m}][{sym}]", "violation is not absorbing")

    seen = set()
    for g in gaps.values() if isinstance(gaps, Mapping) else gaps:
        loc = f"gaps[{g.id}]"
        if g.id in seen:
            raise InvalidModel(loc, "duplicate id")
        seen.add(g.id)
        if not g.mass:
            raise InvalidModel(f"{loc}.mass", "empty support")
        for length, p in g.mass.items():
            if length < 0:
                raise InvalidModel(f"{loc}.mass[{length}]", "negative length")
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                raise InvalidModel(f"{loc}.mass[{length}]", "probability outside [0, 1]")
        total = math.fsum(g.mass.values())
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidModel(f"{loc}.mass", f"sums to {total!r}, expected 1")


def validate_bundle(bundle):
    validate_model(bundle.hmm, bundle.dfsm, bundle.peek, bundle.gaps)


def dfsm_step(dfsm, m, o):
    """Successor of monitor state ``m`` on symbol ``o`` (index or name)."""
    if isinstance(o, str):
        o = dfsm.alphabet.index(o)
    return int(dfsm.delta[m, o])


def run_dfsm(dfsm, events: Iterable[str]):
    """Fold a gap-free symbol sequence through the monitor.

    Returns ``(final_state_index, verdict)``.
    """
    if isinstance(events, str):
        events = events.split()
    m = dfsm.initial
    for sym in events:
        m = dfsm_step(dfsm, m, sym)
    return m, dfsm.verdict[m]


def verdict_probabilities(belief, dfsm) -> dict[Verdict, float]:
    """Probability of each verdict class under a joint (HMM x monitor) belief."""
    per_state = np.asarray(belief).sum(axis=0)
    totals = per_state @ dfsm.verdict_matrix
    return {label: float(p) for label, p in zip(VERDICTS, totals)}


def verdict_vector(probs: Mapping[Verdict, float]) -> np.ndarray:
    return np.array([probs.get(v, 0.0) for v in VERDICTS])


def make_dfsm(states: Sequence[str], alphabet, delta: Mapping, initial, verdict, absorbing_violations=False):
    """Build a Dfsm from names: ``delta`` maps (state, symbol) -> state."""
    alphabet = alphabet if isinstance(alphabet, Alphabet) else Alphabet(alphabet)
    states = tuple(states)
    table = np.full((len(states), len(alphabet)), -1, dtype=np.int64)
    for (src, sym), dst in delta.items():
        table[states.index(src), alphabet.index(sym)] = states.index(dst)
    if isinstance(initial, str):
        initial = states.index(initial)
    return Dfsm(states, alphabet, table, initial, verdict, absorbing_violations)
