"""Reference models and random instance generators.

``response_monitor`` is the two-state monitor for "every a is eventually
followed by a c"; ``m1_bundle`` pairs it with a two-state HMM in which
state 0 always emits ``a`` and state 1 always emits ``c``.
"""

from __future__ import annotations

import numpy as np

from .model import Alphabet, Dfsm, Event, Gap, GapDist, Hmm, ModelBundle, Peek, PeekModel, Verdict, make_dfsm


def response_monitor(symbols=("a", "b", "c", "d")):
    """s0 = no open obligation (Accepting), s1 = obligation pending."""
    alphabet = Alphabet(symbols)
    delta = {}
    for sym in alphabet:
        delta["s0", sym] = "s1" if sym == "a" else "s0"
        delta["s1", sym] = "s0" if sym == "c" else "s1"
    return make_dfsm(["s0", "s1"], alphabet, delta, "s0", [Verdict.ACCEPTING, Verdict.PENDING])


def m1_bundle():
    alphabet = Alphabet(("a", "c"))
    hmm = Hmm([1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]], alphabet)
    peek = PeekModel(("p0", "p1"), [[1.0, 0.0], [0.0, 1.0]])
    return ModelBundle(hmm, response_monitor(("a", "c")), peek, {"g1": GapDist.point("g1", 1)})


def abcd_bundle():
    """Four-symbol variant: x0 mostly emits a, x1 mostly c, with a little
    mass on b and d so the classic complete trace is possible."""
    alphabet = Alphabet(("a", "b", "c", "d"))
    hmm = Hmm(
        [1.0, 0.0],
        [[0.5, 0.5], [0.5, 0.5]],
        [[0.8, 0.1, 0.0, 0.1], [0.0, 0.1, 0.8, 0.1]],
        alphabet,
    )
    gaps = {"g1": GapDist.point("g1", 1), "g12": GapDist("g12", {1: 0.5, 2: 0.5})}
    peek = PeekModel(("p0", "p1"), [[0.9, 0.1], [0.1, 0.9]])
    return ModelBundle(hmm, response_monitor(), peek, gaps)


def _stochastic(rng, rows, cols, concentration=1.0):
    return rng.dirichlet(np.full(cols, concentration), size=rows)


def random_dfsm(rng, alphabet, q, absorbing=False):
    delta = rng.integers(0, q, size=(q, len(alphabet)))
    labels = [Verdict.ACCEPTING, Verdict.PENDING, Verdict.VIOLATED]
    verdict = [labels[i] for i in rng.integers(0, 3, size=q)]
    if absorbing:
        for m in range(q):
            if verdict[m] is Verdict.VIOLATED:
                delta[m, :] = m
    return Dfsm([f"q{i}" for i in range(q)], alphabet, delta, 0, verdict, absorbing)


def random_bundle(rng, n, q, k, peek_values=0, gaps=None, concentration=1.0):
    """Random model with dense Dirichlet rows. ``gaps`` is a mapping
    id -> {length: prob}; by default one point gap of length 1."""
    alphabet = Alphabet(tuple("abcdefghijklmnopqrstuvwxyz"[:k]))
    hmm = Hmm(
        _stochastic(rng, 1, n, concentration)[0],
        _stochastic(rng, n, n, concentration),
        _stochastic(rng, n, k, concentration),
        alphabet,
    )
    peek = None
    if peek_values:
        peek = PeekModel(tuple(f"p{i}" for i in range(peek_values)), _stochastic(rng, n, peek_values))
    dists = {gid: GapDist(gid, mass) for gid, mass in (gaps or {"g1": {1: 1.0}}).items()}
    return ModelBundle(hmm, random_dfsm(rng, alphabet, q), peek, dists)


def random_trace(rng, bundle, length, p_gap=0.2, p_peek=0.5):
    """Random item sequence over the bundle's labels (not sampled from the
    model, so every label gets exercised)."""
    symbols = bundle.alphabet.symbols
    gap_ids = list(bundle.gaps)
    items = []
    for _ in range(length):
        if gap_ids and rng.random() < p_gap:
            items.append(Gap(gap_ids[rng.integers(len(gap_ids))]))
            if bundle.peek is not None and rng.random() < p_peek:
                items.append(Peek(bundle.peek.values[rng.integers(len(bundle.peek.values))]))
        else:
            items.append(Event(symbols[rng.integers(len(symbols))]))
    return items


def bench_bundle(seed=7):
    """16 hidden states, 8 symbols, 4 monitor states, one gap dist and a
    4-valued peek channel."""
    rng = np.random.default_rng(seed)
    return random_bundle(
        rng, 16, 4, 8, peek_values=4, gaps={"g": {1: 0.25, 2: 0.25, 3: 0.25, 4: 0.25}}, concentration=0.3
    )
