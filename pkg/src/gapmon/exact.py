"""Exact state estimation over the joint (HMM state, monitor state) space.

A belief is an ``n x |Q|`` array ``alpha`` with ``alpha[x, m]`` the
posterior probability that the program is in hidden state ``x`` while the
monitor is in state ``m``. Events run the forward recurrence on the HMM
and drive the monitor; gaps marginalize over the unseen symbols; peeks
reweight by the peek channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImpossibleObservation
from .model import Event, Gap, Peek, verdict_probabilities


def init_belief(hmm, dfsm):
    alpha = np.zeros((hmm.n, dfsm.n_states))
    alpha[:, dfsm.initial] = hmm.pi
    return alpha


def observe_event(belief, hmm, dfsm, o):
    """Condition on one observed symbol. Returns ``(belief, likelihood)``."""
    if isinstance(o, str):
        o = hmm.alphabet.index(o)
    # u[x', m'] = sum_{x, m: delta(m,o)=m'} alpha[x,m] A[x,x'] B[x',o]
    u = ((hmm.A.T @ belief) * hmm.B[:, o, None]) @ dfsm.transfer[o]
    total = u.sum()
    if not total > 0.0:
        raise ImpossibleObservation(f"event {hmm.alphabet.symbols[o]!r} has probability 0 under the model")
    return u / total, float(total)


def gap_step(belief, hmm, dfsm):
    """Advance through one missed event, summing over the symbol it emitted."""
    n, q = belief.shape
    k = len(hmm.alphabet)
    moved = hmm.A.T @ belief
    # per-symbol emission weighting, then one matmul routes every (symbol, m) to delta(m, symbol)
    split = (hmm.B[:, :, None] * moved[:, None, :]).reshape(n, k * q)
    return split @ dfsm.transfer.reshape(k * q, q)


def observe_gap(belief, hmm, dfsm, gap):
    """Mix ``gap_step^l(belief)`` over the gap-length distribution."""
    out = np.zeros_like(belief)
    current = belief
    done = 0
    for length, p in gap.mass.items():
        while done < length:
            current = gap_step(current, hmm, dfsm)
            done += 1
        out += p * current
    # mass is preserved in exact arithmetic; renormalizing stops rows that are
    # stochastic only to rounding from drifting the belief one ulp per gap
    return out / out.sum()


def observe_peek(belief, peek, v):
    """Condition on one peek reading. Returns ``(belief, likelihood)``."""
    if isinstance(v, str):
        v = peek.index(v)
    u = belief * peek.C[:, v, None]
    total = u.sum()
    if not total > 0.0:
        raise ImpossibleObservation(f"peek {peek.values[v]!r} has probability 0 under the current belief")
    return u / total, float(total)


def uniform_reset(belief, hmm, dfsm, item):
    """Recovery used by ``--on-impossible uniform-reset``: keep the monitor
    marginal (advanced by the event, if any) and forget the HMM state."""
    monitor = belief.sum(axis=0)
    if isinstance(item, Event):
        monitor = monitor @ dfsm.transfer[hmm.alphabet.index(item.symbol)]
    return np.outer(np.full(hmm.n, 1.0 / hmm.n), monitor)


def step(belief, bundle, item):
    """Apply one trace item. Returns ``(belief, likelihood or None)``;
    gaps carry no evidence and yield ``None``."""
    if isinstance(item, Event):
        return observe_event(belief, bundle.hmm, bundle.dfsm, bundle.alphabet.index(item.symbol))
    if isinstance(item, Gap):
        return observe_gap(belief, bundle.hmm, bundle.dfsm, bundle.gap(item.dist_id)), None
    if isinstance(item, Peek):
        bundle.check_item(item)
        return observe_peek(belief, bundle.peek, item.value)
    raise TypeError(f"not a trace item: {item!r}")


@dataclass
class StepRecord:
    index: int
    item: object
    verdicts: dict
    log_likelihood: float
    belief: np.ndarray
    reset: bool = False

    def to_json(self):
        d = {
            "index": self.index,
            "item": None if self.item is None else str(self.item),
            "verdicts": {str(k): v for k, v in self.verdicts.items()},
            "log_likelihood": self.log_likelihood,
        }
        if self.reset:
            d["reset"] = True
        return d


def run_exact(bundle, trace, on_impossible="error"):
    """Fold the exact estimator over ``trace``.

    Returns one :class:`StepRecord` per item, preceded by a record with
    ``index=-1`` for the initial belief. The log-likelihood accumulates the
    step likelihoods of events and peeks only.
    """
    if on_impossible not in ("error", "uniform-reset"):
        raise ValueError(f"on_impossible must be 'error' or 'uniform-reset', not {on_impossible!r}")
    for item in trace:
        bundle.check_item(item)
    hmm, dfsm = bundle.hmm, bundle.dfsm
    belief = init_belief(hmm, dfsm)
    loglik = 0.0
    records = [StepRecord(-1, None, verdict_probabilities(belief, dfsm), 0.0, belief)]
    for i, item in enumerate(trace):
        reset = False
        try:
            belief, lik = step(belief, bundle, item)
        except ImpossibleObservation:
            if on_impossible == "error":
                raise
            belief, lik, reset = uniform_reset(belief, hmm, dfsm, item), None, True
        if lik is not None:
            loglik += math.log(lik)
        records.append(StepRecord(i, item, verdict_probabilities(belief, dfsm), loglik, belief, reset))
    return records


def final_belief(bundle, trace):
    return run_exact(bundle, trace)[-1].belief
