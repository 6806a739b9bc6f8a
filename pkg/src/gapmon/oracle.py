"""Ground-truth simulation with gap policies, the brute-force posterior
oracle, and accuracy metrics.

The oracle deliberately shares no code path with :mod:`gapmon.exact`: it
enumerates every concrete filling of every gap, runs the plain HMM
forward recurrence along each completed symbol sequence, and only then
groups the results by the monitor state that sequence reaches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ImpossibleObservation, InvalidArgument
from .model import VERDICTS, Event, Gap, GapDist, Peek, Verdict

# -- gap policies -----------------------------------------------------------


@dataclass(frozen=True)
class GapPolicy:
    """How monitoring is switched off during simulation.

    kind ``"none"``: every event observed. ``"dutycycle"``: ``on_len``
    observed events then ``off_len`` missed ones, repeating; each gap
    declares a point mass at its true length. ``"bernoulli"``: each event
    missed independently with probability ``p_off``; every maximal run of
    misses becomes one gap declaring ``dist_id``.
    """

    kind: str = "none"
    on_len: int = 1
    off_len: int = 0
    p_off: float = 0.0
    dist_id: str | None = None
    declared: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "dutycycle", "bernoulli"):
            raise InvalidArgument(f"unknown gap policy {self.kind!r}")
        if self.kind == "dutycycle" and (self.on_len < 1 or self.off_len < 1):
            raise InvalidArgument("duty-cycle lengths must be >= 1")
        if self.kind == "bernoulli":
            if not 0.0 <= self.p_off < 1.0:
                raise InvalidArgument("p_off must lie in [0, 1)")
            if self.dist_id not in self.declared:
                raise InvalidArgument(f"bernoulli policy declares unknown gap dist {self.dist_id!r}")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def duty_cycle(cls, on_len, off_len):
        return cls("dutycycle", on_len=on_len, off_len=off_len)

    @classmethod
    def bernoulli(cls, p_off, dist):
        return cls("bernoulli", p_off=p_off, dist_id=dist.id, declared={dist.id: dist})

    @classmethod
    def parse(cls, text, gaps=None):
        """``none`` | ``dutycycle:ON:OFF`` | ``bernoulli:P:DISTID``."""
        parts = text.split(":")
        try:
            if parts[0] == "none" and len(parts) == 1:
                return cls.none()
            if parts[0] == "dutycycle" and len(parts) == 3:
                return cls.duty_cycle(int(parts[1]), int(parts[2]))
            if parts[0] == "bernoulli" and len(parts) == 3:
                gaps = gaps or {}
                if parts[2] not in gaps:
                    raise InvalidArgument(f"bernoulli policy: model has no gap dist {parts[2]!r}")
                return cls.bernoulli(float(parts[1]), gaps[parts[2]])
        except ValueError as exc:
            raise InvalidArgument(f"bad policy {text!r}: {exc}") from None
        raise InvalidArgument(f"bad policy {text!r}; expected none, dutycycle:ON:OFF or bernoulli:P:DISTID")

    def off_mask(self, T, rng):
        if self.kind == "none":
            return np.zeros(T, dtype=bool)
        if self.kind == "dutycycle":
            period = self.on_len + self.off_len
            return (np.arange(T) % period) >= self.on_len
        return rng.random(T) < self.p_off


@dataclass
class GroundTruth:
    states: list          # hidden states x_1..x_T
    symbols: list         # emitted symbols o_1..o_T
    monitor: list         # monitor states m_0..m_T
    verdict: Verdict
    trace: list           # observed TraceItems
    declared: dict        # gap-dist id -> GapDist used by the trace

    def to_json(self, bundle):
        return {
            "states": [int(x) for x in self.states],
            "symbols": list(self.symbols),
            "monitor": [bundle.dfsm.states[m] for m in self.monitor],
            "verdict": self.verdict.value,
            "trace": [str(item) for item in self.trace],
            "gap_dists": [
                {"id": g.id, "mass": [[k, v] for k, v in g.mass.items()]} for g in self.declared.values()
            ],
        }


def _draw(rng, probs):
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def simulate(bundle, T, policy=None, seed=0, with_peeks=True):
    """Sample a run of ``T`` events from the model and hide parts of it
    according to ``policy``."""
    if T < 0:
        raise InvalidArgument("T must be >= 0")
    policy = policy or GapPolicy.none()
    hmm, dfsm, peek = bundle.hmm, bundle.dfsm, bundle.peek
    rng = np.random.default_rng(seed)

    x = _draw(rng, hmm.pi)
    states, symbols = [], []
    monitor = [dfsm.initial]
    for _ in range(T):
        x = _draw(rng, hmm.A[x])
        o = _draw(rng, hmm.B[x])
        states.append(x)
        symbols.append(hmm.alphabet.symbols[o])
        monitor.append(int(dfsm.delta[monitor[-1], o]))

    off = policy.off_mask(T, rng)
    declared = dict(policy.declared)
    trace = []
    t = 0
    while t < T:
        if not off[t]:
            trace.append(Event(symbols[t]))
            t += 1
            continue
        end = t
        while end < T and off[end]:
            end += 1
        if policy.kind == "dutycycle":
            dist = GapDist.point(f"len{end - t}", end - t)
            declared[dist.id] = dist
            trace.append(Gap(dist.id))
        else:
            trace.append(Gap(policy.dist_id))
        if with_peeks and peek is not None:
            v = _draw(rng, peek.C[states[end - 1]])
            trace.append(Peek(peek.values[v]))
        t = end

    return GroundTruth(states, symbols, monitor, dfsm.verdict[monitor[-1]], trace, declared)


# -- brute-force oracle ------------------------------------------------------


def enumeration_count(bundle, trace):
    """Number of concrete gap fillings the oracle would visit."""
    k = len(bundle.alphabet)
    total = 1
    for item in trace:
        if isinstance(item, Gap):
            g = bundle.gap(item.dist_id)
            total *= sum(k**length for length in g.mass)
    return total


def brute_force_posterior(bundle, trace, budget=10**6):
    """Exact joint posterior by exhaustive enumeration of gap fillings.

    Each completed symbol sequence is weighted by its gap-length masses and
    its HMM probability (forward recurrence summed over hidden paths,
    including peek factors); the monitor state it ends in is computed by
    replaying it through the DFSM.
    """
    needed = enumeration_count(bundle, trace)
    if needed > budget:
        raise BudgetExceeded(needed, budget)
    for item in trace:
        bundle.check_item(item)

    hmm, dfsm, peek = bundle.hmm, bundle.dfsm, bundle.peek
    A, B = hmm.A, hmm.B
    k = len(hmm.alphabet)
    result = np.zeros((hmm.n, dfsm.n_states))
    items = list(trace)

    def emit(f, o):
        return (f @ A) * B[:, o]

    def walk(pos, f, m, weight):
        if weight == 0.0 or not f.any():
            return
        if pos == len(items):
            result[:, m] += weight * f
            return
        item = items[pos]
        if isinstance(item, Event):
            o = hmm.alphabet.index(item.symbol)
            walk(pos + 1, emit(f, o), int(dfsm.delta[m, o]), weight)
        elif isinstance(item, Peek):
            walk(pos + 1, f * peek.C[:, peek.index(item.value)], m, weight)
        else:
            mass = bundle.gap(item.dist_id).mass
            longest = max(mass)

            def fill(done, g, gm):
                if done in mass:
                    walk(pos + 1, g, gm, weight * mass[done])
                if done < longest:
                    for o in range(k):
                        fill(done + 1, emit(g, o), int(dfsm.delta[gm, o]))

            fill(0, f, m)

    walk(0, np.asarray(hmm.pi, dtype=float), dfsm.initial, 1.0)
    total = result.sum()
    if not total > 0.0:
        raise ImpossibleObservation("trace has probability 0 under the model")
    return result / total


# -- metrics -----------------------------------------------------------------


def _as_matrix(predictions):
    rows = []
    for p in predictions:
        if isinstance(p, dict):
            rows.append([p.get(v, p.get(v.value, 0.0)) for v in VERDICTS])
        else:
            rows.append(list(p))
    return np.array(rows, dtype=float).reshape(-1, len(VERDICTS))


def score(predictions, truths, reference=None, bins=10):
    """Brier score, a reliability table and (optionally) RMSE against a
    reference estimator's predictions.

    ``predictions``/``reference`` are sequences of verdict-probability maps
    (or rows in Accepting/Pending/Violated order); ``truths`` are verdicts.
    """
    P = _as_matrix(predictions)
    onehot = np.zeros_like(P)
    for i, t in enumerate(truths):
        onehot[i, VERDICTS.index(Verdict(t))] = 1.0
    out = {"cases": len(P)}
    out["brier"] = float(np.mean(np.sum((P - onehot) ** 2, axis=1))) if len(P) else math.nan

    flat_p, flat_y = P.ravel(), onehot.ravel()
    which = np.minimum((flat_p * bins).astype(int), bins - 1)
    table = []
    for b in range(bins):
        sel = which == b
        n = int(sel.sum())
        table.append(
            {
                "bin": [b / bins, (b + 1) / bins],
                "count": n,
                "mean_predicted": float(flat_p[sel].mean()) if n else None,
                "observed_frequency": float(flat_y[sel].mean()) if n else None,
            }
        )
    out["calibration"] = table
    if reference is not None:
        R = _as_matrix(reference)
        out["rmse_vs_reference"] = float(np.sqrt(np.mean((P - R) ** 2))) if len(P) else math.nan
    return out
