"""Particle-filter estimation (sequential importance resampling).

Each particle is a joint (hidden state, monitor state) pair. On an
observed event a particle moves with the transition distribution
conditioned on that event, and its weight is multiplied by the event's
predictive probability from its current state. Gaps sample a length and
then run the prior forward with no reweighting. Resampling is systematic
and only happens when the effective sample size drops below
``ess_ratio * N``.

Randomness comes from numpy's ``Generator`` over the PCG64 bit generator,
seeded by the caller; a fixed seed gives a bit-identical run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ImpossibleObservation, InvalidArgument
from .model import VERDICTS, Event, Gap, Peek

DEFAULT_ESS_RATIO = 0.5


@dataclass(eq=False)
class ParticleSet:
    x: np.ndarray        # hidden state per particle
    m: np.ndarray        # monitor state per particle
    weights: np.ndarray
    rng: np.random.Generator

    @property
    def N(self):
        return len(self.weights)


def _sample_rows(cdf, rows, u):
    """Inverse-CDF draw: column index per particle from ``cdf[rows]``."""
    idx = (u[:, None] > cdf[rows]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _cdf(mat):
    c = np.cumsum(mat, axis=1)
    # exact 1.0 in the last column guards against round-off leaving u above it
    c[:, -1] = np.where(c[:, -1] > 0.0, 1.0, 0.0)
    return c


def pf_init(hmm, dfsm, N, seed=0):
    if not isinstance(N, (int, np.integer)) or N <= 0:
        raise InvalidArgument(f"particle count must be a positive integer, got {N!r}")
    rng = np.random.default_rng(seed)
    x = _sample_rows(_cdf(hmm.pi[None, :]), np.zeros(N, dtype=np.int64), rng.random(N))
    m = np.full(N, dfsm.initial, dtype=np.int64)
    return ParticleSet(x, m, np.full(N, 1.0 / N), rng)


def effective_sample_size(ps):
    w = ps.weights if isinstance(ps, ParticleSet) else np.asarray(ps, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_ancestors(weights, u0):
    """Ancestor indices picked at ``u0 + k/N`` against the cumulative weights."""
    N = len(weights)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    points = u0 + np.arange(N) / N
    return np.minimum(np.searchsorted(cum, points, side="right"), N - 1)


def resample_if_needed(ps, threshold_ratio=DEFAULT_ESS_RATIO, force=False):
    """Systematic resampling when ESS < ``threshold_ratio * N``.

    Returns ``(particle_set, resampled)``.
    """
    if not force and effective_sample_size(ps) >= threshold_ratio * ps.N:
        return ps, False
    u0 = ps.rng.random() / ps.N
    idx = systematic_ancestors(ps.weights, u0)
    return ParticleSet(ps.x[idx], ps.m[idx], np.full(ps.N, 1.0 / ps.N), ps.rng), True


def _reweight(ps, mult, what):
    w = ps.weights * mult
    total = w.sum()
    if not total > 0.0:
        raise ImpossibleObservation(f"{what} has probability 0 for every particle")
    return w / total, float(total / ps.weights.sum())


def pf_step_event(ps, hmm, dfsm, o, threshold_ratio=DEFAULT_ESS_RATIO):
    """Returns ``(particle_set, likelihood_estimate, resampled)``."""
    if isinstance(o, str):
        o = hmm.alphabet.index(o)
    joint = hmm.A * hmm.B[None, :, o]     # joint[x, x'] = A[x,x'] B[x',o]
    evidence = joint.sum(axis=1)
    w, lik = _reweight(ps, evidence[ps.x], f"event {hmm.alphabet.symbols[o]!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        proposal = np.where(evidence[:, None] > 0.0, joint / evidence[:, None], 0.0)
    u = ps.rng.random(ps.N)
    x_new = _sample_rows(_cdf(proposal), ps.x, u)
    # zero-evidence particles keep their state; their weight is already 0
    x_new = np.where(evidence[ps.x] > 0.0, x_new, ps.x)
    m_new = dfsm.delta[ps.m, o]
    out, resampled = resample_if_needed(ParticleSet(x_new, m_new, w, ps.rng), threshold_ratio)
    return out, lik, resampled


def pf_step_gap(ps, hmm, dfsm, gap):
    """Each particle draws its own gap length, then moves ``l`` prior steps."""
    rng = ps.rng
    lengths = gap.lengths[_sample_rows(_cdf(gap.probs[None, :]), np.zeros(ps.N, dtype=np.int64), rng.random(ps.N))]
    x, m = ps.x.copy(), ps.m.copy()
    a_cdf, b_cdf = _cdf(hmm.A), _cdf(hmm.B)
    for k in range(int(lengths.max(initial=0))):
        active = np.flatnonzero(lengths > k)
        xs = _sample_rows(a_cdf, x[active], rng.random(active.size))
        os_ = _sample_rows(b_cdf, xs, rng.random(active.size))
        x[active] = xs
        m[active] = dfsm.delta[m[active], os_]
    return ParticleSet(x, m, ps.weights, rng)


def pf_step_peek(ps, peek, v, threshold_ratio=DEFAULT_ESS_RATIO):
    """Returns ``(particle_set, likelihood_estimate, resampled)``."""
    if isinstance(v, str):
        v = peek.index(v)
    w, lik = _reweight(ps, peek.C[ps.x, v], f"peek {peek.values[v]!r}")
    out, resampled = resample_if_needed(replace(ps, weights=w), threshold_ratio)
    return out, lik, resampled


def pf_estimate(ps, dfsm):
    """Weighted fraction of particles in each verdict class."""
    per_state = np.bincount(ps.m, weights=ps.weights, minlength=dfsm.n_states)
    # dividing by the summed weight makes a single-class answer exactly 1
    totals = (per_state @ dfsm.verdict_matrix) / per_state.sum()
    return {label: float(p) for label, p in zip(VERDICTS, totals)}


def pf_belief(ps, n, q):
    """Weighted joint histogram, comparable with an exact belief."""
    flat = np.bincount(ps.x * q + ps.m, weights=ps.weights, minlength=n * q)
    return flat.reshape(n, q)


@dataclass
class PfRecord:
    index: int
    item: object
    verdicts: dict
    log_likelihood: float
    ess: float
    resampled: bool
    reset: bool = False

    def to_json(self):
        d = {
            "index": self.index,
            "item": None if self.item is None else str(self.item),
            "verdicts": {str(k): v for k, v in self.verdicts.items()},
            "log_likelihood": self.log_likelihood,
            "ess": self.ess,
            "resampled": self.resampled,
        }
        if self.reset:
            d["reset"] = True
        return d


def _uniform_reset(ps, hmm, dfsm, item):
    x = ps.rng.integers(0, hmm.n, size=ps.N)
    m = ps.m
    if isinstance(item, Event):
        m = dfsm.delta[m, hmm.alphabet.index(item.symbol)]
    return ParticleSet(x, m, ps.weights, ps.rng)


def run_pf(bundle, trace, N, seed=0, threshold_ratio=DEFAULT_ESS_RATIO, on_impossible="error", keep=False):
    """Fold the particle filter over ``trace``; one record per item plus an
    initial record at ``index=-1``. With ``keep`` the final ParticleSet is
    returned as a second value."""
    for item in trace:
        bundle.check_item(item)
    hmm, dfsm = bundle.hmm, bundle.dfsm
    ps = pf_init(hmm, dfsm, N, seed)
    loglik = 0.0
    records = [PfRecord(-1, None, pf_estimate(ps, dfsm), 0.0, effective_sample_size(ps), False)]
    for i, item in enumerate(trace):
        lik, resampled, reset = None, False, False
        try:
            if isinstance(item, Event):
                ps, lik, resampled = pf_step_event(ps, hmm, dfsm, item.symbol, threshold_ratio)
            elif isinstance(item, Gap):
                ps = pf_step_gap(ps, hmm, dfsm, bundle.gap(item.dist_id))
            elif isinstance(item, Peek):
                ps, lik, resampled = pf_step_peek(ps, bundle.peek, item.value, threshold_ratio)
        except ImpossibleObservation:
            if on_impossible == "error":
                raise
            ps, reset = _uniform_reset(ps, hmm, dfsm, item), True
        if lik is not None:
            loglik += math.log(lik)
        records.append(
            PfRecord(i, item, pf_estimate(ps, dfsm), loglik, effective_sample_size(ps), resampled, reset)
        )
    return (records, ps) if keep else records
