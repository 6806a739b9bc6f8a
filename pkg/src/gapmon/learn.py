"""Baum-Welch training of the program model from complete traces.

The model has a silent time-0 state drawn from ``pi``; every observed
symbol is emitted by the state entered on the preceding transition, so a
length-T trace touches T transitions (including the one out of time 0).
Structure hints are hard zero pins on entries of ``A`` and ``B``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, ImpossibleObservation, InvalidArgument
from .model import Alphabet, Hmm

log = logging.getLogger(__name__)


@dataclass
class LearnOptions:
    n_states: int
    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 5
    zero_mask: tuple | None = None   # (mask_A, mask_B); True pins the entry to 0

    def __post_init__(self):
        if self.n_states < 1 or self.max_iters < 1 or self.restarts < 1:
            raise InvalidArgument("n_states, max_iters and restarts must be positive")
        if self.zero_mask is not None:
            mask_a, mask_b = (np.asarray(m, dtype=bool) for m in self.zero_mask)
            if mask_a.shape != (self.n_states, self.n_states) or mask_b.ndim != 2 or mask_b.shape[0] != self.n_states:
                raise InvalidArgument("zero_mask shapes do not match n_states")
            for name, mask in (("A", mask_a), ("B", mask_b)):
                full = np.flatnonzero(mask.all(axis=1))
                if full.size:
                    raise InvalidArgument(f"zero_mask for {name} pins every entry of row {full[0]}")
            self.zero_mask = (mask_a, mask_b)


@dataclass
class LearnResult:
    hmm: Hmm
    log_likelihood: float
    history: list                    # training log-likelihood per iteration, best restart
    restart: int
    all_histories: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _encode(traces, alphabet):
    out = []
    for i, tr in enumerate(traces):
        if isinstance(tr, str):
            tr = tr.split()
        if len(tr) == 0:
            raise InvalidArgument(f"training trace {i} is empty")
        out.append(np.array([alphabet.index(s) for s in tr], dtype=np.int64))
    return out


def _forward(pi, A, B, obs):
    """Scaled forward pass. ``alpha[0]`` is the silent state; returns
    (alpha, scale) with scale[t] the predictive probability of obs[t-1]."""
    T = len(obs)
    alpha = np.empty((T + 1, len(pi)))
    scale = np.ones(T + 1)
    alpha[0] = pi
    for t in range(1, T + 1):
        a = (alpha[t - 1] @ A) * B[:, obs[t - 1]]
        c = a.sum()
        if not c > 0.0:
            return alpha, scale, t
        alpha[t] = a / c
        scale[t] = c
    return alpha, scale, None


def log_likelihood(hmm, trace):
    """log Pr(trace | hmm) in nats for a gap-free symbol sequence."""
    if isinstance(trace, str):
        trace = trace.split()
    obs = np.array([hmm.alphabet.index(s) for s in trace], dtype=np.int64)
    _, scale, bad = _forward(hmm.pi, hmm.A, hmm.B, obs)
    if bad is not None:
        raise ImpossibleObservation(f"prefix of length {bad} has probability 0")
    return float(np.log(scale[1:]).sum())


def _expected_counts(pi, A, B, seqs):
    n, k = B.shape
    c_pi = np.zeros(n)
    c_a = np.zeros((n, n))
    c_b = np.zeros((n, k))
    total = 0.0
    for obs in seqs:
        T = len(obs)
        alpha, scale, bad = _forward(pi, A, B, obs)
        if bad is not None:
            return None
        total += np.log(scale[1:]).sum()
        beta = np.empty((T + 1, n))
        beta[T] = 1.0
        for t in range(T, 0, -1):
            beta[t - 1] = A @ (B[:, obs[t - 1]] * beta[t]) / scale[t]
        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        c_pi += gamma[0]
        for t in range(1, T + 1):
            c_a += np.outer(alpha[t - 1], B[:, obs[t - 1]] * beta[t]) * A / scale[t]
        np.add.at(c_b.T, obs, gamma[1:])
    return c_pi, c_a, c_b, float(total)


def _normalize_rows(counts, mask, name, notes):
    out = np.where(mask, 0.0, counts)
    sums = out.sum(axis=1)
    for i in np.flatnonzero(~(sums > 0.0)):
        msg = f"{name} row {i} received zero expected counts; reset to uniform over unmasked entries"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        out[i] = (~mask[i]).astype(float)
        sums[i] = out[i].sum()
    return out / sums[:, None]


def _dirichlet_rows(rng, mask):
    g = rng.gamma(1.0, size=mask.shape)
    g = np.where(mask, 0.0, g)
    return g / g.sum(axis=1, keepdims=True)


def _train_once(seqs, n, k, opts, restart, notes):
    rng = np.random.default_rng([opts.seed, restart])
    if opts.zero_mask is None:
        mask_a = np.zeros((n, n), dtype=bool)
        mask_b = np.zeros((n, k), dtype=bool)
    else:
        mask_a, mask_b = opts.zero_mask
        if mask_b.shape[1] != k:
            raise InvalidArgument(f"zero_mask for B has {mask_b.shape[1]} columns, alphabet has {k}")
    pi = _dirichlet_rows(rng, np.zeros((1, n), dtype=bool))[0]
    A = _dirichlet_rows(rng, mask_a)
    B = _dirichlet_rows(rng, mask_b)

    history = []
    ll = None
    for _ in range(opts.max_iters):
        stats = _expected_counts(pi, A, B, seqs)
        if stats is None:
            raise DegenerateInput("a training trace has probability 0 under the zero mask")
        c_pi, c_a, c_b, ll = stats
        if history and ll - history[-1] < opts.tol:
            history.append(ll)
            break
        history.append(ll)
        pi = c_pi / c_pi.sum()
        A = _normalize_rows(c_a, mask_a, "A", notes)
        B = _normalize_rows(c_b, mask_b, "B", notes)
    else:
        stats = _expected_counts(pi, A, B, seqs)
        if stats is None:
            raise DegenerateInput("a training trace has probability 0 under the zero mask")
        ll = stats[3]
        history.append(ll)
    return pi, A, B, ll, history


def baum_welch(traces, opts, alphabet=None):
    """Fit an HMM to gap-free traces; the best of ``opts.restarts`` random
    initializations is returned (lower restart index wins ties)."""
    if not traces:
        raise InvalidArgument("no training traces")
    if alphabet is None:
        seen = {s for tr in traces for s in (tr.split() if isinstance(tr, str) else tr)}
        alphabet = Alphabet(sorted(seen))
    elif not isinstance(alphabet, Alphabet):
        alphabet = Alphabet(alphabet)
    seqs = _encode(traces, alphabet)
    n, k = opts.n_states, len(alphabet)

    best = None
    histories = []
    notes = []
    for r in range(opts.restarts):
        pi, A, B, ll, history = _train_once(seqs, n, k, opts, r, notes)
        histories.append(history)
        log.debug("restart %d: log-likelihood %.6f after %d iterations", r, ll, len(history))
        if best is None or ll > best[3]:
            best = (pi, A, B, ll, history, r)
    pi, A, B, ll, history, r = best
    return LearnResult(Hmm(pi, A, B, alphabet), ll, history, r, histories, notes)


def total_log_likelihood(hmm, traces):
    return math.fsum(log_likelihood(hmm, tr) for tr in traces)
