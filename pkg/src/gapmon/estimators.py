"""scikit-learn compatible front ends.

``HmmLearner`` fits a program model to complete traces. The three monitor
estimators are fitted on a :class:`~gapmon.model.ModelBundle` (or a model
file path) and map gap-containing traces to end-of-trace verdict
probabilities, columns ordered as ``classes_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import exact, particle, table
from .learn import LearnOptions, baum_welch, log_likelihood
from .model import VERDICTS, verdict_vector
from .validation import check_bundle, check_symbol_traces, check_traces

CLASSES = np.array([v.value for v in VERDICTS])


class HmmLearner(BaseEstimator):
    def __init__(self, n_states=2, max_iters=500, tol=1e-6, restarts=5, zero_mask=None, alphabet=None, random_state=0):
        self.n_states = n_states
        self.max_iters = max_iters
        self.tol = tol
        self.restarts = restarts
        self.zero_mask = zero_mask
        self.alphabet = alphabet
        self.random_state = random_state

    def fit(self, X, y=None):
        opts = LearnOptions(
            n_states=self.n_states,
            max_iters=self.max_iters,
            tol=self.tol,
            seed=self.random_state,
            restarts=self.restarts,
            zero_mask=self.zero_mask,
        )
        result = baum_welch(check_symbol_traces(X), opts, alphabet=self.alphabet)
        self.hmm_ = result.hmm
        self.log_likelihood_ = result.log_likelihood
        self.history_ = result.history
        self.n_iter_ = len(result.history)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "hmm_")
        return np.array([log_likelihood(self.hmm_, t) for t in check_symbol_traces(X)])

    def score(self, X, y=None):
        return float(self.score_samples(X).sum())


class _MonitorEstimator(BaseEstimator):
    classes_ = CLASSES

    def fit(self, X, y=None):
        self.model_ = check_bundle(X)
        return self

    def _final(self, trace):
        raise NotImplementedError

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        traces = check_traces(X, self.model_)
        return np.array([verdict_vector(self._final(t)) for t in traces]).reshape(-1, len(CLASSES))

    def predict(self, X):
        return CLASSES[np.argmax(self.predict_proba(X), axis=1)]


class ExactMonitor(_MonitorEstimator):
    def __init__(self, on_impossible="error"):
        self.on_impossible = on_impossible

    def _final(self, trace):
        return exact.run_exact(self.model_, trace, self.on_impossible)[-1].verdicts


class TableMonitor(_MonitorEstimator):
    def __init__(self, epsilon=1e-3, max_nodes=table.DEFAULT_MAX_NODES):
        self.epsilon = epsilon
        self.max_nodes = max_nodes

    def fit(self, X, y=None):
        super().fit(X)
        self.table_ = table.precompute(self.model_, self.epsilon, self.max_nodes)
        return self

    def _final(self, trace):
        return table.run_table(self.table_, trace)[-1].verdicts


class ParticleMonitor(_MonitorEstimator):
    def __init__(self, n_particles=1000, ess_ratio=particle.DEFAULT_ESS_RATIO, random_state=0, on_impossible="error"):
        self.n_particles = n_particles
        self.ess_ratio = ess_ratio
        self.random_state = random_state
        self.on_impossible = on_impossible

    def _final(self, trace):
        records = particle.run_pf(
            self.model_, trace, self.n_particles, self.random_state, self.ess_ratio, self.on_impossible
        )
        return records[-1].verdicts
