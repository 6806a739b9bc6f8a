"""Per-event cost of the three estimators on a fixed model and trace.

Each algorithm gets one untimed warmup pass and then ``repeats`` timed
passes; the median pass time divided by the trace length is reported. Only
the runtime update is timed: table construction happens before the clock
starts, as it would in a deployed monitor.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import exact, particle, table
from .errors import InvalidArgument
from .model import Event, Gap, Peek


@dataclass(frozen=True)
class AlgoSpec:
    name: str                 # exact | table | pf
    param: float | int | None = None

    @classmethod
    def parse(cls, text):
        """``exact`` | ``table:EPS`` | ``pf:N``."""
        name, _, arg = text.strip().partition(":")
        try:
            if name == "exact" and not arg:
                return cls("exact")
            if name == "table":
                eps = float(arg) if arg else 1e-3
                if not eps >= 0.0:
                    raise ValueError("epsilon must be >= 0")
                return cls("table", eps)
            if name == "pf":
                n = int(arg) if arg else 1000
                if n < 1:
                    raise ValueError("particle count must be >= 1")
                return cls("pf", n)
        except ValueError as exc:
            raise InvalidArgument(f"bad algorithm {text!r}: {exc}") from None
        raise InvalidArgument(f"bad algorithm {text!r}; expected exact, table:EPS or pf:N")

    def __str__(self):
        return self.name if self.param is None else f"{self.name}:{self.param:g}"


def parse_algos(text):
    return [AlgoSpec.parse(part) for part in text.split(",") if part.strip()]


def _exact_kernel(bundle, trace):
    hmm, dfsm = bundle.hmm, bundle.dfsm
    vm = dfsm.verdict_matrix
    belief = exact.init_belief(hmm, dfsm)
    for item in trace:
        belief, _ = exact.step(belief, bundle, item)
        belief.sum(axis=0) @ vm
    return belief


def _pf_kernel(bundle, trace, n, seed):
    hmm, dfsm = bundle.hmm, bundle.dfsm
    ps = particle.pf_init(hmm, dfsm, n, seed)
    for item in trace:
        if isinstance(item, Event):
            ps, _, _ = particle.pf_step_event(ps, hmm, dfsm, item.symbol)
        elif isinstance(item, Gap):
            ps = particle.pf_step_gap(ps, hmm, dfsm, bundle.gap(item.dist_id))
        elif isinstance(item, Peek):
            ps, _, _ = particle.pf_step_peek(ps, bundle.peek, item.value)
        particle.pf_estimate(ps, dfsm)
    return ps


def _time(fn, repeats, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return statistics.median(samples), samples


def bench(bundle, trace, algos, repeats=5, warmup=1, seed=0, tables=None):
    """Time each algorithm on ``trace``.

    ``algos`` is a list of :class:`AlgoSpec` (or their string forms).
    ``tables`` may map an epsilon to a prebuilt table for that epsilon.
    Returns ``{"events": int, "rows": [...], "exact_over_table": float|None}``;
    per-event figures are ``None`` for an empty trace.
    """
    if repeats < 5:
        raise InvalidArgument("bench needs at least 5 timed repetitions")
    algos = [a if isinstance(a, AlgoSpec) else AlgoSpec.parse(a) for a in algos]
    for item in trace:
        bundle.check_item(item)
    events = len(trace)
    tables = dict(tables or {})
    rows = []
    for spec in algos:
        row = {"algo": str(spec), "events": events, "repeats": repeats}
        if spec.name == "exact":
            fn = lambda: _exact_kernel(bundle, trace)  # noqa: E731
            row["memory_bytes"] = int(exact.init_belief(bundle.hmm, bundle.dfsm).nbytes)
        elif spec.name == "table":
            t = tables.get(spec.param)
            if t is None:
                t = tables[spec.param] = table.precompute(bundle, spec.param)
            table.run_table(t, trace)       # surfaces impossible edges before timing
            cols = [t.label_index[item] for item in trace]
            fn = lambda t=t, cols=cols: table.lookup_path(t, cols)  # noqa: E731
            row["memory_bytes"] = t.nbytes()
            row["nodes"] = t.n_nodes
        else:
            fn = lambda n=spec.param: _pf_kernel(bundle, trace, n, seed)  # noqa: E731
            ps = particle.pf_init(bundle.hmm, bundle.dfsm, spec.param, seed)
            row["memory_bytes"] = int(ps.x.nbytes + ps.m.nbytes + ps.weights.nbytes)
        if events == 0:
            row["ns_per_event"] = None
            row["samples_ns"] = []
        else:
            median, samples = _time(fn, repeats, warmup)
            row["ns_per_event"] = median / events
            row["samples_ns"] = samples
        rows.append(row)

    per = {r["algo"].split(":")[0]: r["ns_per_event"] for r in rows}
    ratio = None
    if per.get("exact") and per.get("table"):
        ratio = per["exact"] / per["table"]
    return {"events": events, "rows": rows, "exact_over_table": ratio}


def bench_trace(bundle, length, seed=0, p_gap=0.15, p_peek=0.5):
    """Deterministic benchmark trace sampled from the model itself."""
    from .oracle import GapPolicy, simulate

    gap_id = next(iter(bundle.gaps), None)
    policy = GapPolicy.none() if gap_id is None else GapPolicy.bernoulli(p_gap, bundle.gaps[gap_id])
    trace = simulate(bundle, length, policy, seed=seed, with_peeks=p_peek > 0).trace
    rng = np.random.default_rng(seed)
    return [item for item in trace if not isinstance(item, Peek) or rng.random() < p_peek]
