"""``gapmon`` command line.

Reports go to stdout as JSON lines; diagnostics go to stderr. Every flag
with a default can also be set through a ``GAPMON_<FLAG>`` environment
variable (``--oracle-budget`` reads ``GAPMON_ORACLE_BUDGET``); explicit
flags win.

Exit codes: 0 ok, 2 invalid input or model, 3 impossible observation,
4 resource limit, 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import traceback
import warnings

import numpy as np

from . import __version__, bench as bench_mod, exact, particle, table
from .errors import BudgetExceeded, GapmonError, InvalidArgument, ParseError
from .io import load_model, load_trace, save_model, save_trace
from .learn import LearnOptions, baum_welch
from .model import VERDICTS, Alphabet, ModelBundle, Verdict, make_dfsm, verdict_vector
from .oracle import GapPolicy, brute_force_posterior, score, simulate

log = logging.getLogger("gapmon")

EXIT_OK = 0
EXIT_INTERNAL = 5


# -- plumbing ------------------------------------------------------------------


def _env(flag, default=None):
    return os.environ.get("GAPMON_" + flag.upper().replace("-", "_"), default)


def _flag(parser, name, help, default=None, required=False, **kw):
    """Add ``--name`` whose default may come from the environment."""
    env = _env(name)
    if env is not None:
        default, required = env, False
    if default is not None:
        help += " (default: %(default)s)"
    parser.add_argument("--" + name, default=default, required=required, help=help, **kw)


def _emit(obj, out):
    out.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _summary_table(rows, headers):
    widths = [max(len(h), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    body = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join([line, "-" * len(line), *body])


# -- learn ---------------------------------------------------------------------


def _load_mask(path, n, k):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read mask: {exc.strerror}", source=path) from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno, path) from None
    try:
        mask_a = np.array(d.get("A", np.zeros((n, n))), dtype=bool)
        mask_b = np.array(d.get("B", np.zeros((n, k))), dtype=bool)
    except (AttributeError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed mask file: {exc}", source=path) from None
    return mask_a, mask_b


def _trivial_monitor(alphabet):
    delta = {("true", s): "true" for s in alphabet}
    return make_dfsm(["true"], alphabet, delta, "true", [Verdict.ACCEPTING])


def cmd_learn(args, out):
    traces = []
    for path in args.traces:
        traces.append([item.symbol for item in load_trace(path, events_only=True)])
    template = load_model(args.monitor) if args.monitor else None
    if template is not None:
        alphabet = template.alphabet
    else:
        alphabet = Alphabet(sorted({s for t in traces for s in t}))
    n = int(args.states)
    mask = _load_mask(args.mask, n, len(alphabet)) if args.mask else None
    opts = LearnOptions(
        n_states=n,
        max_iters=int(args.max_iters),
        tol=float(args.tol),
        seed=int(args.seed),
        restarts=int(args.restarts),
        zero_mask=mask,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = baum_welch(traces, opts, alphabet=alphabet)
    for w in caught:
        print(f"gapmon: warning: {w.message}", file=sys.stderr)

    if template is None:
        bundle = ModelBundle(result.hmm, _trivial_monitor(alphabet))
    else:
        peek = template.peek
        if peek is not None and peek.C.shape[0] != n:
            print("gapmon: warning: dropping the template's peek channel (state count differs)", file=sys.stderr)
            peek = None
        bundle = ModelBundle(result.hmm, template.dfsm, peek, template.gaps)
    save_model(bundle, args.output)
    _emit(
        {
            "command": "learn",
            "states": n,
            "traces": len(traces),
            "log_likelihood": result.log_likelihood,
            "iterations": len(result.history),
            "restart": result.restart,
            "output": args.output,
        },
        out,
    )
    return EXIT_OK


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args, out):
    bundle = load_model(args.model)
    policy = GapPolicy.parse(args.policy, bundle.gaps)
    length = int(args.length)
    if length < 0:
        raise InvalidArgument("--length must be >= 0")
    gt = simulate(bundle, length, policy, seed=int(args.seed), with_peeks=not args.no_peeks)
    save_trace(gt.trace, args.output)
    if args.truth:
        _write_json(args.truth, gt.to_json(bundle))
    new_ids = sorted(set(gt.declared) - set(bundle.gaps))
    if args.model_out:
        save_model(bundle.with_gaps(gt.declared), args.model_out)
    elif new_ids:
        print(
            f"gapmon: note: trace declares gap dists not in the model ({', '.join(new_ids)}); "
            "use --model-out to write an extended model",
            file=sys.stderr,
        )
    _emit(
        {
            "command": "simulate",
            "length": length,
            "items": len(gt.trace),
            "gaps": sum(1 for i in gt.trace if i.kind == "gap"),
            "verdict": gt.verdict.value,
            "declared_gap_dists": sorted(gt.declared),
            "output": args.output,
        },
        out,
    )
    return EXIT_OK


# -- precompute ----------------------------------------------------------------


def cmd_precompute(args, out):
    bundle = load_model(args.model)
    eps = float(args.epsilon)
    if not eps >= 0.0:
        raise InvalidArgument("--epsilon must be >= 0")
    t0 = time.perf_counter()
    t = table.precompute(bundle, eps, int(args.max_nodes))
    print(f"gapmon: built {t.n_nodes} nodes in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    table.save_table(t, args.output)
    report = {
        "command": "precompute",
        "epsilon": eps,
        "nodes": t.n_nodes,
        "edges": t.n_edges,
        "bytes": t.nbytes(),
        "model_digest": t.digest,
        "output": args.output,
    }
    if args.audit:
        report["audit_max_error"] = table.audit(t, bundle)
    _emit(report, out)
    return EXIT_OK


# -- run -----------------------------------------------------------------------


def _run_records(args, trace):
    """Per-step JSON records for the chosen algorithm."""
    algo = args.algo
    if algo == "table":
        if not args.table:
            raise InvalidArgument("--algo table needs --table")
        bundle = load_model(args.model) if args.model else None
        t = table.load_table(args.table, bundle)
        if args.on_impossible != "error":
            raise InvalidArgument("--on-impossible uniform-reset is not available with --algo table")
        return [r.to_json() for r in table.run_table(t, trace)]
    if not args.model:
        raise InvalidArgument(f"--algo {algo} needs --model")
    bundle = load_model(args.model)
    if algo == "exact":
        return [r.to_json() for r in exact.run_exact(bundle, trace, args.on_impossible)]
    records = particle.run_pf(
        bundle,
        trace,
        int(args.particles),
        seed=int(args.seed),
        threshold_ratio=float(args.ess_ratio),
        on_impossible=args.on_impossible,
    )
    return [r.to_json() for r in records]


def cmd_run(args, out):
    trace = load_trace(args.trace)
    t0 = time.perf_counter()
    records = _run_records(args, trace)
    wall = time.perf_counter() - t0
    if args.report == "per-step":
        for rec in records:
            _emit(rec, out)
    last = {k: v for k, v in records[-1].items() if k not in ("index", "item")}
    _emit({"final": True, "algo": args.algo, "events": len(trace), **last}, out)
    if args.summary:
        rows = [[r["index"], r["item"]] + [f"{r['verdicts'][v.value]:.6f}" for v in VERDICTS] for r in records]
        print(_summary_table(rows, ["index", "item", *[v.value for v in VERDICTS]]), file=sys.stderr)
        rate = len(trace) / wall if wall > 0 and trace else 0.0
        print(f"wall time {wall:.4f}s, {rate:.0f} events/s", file=sys.stderr)
    return EXIT_OK


# -- compare -------------------------------------------------------------------


def _final_verdicts(spec, bundle, trace, seed, tables):
    if spec.name == "exact":
        return exact.run_exact(bundle, trace)[-1].verdicts
    if spec.name == "table":
        t = tables.get(spec.param)
        if t is None:
            t = tables[spec.param] = table.precompute(bundle, spec.param)
        return table.run_table(t, trace)[-1].verdicts
    return particle.run_pf(bundle, trace, spec.param, seed=seed)[-1].verdicts


def cmd_compare(args, out):
    bundle = load_model(args.model)
    specs = bench_mod.parse_algos(args.algos)
    if not specs:
        raise InvalidArgument("--algos is empty")
    traces = [load_trace(p) for p in args.trace]
    truths = None
    if args.truth:
        if len(args.truth) != len(traces):
            raise InvalidArgument("--truth needs one file per --trace")
        truths = []
        for path in args.truth:
            try:
                with open(path, encoding="utf-8") as fh:
                    truths.append(Verdict(json.load(fh)["verdict"]))
            except OSError as exc:
                raise ParseError(f"cannot read truth: {exc.strerror}", source=path) from None
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed truth file: {exc}", source=path) from None

    budget = int(args.oracle_budget)
    reference, ref_name = [], "oracle"
    for trace in traces:
        if budget > 0:
            post = brute_force_posterior(bundle, trace, budget)
            reference.append(post.sum(axis=0) @ bundle.dfsm.verdict_matrix)
        else:
            ref_name = "exact"
            reference.append(verdict_vector(exact.run_exact(bundle, trace)[-1].verdicts))

    tables = {}
    seed = int(args.seed)
    for spec in specs:
        preds = [verdict_vector(_final_verdicts(spec, bundle, tr, seed, tables)) for tr in traces]
        err = float(np.max(np.abs(np.array(preds) - np.array(reference)))) if preds else 0.0
        report = {"algo": str(spec), "reference": ref_name, "max_abs_error": err}
        if truths is not None:
            metrics = score(preds, truths, reference=reference)
        else:
            metrics = {
                "cases": len(preds),
                "rmse_vs_reference": float(np.sqrt(np.mean((np.array(preds) - np.array(reference)) ** 2))),
            }
        report.update(metrics)
        _emit(report, out)
    return EXIT_OK


# -- bench ---------------------------------------------------------------------


def cmd_bench(args, out):
    bundle = load_model(args.model)
    if args.trace:
        trace = load_trace(args.trace)
    else:
        trace = bench_mod.bench_trace(bundle, int(args.length), seed=int(args.seed))
    res = bench_mod.bench(bundle, trace, bench_mod.parse_algos(args.algos), repeats=int(args.repeats), seed=int(args.seed))
    for row in res["rows"]:
        row = dict(row)
        row.pop("samples_ns")
        if row["ns_per_event"] is None:
            row["ns_per_event"] = "n/a"
        _emit(row, out)
    ratio = res["exact_over_table"]
    _emit({"events": res["events"], "exact_over_table": ratio if ratio is not None else "n/a"}, out)
    if args.summary:
        rows = [[r["algo"], r["ns_per_event"] if r["ns_per_event"] is None else f"{r['ns_per_event']:.0f}", r["memory_bytes"]] for r in res["rows"]]
        print(_summary_table(rows, ["algo", "ns/event", "bytes"]), file=sys.stderr)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gapmon", description="Runtime verification with state estimation over gaps.")
    p.add_argument("--version", action="version", version=f"gapmon {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("learn", help="fit the program model to complete traces")
    s.add_argument("--traces", nargs="+", required=True, help="training trace files (evt lines only)")
    _flag(s, "states", "number of hidden states", required=True)
    _flag(s, "mask", "JSON file with boolean A/B matrices; true pins the entry to 0")
    _flag(s, "seed", "initialization seed", default="0")
    _flag(s, "restarts", "random restarts; the best is kept", default="5")
    _flag(s, "max-iters", "iteration cap per restart", default="500")
    _flag(s, "tol", "stop when the log-likelihood gain falls below this", default="1e-6")
    _flag(s, "monitor", "model file whose monitor, peek channel and gap dists are reused")
    s.add_argument("-o", "--output", required=True, help="model file to write")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("simulate", help="sample a run and hide parts of it")
    _flag(s, "model", "model file", required=True)
    _flag(s, "length", "number of events T", required=True)
    _flag(s, "policy", "none | dutycycle:ON:OFF | bernoulli:P:DISTID", default="none")
    _flag(s, "seed", "simulation seed", default="0")
    s.add_argument("--no-peeks", action="store_true", help="do not append peeks at gap ends")
    s.add_argument("-o", "--output", required=True, help="observed trace file to write")
    s.add_argument("--truth", help="ground-truth JSON to write")
    s.add_argument("--model-out", help="write the model extended with the trace's declared gap dists")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("precompute", help="build an approximate belief table")
    _flag(s, "model", "model file", required=True)
    _flag(s, "epsilon", "merge radius in 1-norm", default="0.001")
    _flag(s, "max-nodes", "node budget", default=str(table.DEFAULT_MAX_NODES))
    s.add_argument("--audit", action="store_true", help="report the largest edge error against exact updates")
    s.add_argument("-o", "--output", required=True, help="table file to write")
    s.set_defaults(func=cmd_precompute)

    s = sub.add_parser("run", help="estimate verdict probabilities along a trace")
    _flag(s, "algo", "estimator", default="exact", choices=["exact", "table", "pf"])
    _flag(s, "model", "model file (with --algo table: enables the digest check)")
    _flag(s, "table", "table file for --algo table")
    _flag(s, "trace", "trace file", required=True)
    _flag(s, "report", "emit every step or only the final summary", default="per-step", choices=["per-step", "final"])
    _flag(
        s, "on-impossible", "what to do when an observation has probability 0", default="error",
        choices=["error", "uniform-reset"],
    )
    _flag(s, "particles", "particle count for --algo pf", default="1000")
    _flag(s, "seed", "particle-filter seed", default="0")
    _flag(s, "ess-ratio", "resample when ESS < ratio * N", default=str(particle.DEFAULT_ESS_RATIO))
    s.add_argument("--summary", action="store_true", help="human-readable table and timing on stderr")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("compare", help="score estimators against the oracle")
    _flag(s, "model", "model file", required=True)
    s.add_argument("--trace", nargs="+", required=True, help="trace files")
    s.add_argument("--truth", nargs="+", help="ground-truth files from simulate, one per trace")
    _flag(s, "algos", "comma list of exact, table:EPS, pf:N", default="exact,table:0.001,pf:1000")
    _flag(s, "oracle-budget", "max gap fillings the oracle may enumerate; 0 uses exact as reference", default="1000000")
    _flag(s, "seed", "particle-filter seed", default="0")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("bench", help="time per-event cost of each estimator")
    _flag(s, "model", "model file", required=True)
    _flag(s, "trace", "trace file; if absent one is sampled from the model")
    _flag(s, "length", "sampled trace length when --trace is absent", default="1000")
    _flag(s, "algos", "comma list of exact, table:EPS, pf:N", default="exact,table:0.001,pf:1000")
    _flag(s, "repeats", "timed repetitions (median reported, at least 5)", default="5")
    _flag(s, "seed", "seed for the sampled trace and the particle filter", default="0")
    s.add_argument("--summary", action="store_true", help="human-readable table on stderr")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args, out)
    except BudgetExceeded as exc:
        print(f"gapmon: error: {exc} (raise --oracle-budget or use 0 for an exact reference)", file=sys.stderr)
        return exc.exit_code
    except GapmonError as exc:
        print(f"gapmon: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"gapmon: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gapmon: error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - last resort
        traceback.print_exc(file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
