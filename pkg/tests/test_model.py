import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapmon import fixtures
from gapmon.errors import InvalidModel, ParseError, UnknownLabel
from gapmon.io import dumps_model, load_model, loads_model, parse_trace, save_model
from gapmon.model import (
    VERDICTS,
    Alphabet,
    Event,
    Gap,
    GapDist,
    Hmm,
    Peek,
    Verdict,
    dfsm_step,
    make_dfsm,
    run_dfsm,
    validate_bundle,
    validate_model,
    verdict_probabilities,
)

from .helpers import cells


def test_validate_m1_ok(m1):
    validate_bundle(m1)


def test_validate_bad_A_row(m1):
    hmm = Hmm(m1.hmm.pi, [[0.5, 0.6], [0.5, 0.5]], m1.hmm.B, m1.alphabet)
    with pytest.raises(InvalidModel) as exc:
        validate_model(hmm, m1.dfsm, m1.peek, m1.gaps)
    assert exc.value.locator == "hmm.A.row[0]"


def test_validate_missing_delta_cell():
    d = fixtures.abcd_bundle().to_dict()
    del d["dfsm"]["delta"][1]["c"]
    with pytest.raises(InvalidModel) as exc:
        loads_model(json.dumps(d))
    assert exc.value.locator == "dfsm.delta[1][c]"


@pytest.mark.parametrize(
    "mutate, locator",
    [
        (lambda d: d["hmm"].__setitem__("pi", [0.7, 0.7]), "hmm.pi"),
        (lambda d: d["hmm"]["B"].__setitem__(1, [0.5, 0.5, 0.5, 0.0]), "hmm.B.row[1]"),
        (lambda d: d["peek"]["C"].__setitem__(0, [0.2, 0.2]), "peek.C.row[0]"),
        (lambda d: d["gap_dists"][0].__setitem__("mass", [[1, 0.4]]), "gaps[g1].mass"),
        (lambda d: d["gap_dists"][0].__setitem__("mass", [[-1, 1.0]]), "gaps[g1].mass[-1]"),
    ],
)
def test_validate_locators(mutate, locator):
    d = fixtures.abcd_bundle().to_dict()
    mutate(d)
    with pytest.raises(InvalidModel) as exc:
        loads_model(json.dumps(d))
    assert exc.value.locator == locator


def test_absorbing_violation_enforced():
    alphabet = Alphabet(("a", "b"))
    delta = {("ok", "a"): "bad", ("ok", "b"): "ok", ("bad", "a"): "bad", ("bad", "b"): "ok"}
    dfsm = make_dfsm(["ok", "bad"], alphabet, delta, "ok", ["Accepting", "Violated"], absorbing_violations=True)
    hmm = Hmm([1.0], [[1.0]], [[0.5, 0.5]], alphabet)
    with pytest.raises(InvalidModel) as exc:
        validate_model(hmm, dfsm)
    assert exc.value.locator == "dfsm.delta[1][b]"


def test_alphabet_mismatch(m1, d1):
    with pytest.raises(InvalidModel) as exc:
        validate_model(m1.hmm, d1)
    assert exc.value.locator == "dfsm.alphabet"


# -- monitor --------------------------------------------------------------


def test_dfsm_step(d1):
    s0, s1 = 0, 1
    assert dfsm_step(d1, s0, "a") == s1
    assert dfsm_step(d1, s1, "c") == s0
    assert dfsm_step(d1, s0, "b") == s0


@pytest.mark.parametrize(
    "trace, state, verdict",
    [
        ("a b b c a d b c", "s0", Verdict.ACCEPTING),
        ("a b", "s1", Verdict.PENDING),
        ("", "s0", Verdict.ACCEPTING),
    ],
)
def test_run_dfsm(d1, trace, state, verdict):
    m, v = run_dfsm(d1, trace)
    assert d1.states[m] == state
    assert v is verdict


@given(st.lists(st.sampled_from("abcd"), max_size=30))
def test_run_dfsm_deterministic(seq):
    d1 = fixtures.response_monitor()
    assert run_dfsm(d1, seq) == run_dfsm(d1, list(seq))


def _enumerate_verdicts(belief, dfsm):
    out = {v: 0.0 for v in VERDICTS}
    for x in range(belief.shape[0]):
        for m in range(belief.shape[1]):
            out[dfsm.verdict[m]] += belief[x, m]
    return out


@pytest.mark.parametrize(
    "mapping, expected",
    [
        ({(0, "s0"): 1.0}, {Verdict.ACCEPTING: 1.0, Verdict.PENDING: 0.0, Verdict.VIOLATED: 0.0}),
        ({(0, "s1"): 0.5, (1, "s0"): 0.5}, {Verdict.ACCEPTING: 0.5, Verdict.PENDING: 0.5, Verdict.VIOLATED: 0.0}),
        (
            {(0, "s0"): 0.25, (0, "s1"): 0.25, (1, "s0"): 0.25, (1, "s1"): 0.25},
            {Verdict.ACCEPTING: 0.5, Verdict.PENDING: 0.5, Verdict.VIOLATED: 0.0},
        ),
    ],
)
def test_verdict_probabilities(d1, mapping, expected):
    belief = cells(mapping, 2, 2)
    got = verdict_probabilities(belief, d1)
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(_enumerate_verdicts(belief, d1), abs=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_verdict_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    b = fixtures.random_bundle(rng, 3, 4, 2)
    belief = rng.dirichlet(np.ones(12)).reshape(3, 4)
    assert sum(verdict_probabilities(belief, b.dfsm).values()) == pytest.approx(1.0, abs=1e-9)


# -- gap distributions ----------------------------------------------------


def test_geometric_truncation():
    g = GapDist.geometric("geo", 0.5)
    lengths = sorted(g.mass)
    assert lengths[0] == 0
    # smallest L with 1 - 0.5^(L+1) >= 1 - 1e-9 is L = 29
    assert lengths[-1] == 29
    assert sum(g.mass.values()) == pytest.approx(1.0, abs=1e-12)


# -- serialization --------------------------------------------------------


def test_round_trip_exact(tmp_path, m1):
    path = tmp_path / "m1.json"
    save_model(m1, path)
    assert load_model(path) == m1


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_random_bitexact(seed):
    b = fixtures.random_bundle(np.random.default_rng(seed), 3, 3, 3, peek_values=2)
    back = loads_model(dumps_model(b))
    assert back == b
    assert back.hmm.A.tobytes() == b.hmm.A.tobytes()


def test_unknown_symbol_in_delta_is_parse_error(m1):
    d = m1.to_dict()
    d["dfsm"]["delta"][0]["zz"] = "s0"
    text = json.dumps(d, indent=2)
    with pytest.raises(ParseError) as exc:
        loads_model(text)
    assert exc.value.line is not None


def test_negative_probability_is_invalid_model(m1):
    d = m1.to_dict()
    d["hmm"]["A"][0] = [-0.5, 1.5]
    with pytest.raises(InvalidModel):
        loads_model(json.dumps(d))


def test_malformed_json_reports_position():
    with pytest.raises(ParseError) as exc:
        loads_model('{"alphabet": ["a",\n  }')
    assert exc.value.line == 2


def test_missing_model_file(tmp_path):
    with pytest.raises(ParseError):
        load_model(tmp_path / "nope.json")


def test_geometric_in_file(m1):
    d = m1.to_dict()
    d["gap_dists"].append({"id": "geo", "geometric": 0.5})
    b = loads_model(json.dumps(d))
    assert max(b.gaps["geo"].mass) == 29


# -- traces ---------------------------------------------------------------


def test_parse_trace():
    text = "# header\nevt a\n\ngap g1   # trailing\npeek p1\n"
    assert parse_trace(text) == [Event("a"), Gap("g1"), Peek("p1")]


def test_parse_trace_errors():
    with pytest.raises(ParseError) as exc:
        parse_trace("evt a\nfoo b\n")
    assert (exc.value.line, exc.value.column) == (2, 1)
    with pytest.raises(ParseError):
        parse_trace("evt\n")
    with pytest.raises(ParseError):
        parse_trace("gap g1\n", events_only=True)


def test_check_item(m1):
    m1.check_item(Event("a"))
    with pytest.raises(UnknownLabel):
        m1.check_item(Event("b"))
    with pytest.raises(UnknownLabel):
        m1.check_item(Gap("g9"))
    with pytest.raises(UnknownLabel):
        m1.check_item(Peek("p7"))
