import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentrouter.dataio import DatasetRecord, JoinedRecord
from agentrouter.evaluate import (
    TRANSFER_KS,
    aggregate_scores,
    baselines,
    drop_pct,
    evaluate_method,
    exact_match,
    format_table,
    normalize_answer,
    token_f1,
    topk_deltas,
    transfer_report,
)

IDS = ["BACKBONE::m::AGENT::cot", "BACKBONE::m::AGENT::raw", "BACKBONE::n::AGENT::raw"]


def _joined(i, gold, answers, missing=()):
    rec = DatasetRecord(f"r{i}", "q?", "ctx.", (gold,), "toy")
    return JoinedRecord(rec, list(answers), list(missing))


def test_normalize():
    assert normalize_answer("The Devil's Hairpin") == "devils hairpin"
    assert normalize_answer("yes") == "yes"
    assert normalize_answer("  A  an the  ") == ""


@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    assert normalize_answer(normalize_answer(s)) == normalize_answer(s)


def test_exact_match():
    assert exact_match("Gay Lawrence", ["gay lawrence"]) == 1
    assert exact_match("the falcon", ["falcon"]) == 1
    assert exact_match("falcon takes over", ["falcon"]) == 0


def test_token_f1():
    assert token_f1("Gay Lawrence", ["Gay Lawrence"]) == 1.0
    assert token_f1("falcon takes over", ["falcon"]) == pytest.approx(0.5)
    assert token_f1("", ["x"]) == 0.0
    assert token_f1("the", ["a"]) == 1.0
    assert token_f1("x y", ["z", "x y"]) == 1.0


@given(st.text(max_size=20), st.lists(st.text(max_size=20), min_size=1, max_size=3))
def test_metric_bounds(pred, golds):
    em, f1 = exact_match(pred, golds), token_f1(pred, golds)
    assert em in (0, 1) and 0.0 <= f1 <= 1.0
    if em:
        assert f1 == 1.0


def test_seed_aggregation():
    rep = aggregate_scores([[0.70], [0.71], [0.72]], [[0.7], [0.71], [0.72]], "router")
    assert rep.f1_mean == pytest.approx(71.0)
    assert rep.f1_std == pytest.approx(np.sqrt(2 / 3), abs=1e-9)
    assert rep.f1_std == pytest.approx(0.816, abs=5e-4)
    assert rep.n_seeds == 3


def test_single_seed_and_perfect_predictions():
    rep = evaluate_method([["a", "b"]], [("a",), ("b",)], "x")
    assert rep.f1_std == 0 and rep.f1_mean == rep.em_mean == 100.0
    with pytest.raises(ValueError):
        evaluate_method([["a"]], [("a",), ("b",)], "x")


def test_baselines_values():
    test = [
        _joined(0, "Paris", ["Paris", "Rome", "Rome"]),
        _joined(1, "Oslo", ["Oslo", "Oslo", "Bern"]),
    ]
    train = [_joined(9, "Lima", ["Quito", "Quito", "Lima"])]
    out = baselines(test, IDS, train)
    assert out["average"].em_mean == pytest.approx(50.0)
    assert out["majority_vote"].em_mean == pytest.approx(50.0)
    # best on train is the third agent, which is also the only raw agent of its backbone
    assert out["best_agent"].detail == IDS[2] and out["best_agent"].em_mean == 0.0
    assert out["best_llm"].detail == IDS[2]
    assert out["oracle"].em_mean == 100.0


def test_single_agent_pool_collapses():
    test = [_joined(0, "a", ["a"]), _joined(1, "b", ["c"])]
    out = baselines(test, IDS[:1], test)
    means = {name: rep.f1_mean for name, rep in out.items()}
    assert len(set(means.values())) == 1


def test_missing_answers_flagged():
    flags = []
    out = baselines([_joined(0, "a", ["a", "", "b"], missing=[IDS[1]])], IDS, flags=flags)
    assert out["average"].em_mean == pytest.approx(50.0)
    assert any("missing" in f for f in flags)
    assert any("no train split" in f for f in flags)


def test_oracle_dominates_every_baseline():
    rng = np.random.default_rng(0)
    pool = ["red", "blue", "green", "red car"]
    test = [_joined(i, str(rng.choice(pool)), rng.choice(pool, size=3)) for i in range(30)]
    out = baselines(test, IDS, test[:10])
    for name, rep in out.items():
        assert out["oracle"].f1_mean >= rep.f1_mean
        assert out["oracle"].em_mean >= rep.em_mean


def test_drop_formula():
    assert drop_pct(70.0, 70.43) == pytest.approx(-0.614, abs=1e-3)
    assert round(drop_pct(70.0, 70.43), 2) == -0.61
    assert drop_pct(70.0, 70.43, "absolute") == pytest.approx(-0.43)
    assert drop_pct(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        drop_pct(1.0, 1.0, "ratio")


def test_transfer_identity_and_missing_reference():
    by_k = {k: {"f1": 50.0 + k, "em": 40.0 + k} for k in TRANSFER_KS}
    rows = transfer_report(by_k, by_k)
    assert [r["k"] for r in rows] == list(TRANSFER_KS)
    assert all(r["f1_drop"] == 0 and r["em_drop"] == 0 for r in rows)
    with pytest.raises(KeyError, match="in-domain"):
        transfer_report({}, by_k)


def test_topk_deltas():
    rows = topk_deltas({3: {"f1": 45.0, "em": 30.0}, 24: {"f1": 50.0, "em": 40.0}})
    assert rows[0]["f1_delta_pct"] == pytest.approx(-10.0)
    assert rows[0]["em_delta_pct"] == pytest.approx(-25.0)
    assert rows[1]["f1_delta_pct"] == 0.0
    with pytest.raises(KeyError):
        topk_deltas({3: {"f1": 1.0, "em": 1.0}})


def test_format_table():
    text = format_table([{"a": 1.234, "b": "x"}], ["a", "b"])
    assert text.splitlines()[2].split() == ["1.23", "x"]
