import json

import pytest

from agentrouter.dataio import (
    AgentAnswerRecord,
    AgentProfile,
    DataError,
    DatasetRecord,
    SplitSpec,
    canonical_order,
    default_profiles,
    join_for_training,
    load_agent_cache,
    load_dataset,
    make_splits,
    parse_agent_id,
    write_agent_cache,
    write_dataset,
)


def _jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def _rec(i, n_answers=1):
    return DatasetRecord(f"r{i}", f"question {i}?", f"context {i}.", tuple(f"a{j}" for j in range(n_answers)), "toy")


def test_load_keeps_file_order_and_assigns_ids(tmp_path):
    p = _jsonl(tmp_path / "d.jsonl", [{"question": f"q{i}", "context": "c", "answers": ["x"]} for i in range(3)])
    recs = load_dataset(p, "toy")
    assert [r.id for r in recs] == ["toy-0", "toy-1", "toy-2"]
    assert [r.question for r in recs] == ["q0", "q1", "q2"]


def test_missing_answers_names_the_line(tmp_path):
    p = _jsonl(tmp_path / "d.jsonl", [
        {"question": "q", "context": "c", "answers": ["x"]},
        {"question": "q", "context": "c"},
    ])
    with pytest.raises(DataError, match="line 2: missing gold answers"):
        load_dataset(p, "toy")


def test_invalid_json_line(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"question": "q", "context": "c", "answers": ["x"]}\n{oops\n', encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_dataset(p, "toy")


def test_dataset_type_is_kept(tmp_path):
    p = _jsonl(tmp_path / "d.jsonl", [{"question": "q", "context": "c", "answers": ["x"], "type": "comparison"}])
    assert load_dataset(p, "hotpotqa")[0].question_type == "comparison"


def test_duplicate_ids_rejected(tmp_path):
    row = {"id": "same", "question": "q", "context": "c", "answers": ["x"]}
    with pytest.raises(DataError, match="duplicate"):
        load_dataset(_jsonl(tmp_path / "d.jsonl", [row, row]), "toy")


def test_write_then_load_round_trip(tmp_path):
    recs = [_rec(i, 2) for i in range(4)]
    write_dataset(tmp_path / "d.jsonl", recs)
    assert load_dataset(tmp_path / "d.jsonl", "toy") == recs


def test_default_splits_are_index_based():
    train_file = [_rec(i) for i in range(600)]
    val_file = [_rec(1000 + i) for i in range(200)]
    train, val, test = make_splits(train_file, val_file)
    assert len(train) == 500 and train[0].id == "r0"
    assert [r.id for r in val] == [f"r{1000 + i}" for i in range(100)]
    assert [r.id for r in test] == [f"r{1100 + i}" for i in range(100)]


def test_short_validation_file_reports_count():
    with pytest.raises(DataError, match="test range needs 200, have 150"):
        make_splits([_rec(i) for i in range(500)], [_rec(i) for i in range(150)])


def test_split_spec_rejects_overlap():
    with pytest.raises(DataError):
        SplitSpec.parse("0:10", "0:10", "5:20")


def test_default_pool():
    pool = default_profiles()
    assert len(pool) == 24
    ids = [p.agent_id for p in pool]
    assert ids == sorted(ids)
    assert parse_agent_id(ids[0]) == ("gpt_oss_20b", "cot")


def test_bad_design_and_duplicates():
    with pytest.raises(DataError):
        AgentProfile.from_id("BACKBONE::x::AGENT::poetry")
    with pytest.raises(DataError):
        canonical_order(default_profiles()[:2] * 2)


def test_cache_duplicates_last_wins(tmp_path):
    rows = [{"record_id": "r", "agent_id": f"BACKBONE::b::AGENT::raw{i}", "answer": str(i)} for i in range(7)]
    rows[6] = {"record_id": "r", "agent_id": rows[2]["agent_id"], "answer": "late"}
    cache = load_agent_cache(_jsonl(tmp_path / "c.jsonl", rows))
    assert cache[("r", rows[2]["agent_id"])].answer == "late"
    assert cache.duplicate_count == 1
    assert len(cache) == 6


def test_cache_size_and_unknown_agent(tmp_path, profiles):
    rows = [AgentAnswerRecord(f"r{i}", p.agent_id, "x") for i in range(2) for p in profiles]
    rows.append(AgentAnswerRecord("r0", "BACKBONE::mystery::AGENT::raw", "y"))
    write_agent_cache(tmp_path / "c.jsonl", rows)
    cache = load_agent_cache(tmp_path / "c.jsonl", profiles)
    assert len(cache) == 49
    assert ("r0", "BACKBONE::mystery::AGENT::raw") in cache
    assert any("unknown agent" in w for w in cache.warnings)


def test_cache_round_trip_is_lossless(tmp_path):
    rows = [AgentAnswerRecord("r", "BACKBONE::b::AGENT::raw", "ans", "raw text", 0.5)]
    write_agent_cache(tmp_path / "c.jsonl", rows)
    assert list(load_agent_cache(tmp_path / "c.jsonl").values()) == rows


def test_bad_cache_row(tmp_path):
    with pytest.raises(DataError, match="line 1"):
        load_agent_cache(_jsonl(tmp_path / "c.jsonl", [{"record_id": "r"}]))
    with pytest.raises(DataError):
        AgentAnswerRecord("r", "a", "x", f1=1.5)


def test_join_aligns_flags_and_excludes(profiles):
    recs = [_rec(0), _rec(1), _rec(2)]
    cache = {}
    for p in profiles:
        cache[("r0", p.agent_id)] = AgentAnswerRecord("r0", p.agent_id, p.design)
    for p in profiles[1:]:
        cache[("r1", p.agent_id)] = AgentAnswerRecord("r1", p.agent_id, p.design)
    joined, excluded = join_for_training(recs, cache, list(reversed(profiles)))
    assert excluded == ["r2"]
    assert len(joined) == len(recs) - len(excluded)
    full, holey = joined
    assert full.answers == [p.design for p in profiles] and full.missing == []
    assert len(holey.answers) == 24 and holey.answers[0] == ""
    assert holey.missing == [profiles[0].agent_id]
