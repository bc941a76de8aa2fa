"""Dataset and agent-cache loading, split protocol, and record/answer joins.

Dataset files are JSONL with keys ``question``, ``context``, ``answers`` and
optional ``id``/``type`` (plus optional pre-extracted ``entities``/``triples``).
Agent caches are JSONL with ``record_id``, ``agent_id``, ``answer`` and
optional ``raw_output``/``f1``.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

logger = logging.getLogger(__name__)

DESIGNS = ("raw", "cot", "sc", "react_reflect", "mad", "summary")
BACKBONES = ("gpt_oss_20b", "llama3_8b_lite", "mixtral_8x7b", "qwen2p5_7b_turbo")

_BACKBONE_BLURBS = {
    "gpt_oss_20b": "gpt-oss-20b open-weight reasoning model",
    "llama3_8b_lite": "Llama-3-8B-Instruct lite instruction-tuned model",
    "mixtral_8x7b": "Mixtral-8x7B-Instruct sparse mixture-of-experts model",
    "qwen2p5_7b_turbo": "Qwen2.5-7B-Instruct-Turbo instruction-tuned model",
}

_DESIGN_BLURBS = {
    "raw": "direct prompting: answer the question from the context in one call",
    "cot": "chain-of-thought: think step-by-step and chain facts before answering",
    "sc": "self-consistency: sample several reasoning paths and keep the majority answer",
    "react_reflect": "react-reflect: plan, answer, then a judge reviews and requests revisions",
    "mad": "multi-agent debate: debater A proposes, debater B stress-tests, a judge decides",
    "summary": "multi-agent summary: two thinkers answer and a summarizer fuses their signals",
}


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    context: str
    gold_answers: tuple[str, ...]
    source_dataset: str
    question_type: Optional[str] = None
    # pre-extracted annotations (raw dicts), bypass the rule extractor when present
    entities: Optional[tuple] = None
    triples: Optional[tuple] = None

    def __post_init__(self):
        if not self.gold_answers:
            raise DataError(f"{self.id}: missing gold answers")
        if not self.question.strip():
            raise DataError(f"{self.id}: empty question")
        if not self.context.strip():
            raise DataError(f"{self.id}: empty context")


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    backbone: str
    design: str
    description_text: str

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise DataError(f"unknown agent design {self.design!r}")

    @classmethod
    def from_id(cls, agent_id: str, description_text: Optional[str] = None) -> "AgentProfile":
        backbone, design = parse_agent_id(agent_id)
        if description_text is None:
            description_text = describe_agent(backbone, design)
        return cls(agent_id, backbone, design, description_text)


@dataclass(frozen=True)
class AgentAnswerRecord:
    record_id: str
    agent_id: str
    answer: str
    raw_output: Optional[str] = None
    f1: Optional[float] = None

    def __post_init__(self):
        if self.f1 is not None and not 0.0 <= self.f1 <= 1.0:
            raise DataError(f"f1 must lie in [0, 1], got {self.f1}")

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "record_id": self.record_id,
            "agent_id": self.agent_id,
            "answer": self.answer,
        }
        if self.raw_output is not None:
            out["raw_output"] = self.raw_output
        if self.f1 is not None:
            out["f1"] = self.f1
        return out


@dataclass(frozen=True)
class SplitSpec:
    """Half-open index intervals; val and test index into the validation file."""

    train_range: tuple[int, int] = (0, 500)
    val_range: tuple[int, int] = (0, 100)
    test_range: tuple[int, int] = (100, 200)

    def __post_init__(self):
        for name in ("train_range", "val_range", "test_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise DataError(f"{name} must satisfy 0 <= start <= end, got {(lo, hi)}")
        (a, b), (c, d) = self.val_range, self.test_range
        if max(a, c) < min(b, d):
            raise DataError("val_range and test_range overlap")

    @classmethod
    def parse(cls, train: str, val: str, test: str) -> "SplitSpec":
        return cls(_parse_range(train), _parse_range(val), _parse_range(test))


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def agent_id_for(backbone: str, design: str) -> str:
    return f"BACKBONE::{backbone}::AGENT::{design}"


def parse_agent_id(agent_id: str) -> tuple[str, str]:
    parts = agent_id.split("::")
    if len(parts) != 4 or parts[0] != "BACKBONE" or parts[2] != "AGENT":
        raise DataError(f"malformed agent id {agent_id!r}")
    return parts[1], parts[3]


def describe_agent(backbone: str, design: str) -> str:
    if design not in _DESIGN_BLURBS:
        raise DataError(f"unknown agent design {design!r}")
    blurb = _BACKBONE_BLURBS.get(backbone, backbone.replace("_", " "))
    return f"{blurb}; {_DESIGN_BLURBS[design]}"


def default_profiles() -> list[AgentProfile]:
    """The 4 backbones x 6 designs pool, in canonical (lexicographic) order."""
    profiles = [AgentProfile.from_id(agent_id_for(b, d)) for b in BACKBONES for d in DESIGNS]
    return canonical_order(profiles)


def canonical_order(profiles) -> list[AgentProfile]:
    profiles = sorted(profiles, key=lambda p: p.agent_id)
    ids = [p.agent_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate agent ids in profile pool")
    return profiles


def _read_jsonl(path) -> Iterator[tuple[int, Any]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None


def load_dataset(path, source_dataset: str) -> list[DatasetRecord]:
    records = []
    for lineno, obj in _read_jsonl(path):
        if not isinstance(obj, dict):
            raise DataError(f"line {lineno}: expected a JSON object")
        answers = obj.get("answers")
        if not answers or not isinstance(answers, list):
            raise DataError(f"line {lineno}: missing gold answers")
        for key in ("question", "context"):
            if not isinstance(obj.get(key), str) or not obj[key].strip():
                raise DataError(f"line {lineno}: missing {key}")
        rec_id = str(obj["id"]) if obj.get("id") is not None else f"{source_dataset}-{lineno - 1}"
        records.append(
            DatasetRecord(
                id=rec_id,
                question=obj["question"],
                context=obj["context"],
                gold_answers=tuple(str(a) for a in answers),
                source_dataset=source_dataset,
                question_type=obj.get("type"),
                entities=tuple(obj["entities"]) if obj.get("entities") is not None else None,
                triples=tuple(obj["triples"]) if obj.get("triples") is not None else None,
            )
        )
    seen = set()
    for rec in records:
        if rec.id in seen:
            raise DataError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
    return records


def write_dataset(path, records) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "question": rec.question,
                "context": rec.context,
                "answers": list(rec.gold_answers),
            }
            if rec.question_type is not None:
                obj["type"] = rec.question_type
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def _slice(records, rng: tuple[int, int], label: str):
    lo, hi = rng
    if len(records) < hi:
        raise DataError(f"{label} range needs {hi}, have {len(records)}")
    return list(records[lo:hi])


def make_splits(train_file_records, val_file_records, spec: SplitSpec = SplitSpec()):
    """Index-based (train, val, test) selection; no shuffling."""
    train = _slice(train_file_records, spec.train_range, "train")
    val = _slice(val_file_records, spec.val_range, "val")
    test = _slice(val_file_records, spec.test_range, "test")
    return train, val, test


class AgentCache(Mapping):
    """(record_id, agent_id) -> AgentAnswerRecord, with load diagnostics."""

    def __init__(self, entries=None, duplicate_count: int = 0, warnings=None):
        self._entries: dict[tuple[str, str], AgentAnswerRecord] = dict(entries or {})
        self.duplicate_count = duplicate_count
        self.warnings: list[str] = list(warnings or [])

    def __getitem__(self, key):
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def agent_ids(self) -> list[str]:
        return sorted({a for _, a in self._entries})

    def add(self, rec: AgentAnswerRecord) -> None:
        self._entries[(rec.record_id, rec.agent_id)] = rec


def load_agent_cache(path, profiles=None) -> AgentCache:
    known = {p.agent_id for p in profiles} if profiles is not None else None
    cache = AgentCache()
    for lineno, obj in _read_jsonl(path):
        try:
            rec = AgentAnswerRecord(
                record_id=str(obj["record_id"]),
                agent_id=str(obj["agent_id"]),
                answer=str(obj["answer"]),
                raw_output=obj.get("raw_output"),
                f1=None if obj.get("f1") is None else float(obj["f1"]),
            )
        except (KeyError, TypeError, DataError) as exc:
            raise DataError(f"line {lineno}: bad cache row ({exc})") from None
        key = (rec.record_id, rec.agent_id)
        if key in cache:
            cache.duplicate_count += 1
            msg = f"line {lineno}: duplicate entry for {key}, keeping the later line"
            cache.warnings.append(msg)
            logger.warning(msg)
        if known is not None and rec.agent_id not in known:
            cache.warnings.append(f"line {lineno}: unknown agent {rec.agent_id}")
        cache.add(rec)
    return cache


def write_agent_cache(path, rows, append: bool = False) -> None:
    with Path(path).open("a" if append else "w", encoding="utf-8") as fh:
        for rec in rows:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


@dataclass
class JoinedRecord:
    record: DatasetRecord
    answers: list[str]
    missing: list[str] = field(default_factory=list)
    cached_f1: list[Optional[float]] = field(default_factory=list)


def join_for_training(records, cache: Mapping, profiles) -> tuple[list[JoinedRecord], list[str]]:
    """Align each record's cached answers to the canonical agent order.

    Returns the joined rows and the ids of records dropped because no agent
    had a cached answer for them.
    """
    order = [p.agent_id for p in canonical_order(profiles)]
    joined, excluded = [], []
    for rec in records:
        hits = [cache.get((rec.id, a)) for a in order]
        if all(h is None for h in hits):
            excluded.append(rec.id)
            continue
        joined.append(
            JoinedRecord(
                record=rec,
                answers=[h.answer if h is not None else "" for h in hits],
                missing=[a for a, h in zip(order, hits) if h is None],
                cached_f1=[h.f1 if h is not None else None for h in hits],
            )
        )
    if excluded:
        logger.warning("%d record(s) without cached answers excluded", len(excluded))
    return joined, excluded
