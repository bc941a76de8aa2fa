"""Run agent designs against a chat backend and write the offline caches."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..dataio import AgentAnswerRecord, canonical_order, load_agent_cache, parse_agent_id, write_agent_cache
from ..graph import lexical_agent_entities
from ..route import weighted_vote
from .backend import BackendError
from .prompts import PROMPTS, PromptBundle, design_roles, render_prompt

logger = logging.getLogger(__name__)

_MARKER = "\\boxed{"
_MARKUP = re.compile(r"[*`#>]+")
_STATUS = re.compile(r"status:\s*(revise|final)", re.I)
_FEEDBACK = re.compile(r"^\s*feedback:\s*(.+)$", re.I | re.M)
_SCORE_LINE = re.compile(r"^\s*(E\d+)\s*[:=]\s*([0-9]*\.?[0-9]+)", re.M)


def _boxed_spans(raw: str) -> list[str]:
    spans, start = [], raw.find(_MARKER)
    while start >= 0:
        i, depth = start + len(_MARKER), 1
        while i < len(raw) and depth:
            depth += {"{": 1, "}": -1}.get(raw[i], 0)
            i += 1
        if depth == 0:
            spans.append(raw[start + len(_MARKER):i - 1])
        start = raw.find(_MARKER, start + 1)
    return spans


def parse_answer(raw: str) -> tuple[str, list[str]]:
    """Answer text plus flags; ``["unboxed"]`` when the fallback was used."""
    spans = _boxed_spans(raw or "")
    if spans:
        return spans[-1].strip(), []
    lines = [ln for ln in (raw or "").splitlines() if ln.strip()]
    last = _MARKUP.sub("", lines[-1]).strip() if lines else ""
    return last, ["unboxed"]


def parse_boxed(raw: str) -> str:
    """Contents of the last balanced ``\\boxed{...}``, else the last non-empty line."""
    return parse_answer(raw)[0]


@dataclass
class DesignRun:
    answer: str
    raw_output: str
    calls: int
    flags: list = field(default_factory=list)
    transcript: list = field(default_factory=list)


def run_design(design: str, record, backend, sc_samples: int = 5, max_revisions: int = 2) -> DesignRun:
    """Execute one agent design on one record."""
    design_roles(design)
    transcript: list[dict] = []

    def call(role, extra=(), seed=None):
        messages = render_prompt(design, record, role, extra)
        text = backend.complete(messages, seed=seed)
        transcript.append({"role": role, "seed": seed, "messages": messages, "response": text})
        return text

    flags: list[str] = []
    if design in ("raw", "cot"):
        out = call(design)
        answer, f = parse_answer(out)
        flags += f
    elif design == "sc":
        outs = [call("cot", seed=i) for i in range(sc_samples)]
        parsed = [parse_answer(o) for o in outs]
        answer, _, _ = weighted_vote([a for a, _ in parsed], [1.0] * len(parsed))
        flags += sorted({f for _, fs in parsed for f in fs})
        out = "\n---\n".join(outs)
    elif design == "react_reflect":
        extra, revision, outs = (), 0, []
        while True:
            draft = call("react", extra)
            answer, f = parse_answer(draft)
            review = call("reflect", [("Agent answer", answer), ("Revision", str(revision))])
            outs += [draft, review]
            statuses = _STATUS.findall(review)
            status = statuses[-1].lower() if statuses else None
            if status is None:
                flags.append("reflect gave no status")
            if status == "revise" and revision < max_revisions:
                fb = _FEEDBACK.findall(review)
                extra = [("Previous answer", answer), ("Feedback", fb[-1].strip() if fb else review.strip())]
                revision += 1
                continue
            flags += f
            break
        out = "\n---\n".join(outs)
    elif design == "mad":
        a = call("debater_a")
        b = call("debater_b", [("Debater A", a)])
        out = call("judge", [("Debater A", a), ("Debater B", b)])
        answer, f = parse_answer(out)
        flags += f
    else:  # summary
        a = call("think_a")
        b = call("think_b")
        out = call("summarize", [("Agent A", a), ("Agent B", b)])
        answer, f = parse_answer(out)
        flags += f
    return DesignRun(answer, out, len(transcript), flags, transcript)


@dataclass
class RunSummary:
    written: int = 0
    skipped: int = 0
    errors: int = 0
    calls: int = 0


def _backend_for(backends, backbone):
    if hasattr(backends, "complete"):
        return backends
    try:
        return backends[backbone]
    except KeyError:
        raise BackendError(f"no backend configured for backbone {backbone}") from None


def _safe_name(agent_id: str) -> str:
    return agent_id.replace("::", "__")


def run_agents(records, profiles, backends, cache_path, concurrency: int = 4, transcripts_dir=None,
               sc_samples: int = 5, max_revisions: int = 2) -> RunSummary:
    """Fill ``cache_path`` with one answer row per (record, agent).

    Pairs already in the cache are skipped, so an interrupted run can be
    resumed.  Rows are appended record by record in canonical agent order.
    ``backends`` is one backend for every backbone or a backbone -> backend map.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be at least 1")
    profiles = canonical_order(profiles)
    cache_path = Path(cache_path)
    done = set(load_agent_cache(cache_path).keys()) if cache_path.exists() else set()
    summary = RunSummary()

    def one(record, profile):
        backbone, design = parse_agent_id(profile.agent_id)
        try:
            run = run_design(design, record, _backend_for(backends, backbone), sc_samples, max_revisions)
        except BackendError as exc:
            logger.warning("%s on %s failed: %s", profile.agent_id, record.id, exc)
            return AgentAnswerRecord(record.id, profile.agent_id, "", f"ERROR: {exc}"), None
        return AgentAnswerRecord(record.id, profile.agent_id, run.answer, run.raw_output), run

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for record in records:
            todo = [p for p in profiles if (record.id, p.agent_id) not in done]
            summary.skipped += len(profiles) - len(todo)
            results = list(pool.map(lambda p: one(record, p), todo))
            rows = []
            for profile, (row, run) in zip(todo, results):
                rows.append(row)
                if run is None:
                    summary.errors += 1
                    continue
                summary.calls += run.calls
                if transcripts_dir is not None:
                    tdir = Path(transcripts_dir) / record.id
                    tdir.mkdir(parents=True, exist_ok=True)
                    (tdir / f"{_safe_name(profile.agent_id)}.json").write_text(
                        json.dumps({"record_id": record.id, "agent_id": profile.agent_id, "flags": run.flags,
                                    "calls": run.transcript}, indent=1, ensure_ascii=False),
                        encoding="utf-8")
            write_agent_cache(cache_path, rows, append=True)
            done.update((record.id, r.agent_id) for r in rows)
            summary.written += len(rows)
    return summary


def _judge_messages(record, mentions, triples, profile) -> list[dict]:
    labels = {m.surface.casefold(): f"E{i + 1}" for i, m in enumerate(mentions)}
    entity_lines = "\n".join(f"E{i + 1}: {m.surface}" for i, m in enumerate(mentions))
    relation_lines = "\n".join(
        f"{labels.get(t.head_surface.casefold(), t.head_surface)} -[{t.relation_label}]-> "
        f"{labels.get(t.tail_surface.casefold(), t.tail_surface)}"
        for t in triples
    ) or "(none)"
    prompt = PromptBundle("judge", "entity_judge", PROMPTS["entity_judge"], "", record.question, record.context)
    return prompt.messages([
        ("Entities", entity_lines),
        ("Relations", relation_lines),
        ("Agent profile", f"Agent: {profile.agent_id}\nProfile: {profile.description_text}"),
    ])


def _parse_scores(text: str) -> dict[str, float]:
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        try:
            obj = json.loads(text[start:end + 1])
            return {str(k): float(v) for k, v in obj.items()}
        except (ValueError, TypeError, AttributeError):
            pass
    return {label: float(score) for label, score in _SCORE_LINE.findall(text)}


def judge_agent_entities(record, mentions, triples, profiles, backend, top: int = 5,
                         warnings=None, flags=None) -> dict[str, set]:
    """Per agent, one judge call scoring the record's entities; keep the ``top`` best.

    Failed or empty judgements fall back to the lexical overlap rule and
    are flagged.  Entities the judge names that are not in the graph are
    skipped with a warning.
    """
    warnings = warnings if warnings is not None else []
    flags = flags if flags is not None else []
    by_label = {f"E{i + 1}": i for i in range(len(mentions))}
    by_surface = {m.surface.casefold(): i for i, m in enumerate(mentions)}
    out: dict[str, set] = {}
    for profile in canonical_order(profiles):
        try:
            reply = backend.complete(_judge_messages(record, mentions, triples, profile))
        except BackendError as exc:
            reply = ""
            warnings.append(f"{record.id}/{profile.agent_id}: judge failed ({exc})")
        scored = []
        for key, score in _parse_scores(reply).items():
            idx = by_label.get(key, by_surface.get(key.casefold()))
            if idx is None:
                warnings.append(f"{record.id}/{profile.agent_id}: judge named unknown entity {key!r}")
                continue
            if score > 0:
                scored.append((-score, idx))
        if scored:
            out[profile.agent_id] = {mentions[i].surface for _, i in sorted(scored)[:top]}
        else:
            flags.append(f"{record.id}/{profile.agent_id}: no usable judgement, lexical fallback")
            out[profile.agent_id] = lexical_agent_entities(profile, mentions, record.context, top)
    return out
