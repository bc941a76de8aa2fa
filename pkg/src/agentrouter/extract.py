"""Deterministic rule-based entity, relation and question-cue extraction.

Entities come in three kinds: ``named`` (capitalized token runs and quoted
titles), ``temporal`` (years, month/weekday names, BC/AD dates) and
``numeric`` (other number literals).  Relations are only proposed between
consecutive entity mentions inside one sentence, labelled by the words that
separate them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

NAMED, TEMPORAL, NUMERIC = "named", "temporal", "numeric"
MENTION_KINDS = (NAMED, TEMPORAL, NUMERIC)

CUE_CATEGORIES = ("entity_choice", "location", "person", "time", "reason", "manner", "yes_no")

STOPWORDS = frozenset(
    """a an the and or but nor of in on at to for from by with as is are was were be been
    being it its he she they we you i his her their our your this that these those there here
    then than so if when while who whom whose which what where why how not no yes do does did
    has have had will would can could should may might must also after before during since
    however although though because""".split()
)

_MONTHS = (
    "January|February|March|April|May|June|July|August|September|October|November|December"
)
_WEEKDAYS = "Monday|Tuesday|Wednesday|Thursday|Friday|Saturday|Sunday"

_QUOTED = re.compile(r'"([^"\n]{1,80})"|“([^”\n]{1,80})”')
_ERA = re.compile(r"\b\d{1,4}\s?(?:BC|AD|BCE|CE)\b")
_MONTH_DATE = re.compile(rf"\b(?:{_MONTHS})(?:\s+\d{{1,2}})?(?:,?\s+[12]\d{{3}})?\b")
_WEEKDAY = re.compile(rf"\b(?:{_WEEKDAYS})\b")
_YEAR = re.compile(r"(?<![\w.,])(?:1\d{3}|2\d{3})(?![\w]|[.,]\d)")
_NUMBER = re.compile(r"(?<![\w.,])\d+(?:[.,]\d+)*(?![\w]|[.,]\d)")
_CAP_TOKEN = r"[A-Z][\w'’&\-]*"
_CAP_RUN = re.compile(rf"\b{_CAP_TOKEN}(?:\s+(?:of\s+)?{_CAP_TOKEN})*")
_SENT_BOUNDARY = re.compile(r"[.!?](?=\s+[\"“(]?[A-Z0-9])")
_WORD = re.compile(r"[A-Za-z]+")

PREPOSITIONS = frozenset(
    "as in of at on by for from with following to into during after before near under about "
    "against between through".split()
)
_VERB_LEMMAS = {
    "met": "meet", "is": "be", "was": "be", "are": "be", "were": "be", "has": "have",
    "had": "have", "won": "win", "wrote": "write", "led": "lead", "made": "make",
    "became": "become", "born": "bear", "founded": "found", "stars": "star",
    "starred": "star", "starring": "star", "died": "die", "married": "marry",
}
_ALIAS = re.compile(r"^[\s,(\"“”]*(?:also\s+)?(?:known\s+as|called|aka|a\.k\.a\.)[\s\"“”]*$", re.I)
_APPOS = re.compile(r"^[\"”]?\s*\(\s*$")
_PASSIVE = re.compile(r"(?:^|\s)([a-z]+ed)\s+by\s*$")
_INFINITIVE = re.compile(r"^[\s,;)\"”]*to\s+([a-z]+)\s*$")
_ATTR = re.compile(r"^\s*,?\s*(?:[a-z\-]+\s+){0,4}?(?:known|referred\s+to)\s+(?:by|as)\b.*$")
_MAX_GAP_CHARS = 80


@dataclass
class EntityMention:
    surface: str
    kind: str
    frequency: int = 0
    spans: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in MENTION_KINDS:
            raise ValueError(f"unknown mention kind {self.kind!r}")
        if not self.surface:
            raise ValueError("empty surface")

    @property
    def key(self) -> str:
        return self.surface.casefold()

    def to_json(self) -> dict:
        return {"surface": self.surface, "kind": self.kind, "frequency": self.frequency,
                "spans": [list(s) for s in self.spans]}

    @classmethod
    def from_json(cls, obj: dict) -> "EntityMention":
        spans = [tuple(s) for s in obj.get("spans", [])]
        freq = obj.get("frequency", len(spans) or 1)
        return cls(obj["surface"], obj.get("kind", NAMED), int(freq), spans)


@dataclass(frozen=True)
class RelationTriple:
    head_surface: str
    relation_label: str
    tail_surface: str
    provenance_span: tuple = (0, 0)

    def __post_init__(self):
        if self.head_surface.casefold() == self.tail_surface.casefold():
            raise ValueError("relation triple with identical head and tail")
        if not self.relation_label:
            raise ValueError("empty relation label")

    def to_json(self) -> dict:
        return {"head": self.head_surface, "relation": self.relation_label,
                "tail": self.tail_surface, "span": list(self.provenance_span)}

    @classmethod
    def from_json(cls, obj: dict) -> "RelationTriple":
        return cls(obj["head"], obj["relation"], obj["tail"], tuple(obj.get("span", (0, 0))))


def sentence_spans(text: str) -> list[tuple[int, int]]:
    spans, start = [], 0
    for m in _SENT_BOUNDARY.finditer(text):
        spans.append((start, m.end()))
        start = m.end()
    spans.append((start, len(text)))
    return [(a, b) for a, b in spans if text[a:b].strip()]


def _sentence_starts(text: str) -> set[int]:
    starts = set()
    for a, _ in sentence_spans(text):
        lead = len(text[a:]) - len(text[a:].lstrip(" \t\n\"“("))
        starts.add(a + lead)
    return starts


def _raw_spans(text: str) -> list[tuple[int, int, str]]:
    """Candidate (start, end, kind) spans, highest-priority rule first."""
    found = []
    for m in _QUOTED.finditer(text):
        g = 1 if m.group(1) is not None else 2
        inner = m.group(g)
        if inner.strip() and len(inner.split()) <= 10:
            lead = len(inner) - len(inner.lstrip())
            a = m.start(g) + lead
            found.append((a, a + len(inner.strip()), NAMED))
    for rx in (_ERA, _MONTH_DATE, _WEEKDAY, _YEAR):
        found.extend((m.start(), m.end(), TEMPORAL) for m in rx.finditer(text))
    starts = _sentence_starts(text)
    for m in _CAP_RUN.finditer(text):
        a, b = m.start(), m.end()
        tokens = m.group().split()
        # capitalized function words ("The", "In") are not names by themselves
        if all(t.casefold() in STOPWORDS for t in tokens):
            continue
        # header labels such as "Title:" are markup, not names
        if a in starts and len(tokens) == 1 and text[b:b + 1] == ":":
            continue
        found.append((a, b, NAMED))
    found.extend((m.start(), m.end(), NUMERIC) for m in _NUMBER.finditer(text))
    return found


def _select_spans(text: str) -> list[tuple[int, int, str]]:
    taken: list[tuple[int, int, str]] = []
    for a, b, kind in _raw_spans(text):
        if b <= a or any(a < tb and ta < b for ta, tb, _ in taken):
            continue
        taken.append((a, b, kind))
    return sorted(taken)


def extract_entities(text: str) -> list[EntityMention]:
    """Entity mentions deduplicated case-insensitively, in first-occurrence order."""
    by_key: dict[str, EntityMention] = {}
    for a, b, kind in _select_spans(text):
        surface = text[a:b].strip()
        key = surface.casefold()
        if key not in by_key:
            by_key[key] = EntityMention(surface, kind)
        m = by_key[key]
        m.spans.append((a, b))
        m.frequency += 1
    return list(by_key.values())


def _lemma(word: str) -> str:
    w = word.lower()
    if w in _VERB_LEMMAS:
        return _VERB_LEMMAS[w]
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ing") and len(w) > 5:
        return w[:-3]
    if w.endswith("ed") and len(w) > 4:
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) > 3:
        return w[:-1]
    return w


def _is_verbish(word: str) -> bool:
    w = word.lower()
    if w in _VERB_LEMMAS:
        return True
    if w in STOPWORDS or w in PREPOSITIONS:
        return False
    return w.endswith(("ed", "ing")) or (w.endswith("s") and not w.endswith("ss") and len(w) > 3)


def relation_label(between: str) -> str | None:
    """Label the gap text between two entity mentions, or None if no rule fires."""
    if len(between) > _MAX_GAP_CHARS:
        return None
    if _ALIAS.match(between):
        return "dep:alias"
    if _APPOS.match(between):
        return "appos"
    if not between.strip(" \t,;:\"“”()-"):
        return None
    m = _PASSIVE.search(between)
    if m:
        return f"{m.group(1)}_by"
    if _ATTR.match(between):
        return "dep:attr"
    words = _WORD.findall(between)
    if not words:
        return None
    # "George Sanders as the character Gay Lawrence" -> prep:as
    if words[0].lower() in PREPOSITIONS and len(words) <= 4 and not any(_is_verbish(w) for w in words[1:]):
        return f"prep:{words[0].lower()}"
    if len(words) > 8:
        return None
    verbs = [w for w in words if _is_verbish(w)]
    if verbs:
        return _lemma(verbs[-1])
    if words[-1].lower() in PREPOSITIONS and len(words) <= 4:
        return f"prep:{words[-1].lower()}"
    return None


def extract_triples(text: str, entities) -> list[RelationTriple]:
    """Triples between consecutive entity mentions of one sentence.

    A subject-less infinitive clause (", to star X") is attached to the
    document topic, i.e. the first named mention of the text.
    """
    by_key = {e.surface.casefold(): e for e in entities}
    occurrences = sorted(
        (a, b, e.surface) for e in entities for a, b in e.spans
    )
    topic = next((e.surface for e in entities if e.kind == NAMED), None)
    seen, out = set(), []
    for s_start, s_end in sentence_spans(text):
        inside = [o for o in occurrences if s_start <= o[0] and o[1] <= s_end]
        for (a1, b1, head), (a2, b2, tail) in zip(inside, inside[1:]):
            between = text[b1:a2]
            inf = _INFINITIVE.match(between)
            if inf and topic is not None and _lemma(inf.group(1)) not in STOPWORDS:
                head, label = topic, _lemma(inf.group(1))
            else:
                label = relation_label(between)
            if label is None or head.casefold() == tail.casefold():
                continue
            key = (head.casefold(), tail.casefold(), label)
            if key in seen:
                continue
            seen.add(key)
            out.append(RelationTriple(by_key[head.casefold()].surface, label,
                                      by_key[tail.casefold()].surface, (a1, b2)))
    return out


_CUE_WORDS = {
    "which": "entity_choice",
    "where": "location",
    "who": "person", "whom": "person", "whose": "person",
    "when": "time",
    "why": "reason",
    "how": "manner",
    "whether": "yes_no",
}
_YES_NO_LEADS = frozenset(
    "is are was were do does did can could will would has have had should shall may might".split()
)
# dataset-provided type labels (HotpotQA / 2Wiki) folded onto the cue vocabulary
DATASET_TYPE_MAP = {
    "comparison": "entity_choice",
    "bridge_comparison": "entity_choice",
}


def question_type_cues(question: str) -> set[str]:
    words = [w.lower() for w in _WORD.findall(question)]
    cues = {_CUE_WORDS[w] for w in words if w in _CUE_WORDS}
    if words and words[0] in _YES_NO_LEADS:
        cues.add("yes_no")
    return cues


def merge_dataset_type(cues: set[str], question_type: str | None) -> set[str]:
    if not question_type:
        return set(cues)
    t = question_type.strip().lower()
    mapped = t if t in CUE_CATEGORIES else DATASET_TYPE_MAP.get(t)
    return set(cues) | ({mapped} if mapped else set())
