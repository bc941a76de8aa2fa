"""Synthetic QA records with a known agent-quality law.

Each record asks one of three question kinds (person, time, location).
For every kind a fixed pair of agent designs answers correctly on all
backbones; most of the remaining agents agree on a shared distractor
drawn from the same context, so plain majority voting picks the wrong
answer while a router that reads the question cue can do better.
"""

from __future__ import annotations

import random
from pathlib import Path

from .dataio import AgentAnswerRecord, DatasetRecord, default_profiles, parse_agent_id, write_agent_cache, write_dataset

CATEGORIES = ("person", "time", "location")
GOOD_DESIGNS = {
    "person": ("cot", "mad"),
    "time": ("raw", "sc"),
    "location": ("react_reflect", "summary"),
}

_SYLLABLES = ("bar", "cel", "dor", "fen", "gal", "hir", "kos", "lum", "mar", "nev", "orn", "pel",
              "quin", "ros", "sal", "tor", "ul", "ven", "wes", "yar", "zan")
_FILM_WORDS = ("Harbor", "Lantern", "Orchid", "Falcon", "Meridian", "Ember", "Willow", "Cipher",
               "Summit", "Tide", "Mirage", "Quarry", "Vesper", "Anvil")


def _name(rng: random.Random, parts: int = 2) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(parts)).capitalize()


def _person(rng):
    return f"{_name(rng)} {_name(rng, 3)}"


def _film(rng):
    return f"The {rng.choice(_FILM_WORDS)} of {_name(rng)}"


def _record(rng, idx: int, category: str, prefix: str):
    film = _film(rng)
    director, lead = _person(rng), _person(rng)
    year, year2 = rng.sample(range(1921, 1999), 2)
    city, city2 = _name(rng) + "ville", _name(rng) + "ford"
    context = (
        f"{film} is a {year} film directed by {director}. "
        f"{film} stars {lead} in the title role. "
        f"It was filmed in {city}, and its sequel appeared in {year2}. "
        f"The premiere was held in {city2}."
    )
    if category == "person":
        question, gold, distractor = f"Who directed {film}?", director, lead
    elif category == "time":
        question, gold, distractor = f"When was {film} released?", str(year), str(year2)
    else:
        question, gold, distractor = f"Where was {film} filmed?", city, city2
    rec = DatasetRecord(id=f"{prefix}-{idx}", question=question, context=context,
                        gold_answers=(gold,), source_dataset="synthetic")
    return rec, distractor


def generate(n: int, seed: int = 0, profiles=None, prefix: str = "synth", offset: int = 0):
    """``n`` records cycling through the categories, plus cached answers for every agent."""
    rng = random.Random(seed)
    profiles = profiles or default_profiles()
    records, rows = [], []
    for i in range(n):
        category = CATEGORIES[(i + offset) % len(CATEGORIES)]
        rec, distractor = _record(rng, i + offset, category, prefix)
        records.append(rec)
        wrong_slot = 0
        for p in profiles:
            _, design = parse_agent_id(p.agent_id)
            if design in GOOD_DESIGNS[category]:
                answer = rec.gold_answers[0]
            else:
                # 10 of the 16 wrong agents share the distractor
                answer = distractor if wrong_slot < 10 else _person(rng)
                wrong_slot += 1
            rows.append(AgentAnswerRecord(rec.id, p.agent_id, answer))
    return records, rows


FIXTURE_CONFIG = """\
# 30-record synthetic fixture: train file 10 records, validation file 20
dataset = synthetic
train_file = train.jsonl
val_file = validation.jsonl
cache = agent_cache.jsonl
train_range = 0:10
val_range = 0:10
test_range = 10:20
seeds = 0,1,2
epochs = 20
hidden = 32
d_text = 64
lr = 0.003
k = 24
"""


def write_fixture(directory, seed: int = 0) -> Path:
    """Write train/validation files, an agent cache and a run config; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train, train_rows = generate(10, seed, prefix="fx-train")
    val, val_rows = generate(20, seed + 1, prefix="fx-val")
    write_dataset(directory / "train.jsonl", train)
    write_dataset(directory / "validation.jsonl", val)
    write_agent_cache(directory / "agent_cache.jsonl", train_rows + val_rows)
    cfg = directory / "fixture.cfg"
    cfg.write_text(FIXTURE_CONFIG, encoding="utf-8")
    return cfg


def fixture_dir() -> Path:
    """Location of the bundled copy of the fixture."""
    return Path(__file__).parent / "data" / "fixture"
