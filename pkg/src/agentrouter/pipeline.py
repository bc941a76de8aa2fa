"""Glue between records, graphs, features and training examples."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import DataError
from .embed import featurize
from .evaluate import token_f1
from .extract import (
    EntityMention,
    RelationTriple,
    extract_entities,
    extract_triples,
    merge_dataset_type,
    question_type_cues,
)
from .gnn import CompiledGraph, compile_graph
from .graph import KnowledgeGraph, build_graph
from .train import RoutingExample

logger = logging.getLogger(__name__)


@dataclass
class EncodedGraph:
    record_id: str
    graph: KnowledgeGraph
    compiled: CompiledGraph
    features: np.ndarray


def record_annotations(record):
    """Mentions and triples for a record, honouring pre-extracted ones."""
    if record.entities is not None:
        mentions = [EntityMention.from_json(e) for e in record.entities]
    else:
        mentions = extract_entities(record.context)
    if record.triples is not None:
        triples = [RelationTriple.from_json(t) for t in record.triples]
    else:
        triples = extract_triples(record.context, mentions)
    return mentions, triples


def graph_for_record(record, profiles, agent_entity_map=None, warnings=None) -> KnowledgeGraph:
    mentions, triples = record_annotations(record)
    cues = merge_dataset_type(question_type_cues(record.question), record.question_type)
    return build_graph(record, mentions, triples, profiles, agent_entity_map, cues, warnings)


def encode(graph: KnowledgeGraph, embedder) -> EncodedGraph:
    return EncodedGraph(graph.record_id, graph, compile_graph(graph), featurize(graph, embedder))


def agent_f1_matrix(joined, trust_cache_f1: bool = False) -> np.ndarray:
    rows = []
    for j in joined:
        row = []
        for ans, cached in zip(j.answers, j.cached_f1 or [None] * len(j.answers)):
            if trust_cache_f1 and cached is not None:
                row.append(cached)
            else:
                row.append(token_f1(ans, j.record.gold_answers))
        rows.append(row)
    return np.array(rows, dtype=float)


def make_examples(joined, encoded_by_id: dict, trust_cache_f1: bool = False) -> list[RoutingExample]:
    f1 = agent_f1_matrix(joined, trust_cache_f1)
    out = []
    for j, row in zip(joined, f1):
        enc = encoded_by_id[j.record.id]
        out.append(RoutingExample(j.record.id, enc.compiled, enc.features, row,
                                  list(j.answers), tuple(j.record.gold_answers)))
    return out


def load_agent_entity_map(path) -> dict[str, dict[str, set]]:
    """JSONL rows {record_id, agent_id, entities} -> record_id -> agent_id -> surfaces."""
    out: dict[str, dict[str, set]] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.setdefault(str(obj["record_id"]), {})[str(obj["agent_id"])] = set(obj["entities"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"line {lineno}: bad agent-entity row ({exc})") from None
    return out


def write_agent_entity_map(path, rows) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record_id, agent_id, entities in rows:
            fh.write(json.dumps({"record_id": record_id, "agent_id": agent_id,
                                 "entities": sorted(entities)}, ensure_ascii=False) + "\n")
