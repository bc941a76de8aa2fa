"""Per-instance heterogeneous knowledge graphs.

Node ids are dense: the query is node 0, agents follow in canonical order,
then entities in mention order, then relation nodes.  Every extracted triple
``(h, r, t)`` is materialized as a relation node wired ``h -> r -> t``
(``IncSrc`` then ``IncTgt``); entity-entity edges never appear directly.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .extract import STOPWORDS, RelationTriple, sentence_spans

logger = logging.getLogger(__name__)

QUERY, AGENT, ENTITY, RELATION = "Query", "Agent", "Entity", "Relation"
NODE_KINDS = (QUERY, AGENT, ENTITY, RELATION)

QUERY_ENTITY, INC_SRC, INC_TGT, AGENT_ENTITY, QUERY_AGENT = (
    "QueryEntity", "IncSrc", "IncTgt", "AgentEntity", "QueryAgent",
)
EDGE_KINDS = (QUERY_ENTITY, INC_SRC, INC_TGT, AGENT_ENTITY, QUERY_AGENT)

FALLBACK_TOP_ENTITIES = 5

_TOKEN = re.compile(r"[a-z0-9]+")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    text: str
    features: dict = field(default_factory=dict, compare=True, hash=False)


@dataclass(frozen=True)
class KnowledgeGraph:
    record_id: str
    nodes: tuple
    edges: tuple  # (src, kind, dst) triples
    cached_triples: tuple = ()

    @property
    def query(self) -> int:
        return 0

    def nodes_of(self, kind: str) -> list[int]:
        return [n.id for n in self.nodes if n.kind == kind]

    @property
    def agent_order(self) -> list[str]:
        return [n.features["agent_id"] for n in self.nodes if n.kind == AGENT]

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "nodes": [{"id": n.id, "kind": n.kind, "text": n.text, "features": n.features}
                      for n in self.nodes],
            "edges": [{"src": s, "kind": k, "dst": d} for s, k, d in self.edges],
            "cached_triples": [t.to_json() for t in self.cached_triples],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "KnowledgeGraph":
        nodes = tuple(Node(n["id"], n["kind"], n["text"], dict(n.get("features", {})))
                      for n in obj["nodes"])
        edges = tuple((e["src"], e["kind"], e["dst"]) for e in obj["edges"])
        triples = tuple(RelationTriple.from_json(t) for t in obj.get("cached_triples", []))
        return cls(obj["record_id"], nodes, edges, triples)

    def validate(self) -> None:
        """Raise GraphError when a structural invariant is violated."""
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise GraphError("node ids must be dense and ordered")
        kinds = [n.kind for n in self.nodes]
        if kinds.count(QUERY) != 1 or kinds[0] != QUERY:
            raise GraphError("graph must have exactly one query node at id 0")
        if len(set(self.edges)) != len(self.edges):
            raise GraphError("duplicate edge")
        n_agents = kinds.count(AGENT)
        allowed = {
            QUERY_ENTITY: (QUERY, ENTITY), INC_SRC: (ENTITY, RELATION),
            INC_TGT: (RELATION, ENTITY), AGENT_ENTITY: (AGENT, ENTITY),
            QUERY_AGENT: (QUERY, AGENT),
        }
        inc_in = {i: 0 for i, k in enumerate(kinds) if k == RELATION}
        inc_out = dict(inc_in)
        n_qa = 0
        for s, k, d in self.edges:
            if k not in allowed:
                raise GraphError(f"unknown edge kind {k}")
            if s == d:
                raise GraphError("self-loop")
            if (kinds[s], kinds[d]) != allowed[k]:
                raise GraphError(f"{k} edge from {kinds[s]} to {kinds[d]}")
            if k == INC_SRC:
                inc_in[d] += 1
            elif k == INC_TGT:
                inc_out[s] += 1
            elif k == QUERY_AGENT:
                n_qa += 1
        if n_qa != n_agents:
            raise GraphError(f"{n_qa} QueryAgent edges for {n_agents} agents")
        for r in inc_in:
            if inc_in[r] != 1 or inc_out[r] != 1:
                raise GraphError(f"relation node {r} has degree ({inc_in[r]}, {inc_out[r]})")


class GraphAssembly:
    """Mutable builder; ``finish`` freezes it into a KnowledgeGraph."""

    def __init__(self, record_id: str):
        self.record_id = record_id
        self.nodes: list[Node] = []
        self.edges: list[tuple] = []
        self._edge_set: set = set()
        self.entity_index: dict[str, int] = {}
        self.relation_index: dict[tuple, int] = {}

    def add_node(self, kind: str, text: str, features=None) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, kind, text, dict(features or {})))
        return nid

    def add_edge(self, src: int, kind: str, dst: int) -> bool:
        edge = (src, kind, dst)
        if edge in self._edge_set or src == dst:
            return False
        self._edge_set.add(edge)
        self.edges.append(edge)
        return True

    def finish(self, cached_triples=()) -> KnowledgeGraph:
        return KnowledgeGraph(self.record_id, tuple(self.nodes), tuple(self.edges),
                              tuple(cached_triples))


def rewire_triple(triple: RelationTriple, assembly: GraphAssembly):
    """Materialize ``(h, r, t)`` as ``h -IncSrc-> r -IncTgt-> t``.

    Returns the relation node id and its two incidence edges; a triple seen
    before returns the existing node.
    """
    head = assembly.entity_index.get(triple.head_surface.casefold())
    tail = assembly.entity_index.get(triple.tail_surface.casefold())
    if head is None or tail is None:
        missing = triple.head_surface if head is None else triple.tail_surface
        raise GraphError(f"triple endpoint {missing!r} has no entity node")
    key = (triple.head_surface.casefold(), triple.relation_label, triple.tail_surface.casefold())
    rid = assembly.relation_index.get(key)
    if rid is None:
        rid = assembly.add_node(RELATION, triple.relation_label)
        assembly.relation_index[key] = rid
        assembly.add_edge(head, INC_SRC, rid)
        assembly.add_edge(rid, INC_TGT, tail)
    return rid, ((head, INC_SRC, rid), (rid, INC_TGT, tail))


def _tokens(text: str) -> set[str]:
    return {t for t in _TOKEN.findall(text.casefold()) if t not in STOPWORDS}


def _mentions_surface(text: str, surface: str) -> bool:
    pattern = r"(?<!\w)" + re.escape(surface.casefold()) + r"(?!\w)"
    return re.search(pattern, text.casefold()) is not None


def lexical_agent_entities(profile, mentions, context: str, top: int = FALLBACK_TOP_ENTITIES):
    """Offline stand-in for judge-produced manage edges.

    Entities are ranked by token overlap between the agent description and the
    sentence holding the entity's first mention; ties go to earlier entities.
    """
    sentences = sentence_spans(context) if context else []
    agent_tokens = _tokens(profile.description_text) | _tokens(profile.design.replace("_", " "))
    scored = []
    for order, m in enumerate(mentions):
        local = m.surface
        if m.spans:
            a = m.spans[0][0]
            for s, e in sentences:
                if s <= a < e:
                    local = context[s:e]
                    break
        scored.append((-len(agent_tokens & _tokens(local)), order, m.surface))
    scored.sort()
    return {surface for _, _, surface in scored[:min(top, len(mentions))]}


def build_graph(record, mentions, triples, profiles, agent_entity_map=None, cues=(),
                warnings=None) -> KnowledgeGraph:
    """Assemble the knowledge graph of one record.

    ``profiles`` must already be in canonical order.  ``agent_entity_map`` maps
    agent ids to entity surfaces (e.g. from the LLM judge); when it is empty
    the lexical fallback decides the agent-entity edges.
    """
    warnings = warnings if warnings is not None else []
    ids = [p.agent_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise GraphError("duplicate agent ids")
    agent_entity_map = agent_entity_map or {}
    unknown = set(agent_entity_map) - set(ids)
    if unknown:
        raise GraphError(f"agent_entity_map has unknown agents: {sorted(unknown)}")

    g = GraphAssembly(record.id)
    q = g.add_node(QUERY, record.question, {"cues": sorted(cues)})
    agent_nodes = [
        g.add_node(AGENT, p.description_text, {"agent_id": p.agent_id}) for p in profiles
    ]
    for m in mentions:
        g.entity_index[m.surface.casefold()] = g.add_node(
            ENTITY, m.surface, {"frequency": m.frequency, "mention_kind": m.kind}
        )
    for t in triples:
        try:
            rewire_triple(t, g)
        except GraphError as exc:
            warnings.append(f"{record.id}: {exc}; triple skipped")

    for m in mentions:
        if _mentions_surface(record.question, m.surface):
            g.add_edge(q, QUERY_ENTITY, g.entity_index[m.surface.casefold()])

    for p, a in zip(profiles, agent_nodes):
        if agent_entity_map:
            chosen = agent_entity_map.get(p.agent_id, ())
        else:
            chosen = lexical_agent_entities(p, mentions, record.context)
        for surface in sorted(chosen, key=lambda s: g.entity_index.get(s.casefold(), -1)):
            e = g.entity_index.get(surface.casefold())
            if e is None:
                warnings.append(f"{record.id}: {p.agent_id} names unknown entity {surface!r}")
                continue
            g.add_edge(a, AGENT_ENTITY, e)

    for a in agent_nodes:
        g.add_edge(q, QUERY_AGENT, a)

    for w in warnings:
        logger.warning(w)
    # cached verbatim, skipped ones included, for later prompting
    return g.finish(triples)


def graph_stats(graphs) -> dict[str, float]:
    """Average node and edge counts per kind (entity-entity = rewired triples)."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("graph_stats needs at least one graph")
    totals = dict.fromkeys(
        ["query", "agent", "entity", "relation", "entity_entity", "agent_entity", "query_entity"], 0
    )
    for g in graphs:
        kinds = [n.kind for n in g.nodes]
        totals["query"] += kinds.count(QUERY)
        totals["agent"] += kinds.count(AGENT)
        totals["entity"] += kinds.count(ENTITY)
        totals["relation"] += kinds.count(RELATION)
        edge_kinds = [k for _, k, _ in g.edges]
        totals["entity_entity"] += kinds.count(RELATION)
        totals["agent_entity"] += edge_kinds.count(AGENT_ENTITY)
        totals["query_entity"] += edge_kinds.count(QUERY_ENTITY)
    return {k: v / len(graphs) for k, v in totals.items()}


def graph_path(directory, record_id: str) -> Path:
    safe = record_id.replace("/", "_").replace("\\", "_")
    return Path(directory) / f"{safe}.graph.json"


def save_graph(graph: KnowledgeGraph, directory) -> Path:
    path = graph_path(directory, graph.record_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(graph.to_dict(), ensure_ascii=False, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def load_graph(path) -> KnowledgeGraph:
    return KnowledgeGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
