import json

import pytest

from agentrouter.dataio import DatasetRecord, default_profiles
from agentrouter.extract import EntityMention, RelationTriple, extract_entities, extract_triples
from agentrouter.graph import (
    AGENT,
    AGENT_ENTITY,
    ENTITY,
    INC_SRC,
    INC_TGT,
    QUERY_AGENT,
    QUERY_ENTITY,
    RELATION,
    GraphAssembly,
    GraphError,
    KnowledgeGraph,
    build_graph,
    graph_stats,
    lexical_agent_entities,
    load_graph,
    rewire_triple,
    save_graph,
)


def _tiny_graph(tiny_parts):
    rec, mentions, triples, profs, amap = tiny_parts
    return build_graph(rec, mentions, triples, profs, amap, cues={"location"})


def test_tiny_graph_layout(tiny_parts):
    g = _tiny_graph(tiny_parts)
    g.validate()
    assert [n.kind for n in g.nodes] == ["Query", AGENT, AGENT, ENTITY, ENTITY, ENTITY, RELATION]
    assert g.nodes[0].features["cues"] == ["location"]
    assert g.agent_order == [p.agent_id for p in tiny_parts[3]]
    assert set(g.edges) == {
        (3, INC_SRC, 6), (6, INC_TGT, 4),
        (1, AGENT_ENTITY, 3), (2, AGENT_ENTITY, 4), (2, AGENT_ENTITY, 5),
        (0, QUERY_ENTITY, 3),
        (0, QUERY_AGENT, 1), (0, QUERY_AGENT, 2),
    }


def test_no_direct_entity_entity_edges(falcon_record, profiles):
    ms = extract_entities(falcon_record.context)
    g = build_graph(falcon_record, ms, extract_triples(falcon_record.context, ms), profiles)
    g.validate()
    kinds = [n.kind for n in g.nodes]
    assert not any(kinds[s] == ENTITY and kinds[d] == ENTITY for s, _, d in g.edges)
    assert len(g.nodes_of(RELATION)) == len(g.cached_triples)
    assert sum(1 for _, k, _ in g.edges if k == QUERY_AGENT) == 24


def test_entity_free_context_still_routes(profiles):
    rec = DatasetRecord("e", "Who?", "and of the", ("x",), "toy")
    g = build_graph(rec, [], [], profiles)
    g.validate()
    assert len(g.nodes) == 25
    assert [k for _, k, _ in g.edges] == [QUERY_AGENT] * 24


def test_rewire_is_idempotent():
    asm = GraphAssembly("r")
    asm.add_node("Query", "q")
    for s in ("A", "B"):
        asm.entity_index[s.casefold()] = asm.add_node(ENTITY, s)
    t = RelationTriple("A", "prep:in", "B")
    rid, edges = rewire_triple(t, asm)
    assert edges == ((1, INC_SRC, rid), (rid, INC_TGT, 2))
    assert rewire_triple(t, asm)[0] == rid
    assert len(asm.edges) == 2
    with pytest.raises(GraphError):
        rewire_triple(RelationTriple("A", "prep:in", "C"), asm)


def test_bad_triple_is_skipped_with_warning(tiny_parts):
    rec, mentions, triples, profs, amap = tiny_parts
    warnings = []
    g = build_graph(rec, mentions, triples + [RelationTriple("Ada Byron", "x", "Nobody")], profs, amap,
                    warnings=warnings)
    assert len(g.nodes_of(RELATION)) == 1
    assert any("Nobody" in w for w in warnings)


def test_unknown_agent_in_map(tiny_parts):
    rec, mentions, triples, profs, _ = tiny_parts
    with pytest.raises(GraphError, match="unknown agents"):
        build_graph(rec, mentions, triples, profs, {"BACKBONE::z::AGENT::raw": {"London"}})


def test_validate_catches_violations(tiny_parts):
    g = _tiny_graph(tiny_parts)
    bad = KnowledgeGraph(g.record_id, g.nodes, g.edges + ((3, INC_SRC, 4),))
    with pytest.raises(GraphError):
        bad.validate()
    bad = KnowledgeGraph(g.record_id, g.nodes, tuple(e for e in g.edges if e[1] != INC_TGT))
    with pytest.raises(GraphError, match="degree"):
        bad.validate()
    bad = KnowledgeGraph(g.record_id, g.nodes, g.edges[:-1])
    with pytest.raises(GraphError, match="QueryAgent"):
        bad.validate()


def test_lexical_fallback_is_bounded_and_deterministic(falcon_record, profiles):
    ms = extract_entities(falcon_record.context)
    for p in profiles[:4]:
        chosen = lexical_agent_entities(p, ms, falcon_record.context)
        assert len(chosen) == min(5, len(ms))
        assert chosen == lexical_agent_entities(p, ms, falcon_record.context)
    assert lexical_agent_entities(profiles[0], [], "") == set()


def test_stats(tiny_parts, profiles):
    g = _tiny_graph(tiny_parts)
    empty = build_graph(DatasetRecord("e", "q", "and of the", ("x",), "t"), [], [], tiny_parts[3])
    s = graph_stats([g, empty])
    assert s == {"query": 1.0, "agent": 2.0, "entity": 1.5, "relation": 0.5, "entity_entity": 0.5,
                 "agent_entity": 1.5, "query_entity": 0.5}
    with pytest.raises(ValueError):
        graph_stats([])


def test_save_load_round_trip(tmp_path, tiny_parts):
    g = _tiny_graph(tiny_parts)
    path = save_graph(g, tmp_path)
    assert load_graph(path) == g
    assert json.loads(path.read_text())["record_id"] == "tiny-0"


def test_mention_with_frequency_feature():
    rec = DatasetRecord("f", "Who met Ann?", "Ann met Bob. Ann left.", ("Bob",), "t")
    ms = [EntityMention("Ann", "named", 2, [(0, 3), (13, 16)])]
    g = build_graph(rec, ms, [], default_profiles()[:1])
    assert g.nodes[2].features == {"frequency": 2, "mention_kind": "named"}
