"""Ontology graph: taxonomy queries, validation, forward-chaining extrapolation.

The ancestor tests check the library against an independent brute-force
closure computed here, both on a hand-built taxonomy and on randomly
generated DAGs.
"""

import random

import pytest

from smaad.memory import StageKind
from smaad.ontology import (
    AmbiguousLabel,
    Concept,
    DanglingConceptReference,
    DuplicateConceptId,
    ExtrapolationRule,
    IsACycleError,
    OntologyError,
    OntologyGraph,
    RelationKind,
    RelationPattern,
    UnknownConcept,
    UnknownRelationKind,
    load_ontology,
)

# Four-level microbe taxonomy used throughout: species -> family -> class -> root.
TAXONOMY = {
    "concepts": [
        {"id": "agent_infectieux", "label": "Agent infectieux"},
        {"id": "bacterie", "label": "Bactérie"},
        {"id": "enterobacterie", "label": "Entérobactérie"},
        {"id": "shigella", "label": "Shigella"},
        {"id": "virus", "label": "Virus"},
    ],
    "relations": [
        {"source": "bacterie", "kind": "is_a", "target": "agent_infectieux"},
        {"source": "enterobacterie", "kind": "is_a", "target": "bacterie"},
        {"source": "shigella", "kind": "is_a", "target": "enterobacterie"},
        {"source": "virus", "kind": "is_a", "target": "agent_infectieux"},
    ],
}


def brute_force_ancestors(edges: dict[str, list[str]], node: str) -> set[str]:
    """Independent transitive closure by plain graph search."""
    seen: set[str] = set()
    stack = list(edges.get(node, []))
    while stack:
        parent = stack.pop()
        if parent in seen:
            continue
        seen.add(parent)
        stack.extend(edges.get(parent, []))
    return seen


def test_ancestors_of_species_walk_the_whole_chain():
    graph = load_ontology(TAXONOMY)
    # hand-derived closure of the four-level chain
    assert graph.isa_ancestors("shigella") == ["enterobacterie", "bacterie", "agent_infectieux"]
    assert graph.isa_ancestors("agent_infectieux") == []
    assert graph.isa_ancestors("virus") == ["agent_infectieux"]


def test_ancestors_excludes_self_and_requires_known_concept():
    graph = load_ontology(TAXONOMY)
    assert "shigella" not in graph.isa_ancestors("shigella")
    with pytest.raises(UnknownConcept):
        graph.isa_ancestors("champignon")


def test_ancestors_against_brute_force_on_random_dags():
    rng = random.Random(20260825)
    for _ in range(25):
        n = rng.randint(2, 50)
        names = [f"n{i}" for i in range(n)]
        concepts = [{"id": name, "label": name.upper()} for name in names]
        relations = []
        edges: dict[str, list[str]] = {}
        # edges always point to a higher index, so the graph is a DAG by construction
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.15:
                    relations.append({"source": names[i], "kind": "is_a", "target": names[j]})
                    edges.setdefault(names[i], []).append(names[j])
        graph = load_ontology({"concepts": concepts, "relations": relations})
        for node in names:
            expected = brute_force_ancestors(edges, node)
            got = graph.isa_ancestors(node)
            assert set(got) == expected
            assert len(got) == len(expected)  # no duplicates
            # topological guarantee: an ancestor precedes its own ancestors
            for i, ancestor in enumerate(got):
                deeper = brute_force_ancestors(edges, ancestor)
                assert deeper.isdisjoint(got[: i + 1])


def test_isa_cycle_is_rejected():
    with pytest.raises(IsACycleError):
        load_ontology(
            {
                "concepts": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
                "relations": [
                    {"source": "a", "kind": "is_a", "target": "b"},
                    {"source": "b", "kind": "is_a", "target": "a"},
                ],
            }
        )


def test_structural_validation_errors():
    with pytest.raises(DuplicateConceptId):
        OntologyGraph(
            [Concept("a", "A"), Concept("a", "Aussi")],
            [],
        )
    with pytest.raises(DanglingConceptReference):
        load_ontology(
            {
                "concepts": [{"id": "a", "label": "A"}],
                "relations": [{"source": "a", "kind": "is_a", "target": "ghost"}],
            }
        )
    with pytest.raises(UnknownRelationKind):
        load_ontology(
            {
                "concepts": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
                "relations": [{"source": "a", "kind": "hugs", "target": "b"}],
            }
        )
    with pytest.raises(OntologyError):
        load_ontology(
            {
                "concepts": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
                "relations": [
                    {"source": "a", "kind": "has_a", "target": "b"},
                    {"source": "a", "kind": "has_a", "target": "b"},
                ],
            }
        )


def test_lookup_term_is_casefolded_and_detects_ambiguity():
    graph = load_ontology(TAXONOMY)
    assert graph.lookup_term("bactérie") == "bacterie"
    assert graph.lookup_term("BACTÉRIE") == "bacterie"
    assert graph.lookup_term("champignon") is None
    doubled = load_ontology(
        {
            "concepts": [
                {"id": "a", "label": "Même nom"},
                {"id": "b", "label": "même NOM"},
            ],
            "relations": [],
        }
    )
    with pytest.raises(AmbiguousLabel):
        doubled.lookup_term("même nom")


def test_query_related_respects_kind_and_depth():
    graph = load_ontology(
        {
            "concepts": [
                {"id": "mal", "label": "Maladie"},
                {"id": "tab", "label": "Tableau"},
                {"id": "sig", "label": "Signe"},
                {"id": "germ", "label": "Germe"},
            ],
            "relations": [
                {"source": "mal", "kind": "has_a", "target": "tab"},
                {"source": "tab", "kind": "has_a", "target": "sig"},
                {"source": "mal", "kind": "caused_by", "target": "germ"},
            ],
        }
    )
    # hand-counted neighbourhoods
    assert graph.query_related("mal", RelationKind.HAS_A, 1) == {"tab"}
    assert graph.query_related("mal", RelationKind.HAS_A, 2) == {"tab", "sig"}
    assert graph.query_related("mal", RelationKind.CAUSED_BY, 3) == {"germ"}
    assert graph.query_related("sig", RelationKind.HAS_A, 5) == set()
    with pytest.raises(ValueError):
        graph.query_related("mal", RelationKind.HAS_A, 0)


def test_stage_scope_empty_means_every_stage():
    anywhere = Concept("c", "C")
    therapy_only = Concept("d", "D", stage_scope=frozenset({StageKind.THERAPY}))
    for stage in StageKind:
        assert anywhere.served_for(stage)
    assert therapy_only.served_for(StageKind.THERAPY)
    assert not therapy_only.served_for(StageKind.DIAGNOSIS)


RULED = {
    "concepts": [
        {"id": "colite", "label": "Colite"},
        {"id": "clostridium", "label": "Clostridium"},
        {"id": "bacterie", "label": "Bactérie"},
        {"id": "grippe", "label": "Grippe"},
        {"id": "influenza", "label": "Influenza"},
    ],
    "relations": [
        {"source": "colite", "kind": "caused_by", "target": "clostridium"},
        {"source": "clostridium", "kind": "is_a", "target": "bacterie"},
        {"source": "grippe", "kind": "caused_by", "target": "influenza"},
    ],
    "rules": [
        {
            "id": "bacterial-link",
            "antecedents": [
                {"source": "?x", "kind": "caused_by", "target": "?b"},
                {"source": "?b", "kind": "is_a", "target": "bacterie"},
            ],
            "consequent": {"source": "?x", "kind": "associated_with", "target": "bacterie"},
        }
    ],
}


def test_extrapolation_derives_exactly_the_matching_edge():
    graph = load_ontology(RULED)
    out = graph.apply_extrapolation()
    derived = [r for r in out.relations if not r.asserted]
    # hand application: only colite's cause is a bacterium; grippe's is not
    assert [r.triple() for r in derived] == [
        ("colite", RelationKind.ASSOCIATED_WITH, "bacterie")
    ]
    assert derived[0].provenance == "bacterial-link"


def test_extrapolation_is_idempotent_and_preserves_asserted():
    graph = load_ontology(RULED)
    once = graph.apply_extrapolation()
    twice = once.apply_extrapolation()
    assert once == twice
    assert set(r.triple() for r in graph.asserted_relations()) == set(
        r.triple() for r in once.asserted_relations()
    )


def test_extrapolation_repeated_variable_binds_consistently():
    graph = load_ontology(
        {
            "concepts": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
            "relations": [
                {"source": "a", "kind": "associated_with", "target": "a"},
                {"source": "a", "kind": "associated_with", "target": "b"},
            ],
        }
    )
    rule = ExtrapolationRule(
        id="self-loop",
        antecedents=(RelationPattern("?x", RelationKind.ASSOCIATED_WITH, "?x"),),
        consequent=RelationPattern("?x", RelationKind.CAUSED_BY, "?x"),
    )
    out = graph.apply_extrapolation([rule])
    derived = [r.triple() for r in out.relations if not r.asserted]
    # only the genuine self-loop matches; (a, b) must not bind ?x twice
    assert derived == [("a", RelationKind.CAUSED_BY, "a")]


def test_rule_with_unbound_consequent_variable_is_invalid():
    with pytest.raises(OntologyError):
        ExtrapolationRule(
            id="broken",
            antecedents=(RelationPattern("?x", RelationKind.IS_A, "?y"),),
            consequent=RelationPattern("?x", RelationKind.IS_A, "?z"),
        )


def test_rule_constants_must_exist():
    with pytest.raises(DanglingConceptReference):
        load_ontology(
            {
                "concepts": [{"id": "a", "label": "A"}],
                "relations": [],
                "rules": [
                    {
                        "id": "r",
                        "antecedents": [{"source": "?x", "kind": "is_a", "target": "ghost"}],
                        "consequent": {"source": "?x", "kind": "is_a", "target": "ghost"},
                    }
                ],
            }
        )


def test_transitive_rule_reaches_fixpoint_on_chain():
    chain = {
        "concepts": [{"id": f"c{i}", "label": f"C{i}"} for i in range(5)],
        "relations": [
            {"source": f"c{i}", "kind": "is_a", "target": f"c{i + 1}"} for i in range(4)
        ],
        "rules": [
            {
                "id": "trans",
                "antecedents": [
                    {"source": "?a", "kind": "is_a", "target": "?b"},
                    {"source": "?b", "kind": "is_a", "target": "?c"},
                ],
                "consequent": {"source": "?a", "kind": "is_a", "target": "?c"},
            }
        ],
    }
    out = load_ontology(chain).apply_extrapolation()
    triples = {r.triple() for r in out.relations}
    # closure of a 5-node chain has C(5,2) = 10 edges
    assert len(triples) == 10
    assert ("c0", RelationKind.IS_A, "c4") in triples
    # closing the closure changes nothing
    assert out.apply_extrapolation() == out


def test_document_roundtrip_drops_derived_keeps_rules():
    graph = load_ontology(RULED).apply_extrapolation()
    reloaded = load_ontology(graph.to_document())
    assert set(reloaded.relations) == set(
        r for r in graph.relations if r.asserted
    )
    assert reloaded.apply_extrapolation() == graph


def test_relations_of_touches_both_directions():
    graph = load_ontology(TAXONOMY)
    touching = {r.triple() for r in graph.relations_of("bacterie")}
    assert touching == {
        ("bacterie", RelationKind.IS_A, "agent_infectieux"),
        ("enterobacterie", RelationKind.IS_A, "bacterie"),
    }
