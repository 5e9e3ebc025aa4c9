"""Typed semantic graph for domain terminology.

Concepts and relations are loaded from a declarative JSON document.
A forward-chaining extrapolation engine derives new relations from
rules without ever touching the asserted ones; graphs are immutable
after load so they can be shared read-only between agents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .memory import StageKind


class OntologyError(ValueError):
    """Base class for ontology load and query failures."""


class UnknownRelationKind(OntologyError):
    pass


class DanglingConceptReference(OntologyError):
    pass


class DuplicateConceptId(OntologyError):
    pass


class UnknownConcept(OntologyError):
    pass


class AmbiguousLabel(OntologyError):
    pass


class IsACycleError(OntologyError):
    pass


class RelationKind(Enum):
    """Closed set of relation kinds; unknown kinds in input files are load errors."""

    IS_A = "is_a"
    HAS_A = "has_a"
    ASSOCIATED_WITH = "associated_with"
    PHYSICALLY_RELATED_TO = "physically_related_to"
    FUNCTIONALLY_RELATED_TO = "functionally_related_to"
    TEMPORALLY_RELATED_TO = "temporally_related_to"
    CONCEPTUALLY_RELATED_TO = "conceptually_related_to"
    COMPOSED_OF = "composed_of"
    CAUSED_BY = "caused_by"

    @classmethod
    def parse(cls, name: str) -> "RelationKind":
        try:
            return cls(name)
        except ValueError:
            raise UnknownRelationKind(f"unknown relation kind: {name!r}") from None


class SignCategory(Enum):
    """Clinical sign categories: pathognomonic, obligatory, evocative, accessory."""

    SP = "SP"
    SO = "SO"
    SE = "SE"
    SA = "SA"

    @classmethod
    def parse(cls, name: str) -> "SignCategory":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown sign category: {name!r}") from None


ASSERTED = "asserted"


@dataclass(frozen=True)
class Concept:
    id: str
    label: str
    kind: str = "Class"  # Class | Individual
    stage_scope: frozenset[StageKind] = frozenset()  # empty = served for every stage
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.label:
            raise OntologyError(f"concept {self.id!r} has an empty label")
        if self.kind not in ("Class", "Individual"):
            raise OntologyError(f"concept {self.id!r} has invalid kind {self.kind!r}")

    def served_for(self, stage: StageKind) -> bool:
        return not self.stage_scope or stage in self.stage_scope


@dataclass(frozen=True)
class Relation:
    """Directed edge; provenance is ``asserted`` or the id of the deriving rule."""

    source: str
    kind: RelationKind
    target: str
    provenance: str = ASSERTED

    @property
    def asserted(self) -> bool:
        return self.provenance == ASSERTED

    def triple(self) -> tuple[str, RelationKind, str]:
        return (self.source, self.kind, self.target)


@dataclass(frozen=True)
class RelationPattern:
    """One antecedent/consequent slot of a rule; ``?x`` style terms are variables."""

    source: str
    kind: RelationKind
    target: str

    def variables(self) -> set[str]:
        return {t for t in (self.source, self.target) if t.startswith("?")}


@dataclass(frozen=True)
class ExtrapolationRule:
    id: str
    antecedents: tuple[RelationPattern, ...]
    consequent: RelationPattern

    def __post_init__(self) -> None:
        bound = set()
        for pattern in self.antecedents:
            bound |= pattern.variables()
        unbound = self.consequent.variables() - bound
        if unbound:
            raise OntologyError(
                f"rule {self.id!r}: consequent variables {sorted(unbound)} "
                "do not appear in any antecedent"
            )


class OntologyGraph:
    """Immutable concept/relation graph with asserted vs derived provenance."""

    def __init__(
        self,
        concepts: Iterable[Concept],
        relations: Iterable[Relation],
        rules: Iterable[ExtrapolationRule] = (),
    ):
        self.concepts: dict[str, Concept] = {}
        for concept in concepts:
            if concept.id in self.concepts:
                raise DuplicateConceptId(f"duplicate concept id: {concept.id!r}")
            self.concepts[concept.id] = concept
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.rules: tuple[ExtrapolationRule, ...] = tuple(rules)
        self._validate()
        self._out: dict[tuple[str, RelationKind], list[str]] = {}
        for rel in self.relations:
            self._out.setdefault((rel.source, rel.kind), []).append(rel.target)

    def _validate(self) -> None:
        seen: set[tuple[str, RelationKind, str]] = set()
        for rel in self.relations:
            for endpoint in (rel.source, rel.target):
                if endpoint not in self.concepts:
                    raise DanglingConceptReference(
                        f"relation ({rel.source}, {rel.kind.value}, {rel.target}) "
                        f"references unknown concept {endpoint!r}"
                    )
            if rel.triple() in seen:
                raise OntologyError(
                    f"duplicate relation ({rel.source}, {rel.kind.value}, {rel.target})"
                )
            seen.add(rel.triple())
        for rule in self.rules:
            for pattern in (*rule.antecedents, rule.consequent):
                for term in (pattern.source, pattern.target):
                    if not term.startswith("?") and term not in self.concepts:
                        raise DanglingConceptReference(
                            f"rule {rule.id!r} references unknown concept {term!r}"
                        )
        self._check_isa_acyclic()

    def _check_isa_acyclic(self) -> None:
        parents: dict[str, list[str]] = {}
        for rel in self.relations:
            if rel.kind is RelationKind.IS_A:
                parents.setdefault(rel.source, []).append(rel.target)
        WHITE, GREY, BLACK = 0, 1, 2
        color = {cid: WHITE for cid in self.concepts}
        for start in self.concepts:
            if color[start] != WHITE:
                continue
            stack: list[tuple[str, int]] = [(start, 0)]
            color[start] = GREY
            while stack:
                node, i = stack[-1]
                succ = parents.get(node, [])
                if i < len(succ):
                    stack[-1] = (node, i + 1)
                    nxt = succ[i]
                    if color[nxt] == GREY:
                        raise IsACycleError(f"is_a cycle through concept {nxt!r}")
                    if color[nxt] == WHITE:
                        color[nxt] = GREY
                        stack.append((nxt, 0))
                else:
                    color[node] = BLACK
                    stack.pop()

    # -- queries -----------------------------------------------------------

    def _require(self, concept: str) -> None:
        if concept not in self.concepts:
            raise UnknownConcept(f"unknown concept: {concept!r}")

    def isa_ancestors(self, concept: str) -> list[str]:
        """Transitive is_a closure, nearest parents first, topologically ordered.

        The result never contains the concept itself. Ordering guarantee:
        an ancestor always appears before any of its own is_a ancestors.
        """
        self._require(concept)
        depth: dict[str, int] = {}
        order: dict[str, int] = {}
        frontier = [concept]
        d = 0
        while frontier:
            d += 1
            nxt: list[str] = []
            for node in frontier:
                for parent in self._out.get((node, RelationKind.IS_A), []):
                    if parent not in depth:
                        depth[parent] = d
                        order[parent] = len(order)
                        nxt.append(parent)
            frontier = nxt
        ancestors = set(depth)
        # Kahn over the induced is_a subgraph; min-depth (then discovery order)
        # tie-break keeps nearest parents first while preserving topology.
        indegree = {a: 0 for a in ancestors}
        for a in ancestors:
            for parent in self._out.get((a, RelationKind.IS_A), []):
                if parent in ancestors:
                    indegree[parent] += 1
        ready = sorted(
            (a for a in ancestors if indegree[a] == 0),
            key=lambda a: (depth[a], order[a]),
        )
        result: list[str] = []
        while ready:
            node = ready.pop(0)
            result.append(node)
            for parent in self._out.get((node, RelationKind.IS_A), []):
                if parent in ancestors:
                    indegree[parent] -= 1
                    if indegree[parent] == 0:
                        ready.append(parent)
            ready.sort(key=lambda a: (depth[a], order[a]))
        return result

    def query_related(self, concept: str, kind: RelationKind, max_depth: int) -> set[str]:
        """Concepts reachable via edges of exactly ``kind`` within ``max_depth`` hops."""
        self._require(concept)
        if max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        found: set[str] = set()
        frontier = {concept}
        for _ in range(max_depth):
            nxt: set[str] = set()
            for node in frontier:
                for target in self._out.get((node, kind), []):
                    if target not in found:
                        found.add(target)
                        nxt.add(target)
            if not nxt:
                break
            frontier = nxt
        return found

    def lookup_term(self, label: str) -> str | None:
        """Case-insensitive exact-label lookup; None when absent."""
        needle = label.casefold()
        matches = [c.id for c in self.concepts.values() if c.label.casefold() == needle]
        if len(matches) > 1:
            raise AmbiguousLabel(f"label {label!r} names concepts {sorted(matches)}")
        return matches[0] if matches else None

    def relations_of(self, concept: str) -> list[Relation]:
        """All relations touching the concept, in graph order."""
        self._require(concept)
        return [r for r in self.relations if concept in (r.source, r.target)]

    def asserted_relations(self) -> list[Relation]:
        return [r for r in self.relations if r.asserted]

    # -- extrapolation -----------------------------------------------------

    def apply_extrapolation(
        self, rules: Iterable[ExtrapolationRule] | None = None
    ) -> "OntologyGraph":
        """Forward-chain rules to fixpoint; returns a new graph.

        Asserted relations are carried over untouched; every new relation
        is tagged with the id of the rule that produced it. Variables bind
        to concept ids only and no concepts are created, so the relation
        space is finite and the fixpoint always terminates.
        """
        if rules is None:
            rules = self.rules
        rules = tuple(rules)
        relations = list(self.relations)
        triples = {rel.triple() for rel in relations}
        changed = True
        while changed:
            changed = False
            for rule in rules:
                for binding in self._match(rule.antecedents, relations):
                    source = self._substitute(rule.consequent.source, binding)
                    target = self._substitute(rule.consequent.target, binding)
                    triple = (source, rule.consequent.kind, target)
                    if triple in triples:
                        continue
                    relations.append(
                        Relation(source, rule.consequent.kind, target, provenance=rule.id)
                    )
                    triples.add(triple)
                    changed = True
        return OntologyGraph(self.concepts.values(), relations, self.rules)

    @staticmethod
    def _substitute(term: str, binding: Mapping[str, str]) -> str:
        return binding[term] if term.startswith("?") else term

    @staticmethod
    def _bind(term: str, value: str, binding: dict[str, str]) -> bool:
        if term.startswith("?"):
            if term in binding:
                return binding[term] == value
            binding[term] = value
            return True
        return term == value

    def _match(
        self, patterns: tuple[RelationPattern, ...], relations: list[Relation]
    ) -> list[dict[str, str]]:
        bindings: list[dict[str, str]] = [{}]
        for pattern in patterns:
            extended: list[dict[str, str]] = []
            for binding in bindings:
                for rel in relations:
                    if rel.kind is not pattern.kind:
                        continue
                    new = dict(binding)
                    if not self._bind(pattern.source, rel.source, new):
                        continue
                    if not self._bind(pattern.target, rel.target, new):
                        continue
                    extended.append(new)
            bindings = extended
            if not bindings:
                break
        return bindings

    # -- equality / serialization ------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OntologyGraph):
            return NotImplemented
        return (
            self.concepts == other.concepts
            and set(self.relations) == set(other.relations)
            and set(self.rules) == set(other.rules)
        )

    def to_document(self) -> dict[str, Any]:
        """Serializable form; derived relations are recomputed at load, not stored."""
        concepts = []
        for concept in self.concepts.values():
            entry: dict[str, Any] = {"id": concept.id, "label": concept.label, "kind": concept.kind}
            if concept.stage_scope:
                entry["stage_scope"] = sorted(s.value for s in concept.stage_scope)
            if concept.attributes:
                entry["attributes"] = dict(concept.attributes)
            concepts.append(entry)
        relations = [
            {"source": r.source, "kind": r.kind.value, "target": r.target}
            for r in self.relations
            if r.asserted
        ]
        rules = []
        for rule in self.rules:
            rules.append(
                {
                    "id": rule.id,
                    "antecedents": [_pattern_to_json(p) for p in rule.antecedents],
                    "consequent": _pattern_to_json(rule.consequent),
                }
            )
        return {"concepts": concepts, "relations": relations, "rules": rules}


def _pattern_to_json(pattern: RelationPattern) -> dict[str, str]:
    return {"source": pattern.source, "kind": pattern.kind.value, "target": pattern.target}


def _parse_pattern(raw: Mapping[str, Any], rule_id: str) -> RelationPattern:
    try:
        return RelationPattern(
            source=str(raw["source"]),
            kind=RelationKind.parse(str(raw["kind"])),
            target=str(raw["target"]),
        )
    except KeyError as exc:
        raise OntologyError(f"rule {rule_id!r}: pattern missing field {exc}") from None


def load_ontology(document: str | Mapping[str, Any]) -> OntologyGraph:
    """Build a validated graph from an ontology document (JSON text or parsed dict).

    The loaded graph contains only asserted relations; call
    ``apply_extrapolation`` to materialize derived ones.
    """
    if isinstance(document, str):
        document = json.loads(document)
    concepts = []
    for raw in document.get("concepts", []):
        scope = frozenset(StageKind.parse(s) for s in raw.get("stage_scope", []))
        concepts.append(
            Concept(
                id=str(raw["id"]),
                label=str(raw.get("label", "")),
                kind=str(raw.get("kind", "Class")),
                stage_scope=scope,
                attributes=dict(raw.get("attributes", {})),
            )
        )
    relations = []
    for raw in document.get("relations", []):
        relations.append(
            Relation(
                source=str(raw["source"]),
                kind=RelationKind.parse(str(raw["kind"])),
                target=str(raw["target"]),
            )
        )
    rules = []
    for raw in document.get("rules", []):
        rule_id = str(raw.get("id", ""))
        if not rule_id:
            raise OntologyError("extrapolation rule without an id")
        rules.append(
            ExtrapolationRule(
                id=rule_id,
                antecedents=tuple(_parse_pattern(p, rule_id) for p in raw.get("antecedents", [])),
                consequent=_parse_pattern(raw["consequent"], rule_id),
            )
        )
    return OntologyGraph(concepts, relations, rules)
