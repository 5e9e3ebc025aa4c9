"""Case memory: retain solved sessions, retrieve similar ones, suggest reuse.

Cases are stored one JSON document per file so the base stays diffable
and human-inspectable. An inverted index over problem keywords and known
findings is kept alongside; it is derived data and can be rebuilt from
the case files at any time with identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .memory import FindingValue, StageKind, parse_findings
from .ontology import SignCategory

INDEX_FILE = "index.json"


class CaseBaseError(ValueError):
    pass


class DuplicateCaseId(CaseBaseError):
    pass


@dataclass(frozen=True)
class SimilarityWeights:
    """Per-sign-category weights plus the keyword-overlap weight.

    Defaults encode the clinical importance hierarchy of sign categories
    (pathognomonic > obligatory > evocative > accessory).
    """

    sp: float = 4.0
    so: float = 2.0
    se: float = 1.0
    sa: float = 0.5
    keyword: float = 1.0
    default: float = 1.0  # signs without a known category

    def __post_init__(self) -> None:
        values = (self.sp, self.so, self.se, self.sa, self.keyword, self.default)
        if any(v < 0 for v in values):
            raise CaseBaseError("similarity weights must be non-negative")
        if not any(v > 0 for v in values):
            raise CaseBaseError("at least one similarity weight must be positive")

    def for_category(self, category: SignCategory | None) -> float:
        if category is SignCategory.SP:
            return self.sp
        if category is SignCategory.SO:
            return self.so
        if category is SignCategory.SE:
            return self.se
        if category is SignCategory.SA:
            return self.sa
        return self.default


@dataclass(frozen=True)
class CaseProfile:
    """The comparable part of a case or query: known findings plus keywords."""

    findings: Mapping[str, FindingValue]
    keywords: frozenset[str]

    @classmethod
    def build(cls, findings: Mapping[str, FindingValue], keywords: Iterable[str]) -> "CaseProfile":
        return cls(findings=dict(findings), keywords=frozenset(keywords))

    def known_signs(self) -> set[str]:
        return {sign for sign, value in self.findings.items() if value.known}


def similarity(
    a: CaseProfile,
    b: CaseProfile,
    weights: SimilarityWeights | None = None,
    categories: Mapping[str, SignCategory] | None = None,
) -> float:
    """Weighted Jaccard over known findings and keywords, in [0, 1].

    Agreeing known findings (same sign, same value) and shared keywords
    count toward the numerator; every sign known on either side and every
    keyword on either side counts toward the denominator. Signs unknown
    on both sides contribute nothing. Symmetric by construction.
    """
    weights = weights or SimilarityWeights()
    categories = categories or {}
    known = a.known_signs() | b.known_signs()
    num = 0.0
    den = 0.0
    for sign in known:
        weight = weights.for_category(categories.get(sign))
        den += weight
        va = a.findings.get(sign)
        vb = b.findings.get(sign)
        if va is not None and vb is not None and va.known and vb.known and va == vb:
            num += weight
    num += weights.keyword * len(a.keywords & b.keywords)
    den += weights.keyword * len(a.keywords | b.keywords)
    if den == 0.0:
        return 0.0
    return num / den


@dataclass
class Case:
    """A solved session: problem keywords, patient environment, outcome.

    ``components`` maps each completed stage to its validated result and
    ``trace`` keeps the fired-transition sequence per stage, so every
    component stays linked to the path that produced it.
    """

    id: str
    pb_keywords: frozenset[str]
    environment: dict[str, Any]  # {"findings": {...}, "antecedents": [...]}
    result: str
    components: dict[StageKind, str]
    trace: dict[StageKind, list[dict[str, Any]]]
    retained_at: str = ""
    retained_seq: int = -1
    revisions: list[dict[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.pb_keywords:
            raise CaseBaseError(f"case {self.id!r}: pb_keywords must be non-empty")
        if StageKind.DIAGNOSIS not in self.components:
            raise CaseBaseError(f"case {self.id!r}: components must include the diagnosis")

    def findings(self) -> dict[str, FindingValue]:
        return parse_findings(self.environment.get("findings", {}))

    def profile(self) -> CaseProfile:
        return CaseProfile.build(self.findings(), self.pb_keywords)

    def to_document(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "pb_keywords": sorted(self.pb_keywords),
            "environment": self.environment,
            "result": self.result,
            "components": {stage.value: value for stage, value in self.components.items()},
            "trace": {stage.value: steps for stage, steps in self.trace.items()},
            "retained_at": self.retained_at,
            "retained_seq": self.retained_seq,
            "revisions": self.revisions,
        }

    @classmethod
    def from_document(cls, raw: Mapping[str, Any]) -> "Case":
        return cls(
            id=str(raw["id"]),
            pb_keywords=frozenset(raw["pb_keywords"]),
            environment=dict(raw["environment"]),
            result=str(raw.get("result", "")),
            components={StageKind.parse(k): str(v) for k, v in raw["components"].items()},
            trace={StageKind.parse(k): list(v) for k, v in raw.get("trace", {}).items()},
            retained_at=str(raw.get("retained_at", "")),
            retained_seq=int(raw.get("retained_seq", -1)),
            revisions=list(raw.get("revisions", [])),
        )


@dataclass(frozen=True)
class SolutionSuggestion:
    """Non-binding reuse hint from a prior case; the user decides what to take."""

    case_id: str
    score: float
    components: dict[StageKind, str]
    finding_diffs: list[dict[str, Any]]  # {"sign", "case", "current"} per divergence


DEFAULT_SUGGESTION_THRESHOLD = 0.5


def reuse(
    case: Case,
    score: float,
    current_findings: Mapping[str, FindingValue],
    threshold: float = DEFAULT_SUGGESTION_THRESHOLD,
) -> SolutionSuggestion | None:
    """Turn a retrieved case into a suggestion when its score clears the threshold."""
    if score < threshold:
        return None
    diffs: list[dict[str, Any]] = []
    case_findings = case.findings()
    for sign in sorted(set(case_findings) | set(current_findings)):
        case_value = case_findings.get(sign)
        current_value = current_findings.get(sign)
        if case_value == current_value:
            continue
        diffs.append(
            {
                "sign": sign,
                "case": case_value.to_json() if case_value else "unknown",
                "current": current_value.to_json() if current_value else "unknown",
            }
        )
    return SolutionSuggestion(
        case_id=case.id,
        score=score,
        components=dict(case.components),
        finding_diffs=diffs,
    )


class CaseBase:
    """Directory-backed case store with retain/retrieve/reuse and a derived index."""

    def __init__(
        self,
        path: str | Path,
        categories: Mapping[str, SignCategory] | None = None,
        weights: SimilarityWeights | None = None,
    ):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.categories = dict(categories or {})
        self.weights = weights or SimilarityWeights()
        self.cases: dict[str, Case] = {}
        self._load()

    def _load(self) -> None:
        for file in sorted(self.path.glob("*.json")):
            if file.name == INDEX_FILE:
                continue
            case = Case.from_document(json.loads(file.read_text(encoding="utf-8")))
            self.cases[case.id] = case
        index_path = self.path / INDEX_FILE
        if not index_path.exists():
            self._write_index()

    def __len__(self) -> int:
        return len(self.cases)

    def _case_path(self, case_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in case_id)
        return self.path / f"{safe}.json"

    def _write_index(self) -> None:
        keywords: dict[str, list[str]] = {}
        signs: dict[str, list[str]] = {}
        for case in sorted(self.cases.values(), key=lambda c: c.retained_seq):
            for keyword in sorted(case.pb_keywords):
                keywords.setdefault(keyword, []).append(case.id)
            for sign in sorted(case.profile().known_signs()):
                signs.setdefault(sign, []).append(case.id)
        index = {
            "cases": [
                {"id": c.id, "retained_seq": c.retained_seq, "retained_at": c.retained_at}
                for c in sorted(self.cases.values(), key=lambda c: c.retained_seq)
            ],
            "keywords": keywords,
            "signs": signs,
        }
        (self.path / INDEX_FILE).write_text(
            json.dumps(index, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def index(self) -> dict[str, Any]:
        index_path = self.path / INDEX_FILE
        if not index_path.exists():
            self._write_index()
        return json.loads(index_path.read_text(encoding="utf-8"))

    def rebuild_index(self) -> None:
        self._write_index()

    def retain(self, case: Case) -> str:
        """Persist a case and index it; subsequent retrieves see it immediately."""
        if case.id in self.cases or self._case_path(case.id).exists():
            raise DuplicateCaseId(f"case id already retained: {case.id!r}")
        case.retained_seq = len(self.cases)
        self.cases[case.id] = case
        self._case_path(case.id).write_text(
            json.dumps(case.to_document(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self._write_index()
        return case.id

    def add_revision(self, case_id: str, note: str, at: str = "") -> None:
        """Attach a free-text revision note (e.g. a rejected suggestion) to a case."""
        case = self.cases.get(case_id)
        if case is None:
            raise CaseBaseError(f"unknown case: {case_id!r}")
        case.revisions.append({"at": at, "note": note})
        self._case_path(case.id).write_text(
            json.dumps(case.to_document(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def retrieve(
        self,
        query: CaseProfile,
        k: int,
        weights: SimilarityWeights | None = None,
    ) -> list[tuple[Case, float]]:
        """Top-k cases by similarity, ties broken by most recent retention."""
        if k < 1:
            raise CaseBaseError("k must be >= 1")
        weights = weights or self.weights
        scored = [
            (case, similarity(query, case.profile(), weights, self.categories))
            for case in self.cases.values()
        ]
        scored.sort(key=lambda item: (-item[1], -item[0].retained_seq))
        return scored[:k]

    def suggest(
        self,
        query: CaseProfile,
        k: int = 3,
        threshold: float = DEFAULT_SUGGESTION_THRESHOLD,
    ) -> list[SolutionSuggestion]:
        suggestions = []
        for case, score in self.retrieve(query, k):
            suggestion = reuse(case, score, query.findings, threshold)
            if suggestion is not None:
                suggestions.append(suggestion)
        return suggestions

    def stats(self) -> dict[str, Any]:
        index = self.index()
        return {
            "cases": len(self.cases),
            "keywords": len(index["keywords"]),
            "indexed_signs": len(index["signs"]),
            "components": {
                stage.value: sum(
                    1 for case in self.cases.values() if stage in case.components
                )
                for stage in (StageKind.DIAGNOSIS, StageKind.PROGNOSIS, StageKind.THERAPY, StageKind.FOLLOW_UP)
            },
        }
