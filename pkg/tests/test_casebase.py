"""Case memory: similarity scoring, retrieval ranking, durability.

similarity() is checked against an independent re-derivation written
here from the weighted-Jaccard definition, on hand-worked examples and
on seeded random profile pairs.
"""

import json
import random

import pytest

from smaad.casebase import (
    Case,
    CaseBase,
    CaseBaseError,
    CaseProfile,
    DuplicateCaseId,
    SimilarityWeights,
    reuse,
    similarity,
)
from smaad.memory import ABSENT, PRESENT, UNKNOWN, StageKind, positive
from smaad.ontology import SignCategory

CATEGORIES = {"SO1": SignCategory.SO, "SE2": SignCategory.SE, "SP9": SignCategory.SP}

# weight ladder re-stated independently of the library defaults
CATEGORY_WEIGHT = {
    SignCategory.SP: 4.0,
    SignCategory.SO: 2.0,
    SignCategory.SE: 1.0,
    SignCategory.SA: 0.5,
}
KEYWORD_WEIGHT = 1.0
DEFAULT_WEIGHT = 1.0


def oracle_similarity(fa, ka, fb, kb, categories):
    """Weighted Jaccard recomputed from scratch for cross-checking."""
    known = {s for s, v in fa.items() if v.known} | {s for s, v in fb.items() if v.known}
    num = 0.0
    den = 0.0
    for sign in known:
        category = categories.get(sign)
        weight = CATEGORY_WEIGHT.get(category, DEFAULT_WEIGHT)
        den += weight
        va, vb = fa.get(sign), fb.get(sign)
        if va is not None and vb is not None and va.known and vb.known and va == vb:
            num += weight
    num += KEYWORD_WEIGHT * len(set(ka) & set(kb))
    den += KEYWORD_WEIGHT * len(set(ka) | set(kb))
    return 0.0 if den == 0.0 else num / den


def profile(findings, keywords=()):
    return CaseProfile.build(findings, keywords)


def test_similarity_hand_worked_example():
    a = profile({"SO1": PRESENT, "SE2": positive("Salmonella")}, ["diarrhée", "aiguë"])
    b = profile({"SO1": PRESENT, "SE2": ABSENT}, ["diarrhée", "voyage"])
    # agreement: SO1 (weight 2) + shared keyword (1) = 3
    # denominator: SO1 (2) + SE2 (1) + keyword union of 3 = 6
    assert similarity(a, b, categories=CATEGORIES) == pytest.approx(0.5)


def test_agreement_requires_identical_test_results():
    a = profile({"SE2": positive("Salmonella")})
    b = profile({"SE2": positive("Shigella")})
    c = profile({"SE2": positive("Salmonella")})
    assert similarity(a, b, categories=CATEGORIES) == 0.0
    assert similarity(a, c, categories=CATEGORIES) == 1.0


def test_explicitly_unknown_findings_do_not_count():
    a = profile({"SO1": PRESENT, "SE2": UNKNOWN})
    b = profile({"SO1": PRESENT})
    assert similarity(a, b, categories=CATEGORIES) == 1.0


def test_empty_profiles_score_zero():
    assert similarity(profile({}), profile({})) == 0.0
    assert similarity(profile({"SO1": UNKNOWN}), profile({})) == 0.0


def test_uncategorized_signs_use_default_weight():
    a = profile({"mystery": PRESENT, "SP9": PRESENT})
    b = profile({"mystery": PRESENT, "SP9": ABSENT})
    # num = 1 (default), den = 1 + 4 (pathognomonic) = 5
    assert similarity(a, b, categories=CATEGORIES) == pytest.approx(0.2)


def random_profile(rng, signs, words):
    findings = {}
    for sign in signs:
        roll = rng.random()
        if roll < 0.35:
            continue
        elif roll < 0.55:
            findings[sign] = PRESENT
        elif roll < 0.7:
            findings[sign] = ABSENT
        elif roll < 0.85:
            findings[sign] = positive(rng.choice(["", "Salmonella", "Shigella"]))
        else:
            findings[sign] = UNKNOWN
    keywords = [w for w in words if rng.random() < 0.4]
    return findings, keywords


def test_similarity_matches_oracle_on_random_pairs():
    rng = random.Random(90210)
    signs = ["SO1", "SE2", "SP9", "free1", "free2"]
    words = ["diarrhée", "aiguë", "virale", "voyage", "hiver"]
    for _ in range(300):
        fa, ka = random_profile(rng, signs, words)
        fb, kb = random_profile(rng, signs, words)
        a, b = profile(fa, ka), profile(fb, kb)
        want = oracle_similarity(fa, ka, fb, kb, CATEGORIES)
        got = similarity(a, b, categories=CATEGORIES)
        assert got == pytest.approx(want)
        # metric sanity on the same pairs
        assert 0.0 <= got <= 1.0
        assert similarity(b, a, categories=CATEGORIES) == pytest.approx(got)
        if a.known_signs() or a.keywords:
            assert similarity(a, a, categories=CATEGORIES) == pytest.approx(1.0)


def test_weights_must_be_sane():
    with pytest.raises(CaseBaseError):
        SimilarityWeights(sp=-1.0)
    with pytest.raises(CaseBaseError):
        SimilarityWeights(sp=0, so=0, se=0, sa=0, keyword=0, default=0)
    # keyword-only scoring is a legitimate configuration
    kw_only = SimilarityWeights(sp=0, so=0, se=0, sa=0, keyword=1, default=0)
    a = profile({"SO1": PRESENT}, ["x"])
    b = profile({"SO1": ABSENT}, ["x"])
    assert similarity(a, b, weights=kw_only, categories=CATEGORIES) == 1.0


# -- case objects -------------------------------------------------------------


def make_case(case_id, findings, keywords, diagnosis="Δ1", extra=None):
    components = {StageKind.DIAGNOSIS: diagnosis}
    components.update(extra or {})
    return Case(
        id=case_id,
        pb_keywords=frozenset(keywords),
        environment={"findings": {s: v.to_json() for s, v in findings.items()}},
        result="completed",
        components=components,
        trace={},
    )


def test_case_requires_keywords_and_diagnosis():
    with pytest.raises(CaseBaseError):
        make_case("c1", {"SO1": PRESENT}, [])
    with pytest.raises(CaseBaseError):
        Case(
            id="c2",
            pb_keywords=frozenset({"x"}),
            environment={},
            result="completed",
            components={StageKind.THERAPY: "Θ1"},
            trace={},
        )


def test_case_document_roundtrip():
    case = make_case(
        "c1",
        {"SO1": PRESENT, "SE2": positive("Salmonella")},
        ["diarrhée"],
        extra={StageKind.PROGNOSIS: "Π1"},
    )
    again = Case.from_document(json.loads(json.dumps(case.to_document())))
    assert again.id == case.id
    assert again.pb_keywords == case.pb_keywords
    assert again.components == case.components
    assert again.findings() == {"SO1": PRESENT, "SE2": positive("Salmonella")}


def test_reuse_threshold_and_diffs():
    case = make_case("c1", {"SO1": PRESENT, "SE2": ABSENT}, ["diarrhée"])
    assert reuse(case, 0.3, {}) is None
    suggestion = reuse(case, 0.8, {"SO1": PRESENT, "SG": PRESENT})
    assert suggestion is not None
    assert suggestion.case_id == "c1"
    assert suggestion.score == 0.8
    assert suggestion.components == {StageKind.DIAGNOSIS: "Δ1"}
    assert suggestion.finding_diffs == [
        {"sign": "SE2", "case": "absent", "current": "unknown"},
        {"sign": "SG", "case": "unknown", "current": "present"},
    ]


# -- the directory-backed store ------------------------------------------------


def test_retain_retrieve_and_duplicate_rejection(tmp_path):
    base = CaseBase(tmp_path / "cases", categories=CATEGORIES)
    base.retain(make_case("c1", {"SO1": PRESENT}, ["diarrhée", "virale"]))
    base.retain(make_case("c2", {"SO1": ABSENT}, ["constipation"]))
    assert len(base) == 2
    with pytest.raises(DuplicateCaseId):
        base.retain(make_case("c1", {"SO1": PRESENT}, ["x"]))

    hits = base.retrieve(profile({"SO1": PRESENT}, ["diarrhée"]), k=2)
    assert [case.id for case, _ in hits] == ["c1", "c2"]
    assert hits[0][1] > hits[1][1]
    with pytest.raises(CaseBaseError):
        base.retrieve(profile({}), k=0)


def test_retrieve_ties_prefer_the_most_recent_case(tmp_path):
    base = CaseBase(tmp_path / "cases")
    base.retain(make_case("older", {"SO1": PRESENT}, ["diarrhée"]))
    base.retain(make_case("newer", {"SO1": PRESENT}, ["diarrhée"]))
    hits = base.retrieve(profile({"SO1": PRESENT}, ["diarrhée"]), k=2)
    assert [case.id for case, _ in hits] == ["newer", "older"]
    assert hits[0][1] == hits[1][1] == 1.0


def test_retrieve_matches_brute_force_sort(tmp_path):
    rng = random.Random(4711)
    signs = ["SO1", "SE2", "SP9", "free1"]
    words = ["diarrhée", "aiguë", "virale", "voyage", "hiver", "sang"]
    base = CaseBase(tmp_path / "cases", categories=CATEGORIES)
    for i in range(40):
        findings, keywords = random_profile(rng, signs, words)
        base.retain(make_case(f"c{i:02d}", findings, keywords or ["divers"]))
    for _ in range(20):
        findings, keywords = random_profile(rng, signs, words)
        query = profile(findings, keywords)
        expected = sorted(
            (
                (
                    case.id,
                    oracle_similarity(
                        findings, keywords, case.findings(), case.pb_keywords, CATEGORIES
                    ),
                    case.retained_seq,
                )
                for case in base.cases.values()
            ),
            key=lambda row: (-row[1], -row[2]),
        )
        k = rng.randint(1, 10)
        got = base.retrieve(query, k=k)
        assert [case.id for case, _ in got] == [row[0] for row in expected[:k]]
        for (case, score), row in zip(got, expected):
            assert score == pytest.approx(row[1])


def test_store_survives_reopening(tmp_path):
    root = tmp_path / "cases"
    first = CaseBase(root, categories=CATEGORIES)
    first.retain(make_case("c1", {"SO1": PRESENT, "SE2": positive("Rotavirus")}, ["virale"]))
    first.retain(make_case("c2", {"SO1": PRESENT}, ["voyage"]))

    reopened = CaseBase(root, categories=CATEGORIES)
    assert len(reopened) == 2
    assert reopened.cases["c1"].findings()["SE2"] == positive("Rotavirus")
    assert reopened.cases["c1"].retained_seq == 0
    assert reopened.cases["c2"].retained_seq == 1
    query = profile({"SO1": PRESENT, "SE2": positive("Rotavirus")}, ["virale"])
    assert [c.id for c, _ in reopened.retrieve(query, k=1)] == ["c1"]

    index_before = (root / "index.json").read_text(encoding="utf-8")
    reopened.rebuild_index()
    assert (root / "index.json").read_text(encoding="utf-8") == index_before
    index = reopened.index()
    assert index["keywords"]["virale"] == ["c1"]
    assert index["signs"]["SO1"] == ["c1", "c2"]


def test_suggest_filters_by_threshold(tmp_path):
    base = CaseBase(tmp_path / "cases", categories=CATEGORIES)
    base.retain(make_case("near", {"SO1": PRESENT, "SE2": ABSENT}, ["diarrhée"]))
    base.retain(make_case("far", {"SO1": ABSENT, "SE2": positive("x")}, ["autre"]))
    suggestions = base.suggest(profile({"SO1": PRESENT, "SE2": ABSENT}, ["diarrhée"]))
    assert [s.case_id for s in suggestions] == ["near"]
    assert suggestions[0].score == 1.0


def test_stats_counts_cases_and_index_terms(tmp_path):
    base = CaseBase(tmp_path / "cases", categories=CATEGORIES)
    base.retain(
        make_case(
            "c1",
            {"SO1": PRESENT},
            ["diarrhée", "virale"],
            extra={StageKind.PROGNOSIS: "Π1", StageKind.THERAPY: "Θ1"},
        )
    )
    base.retain(make_case("c2", {"SE2": ABSENT}, ["voyage"]))
    stats = base.stats()
    assert stats["cases"] == 2
    assert stats["keywords"] == 3
    assert stats["indexed_signs"] == 2
    assert stats["components"] == {
        "diagnosis": 2,
        "prognosis": 1,
        "therapy": 1,
        "follow_up": 0,
    }


def test_revision_notes_persist(tmp_path):
    root = tmp_path / "cases"
    base = CaseBase(root)
    base.retain(make_case("c1", {"SO1": PRESENT}, ["diarrhée"]))
    base.add_revision("c1", "suggestion rejetée: résultat de coproculture divergent", at="t1")
    with pytest.raises(CaseBaseError):
        base.add_revision("ghost", "n'existe pas")
    reopened = CaseBase(root)
    assert reopened.cases["c1"].revisions == [
        {"at": "t1", "note": "suggestion rejetée: résultat de coproculture divergent"}
    ]
