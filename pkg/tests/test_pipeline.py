import pytest

from conftest import corpus_bundle, make_doc, para, section, table, to_bytes
from corpusgen import build_level_suite, bundle_from_docs
from ragmux.chunking import chunk_cross_links, chunk_tree
from ragmux.doctree import parse_ccd
from ragmux.gateway import MockGateway
from ragmux.pipeline import (
    Answer,
    assess_coverage,
    build_synthesis_prompt,
    execute_plan,
    explain_plan,
    run_pipeline,
)
from ragmux.planning import (
    CALCULATE,
    FILTER_METADATA,
    SYNTHESIZE,
    Action,
    LevelProfile,
    QueryIntent,
    ReflectionConfig,
    RetrievalPlan,
    assemble_plan,
)
from ragmux.retrieval import SpaceKind, fuse_rrf, search_semantic
from ragmux.spaces import EmbedderSpec, EmptyCorpus, IndexBundle, build_indexes
from ragmux.tools import ToolFailure


def small_bundle(texts, doc_id="doc", crumb="Guide"):
    doc = make_doc(doc_id=doc_id, children=[
        section("s", crumb, [para(f"p{i}", t) for i, t in enumerate(texts)]),
    ])
    tree = parse_ccd(to_bytes(doc))
    chunks = chunk_tree(tree)
    gateway = MockGateway(dim=64)
    bundle = build_indexes(
        chunks, [tree.metadata], gateway.embed, EmbedderSpec(dim=64),
        cross_links=chunk_cross_links(tree, chunks),
    )
    return bundle, gateway


def plan_of(actions, intent=QueryIntent.FACTOID, iteration=0):
    return RetrievalPlan(actions=actions + [Action(SYNTHESIZE)], intent=intent, iteration=iteration)


class TestExecutePlan:
    def test_single_space_passthrough_matches_search(self):
        bundle, gateway = small_bundle(["alpha beta", "gamma delta", "epsilon zeta"])
        plan = plan_of([Action("RetrieveSemantic", k=5)])
        evidence, tools, steps = execute_plan(plan, "alpha beta", bundle, gateway)
        direct = search_semantic(bundle.semantic, gateway.embed(["alpha beta"])[0], 5)
        assert evidence.ids() == [cid for cid, _ in direct]
        assert tools == []
        assert [s.action for s in steps] == ["RetrieveSemantic"]

    def test_cross_ref_expansion_pulls_target_chunk(self):
        doc = make_doc(children=[
            section("s", "Specs", [
                para("p1", "Capacity values are listed in Table 1."),
                table("t1", "Table 1: capacity", [["Entry", "Value"], ["Full load", "980 kg"]]),
            ]),
        ])
        tree = parse_ccd(to_bytes(doc))
        chunks = chunk_tree(tree)
        gateway = MockGateway(dim=64)
        bundle = build_indexes(
            chunks, [tree.metadata], gateway.embed, EmbedderSpec(dim=64),
            cross_links=chunk_cross_links(tree, chunks),
        )
        grid_id = next(c.chunk_id for c in chunks if c.modality.value == "table")
        para_id = next(c.chunk_id for c in chunks if "listed in" in c.text)

        plan = plan_of([Action("RetrieveLexical", k=1), Action("ExpandCrossRefs")])
        evidence, _, steps = execute_plan(plan, "capacity values listed", bundle, gateway)
        assert para_id in evidence.ids()
        assert grid_id in evidence.ids()
        expanded = next(c for c in evidence.chunks if c.chunk_id == grid_id)
        assert expanded.provenance == {SpaceKind.STRUCTURAL}

    def test_calculate_action_produces_output(self):
        bundle, gateway = small_bundle(["some text"])
        plan = plan_of([Action(CALCULATE, expression="2*(3+4)")], intent=QueryIntent.COMPUTATION)
        _, tools, _ = execute_plan(plan, "irrelevant", bundle, gateway)
        assert [t.value for t in tools] == ["14"]

    def test_calculate_without_expression_extracts_from_query(self):
        bundle, gateway = small_bundle(["some text"])
        plan = plan_of([Action(CALCULATE)], intent=QueryIntent.COMPUTATION)
        _, tools, _ = execute_plan(plan, "what is 6 * 7 here", bundle, gateway)
        assert [t.value for t in tools] == ["42"]

    def test_calculate_with_no_extractable_expression_is_empty(self):
        bundle, gateway = small_bundle(["some text"])
        plan = plan_of([Action(CALCULATE)], intent=QueryIntent.COMPUTATION)
        _, tools, steps = execute_plan(plan, "no math here", bundle, gateway)
        assert tools == []
        assert steps[0].result_count == 0

    def test_explicit_bad_expression_raises(self):
        bundle, gateway = small_bundle(["some text"])
        plan = plan_of([Action(CALCULATE, expression="2 **")], intent=QueryIntent.COMPUTATION)
        with pytest.raises(ToolFailure):
            execute_plan(plan, "q", bundle, gateway)

    def test_metadata_filter_restricts_evidence(self):
        docs = [
            make_doc(doc_id="m1", doc_type="manual", children=[para("a", "shared topic words")]),
            make_doc(doc_id="r1", doc_type="report", children=[para("b", "shared topic words")]),
        ]
        trees = [parse_ccd(to_bytes(d)) for d in docs]
        chunks = [c for t in trees for c in chunk_tree(t)]
        gateway = MockGateway(dim=64)
        bundle = build_indexes(chunks, [t.metadata for t in trees], gateway.embed, EmbedderSpec(dim=64))
        plan = plan_of([
            Action(FILTER_METADATA, predicate=(("doc_type", "manual"),)),
            Action("RetrieveLexical", k=5),
        ])
        evidence, _, _ = execute_plan(plan, "shared topic", bundle, gateway)
        assert all(cid.startswith("m1#") for cid in evidence.ids())

    def test_table_lookup_uses_first_table_in_evidence(self):
        doc = make_doc(children=[
            section("s", "BAC Chart", [
                table("t", None, [
                    ["Body Weight", "1 drink", "2 drinks"],
                    ["120 lb", "0.06", "0.11"],
                ]),
            ]),
        ])
        tree = parse_ccd(to_bytes(doc))
        chunks = chunk_tree(tree)
        gateway = MockGateway(dim=64)
        bundle = build_indexes(chunks, [tree.metadata], gateway.embed, EmbedderSpec(dim=64))
        plan = plan_of(
            [Action("RetrieveStructural", k=5), Action("TableLookup")],
            intent=QueryIntent.TABLE_LOOKUP,
        )
        _, tools, _ = execute_plan(plan, "BAC for a 120-pound woman after 2 drinks", bundle, gateway)
        assert [t.value for t in tools] == ["0.11"]


class TestAssessCoverage:
    # query content terms with the shipped stopword list:
    # {estimated, bac, 120, pound, woman, 2, drinks} -- 7 terms
    QUERY = "estimated BAC for 120 pound woman after 2 drinks"

    def build(self, texts):
        bundle, _ = small_bundle(texts, crumb="")
        ranking = {SpaceKind.LEXICAL: list(bundle.chunks)}
        return bundle, fuse_rrf(ranking)

    def test_full_coverage_factoid_sufficient(self):
        bundle, evidence = self.build(["estimated BAC 120 pound woman 2 drinks"])
        a = assess_coverage(self.QUERY, evidence, QueryIntent.FACTOID, ReflectionConfig(), bundle)
        assert a.term_coverage == 1.0
        assert a.sufficient

    def test_six_of_seven_terms(self):
        bundle, evidence = self.build(["estimated BAC 120 pound 2 drinks here"])
        a = assess_coverage(self.QUERY, evidence, QueryIntent.FACTOID, ReflectionConfig(), bundle)
        assert a.term_coverage == pytest.approx(6 / 7)
        assert a.missing_terms == ["woman"]
        assert a.sufficient

    def test_three_of_seven_terms_insufficient(self):
        bundle, evidence = self.build(["BAC 120 drinks"])
        a = assess_coverage(self.QUERY, evidence, QueryIntent.FACTOID, ReflectionConfig(), bundle)
        assert a.term_coverage == pytest.approx(3 / 7)
        assert not a.sufficient

    def test_table_intent_requires_table_or_tool_output(self):
        bundle, evidence = self.build(["estimated BAC 120 pound woman 2 drinks"])
        a = assess_coverage(self.QUERY, evidence, QueryIntent.TABLE_LOOKUP, ReflectionConfig(), bundle)
        assert a.term_coverage == 1.0
        assert not a.intent_satisfied
        assert not a.sufficient
        from ragmux.tools import ToolOutput

        a2 = assess_coverage(
            self.QUERY, evidence, QueryIntent.TABLE_LOOKUP, ReflectionConfig(), bundle,
            tool_outputs=[ToolOutput(tool="table_lookup", value="0.11")],
        )
        assert a2.sufficient

    def test_multihop_needs_two_breadcrumb_groups_or_docs(self):
        bundle, evidence = self.build(["estimated BAC 120 pound woman 2 drinks"])
        a = assess_coverage(self.QUERY, evidence, QueryIntent.MULTI_HOP, ReflectionConfig(), bundle)
        assert not a.intent_satisfied

    def test_breadcrumbs_count_toward_coverage(self):
        bundle, _ = small_bundle(["unrelated body text"], crumb="Estimated BAC")
        evidence = fuse_rrf({SpaceKind.LEXICAL: list(bundle.chunks)})
        a = assess_coverage("estimated BAC", evidence, QueryIntent.FACTOID, ReflectionConfig(), bundle)
        assert a.term_coverage == 1.0


class TestRunPipeline:
    def test_def_answer_under_l1(self, manual_bundle):
        bundle, gateway = manual_bundle
        answer = run_pipeline("What is the DEF?", LevelProfile.L1, bundle, gateway)
        assert "Diesel Exhaust Fluid" in answer.text
        assert answer.citations
        assert all(cid in bundle.chunks for cid in answer.citations)
        assert answer.profile is LevelProfile.L1

    def test_cross_reference_fixture_separates_l2_from_l3(self, tmp_path):
        docs, items = build_level_suite()
        l3_doc, l3_item = docs[20], items[20]
        bundle, gateway = bundle_from_docs([l3_doc], tmp_path)
        grid_id = next(
            cid for cid, c in bundle.chunks.items() if c.modality.value == "table"
        )
        l2 = run_pipeline(l3_item["question"], LevelProfile.L2, bundle, gateway)
        l3 = run_pipeline(l3_item["question"], LevelProfile.L3, bundle, gateway)
        assert grid_id not in l2.citations
        assert grid_id in l3.citations
        assert l3_item["ground_truth"] in l3.text
        assert l3_item["ground_truth"] not in l2.text

    def test_reflection_terminates_at_max_iters(self, manual_bundle):
        bundle, gateway = manual_bundle
        cfg = ReflectionConfig(max_iters=3)
        # no corpus term matches the query, so coverage stays at zero
        answer = run_pipeline(
            "zzqqx floobar snarf gizmo?", LevelProfile.L4, bundle, gateway, cfg=cfg
        )
        iterations = {s.iteration for s in answer.plan_trace}
        assert iterations == {0, 1, 2}

    def test_trace_lists_every_action_once_per_iteration(self, manual_bundle):
        bundle, gateway = manual_bundle
        answer = run_pipeline(
            "zzqqx floobar snarf gizmo?", LevelProfile.L4, bundle, gateway,
            cfg=ReflectionConfig(max_iters=2),
        )
        for iteration in (0, 1):
            kinds = [s.action for s in answer.plan_trace if s.iteration == iteration and s.action != SYNTHESIZE]
            assert kinds == ["RetrieveSemantic", "RetrieveLexical", "RetrieveStructural", "ExpandCrossRefs"]
        assert [s.action for s in answer.plan_trace].count(SYNTHESIZE) == 1

    def test_evidence_grows_monotonically_across_revisions(self, manual_bundle):
        from ragmux.planning import CoverageAssessment, revise_plan

        bundle, gateway = manual_bundle
        plan = assemble_plan(QueryIntent.FACTOID, LevelProfile.L4, ReflectionConfig())
        ev0, _, _ = execute_plan(plan, "oil level check", bundle, gateway)
        stub = CoverageAssessment(0.0, True, [], False)
        revised = revise_plan(plan, stub, ReflectionConfig())
        ev1, _, _ = execute_plan(revised, "oil level check", bundle, gateway)
        assert set(ev0.ids()) <= set(ev1.ids())

    def test_deterministic_given_mock_gateway(self, manual_bundle):
        bundle, gateway = manual_bundle
        a = run_pipeline("What is the DEF?", LevelProfile.L4, bundle, gateway)
        b = run_pipeline("What is the DEF?", LevelProfile.L4, bundle, gateway)
        assert a == b

    def test_empty_bundle_raises(self, manual_bundle):
        bundle, gateway = manual_bundle
        empty = IndexBundle(
            semantic=bundle.semantic, lexical=bundle.lexical,
            structural=bundle.structural, metadata=bundle.metadata,
            chunks={}, manifest=bundle.manifest,
        )
        with pytest.raises(EmptyCorpus):
            run_pipeline("What is the DEF?", LevelProfile.L1, empty, gateway)

    def test_tool_outputs_are_appended_to_answer(self, dmv_bundle):
        bundle, gateway = dmv_bundle
        answer = run_pipeline(
            "What is the estimated BAC for a 120-pound woman in California after 2 drinks?",
            LevelProfile.L4, bundle, gateway,
        )
        assert "[table_lookup] 0.11" in answer.text

    def test_context_budget_caps_citations(self, manual_bundle):
        bundle, gateway = manual_bundle
        answer = run_pipeline(
            "What is the DEF?", LevelProfile.L4, bundle, gateway, context_budget=2
        )
        assert len(answer.citations) <= 2


def test_build_synthesis_prompt_blocks():
    from ragmux.tools import ToolOutput

    prompt = build_synthesis_prompt("Q?", ["ctx one", "ctx two"], [ToolOutput("calculate", "14")])
    assert "QUESTION:" in prompt and "CONTEXT:" in prompt
    assert prompt.index("Q?") < prompt.index("ctx one")
    assert "calculate result: 14" in prompt


def test_explain_plan_serialization():
    plan = explain_plan("Find an enclosure with three knockouts.", LevelProfile.L4)
    assert plan["intent"] == "VisualDiagram"
    assert plan["actions"][-1]["action"] == "Synthesize"
    assert plan["actions"][0]["params"] == {"k": 5}
