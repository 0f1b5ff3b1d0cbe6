"""Plan execution and the query pipeline: retrieve, assess, revise, answer.

One pipeline run classifies the query, assembles the profile's plan,
executes it over the loaded index bundle, and (for the L4 profile only)
assesses evidence coverage and revises the plan under a bounded reflection
loop before synthesizing the answer through the gateway. Everything is a
pure function of (query, bundle, config) when the gateway is mocked.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chunking import Modality
from .gateway import ChatRequest, CONTEXT_MARKER, QUESTION_MARKER
from .planning import (
    CALCULATE,
    EXPAND_CROSS_REFS,
    FILTER_METADATA,
    RETRIEVE_LEXICAL,
    RETRIEVE_SEMANTIC,
    RETRIEVE_STRUCTURAL,
    SYNTHESIZE,
    TABLE_LOOKUP_ACTION,
    Action,
    CoverageAssessment,
    LevelProfile,
    QueryIntent,
    ReflectionConfig,
    RetrievalPlan,
    assemble_plan,
    classify_intent,
    revise_plan,
)
from .retrieval import (
    FusionConfig,
    RankedEvidence,
    ScoredChunk,
    SpaceKind,
    filter_metadata,
    fuse_rrf,
    search_lexical,
    search_semantic,
    search_structural,
)
from .spaces import EmptyCorpus, IndexBundle
from .text import content_terms, expand_terms, tokenize
from .tools import ToolOutput, calculate, extract_expression, table_lookup

CONTEXT_BUDGET = 8

SYNTHESIS_SYSTEM_PROMPT = (
    "Answer the question using only the provided context. "
    "Quote values exactly as they appear."
)


@dataclass
class PlanStep:
    iteration: int
    action: str
    params: dict
    result_count: int

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "action": self.action,
            "params": self.params,
            "result_count": self.result_count,
        }


@dataclass
class Answer:
    text: str
    citations: list[str]
    plan_trace: list[PlanStep]
    profile: LevelProfile


def build_synthesis_prompt(query: str, texts: list[str], tool_outputs: list[ToolOutput]) -> str:
    lines = [QUESTION_MARKER, query, "", CONTEXT_MARKER]
    lines.extend(texts)
    lines.extend(f"{out.tool} result: {out.value}" for out in tool_outputs)
    return "\n".join(lines)


def _derived_terms(query: str) -> tuple[str, ...]:
    return tuple(sorted(expand_terms(content_terms(query))))


class _Execution:
    """Mutable state for one plan execution pass."""

    def __init__(self, query: str, bundle: IndexBundle, gateway, fusion: FusionConfig):
        self.query = query
        self.bundle = bundle
        self.gateway = gateway
        self.fusion = fusion
        self.rankings: dict[SpaceKind, list[str]] = {}
        self.expansions: dict[str, ScoredChunk] = {}
        self.allowed: set[str] | None = None
        self._query_vec = None

    def query_vec(self):
        if self._query_vec is None:
            self._query_vec = self.gateway.embed([self.query])[0]
        return self._query_vec

    def evidence(self) -> RankedEvidence:
        rankings = self.rankings
        if self.allowed is not None:
            rankings = {
                kind: [cid for cid in ranking if cid in self.allowed]
                for kind, ranking in rankings.items()
            }
        fused = fuse_rrf(rankings, self.fusion, query_echo=self.query)
        present = {c.chunk_id for c in fused.chunks}
        merged = fused.chunks + [
            sc for cid, sc in self.expansions.items() if cid not in present
        ]
        merged.sort(key=lambda c: (-c.fused_score, c.chunk_id))
        return RankedEvidence(chunks=merged, query_echo=self.query)

    def expand_cross_refs(self) -> int:
        added = 0
        current = self.evidence().chunks
        present = {c.chunk_id for c in current}
        for scored in current:
            for target in self.bundle.structural.cross_links.get(scored.chunk_id, ()):
                if target in present or target not in self.bundle.chunks:
                    continue
                self.expansions[target] = ScoredChunk(
                    chunk_id=target,
                    space_scores={SpaceKind.STRUCTURAL: scored.fused_score},
                    fused_score=scored.fused_score,
                    provenance={SpaceKind.STRUCTURAL},
                )
                present.add(target)
                added += 1
        return added

    def run_table_lookup(self, action: Action, outputs: list[ToolOutput]) -> int:
        row_terms = action.row_terms or _derived_terms(self.query)
        col_terms = action.col_terms or _derived_terms(self.query)
        for scored in self.evidence().chunks:
            chunk = self.bundle.chunks[scored.chunk_id]
            if chunk.modality is not Modality.TABLE:
                continue
            cell = table_lookup(chunk, list(row_terms), list(col_terms))
            if cell is not None:
                outputs.append(
                    ToolOutput(tool="table_lookup", value=cell, detail=chunk.chunk_id)
                )
                return 1
        return 0

    def run_calculate(self, action: Action, outputs: list[ToolOutput]) -> int:
        expression = action.expression
        if not expression:
            extracted = extract_expression(self.query)
            if extracted is None:
                return 0
            expression = extracted
        # An explicit bad expression raises ToolFailure to the caller.
        value = calculate(expression)
        outputs.append(ToolOutput(tool="calculate", value=value, detail=expression))
        return 1


def execute_plan(
    plan: RetrievalPlan,
    query: str,
    bundle: IndexBundle,
    gateway,
    fusion: FusionConfig | None = None,
) -> tuple[RankedEvidence, list[ToolOutput], list[PlanStep]]:
    """Run every action before Synthesize; returns evidence, tool outputs, trace."""
    fusion = fusion or FusionConfig()
    state = _Execution(query, bundle, gateway, fusion)
    outputs: list[ToolOutput] = []
    steps: list[PlanStep] = []

    for action in plan.actions:
        if action.kind == SYNTHESIZE:
            break
        if action.kind == RETRIEVE_SEMANTIC:
            ranked = search_semantic(bundle.semantic, state.query_vec(), action.k)
            state.rankings[SpaceKind.SEMANTIC] = [cid for cid, _ in ranked]
            count = len(ranked)
        elif action.kind == RETRIEVE_LEXICAL:
            ranked = search_lexical(bundle.lexical, query, action.k)
            state.rankings[SpaceKind.LEXICAL] = [cid for cid, _ in ranked]
            count = len(ranked)
        elif action.kind == RETRIEVE_STRUCTURAL:
            ranked = search_structural(bundle.structural, query, plan.intent, action.k)
            state.rankings[SpaceKind.STRUCTURAL] = [cid for cid, _ in ranked]
            count = len(ranked)
        elif action.kind == FILTER_METADATA:
            state.allowed = filter_metadata(bundle.metadata, list(action.predicate))
            count = len(state.allowed)
        elif action.kind == EXPAND_CROSS_REFS:
            count = state.expand_cross_refs()
        elif action.kind == TABLE_LOOKUP_ACTION:
            count = state.run_table_lookup(action, outputs)
        elif action.kind == CALCULATE:
            count = state.run_calculate(action, outputs)
        else:
            raise ValueError(f"unknown action kind {action.kind!r}")
        steps.append(
            PlanStep(
                iteration=plan.iteration,
                action=action.kind,
                params=action.params(),
                result_count=count,
            )
        )
    return state.evidence(), outputs, steps


def assess_coverage(
    query: str,
    evidence: RankedEvidence,
    intent: QueryIntent,
    cfg: ReflectionConfig,
    bundle: IndexBundle,
    tool_outputs: list[ToolOutput] | None = None,
) -> CoverageAssessment:
    """Term coverage of the query against evidence text plus breadcrumbs,
    combined with the per-intent evidence requirement."""
    tool_outputs = tool_outputs or []
    wanted = content_terms(query)
    seen: set[str] = set()
    modalities: set[Modality] = set()
    doc_ids: set[str] = set()
    crumbs: set[tuple[str, ...]] = set()
    for scored in evidence.chunks:
        chunk = bundle.chunks[scored.chunk_id]
        seen.update(tokenize(chunk.text))
        for title in chunk.breadcrumb:
            seen.update(tokenize(title))
        modalities.add(chunk.modality)
        doc_ids.add(chunk.doc_id)
        crumbs.add(tuple(chunk.breadcrumb))

    found = wanted & seen
    term_coverage = len(found) / len(wanted) if wanted else 1.0

    if intent in (QueryIntent.TABLE_LOOKUP, QueryIntent.COMPUTATION):
        intent_satisfied = Modality.TABLE in modalities or bool(tool_outputs)
    elif intent is QueryIntent.VISUAL_DIAGRAM:
        intent_satisfied = Modality.FIGURE in modalities
    elif intent is QueryIntent.MULTI_HOP:
        intent_satisfied = len(doc_ids) >= 2 or len(crumbs) >= 2
    else:
        intent_satisfied = True

    return CoverageAssessment(
        term_coverage=term_coverage,
        intent_satisfied=intent_satisfied,
        missing_terms=sorted(wanted - found),
        sufficient=term_coverage >= cfg.coverage_threshold and intent_satisfied,
    )


def run_pipeline(
    query: str,
    profile: LevelProfile,
    bundle: IndexBundle,
    gateway,
    cfg: ReflectionConfig | None = None,
    fusion: FusionConfig | None = None,
    context_budget: int = CONTEXT_BUDGET,
) -> Answer:
    """Classify, plan, execute (reflecting under L4), and synthesize an answer.

    Citations are the chunk ids passed to synthesis (top context_budget by
    fused score); the trace records every executed action of every
    iteration plus the final synthesis step.
    """
    if not bundle.chunks:
        raise EmptyCorpus("the index bundle covers no chunks")
    cfg = cfg or ReflectionConfig()
    intent = classify_intent(query)
    plan = assemble_plan(intent, profile, cfg)

    trace: list[PlanStep] = []
    while True:
        evidence, tool_outputs, steps = execute_plan(plan, query, bundle, gateway, fusion)
        trace.extend(steps)
        if profile is not LevelProfile.L4:
            break
        assessment = assess_coverage(query, evidence, intent, cfg, bundle, tool_outputs)
        if assessment.sufficient:
            break
        revised = revise_plan(plan, assessment, cfg)
        if revised is None:
            break
        plan = revised

    context = evidence.chunks[:context_budget]
    texts = [bundle.chunks[c.chunk_id].text for c in context]
    prompt = build_synthesis_prompt(query, texts, tool_outputs)
    response = gateway.chat(
        ChatRequest(system_prompt=SYNTHESIS_SYSTEM_PROMPT, user_prompt=prompt)
    )
    text = response.text
    if tool_outputs:
        text = text + "\n" + "\n".join(f"[{out.tool}] {out.value}" for out in tool_outputs)
    trace.append(
        PlanStep(
            iteration=plan.iteration,
            action=SYNTHESIZE,
            params={},
            result_count=len(context),
        )
    )
    return Answer(
        text=text,
        citations=[c.chunk_id for c in context],
        plan_trace=trace,
        profile=profile,
    )


def explain_plan(query: str, profile: LevelProfile, cfg: ReflectionConfig | None = None) -> dict:
    """Serialized plan for a query without executing anything."""
    intent = classify_intent(query)
    plan = assemble_plan(intent, profile, cfg or ReflectionConfig())
    return {
        "query": query,
        "profile": profile.value,
        "intent": intent.value,
        "actions": [{"action": a.kind, "params": a.params()} for a in plan.actions],
    }
