"""Query intent classification, plan assembly and reflective plan revision.

Intent rules are an ordered table; the first match wins and the default is
Factoid, so classification is auditable and deterministic:

    1. arithmetic operators between numbers, or calculate/compute/total/
       sum/plus/minus/times/divided        -> Computation
    2. figure/diagram/drawing/schematic vocabulary, or a
       "find ... with <count> <part>" pattern          -> VisualDiagram
    3. a superlative/comparative together with a quantity word
       (highest/lowest/percentage/rate...), an explicit table/chart
       mention, or two or more numeric tokens          -> TableLookup
    4. compare/versus, or "between ... and ...", or two capitalized
       entities joined by "and"                        -> MultiHop
    5. otherwise                                       -> Factoid

Level profiles are plan templates with strictly nested capabilities:
L1 retrieves semantically only; L2 adds the lexical and structural spaces
with fusion; L3 adds cross-reference expansion (and a second retrieval hop
for multi-hop queries); L4 adds tools and is the only profile that runs
the reflection loop.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum


class PlanningError(Exception):
    pass


class EmptyQuery(PlanningError):
    """classify_intent was handed an empty or whitespace-only query."""


class QueryIntent(str, Enum):
    FACTOID = "Factoid"
    TABLE_LOOKUP = "TableLookup"
    MULTI_HOP = "MultiHop"
    COMPUTATION = "Computation"
    VISUAL_DIAGRAM = "VisualDiagram"


class LevelProfile(str, Enum):
    L1 = "l1"
    L2 = "l2"
    L3 = "l3"
    L4 = "l4"


@dataclass(frozen=True)
class Action:
    """One step of a retrieval plan (tagged union via `kind`)."""

    kind: str
    k: int | None = None
    predicate: tuple[tuple[str, str], ...] = ()
    row_terms: tuple[str, ...] = ()
    col_terms: tuple[str, ...] = ()
    expression: str = ""

    def __post_init__(self) -> None:
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1 where present")

    def params(self) -> dict:
        out: dict = {}
        if self.k is not None:
            out["k"] = self.k
        if self.predicate:
            out["predicate"] = [list(p) for p in self.predicate]
        if self.row_terms:
            out["row_terms"] = list(self.row_terms)
        if self.col_terms:
            out["col_terms"] = list(self.col_terms)
        if self.expression:
            out["expression"] = self.expression
        return out


RETRIEVE_SEMANTIC = "RetrieveSemantic"
RETRIEVE_LEXICAL = "RetrieveLexical"
RETRIEVE_STRUCTURAL = "RetrieveStructural"
FILTER_METADATA = "FilterMetadata"
EXPAND_CROSS_REFS = "ExpandCrossRefs"
TABLE_LOOKUP_ACTION = "TableLookup"
CALCULATE = "Calculate"
SYNTHESIZE = "Synthesize"

RETRIEVAL_KINDS = (RETRIEVE_SEMANTIC, RETRIEVE_LEXICAL, RETRIEVE_STRUCTURAL)

BASE_K = 5


@dataclass
class RetrievalPlan:
    actions: list[Action]
    intent: QueryIntent
    iteration: int = 0

    def __post_init__(self) -> None:
        synth = [a for a in self.actions if a.kind == SYNTHESIZE]
        if len(synth) != 1 or self.actions[-1].kind != SYNTHESIZE:
            raise ValueError("a plan must end with exactly one Synthesize action")

    def action_kinds(self) -> set[str]:
        return {a.kind for a in self.actions}


@dataclass
class ReflectionConfig:
    max_iters: int = 3
    coverage_threshold: float = 0.6
    k_growth: int = 2

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (0 < self.coverage_threshold <= 1):
            raise ValueError("coverage_threshold must be in (0, 1]")
        if self.k_growth < 1:
            raise ValueError("k_growth must be >= 1")


@dataclass
class CoverageAssessment:
    term_coverage: float
    intent_satisfied: bool
    missing_terms: list[str]
    sufficient: bool


_COMPUTE_WORDS_RE = re.compile(
    r"\b(calculate|compute|total|sum|plus|minus|times|divided)\b", re.IGNORECASE
)
_ARITHMETIC_RE = re.compile(r"\d\s*[+*/×÷]\s*\d|\d\s+-\s+\d")
_VISUAL_WORDS_RE = re.compile(
    r"\b(figure|diagram|drawing|schematic|blueprint|illustration)\b", re.IGNORECASE
)
_NUMBER_WORDS = (
    "one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve|"
    "thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen|twenty"
)
_FIND_WITH_RE = re.compile(
    rf"\bfind\b.*\bwith\b\s+(?:\d+|{_NUMBER_WORDS})\s+\w+", re.IGNORECASE | re.DOTALL
)
_SUPERLATIVE_RE = re.compile(
    r"\b(highest|lowest|largest|smallest|greatest|most|least|best|worst|"
    r"maximum|minimum|higher|lower|greater|fewer|more|less)\b",
    re.IGNORECASE,
)
_QUANTITY_RE = re.compile(
    r"\b(percentage|percent|rate|ratio|share|amount|number|count|value|price|cost|fee)\b",
    re.IGNORECASE,
)
_TABLE_WORD_RE = re.compile(r"\b(table|chart|grid|spreadsheet)\b", re.IGNORECASE)
_NUMERIC_TOKEN_RE = re.compile(r"\b\w*\d\w*(?:-\w+)*\b")
_COMPARE_RE = re.compile(r"\b(compare|comparison|versus|vs)\b", re.IGNORECASE)
_BETWEEN_AND_RE = re.compile(r"\bbetween\b.+\band\b", re.IGNORECASE | re.DOTALL)
_ENTITIES_AND_RE = re.compile(r"\b[A-Z][\w-]+\s+and\s+(?:the\s+)?[A-Z][\w-]+")


def classify_intent(query: str) -> QueryIntent:
    """Apply the ordered rule table; deterministic, first match wins."""
    if not query or not query.strip():
        raise EmptyQuery("query must be non-empty")
    if _ARITHMETIC_RE.search(query) or _COMPUTE_WORDS_RE.search(query):
        return QueryIntent.COMPUTATION
    if _VISUAL_WORDS_RE.search(query) or _FIND_WITH_RE.search(query):
        return QueryIntent.VISUAL_DIAGRAM
    if (
        (_SUPERLATIVE_RE.search(query) and _QUANTITY_RE.search(query))
        or _TABLE_WORD_RE.search(query)
        or len(_NUMERIC_TOKEN_RE.findall(query)) >= 2
    ):
        return QueryIntent.TABLE_LOOKUP
    if (
        _COMPARE_RE.search(query)
        or _BETWEEN_AND_RE.search(query)
        or _ENTITIES_AND_RE.search(query[1:])  # skip the sentence-initial capital
    ):
        return QueryIntent.MULTI_HOP
    return QueryIntent.FACTOID


def _retrieval_trio(k: int) -> list[Action]:
    return [
        Action(RETRIEVE_SEMANTIC, k=k),
        Action(RETRIEVE_LEXICAL, k=k),
        Action(RETRIEVE_STRUCTURAL, k=k),
    ]


def assemble_plan(
    intent: QueryIntent, profile: LevelProfile, cfg: ReflectionConfig | None = None
) -> RetrievalPlan:
    """Build the plan template for (intent, profile); iteration starts at 0.

    L1 is the fixed semantic-only pipeline regardless of intent. Tools only
    enter at L4 and only for the intents that need them.
    """
    cfg = cfg or ReflectionConfig()
    if profile is LevelProfile.L1:
        actions = [Action(RETRIEVE_SEMANTIC, k=BASE_K), Action(SYNTHESIZE)]
        return RetrievalPlan(actions=actions, intent=intent)

    actions = _retrieval_trio(BASE_K)
    if profile in (LevelProfile.L3, LevelProfile.L4):
        actions.append(Action(EXPAND_CROSS_REFS))
        if intent is QueryIntent.MULTI_HOP:
            # Second hop: widen every space, then chase the new references.
            actions.extend(_retrieval_trio(BASE_K * cfg.k_growth))
            actions.append(Action(EXPAND_CROSS_REFS))
    if profile is LevelProfile.L4:
        if intent is QueryIntent.TABLE_LOOKUP:
            actions.append(Action(TABLE_LOOKUP_ACTION))
        elif intent is QueryIntent.COMPUTATION:
            actions.append(Action(CALCULATE))
    actions.append(Action(SYNTHESIZE))
    return RetrievalPlan(actions=actions, intent=intent)


def revise_plan(
    plan: RetrievalPlan, assessment: CoverageAssessment, cfg: ReflectionConfig
) -> RetrievalPlan | None:
    """Produce the next plan after an insufficient pass, or None when out of budget.

    Exactly one revision rule applies per call, in priority order: add any
    space not yet used, then grow every retrieval k, then add cross-ref
    expansion, then add the table tool when the intent demands a table.
    Revisions only ever add evidence, so the chunk set grows monotonically.
    """
    if plan.iteration + 1 >= cfg.max_iters:
        return None

    used = plan.action_kinds()
    missing_spaces = [kind for kind in RETRIEVAL_KINDS if kind not in used]
    if missing_spaces:
        insert_at = max(i for i, a in enumerate(plan.actions) if a.kind in RETRIEVAL_KINDS) + 1
        actions = list(plan.actions)
        actions[insert_at:insert_at] = [Action(kind, k=BASE_K) for kind in missing_spaces]
        return RetrievalPlan(actions=actions, intent=plan.intent, iteration=plan.iteration + 1)

    grown = False
    actions = []
    for action in plan.actions:
        if action.kind in RETRIEVAL_KINDS:
            actions.append(replace(action, k=action.k * cfg.k_growth))
            grown = True
        else:
            actions.append(action)
    if grown and actions != plan.actions:
        return RetrievalPlan(actions=actions, intent=plan.intent, iteration=plan.iteration + 1)

    if EXPAND_CROSS_REFS not in used:
        actions = list(plan.actions)
        actions.insert(len(actions) - 1, Action(EXPAND_CROSS_REFS))
        return RetrievalPlan(actions=actions, intent=plan.intent, iteration=plan.iteration + 1)

    if (
        plan.intent in (QueryIntent.TABLE_LOOKUP, QueryIntent.COMPUTATION)
        and TABLE_LOOKUP_ACTION not in used
    ):
        actions = list(plan.actions)
        actions.insert(len(actions) - 1, Action(TABLE_LOOKUP_ACTION))
        return RetrievalPlan(actions=actions, intent=plan.intent, iteration=plan.iteration + 1)

    return None
