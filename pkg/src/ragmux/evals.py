"""Run level-profiled pipelines over question datasets and judge the answers.

Datasets are JSON Lines, one item per line with keys question,
ground_truth, level, optional rationale and source_docs. Reports carry a
per-profile accuracy row plus a per-level breakdown and a run manifest;
under the mock gateway two identical runs produce byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import ChatRequest, MalformedResponse
from .pipeline import run_pipeline
from .planning import LevelProfile
from .spaces import IndexBundle
from .text import normalize_for_match, token_f1

CORRECTNESS_THRESHOLD = 0.5

JUDGE_SYSTEM_PROMPT = "You are a strict grader of question answering systems."

# The rubric sent to the judge model, verbatim.
JUDGE_RUBRIC = """Grade the predicted answer against the ground truth.

Question: {question}
Ground truth: {ground_truth}
Predicted answer: {predicted}

Score 0-100 how well the predicted answer matches the ground truth:
100 means the ground truth is fully and unambiguously contained,
0 means the prediction is unrelated or contradicts it.
Reply with a single integer between 0 and 100 and nothing else."""


class EvalError(Exception):
    pass


class BadDataset(EvalError):
    """A dataset line is missing required fields or is not valid JSON."""


@dataclass
class EvalItem:
    question: str
    ground_truth: str
    level_tag: str
    rationale: str | None = None
    source_docs: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.question or not self.ground_truth:
            raise ValueError("question and ground_truth must be non-empty")
        if self.level_tag not in ("L1", "L2", "L3", "L4"):
            raise ValueError(f"bad level tag {self.level_tag!r}")


@dataclass
class JudgeVerdict:
    score: float
    correct: bool
    rationale: str
    judge_kind: str


@dataclass
class ItemResult:
    index: int
    question: str
    level_tag: str
    predicted: str
    score: float
    correct: bool
    error: str | None = None


@dataclass
class ProfileReport:
    profile: str
    accuracy: float
    item_count: int
    mean_score: float
    per_level: dict[str, dict[str, float]]
    items: list[ItemResult] = field(default_factory=list)


@dataclass
class EvalReport:
    dataset: str
    profiles: list[ProfileReport]
    manifest: dict

    def to_json(self) -> str:
        payload = {
            "dataset": self.dataset,
            "manifest": self.manifest,
            "profiles": [
                {
                    "profile": p.profile,
                    "accuracy": p.accuracy,
                    "item_count": p.item_count,
                    "mean_score": p.mean_score,
                    "per_level": p.per_level,
                    "items": [
                        {
                            "index": r.index,
                            "question": r.question,
                            "level": r.level_tag,
                            "predicted": r.predicted,
                            "score": r.score,
                            "correct": r.correct,
                            "error": r.error,
                        }
                        for r in p.items
                    ],
                }
                for p in self.profiles
            ],
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1) + "\n"

    def to_text(self) -> str:
        lines = [f"dataset: {self.dataset}"]
        header = f"{'profile':<8} {'accuracy':>9} {'items':>6} {'mean':>6}"
        lines.append(header)
        lines.append("-" * len(header))
        for p in self.profiles:
            lines.append(
                f"{p.profile:<8} {p.accuracy:>8.1f}% {p.item_count:>6d} {p.mean_score:>6.2f}"
            )
        level_tags = sorted({tag for p in self.profiles for tag in p.per_level})
        if level_tags:
            lines.append("")
            lines.append("accuracy by level tag:")
            for p in self.profiles:
                cells = "  ".join(
                    f"{tag}={p.per_level[tag]['accuracy']:.0f}%" for tag in level_tags if tag in p.per_level
                )
                lines.append(f"  {p.profile}: {cells}")
        return "\n".join(lines) + "\n"


def judge_lexical(ground_truth: str, predicted: str) -> JudgeVerdict:
    """Deterministic judge: content-term F1 with a containment bonus.

    Containment compares token-normalized strings padded with spaces, so a
    numeric ground truth like "0.11" only matches on token boundaries.
    """
    if not ground_truth or not predicted:
        raise ValueError("ground_truth and predicted must be non-empty")
    f1 = token_f1(ground_truth, predicted)
    contained = normalize_for_match(ground_truth) in normalize_for_match(predicted)
    score = 1.0 if contained else f1
    rationale = "containment" if contained else f"token F1 {f1:.3f}"
    return JudgeVerdict(
        score=score,
        correct=score >= CORRECTNESS_THRESHOLD,
        rationale=rationale,
        judge_kind="lexical",
    )


def judge_llm(question: str, ground_truth: str, predicted: str, gateway) -> JudgeVerdict:
    """Single rubric-prompted chat call expected to return a 0-100 integer."""
    prompt = JUDGE_RUBRIC.format(
        question=question, ground_truth=ground_truth, predicted=predicted
    )
    response = gateway.chat(
        ChatRequest(system_prompt=JUDGE_SYSTEM_PROMPT, user_prompt=prompt, max_output_tokens=8)
    )
    text = response.text.strip()
    try:
        value = int(text.split()[0]) if text else None
    except ValueError:
        value = None
    if value is None or not (0 <= value <= 100):
        raise MalformedResponse(f"judge returned no 0-100 integer: {text[:80]!r}")
    score = value / 100.0
    return JudgeVerdict(
        score=score,
        correct=score >= CORRECTNESS_THRESHOLD,
        rationale=f"judge integer {value}",
        judge_kind="llm",
    )


def load_dataset(path: str | Path) -> list[EvalItem]:
    """Read a JSONL dataset; raises BadDataset with the offending line number."""
    items: list[EvalItem] = []
    path = Path(path)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BadDataset(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
        try:
            items.append(
                EvalItem(
                    question=obj["question"],
                    ground_truth=obj["ground_truth"],
                    level_tag=obj["level"],
                    rationale=obj.get("rationale"),
                    source_docs=obj.get("source_docs"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadDataset(f"{path}:{lineno}: {exc}") from None
    if not items:
        raise BadDataset(f"{path}: dataset is empty")
    return items


def run_eval(
    items: list[EvalItem],
    profiles: list[LevelProfile],
    bundle: IndexBundle,
    gateway,
    judge_kind: str = "lexical",
    *,
    judge_gateway=None,
    dataset_name: str = "dataset",
    config_digest: str = "",
    reflection_cfg=None,
    fusion_cfg=None,
) -> EvalReport:
    """Evaluate every item under every profile; per-item errors never abort the run."""
    reports: list[ProfileReport] = []
    for profile in profiles:
        results: list[ItemResult] = []
        for index, item in enumerate(items):
            predicted = ""
            error: str | None = None
            score = 0.0
            correct = False
            try:
                answer = run_pipeline(
                    item.question, profile, bundle, gateway,
                    cfg=reflection_cfg, fusion=fusion_cfg,
                )
                predicted = answer.text
                if judge_kind == "llm":
                    verdict = judge_llm(
                        item.question, item.ground_truth, predicted, judge_gateway or gateway
                    )
                else:
                    verdict = judge_lexical(item.ground_truth, predicted)
                score, correct = verdict.score, verdict.correct
            except Exception as exc:  # error column, not an abort
                error = f"{type(exc).__name__}: {exc}"
            results.append(
                ItemResult(
                    index=index,
                    question=item.question,
                    level_tag=item.level_tag,
                    predicted=predicted,
                    score=score,
                    correct=correct,
                    error=error,
                )
            )
        total = len(results)
        correct_count = sum(1 for r in results if r.correct)
        per_level: dict[str, dict[str, float]] = {}
        for tag in sorted({r.level_tag for r in results}):
            tagged = [r for r in results if r.level_tag == tag]
            per_level[tag] = {
                "accuracy": 100.0 * sum(1 for r in tagged if r.correct) / len(tagged),
                "item_count": float(len(tagged)),
            }
        reports.append(
            ProfileReport(
                profile=profile.value,
                accuracy=100.0 * correct_count / total if total else 0.0,
                item_count=total,
                mean_score=sum(r.score for r in results) / total if total else 0.0,
                per_level=per_level,
                items=results,
            )
        )
    manifest = {
        "config_digest": config_digest,
        "corpus_hash": bundle.manifest.corpus_hash,
        "judge_kind": judge_kind,
        "correctness_threshold": CORRECTNESS_THRESHOLD,
        "item_count": len(items),
    }
    return EvalReport(dataset=dataset_name, profiles=reports, manifest=manifest)
