"""Per-space search plus rank fusion into a single evidence list.

Every search is an exact scan over the immutable index (no approximate
structures at this scale), deterministic given (index, query, config),
and breaks ties by ascending chunk id. Fusion is weighted reciprocal
rank: fused(c) = sum over spaces of weight / (rrf_k + rank), rank
1-based, absent ranks contribute nothing. RRF is score-scale-free,
which is what lets four heterogeneous spaces combine without per-space
calibration. There is deliberately no re-ranker on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .planning import QueryIntent
from .spaces import Embedding, LexicalIndex, MetadataIndex, SemanticIndex, StructuralIndex
from .text import tokenize

BM25_K1 = 1.2
BM25_B = 0.75

TABLE_PRIOR = 0.5
FIGURE_PRIOR = 0.5


class RetrievalError(Exception):
    pass


class DimensionMismatch(RetrievalError):
    """Query embedding dim differs from the index dim."""


class UnknownField(RetrievalError):
    """A metadata predicate names a field that was never indexed."""


class SpaceKind(str, Enum):
    SEMANTIC = "semantic"
    LEXICAL = "lexical"
    STRUCTURAL = "structural"
    METADATA = "metadata"


@dataclass
class FusionConfig:
    rrf_k: int = 60
    space_weights: dict[SpaceKind, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rrf_k < 1:
            raise ValueError("rrf_k must be >= 1")
        weights = {kind: self.space_weights.get(kind, 1.0) for kind in SpaceKind}
        if any(w < 0 for w in weights.values()):
            raise ValueError("space weights must be >= 0")
        if not any(w > 0 for w in weights.values()):
            raise ValueError("at least one space weight must be positive")
        self.space_weights = weights

    def weight(self, kind: SpaceKind) -> float:
        return self.space_weights.get(kind, 1.0)


@dataclass
class ScoredChunk:
    chunk_id: str
    space_scores: dict[SpaceKind, float]
    fused_score: float
    provenance: set[SpaceKind]


@dataclass
class RankedEvidence:
    chunks: list[ScoredChunk]
    query_echo: str

    def ids(self) -> list[str]:
        return [c.chunk_id for c in self.chunks]


def search_semantic(index: SemanticIndex, query: Embedding, k: int) -> list[tuple[str, float]]:
    """Top-k chunks by cosine similarity, exact full scan."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.dim != index.spec.dim:
        raise DimensionMismatch(f"query dim {query.dim} != index dim {index.spec.dim}")
    ids, matrix = index.dense()
    if not ids:
        return []
    # Stored embeddings and queries are unit-normalized, so dot = cosine.
    # Per-row dots keep the score of each chunk independent of corpus size
    # and summation order, so rankings are bit-reproducible.
    scores = [float(np.dot(matrix[i], query.values)) for i in range(len(ids))]
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], scores[i]) for i in order[:k]]


def _bm25_idf(total: int, doc_freq: int) -> float:
    return math.log(1.0 + (total - doc_freq + 0.5) / (doc_freq + 0.5))


def search_lexical(index: LexicalIndex, query: str, k: int) -> list[tuple[str, float]]:
    """BM25 (k1=1.2, b=0.75) over the tokenized query; no-hit chunks excluded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = {}
    for term in dict.fromkeys(tokenize(query)):
        pairs = index.postings.get(term)
        if not pairs:
            continue
        idf = _bm25_idf(index.total_chunks, len(pairs))
        for chunk_id, tf in pairs:
            length_norm = 1.0 - BM25_B + BM25_B * index.doc_lengths[chunk_id] / index.avg_length
            part = tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * length_norm)
            scores[chunk_id] = scores.get(chunk_id, 0.0) + idf * part
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def _modality_prior(modality: str, intent: QueryIntent) -> float:
    if intent is QueryIntent.TABLE_LOOKUP and modality == "table":
        return TABLE_PRIOR
    if intent is QueryIntent.VISUAL_DIAGRAM and modality == "figure":
        return FIGURE_PRIOR
    return 0.0


def search_structural(
    index: StructuralIndex, query: str, intent: QueryIntent, k: int
) -> list[tuple[str, float]]:
    """Breadcrumb term overlap plus a modality prior; zero scores excluded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query_terms = set(tokenize(query))
    scores: dict[str, float] = {}
    candidates: set[str] = set()
    for term in query_terms:
        candidates.update(index.term_to_chunks.get(term, ()))
    if intent is QueryIntent.TABLE_LOOKUP:
        candidates.update(index.modality_to_chunks.get("table", ()))
    elif intent is QueryIntent.VISUAL_DIAGRAM:
        candidates.update(index.modality_to_chunks.get("figure", ()))
    for chunk_id in candidates:
        entry = index.entries[chunk_id]
        overlap = len(query_terms.intersection(entry.breadcrumb_terms))
        score = overlap + _modality_prior(entry.modality, intent)
        if score > 0:
            scores[chunk_id] = score
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def filter_metadata(index: MetadataIndex, predicate) -> set[str]:
    """Chunk ids of documents matching every field=value pair (conjunction).

    predicate is an iterable of (field, value) pairs or a mapping; an empty
    predicate selects every chunk. Raises UnknownField for fields that were
    never indexed.
    """
    pairs = list(predicate.items()) if isinstance(predicate, dict) else list(predicate)
    all_chunks: set[str] = set()
    for chunk_ids in index.doc_chunks.values():
        all_chunks.update(chunk_ids)
    if not pairs:
        return all_chunks
    doc_ids: set[str] | None = None
    for field_name, value in pairs:
        if field_name not in index.field_values:
            raise UnknownField(f"metadata field {field_name!r} was never indexed")
        matching = index.field_values[field_name].get(value, set())
        doc_ids = set(matching) if doc_ids is None else doc_ids & matching
    result: set[str] = set()
    for doc_id in doc_ids or ():
        result.update(index.doc_chunks.get(doc_id, ()))
    return result


def fuse_rrf(
    rankings: dict[SpaceKind, list[str]],
    cfg: FusionConfig | None = None,
    query_echo: str = "",
) -> RankedEvidence:
    """Weighted reciprocal-rank fusion of per-space rankings.

    Every chunk present in any input ranking appears in the output, so
    fusion never loses recall; ordering is (fused score desc, chunk id asc).
    """
    cfg = cfg or FusionConfig()
    contributions: dict[str, dict[SpaceKind, float]] = {}
    for kind, ranking in rankings.items():
        weight = cfg.weight(kind)
        for rank, chunk_id in enumerate(ranking, start=1):
            contributions.setdefault(chunk_id, {})[kind] = weight / (cfg.rrf_k + rank)
    chunks = [
        ScoredChunk(
            chunk_id=chunk_id,
            space_scores=dict(sorted(parts.items())),
            fused_score=sum(parts.values()),
            provenance=set(parts),
        )
        for chunk_id, parts in contributions.items()
    ]
    chunks.sort(key=lambda c: (-c.fused_score, c.chunk_id))
    return RankedEvidence(chunks=chunks, query_echo=query_echo)
