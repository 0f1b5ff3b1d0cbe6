"""The four parallel index views built over one chunk set.

semantic    normalized embeddings per chunk (mock or remote embedder)
lexical     term postings with BM25 statistics
structural  breadcrumb terms, node kinds, modality and cross-links
metadata    document field/value lookup expanded to chunk ids

All four views cover exactly the same chunk ids; the bundle also carries
the chunk payloads so downstream stages can read texts and breadcrumbs
after loading an index from disk.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable

import numpy as np

from .chunking import Chunk
from .doctree import DocumentMetadata
from .text import tokenize

FORMAT_VERSION = 1


class SpacesError(Exception):
    """Base class for index construction failures."""


class EmptyCorpus(SpacesError):
    """No chunks were provided (or the loaded bundle covers nothing)."""


class EmbedderFailure(SpacesError):
    """The embedding backend failed; message carries chunk id context."""


@dataclass(eq=False)
class Embedding:
    values: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} values, got shape {self.values.shape}")


@dataclass
class EmbedderSpec:
    kind: str = "mock"  # "mock" or "remote"
    dim: int = 256
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 8:
            raise ValueError("embedding dim must be >= 8")


def mock_embed(text: str, dim: int = 256) -> Embedding:
    """Deterministic offline embedding: signed hashing of character 3-grams.

    Lowercase the text, slide a 3-character window, hash each gram to a
    bucket and a sign, then L2-normalize. Texts too short to produce a
    3-gram map to the unit vector on bucket 0. Pure function of (text, dim).
    """
    if dim < 8:
        raise ValueError("embedding dim must be >= 8")
    vec = np.zeros(dim, dtype=np.float64)
    lowered = text.lower()
    for i in range(len(lowered) - 2):
        gram = lowered[i : i + 3].encode("utf-8")
        digest = hashlib.blake2b(gram, digest_size=8).digest()
        bucket = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return Embedding(values=vec / norm, dim=dim)


@dataclass
class SemanticIndex:
    entries: dict[str, Embedding]
    spec: EmbedderSpec
    _ids: tuple[str, ...] | None = field(default=None, repr=False)
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def dense(self) -> tuple[tuple[str, ...], np.ndarray]:
        """Chunk ids (sorted) and the stacked embedding matrix, cached."""
        if self._matrix is None:
            ids = tuple(sorted(self.entries))
            self._ids = ids
            self._matrix = np.stack([self.entries[i].values for i in ids])
        return self._ids, self._matrix


@dataclass
class LexicalIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_length: float
    total_chunks: int


@dataclass
class StructuralEntry:
    breadcrumb_terms: tuple[str, ...]
    node_kinds: tuple[str, ...]
    modality: str
    depth: int


@dataclass
class StructuralIndex:
    entries: dict[str, StructuralEntry]
    term_to_chunks: dict[str, set[str]]
    modality_to_chunks: dict[str, set[str]]
    cross_links: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass
class MetadataIndex:
    field_values: dict[str, dict[str, set[str]]]  # field -> value -> doc ids
    doc_chunks: dict[str, set[str]]  # doc id -> chunk ids


@dataclass
class IndexManifest:
    corpus_hash: str
    chunk_count: int
    embedder: EmbedderSpec
    created_at: str
    format_version: int = FORMAT_VERSION


@dataclass
class IndexBundle:
    semantic: SemanticIndex
    lexical: LexicalIndex
    structural: StructuralIndex
    metadata: MetadataIndex
    chunks: dict[str, Chunk]
    manifest: IndexManifest

    def chunk_ids(self) -> set[str]:
        return set(self.chunks)


Embedder = Callable[[list[str]], list[Embedding]]

_EMBED_BATCH = 128


def _embed_all(texts: list[str], ids: list[str], embedder: Embedder) -> list[Embedding]:
    out: list[Embedding] = []
    for start in range(0, len(texts), _EMBED_BATCH):
        batch = texts[start : start + _EMBED_BATCH]
        try:
            vecs = embedder(batch)
        except Exception as exc:
            raise EmbedderFailure(
                f"embedding failed for chunks {ids[start]}..{ids[min(start + _EMBED_BATCH, len(ids)) - 1]}: {exc}"
            ) from exc
        out.extend(vecs)
    return out


def corpus_digest(parts: Iterable[bytes]) -> str:
    """Hex digest over the raw CCD byte payloads of a corpus."""
    h = hashlib.sha256()
    for part in parts:
        h.update(hashlib.sha256(part).digest())
    return h.hexdigest()


def build_indexes(
    chunks: list[Chunk],
    docs: list[DocumentMetadata],
    embedder: Embedder,
    spec: EmbedderSpec,
    *,
    cross_links: dict[str, list[str]] | None = None,
    node_kinds: dict[str, tuple[str, ...]] | None = None,
    corpus_hash: str | None = None,
    created_at: str | None = None,
) -> IndexBundle:
    """Build all four index views over the same chunk set.

    cross_links carries resolved chunk-to-chunk reference targets (see
    chunking.chunk_cross_links); corpus_hash should be the digest of the
    ingested CCD bytes and defaults to a digest of the chunk payloads.
    """
    if not chunks:
        raise EmptyCorpus("cannot index an empty chunk list")
    doc_ids = {d.doc_id for d in docs}
    for chunk in chunks:
        if chunk.doc_id not in doc_ids:
            raise ValueError(f"chunk {chunk.chunk_id} references unknown doc {chunk.doc_id!r}")
    seen: set[str] = set()
    for chunk in chunks:
        if chunk.chunk_id in seen:
            raise ValueError(f"duplicate chunk id {chunk.chunk_id!r}")
        seen.add(chunk.chunk_id)

    # Semantic: embed in chunk order so the bundle is deterministic.
    vectors = _embed_all([c.text for c in chunks], [c.chunk_id for c in chunks], embedder)
    for chunk, vec in zip(chunks, vectors):
        if vec.dim != spec.dim:
            raise EmbedderFailure(
                f"chunk {chunk.chunk_id}: embedder returned dim {vec.dim}, spec wants {spec.dim}"
            )
    semantic = SemanticIndex(
        entries={c.chunk_id: v for c, v in zip(chunks, vectors)}, spec=spec
    )

    # Lexical: lowercased, punctuation-stripped, whitespace-tokenized terms.
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for chunk in chunks:
        terms = tokenize(chunk.text)
        doc_lengths[chunk.chunk_id] = len(terms)
        counts: dict[str, int] = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((chunk.chunk_id, tf))
    for term in postings:
        postings[term].sort()
    avg_length = sum(doc_lengths.values()) / len(doc_lengths)
    lexical = LexicalIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_length=avg_length,
        total_chunks=len(chunks),
    )

    # Structural: breadcrumb terms, node kinds, modality, depth, cross-links.
    entries: dict[str, StructuralEntry] = {}
    term_to_chunks: dict[str, set[str]] = {}
    modality_to_chunks: dict[str, set[str]] = {}
    kinds_by_chunk = node_kinds or {}
    for chunk in chunks:
        crumb_terms = tuple(dict.fromkeys(t for title in chunk.breadcrumb for t in tokenize(title)))
        entries[chunk.chunk_id] = StructuralEntry(
            breadcrumb_terms=crumb_terms,
            node_kinds=tuple(kinds_by_chunk.get(chunk.chunk_id, ())),
            modality=chunk.modality.value,
            depth=len(chunk.node_path),
        )
        for term in crumb_terms:
            term_to_chunks.setdefault(term, set()).add(chunk.chunk_id)
        modality_to_chunks.setdefault(chunk.modality.value, set()).add(chunk.chunk_id)
    links = {
        source: tuple(targets)
        for source, targets in sorted((cross_links or {}).items())
        if source in seen
    }
    structural = StructuralIndex(
        entries=entries,
        term_to_chunks=term_to_chunks,
        modality_to_chunks=modality_to_chunks,
        cross_links=links,
    )

    # Metadata: field/value -> doc ids, doc id -> chunk ids.
    field_values: dict[str, dict[str, set[str]]] = {}

    def note(field_name: str, value: str | None, doc_id: str) -> None:
        if value is None:
            return
        field_values.setdefault(field_name, {}).setdefault(value, set()).add(doc_id)

    doc_chunks: dict[str, set[str]] = {}
    for chunk in chunks:
        doc_chunks.setdefault(chunk.doc_id, set()).add(chunk.chunk_id)
    for doc in docs:
        if doc.doc_id not in doc_chunks:
            continue
        note("doc_id", doc.doc_id, doc.doc_id)
        note("title", doc.title, doc.doc_id)
        note("doc_type", doc.doc_type, doc.doc_id)
        note("version", doc.version, doc.doc_id)
        note("author", doc.author, doc.doc_id)
        note("source_uri", doc.source_uri, doc.doc_id)
        for key, value in doc.tags.items():
            note(key, value, doc.doc_id)
    metadata = MetadataIndex(field_values=field_values, doc_chunks=doc_chunks)

    if corpus_hash is None:
        corpus_hash = corpus_digest(
            f"{c.chunk_id}\x00{c.text}".encode("utf-8") for c in chunks
        )
    manifest = IndexManifest(
        corpus_hash=corpus_hash,
        chunk_count=len(chunks),
        embedder=spec,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    return IndexBundle(
        semantic=semantic,
        lexical=lexical,
        structural=structural,
        metadata=metadata,
        chunks={c.chunk_id: c for c in chunks},
        manifest=manifest,
    )
