"""Load a directory of .ccd.json files into trees, chunks and index inputs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .chunking import Chunk, ChunkingPolicy, chunk_cross_links, chunk_tree
from .doctree import DocModelError, DocumentMetadata, DocumentTree, parse_ccd
from .spaces import corpus_digest

CCD_SUFFIX = ".ccd.json"


class CorpusError(Exception):
    pass


@dataclass
class LoadedCorpus:
    trees: list[DocumentTree]
    chunks: list[Chunk]
    docs: list[DocumentMetadata]
    cross_links: dict[str, list[str]]
    node_kinds: dict[str, tuple[str, ...]]
    corpus_hash: str


def load_corpus(directory: str | Path, policy: ChunkingPolicy | None = None) -> LoadedCorpus:
    """Parse and chunk every CCD file in a directory (sorted by filename).

    Raises CorpusError when the directory is missing, holds no CCD files,
    reuses a doc_id, or any file fails to parse.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"{directory} is not a directory")
    paths = sorted(p for p in directory.iterdir() if p.name.endswith(CCD_SUFFIX))
    if not paths:
        raise CorpusError(f"no {CCD_SUFFIX} files in {directory}")

    policy = policy or ChunkingPolicy()
    trees: list[DocumentTree] = []
    chunks: list[Chunk] = []
    cross_links: dict[str, list[str]] = {}
    node_kinds: dict[str, tuple[str, ...]] = {}
    payloads: list[bytes] = []
    seen_docs: set[str] = set()

    for path in paths:
        raw = path.read_bytes()
        payloads.append(raw)
        try:
            tree = parse_ccd(raw)
        except DocModelError as exc:
            raise CorpusError(f"{path.name}: {exc}") from exc
        if tree.metadata.doc_id in seen_docs:
            raise CorpusError(f"{path.name}: duplicate doc_id {tree.metadata.doc_id!r}")
        seen_docs.add(tree.metadata.doc_id)
        trees.append(tree)

        kinds = {n.node_id: n.kind.value for n in tree.walk()}
        try:
            doc_chunks = chunk_tree(tree, policy)
        except DocModelError as exc:
            raise CorpusError(f"{path.name}: {exc}") from exc
        chunks.extend(doc_chunks)
        cross_links.update(chunk_cross_links(tree, doc_chunks))
        for chunk in doc_chunks:
            node_kinds[chunk.chunk_id] = tuple(kinds[nid] for nid in chunk.node_path)

    return LoadedCorpus(
        trees=trees,
        chunks=chunks,
        docs=[t.metadata for t in trees],
        cross_links=cross_links,
        node_kinds=node_kinds,
        corpus_hash=corpus_digest(payloads),
    )
