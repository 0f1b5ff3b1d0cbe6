"""Structure-aware chunking of document trees.

Chunks are the shared retrieval unit: a text span plus the heading
breadcrumb, the node path back to the tree, and a modality tag. Tables
serialize to a grid (rows joined by newlines, cells by " | ", first row
treated as column headers) so they stay lexically searchable and can be
deserialized by the table lookup tool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .doctree import (
    HEADING_KINDS,
    DocModelError,
    DocumentNode,
    DocumentTree,
    NodeKind,
)
from .text import split_sentences


class EmptyDocument(DocModelError):
    """The tree has no text-bearing nodes to chunk."""


class Modality(str, Enum):
    TEXT = "text"
    TABLE = "table"
    FIGURE = "figure"
    FORM = "form"


@dataclass
class ChunkingPolicy:
    max_tokens_per_chunk: int = 256
    table_as_single_chunk: bool = True
    attach_caption_to_figure: bool = True

    def __post_init__(self) -> None:
        if self.max_tokens_per_chunk < 16:
            raise ValueError("max_tokens_per_chunk must be >= 16")


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    node_path: list[str]
    text: str
    breadcrumb: list[str]
    modality: Modality
    token_estimate: int = 0

    def __post_init__(self) -> None:
        if self.token_estimate == 0:
            self.token_estimate = estimate_tokens(self.text)


def estimate_tokens(text: str) -> int:
    """ceil(chars / 4); cheap budget heuristic, never below 1."""
    return max(1, math.ceil(len(text) / 4))


def serialize_table(table: DocumentNode) -> str:
    """Grid text for a Table node: rows joined by newline, cells by ' | '."""
    rows = []
    for row in table.children:
        if row.kind is not NodeKind.TABLE_ROW:
            continue
        rows.append(" | ".join(cell.text for cell in row.children))
    return "\n".join(rows)


def _split_text(text: str, max_tokens: int) -> list[str]:
    """Greedy sentence packing; a single sentence never splits.

    The concatenation of the returned pieces equals the input text.
    """
    if estimate_tokens(text) <= max_tokens:
        return [text]
    pieces: list[str] = []
    current = ""
    for sentence in split_sentences(text):
        if current and estimate_tokens(current + sentence) > max_tokens:
            pieces.append(current)
            current = sentence
        else:
            current += sentence
    if current:
        pieces.append(current)
    return pieces


@dataclass
class _Walker:
    tree: DocumentTree
    policy: ChunkingPolicy
    chunks: list[Chunk] = field(default_factory=list)
    seq: int = 0

    def emit(self, node_path: list[str], crumbs: list[str], text: str, modality: Modality) -> None:
        doc_id = self.tree.metadata.doc_id
        for piece in _split_text(text, self.policy.max_tokens_per_chunk):
            self.chunks.append(
                Chunk(
                    chunk_id=f"{doc_id}#{self.seq}",
                    doc_id=doc_id,
                    node_path=list(node_path),
                    text=piece,
                    breadcrumb=list(crumbs),
                    modality=modality,
                )
            )
            self.seq += 1

    def visit(self, node: DocumentNode, path: list[str], crumbs: list[str]) -> None:
        path = path + [node.node_id]

        if node.kind is NodeKind.TABLE and self.policy.table_as_single_chunk:
            grid = serialize_table(node)
            if grid.strip():
                self.emit(path, crumbs, grid, Modality.TABLE)
            # Captions under the table chunk separately (the grid text must
            # stay exactly the serialized rows).
            for child in node.children:
                if child.kind is NodeKind.CAPTION and child.text:
                    self.emit(path + [child.node_id], crumbs, child.text, Modality.TEXT)
            return

        if node.kind is NodeKind.FIGURE:
            caption_nodes = [c for c in node.children if c.kind is NodeKind.CAPTION and c.text]
            if self.policy.attach_caption_to_figure:
                parts = [node.text] + [c.text for c in caption_nodes]
                text = " ".join(p for p in parts if p)
                if text:
                    self.emit(path, crumbs, text, Modality.FIGURE)
            else:
                if node.text:
                    self.emit(path, crumbs, node.text, Modality.FIGURE)
                for child in caption_nodes:
                    self.emit(path + [child.node_id], crumbs, child.text, Modality.TEXT)
            return

        if node.kind in (NodeKind.PARAGRAPH, NodeKind.LIST_ITEM, NodeKind.CAPTION):
            if node.text:
                self.emit(path, crumbs, node.text, Modality.TEXT)
        elif node.kind is NodeKind.FORM_FIELD:
            if node.text:
                self.emit(path, crumbs, node.text, Modality.FORM)
        elif node.kind is NodeKind.TABLE and not self.policy.table_as_single_chunk:
            for child in node.children:
                if child.kind is NodeKind.TABLE_ROW:
                    row_text = " | ".join(cell.text for cell in child.children)
                    if row_text.strip():
                        self.emit(path + [child.node_id], crumbs, row_text, Modality.TABLE)
                elif child.kind is NodeKind.CAPTION and child.text:
                    self.emit(path + [child.node_id], crumbs, child.text, Modality.TEXT)
            return

        if node.kind in HEADING_KINDS and node.text:
            crumbs = crumbs + [node.text]
        for child in node.children:
            self.visit(child, path, crumbs)


def chunk_tree(tree: DocumentTree, policy: ChunkingPolicy | None = None) -> list[Chunk]:
    """Chunk a document tree in document order.

    Every Paragraph/ListItem/FormField with text yields at least one chunk;
    a Table yields one grid chunk (captions chunk separately); figures carry
    their caption when attach_caption_to_figure is set. Raises EmptyDocument
    when nothing is text-bearing.
    """
    policy = policy or ChunkingPolicy()
    walker = _Walker(tree=tree, policy=policy)
    walker.visit(tree.root, [], [])
    if not walker.chunks:
        raise EmptyDocument(f"document {tree.metadata.doc_id!r} has no text-bearing nodes")
    return walker.chunks


def chunk_cross_links(tree: DocumentTree, chunks: list[Chunk]) -> dict[str, list[str]]:
    """Map chunk_id -> chunk_ids of resolved cross-reference targets.

    A reference belongs to the chunk that covers its source node (the chunk
    whose own source node is the nearest chunked ancestor-or-self); target
    chunks are all chunks rooted at or under the target node.
    """
    doc_chunks = [c for c in chunks if c.doc_id == tree.metadata.doc_id]
    if not doc_chunks:
        return {}
    parents = tree.parent_map()
    owner_of: dict[str, list[str]] = {}
    for chunk in doc_chunks:
        owner_of.setdefault(chunk.node_path[-1], []).append(chunk.chunk_id)

    def owning_chunks(node_id: str) -> list[str]:
        current: str | None = node_id
        while current is not None:
            if current in owner_of:
                return owner_of[current]
            current = parents.get(current)
        return []

    def covered_chunks(node_id: str) -> list[str]:
        return [c.chunk_id for c in doc_chunks if node_id in c.node_path]

    links: dict[str, list[str]] = {}
    for ref in tree.cross_refs:
        if ref.target_node is None:
            continue
        targets = covered_chunks(ref.target_node)
        if not targets:
            continue
        for source_chunk in owning_chunks(ref.from_node):
            bucket = links.setdefault(source_chunk, [])
            for t in targets:
                if t not in bucket and t != source_chunk:
                    bucket.append(t)
    return {k: sorted(v) for k, v in sorted(links.items())}
