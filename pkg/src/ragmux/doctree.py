"""Document tree model and the canonical corpus document (CCD) parser.

A CCD file is UTF-8 JSON with two top-level keys:

    metadata  object with doc_id, title, doc_type and optional version,
              author, source_uri, tags
    root      recursive node object: id, kind, text, children,
              optional page_span

Unknown keys are rejected so corpus drift surfaces at ingest time, not at
query time. Parsing is deterministic: the same bytes always produce a
structurally identical tree.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum


class DocModelError(Exception):
    """Base class for document model failures."""


class MalformedDocument(DocModelError):
    """The input is not valid CCD JSON (syntax, schema or type error)."""


class DuplicateNodeId(DocModelError):
    """Two nodes in one document share an id."""


class InvariantViolation(DocModelError):
    """The document is well-formed JSON but breaks a structural rule."""


class UnknownNode(DocModelError):
    """A node id was requested that does not exist in the tree."""


class NodeKind(str, Enum):
    SECTION = "Section"
    HEADING = "Heading"
    PARAGRAPH = "Paragraph"
    TABLE = "Table"
    TABLE_ROW = "TableRow"
    TABLE_CELL = "TableCell"
    LIST = "List"
    LIST_ITEM = "ListItem"
    FIGURE = "Figure"
    CAPTION = "Caption"
    FORM_FIELD = "FormField"


# Kinds that act as containers for navigation; their text is a title.
HEADING_KINDS = frozenset({NodeKind.SECTION, NodeKind.HEADING})


@dataclass
class DocumentMetadata:
    doc_id: str
    title: str
    doc_type: str
    version: str | None = None
    author: str | None = None
    source_uri: str | None = None
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class DocumentNode:
    node_id: str
    kind: NodeKind
    text: str = ""
    children: list["DocumentNode"] = field(default_factory=list)
    ordinal: int = 0
    page_span: tuple[int, int] | None = None


@dataclass
class CrossReference:
    from_node: str
    ref_text: str
    target_node: str | None = None


@dataclass
class DocumentTree:
    metadata: DocumentMetadata
    root: DocumentNode
    cross_refs: list[CrossReference] = field(default_factory=list)

    def walk(self):
        """Yield every node in document order (depth-first, pre-order)."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def node(self, node_id: str) -> DocumentNode:
        for n in self.walk():
            if n.node_id == node_id:
                return n
        raise UnknownNode(f"no node {node_id!r} in document {self.metadata.doc_id!r}")

    def parent_map(self) -> dict[str, str | None]:
        """node_id -> parent node_id (root maps to None)."""
        parents: dict[str, str | None] = {self.root.node_id: None}
        for n in self.walk():
            for child in n.children:
                parents[child.node_id] = n.node_id
        return parents


_METADATA_KEYS = {"doc_id", "title", "doc_type", "version", "author", "source_uri", "tags"}
_NODE_KEYS = {"id", "kind", "text", "children", "page_span"}


def _require_str(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise MalformedDocument(f"{where}: {key!r} must be a string")
    return value


def _parse_metadata(obj) -> DocumentMetadata:
    if not isinstance(obj, dict):
        raise MalformedDocument("metadata must be an object")
    unknown = set(obj) - _METADATA_KEYS
    if unknown:
        raise MalformedDocument(f"metadata: unknown keys {sorted(unknown)}")
    doc_id = _require_str(obj, "doc_id", "metadata")
    if not doc_id:
        raise InvariantViolation("metadata: doc_id must be non-empty")
    title = _require_str(obj, "title", "metadata")
    doc_type = _require_str(obj, "doc_type", "metadata")
    optional: dict[str, str | None] = {}
    for key in ("version", "author", "source_uri"):
        value = obj.get(key)
        if value is not None and not isinstance(value, str):
            raise MalformedDocument(f"metadata: {key!r} must be a string")
        optional[key] = value
    tags = obj.get("tags", {})
    if not isinstance(tags, dict):
        raise MalformedDocument("metadata: tags must be an object")
    for k, v in tags.items():
        if not k:
            raise InvariantViolation("metadata: tag keys must be non-empty")
        if not isinstance(v, str):
            raise MalformedDocument(f"metadata: tag {k!r} must map to a string")
    return DocumentMetadata(
        doc_id=doc_id,
        title=title,
        doc_type=doc_type,
        version=optional["version"],
        author=optional["author"],
        source_uri=optional["source_uri"],
        tags=dict(tags),
    )


def _parse_node(obj, ordinal: int, seen_ids: set[str], path: str) -> DocumentNode:
    if not isinstance(obj, dict):
        raise MalformedDocument(f"{path}: node must be an object")
    unknown = set(obj) - _NODE_KEYS
    if unknown:
        raise MalformedDocument(f"{path}: unknown keys {sorted(unknown)}")
    node_id = _require_str(obj, "id", path)
    if not node_id:
        raise InvariantViolation(f"{path}: node id must be non-empty")
    if node_id in seen_ids:
        raise DuplicateNodeId(f"duplicate node id {node_id!r}")
    seen_ids.add(node_id)

    kind_raw = _require_str(obj, "kind", path)
    try:
        kind = NodeKind(kind_raw)
    except ValueError:
        raise MalformedDocument(f"{path}: unknown node kind {kind_raw!r}") from None

    text = obj.get("text", "")
    if not isinstance(text, str):
        raise MalformedDocument(f"{path}: text must be a string")

    page_span = obj.get("page_span")
    span: tuple[int, int] | None = None
    if page_span is not None:
        if (
            not isinstance(page_span, (list, tuple))
            or len(page_span) != 2
            or not all(isinstance(p, int) and not isinstance(p, bool) for p in page_span)
        ):
            raise MalformedDocument(f"{path}: page_span must be a pair of integers")
        span = (page_span[0], page_span[1])

    raw_children = obj.get("children", [])
    if not isinstance(raw_children, list):
        raise MalformedDocument(f"{path}: children must be a list")
    children = [
        _parse_node(child, i, seen_ids, f"{path}.children[{i}]")
        for i, child in enumerate(raw_children)
    ]

    node = DocumentNode(
        node_id=node_id, kind=kind, text=text, children=children,
        ordinal=ordinal, page_span=span,
    )
    if kind is NodeKind.TABLE_ROW:
        for child in children:
            if child.kind is not NodeKind.TABLE_CELL:
                raise InvariantViolation(
                    f"TableRow {node_id!r} has non-TableCell child {child.node_id!r}"
                )
    return node


def parse_ccd(raw: bytes | str) -> DocumentTree:
    """Parse CCD bytes into a validated DocumentTree with resolved cross-references.

    Raises MalformedDocument (with line/offset for syntax errors),
    DuplicateNodeId or InvariantViolation. Never raises anything else for
    any input.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8: {exc}") from None
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(payload, dict):
        raise MalformedDocument("top level must be an object")
    unknown = set(payload) - {"metadata", "root"}
    if unknown:
        raise MalformedDocument(f"unknown top-level keys {sorted(unknown)}")
    if "metadata" not in payload or "root" not in payload:
        raise MalformedDocument("top level must contain 'metadata' and 'root'")

    metadata = _parse_metadata(payload["metadata"])
    root = _parse_node(payload["root"], 0, set(), "root")
    if root.kind is not NodeKind.SECTION:
        raise InvariantViolation(f"root must be a Section, got {root.kind.value}")

    tree = DocumentTree(metadata=metadata, root=root)
    tree.cross_refs = extract_cross_references(tree)
    return tree


def _node_to_obj(node: DocumentNode) -> dict:
    obj: dict = {"id": node.node_id, "kind": node.kind.value, "text": node.text}
    if node.page_span is not None:
        obj["page_span"] = list(node.page_span)
    obj["children"] = [_node_to_obj(c) for c in node.children]
    return obj


def serialize_ccd(tree: DocumentTree) -> bytes:
    """Render a tree back to canonical CCD bytes (reparse yields an equal tree)."""
    meta = tree.metadata
    meta_obj: dict = {"doc_id": meta.doc_id, "title": meta.title, "doc_type": meta.doc_type}
    if meta.version is not None:
        meta_obj["version"] = meta.version
    if meta.author is not None:
        meta_obj["author"] = meta.author
    if meta.source_uri is not None:
        meta_obj["source_uri"] = meta.source_uri
    if meta.tags:
        meta_obj["tags"] = dict(sorted(meta.tags.items()))
    payload = {"metadata": meta_obj, "root": _node_to_obj(tree.root)}
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1).encode("utf-8")


# Reference mentions: optional lead-in, then Table/Figure/Section plus an
# arabic or roman number. Positional mentions ("as shown above") are
# detected too but never resolve.
_REF_RE = re.compile(
    r"(?:(?:See|see|as shown in|shown in)\s+)?"
    r"\b(Table|Figure|Section)\s+([0-9]+|[IVXLCDM]+|[ivxlcdm]+)\b"
)
_POSITIONAL_RE = re.compile(r"\b(?:as\s+)?shown\s+(?:above|below)\b", re.IGNORECASE)


def _norm_tokens(text: str) -> list[str]:
    return re.findall(r"[0-9a-z]+", text.lower())


def extract_cross_references(tree: DocumentTree) -> list[CrossReference]:
    """Detect reference mentions in node text and resolve them against captions/headings.

    Resolution matches the "<Kind> <number>" core of the mention against the
    leading tokens of Caption and Heading/Section text, case-insensitively;
    "Table 1" does not match a caption "Table 12". A resolved caption points
    at its Table/Figure parent so expansion lands on the referenced object.
    Unresolved mentions keep target_node=None. Output is sorted by
    (from_node, ref_text) and de-duplicated.
    """
    parents = tree.parent_map()
    nodes = {n.node_id: n for n in tree.walk()}

    # Candidate targets in document order: (leading tokens, resolved node id).
    candidates: list[tuple[list[str], str]] = []
    for node in tree.walk():
        if node.kind is NodeKind.CAPTION or node.kind in HEADING_KINDS:
            tokens = _norm_tokens(node.text)
            if not tokens:
                continue
            target = node.node_id
            if node.kind is NodeKind.CAPTION:
                parent_id = parents.get(node.node_id)
                if parent_id is not None and nodes[parent_id].kind in (
                    NodeKind.TABLE,
                    NodeKind.FIGURE,
                ):
                    target = parent_id
            candidates.append((tokens, target))

    found: set[tuple[str, str, str | None]] = set()
    for node in tree.walk():
        # Captions and titles are targets, not sources of mentions.
        if not node.text or node.kind is NodeKind.CAPTION or node.kind in HEADING_KINDS:
            continue
        for m in _REF_RE.finditer(node.text):
            mention_tokens = _norm_tokens(f"{m.group(1)} {m.group(2)}")
            target: str | None = None
            for tokens, candidate_id in candidates:
                if tokens[: len(mention_tokens)] == mention_tokens:
                    target = candidate_id
                    break
            found.add((node.node_id, m.group(0), target))
        for m in _POSITIONAL_RE.finditer(node.text):
            found.add((node.node_id, m.group(0), None))

    refs = [CrossReference(from_node=f, ref_text=r, target_node=t) for f, r, t in found]
    refs.sort(key=lambda ref: (ref.from_node, ref.ref_text))
    return refs


def heading_path(tree: DocumentTree, node_id: str) -> list[str]:
    """Titles of Section/Heading ancestors of node_id, outermost first.

    Empty-text containers contribute nothing. Raises UnknownNode for ids
    not in the tree.
    """
    path = _path_to(tree.root, node_id)
    if path is None:
        raise UnknownNode(f"no node {node_id!r} in document {tree.metadata.doc_id!r}")
    return [n.text for n in path[:-1] if n.kind in HEADING_KINDS and n.text]


def _path_to(root: DocumentNode, node_id: str) -> list[DocumentNode] | None:
    if root.node_id == node_id:
        return [root]
    for child in root.children:
        sub = _path_to(child, node_id)
        if sub is not None:
            return [root] + sub
    return None


def node_path_ids(tree: DocumentTree, node_id: str) -> list[str]:
    """Node ids from the root to node_id inclusive."""
    path = _path_to(tree.root, node_id)
    if path is None:
        raise UnknownNode(f"no node {node_id!r} in document {tree.metadata.doc_id!r}")
    return [n.node_id for n in path]
