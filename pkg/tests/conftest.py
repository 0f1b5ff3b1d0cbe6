import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ragmux.corpus import load_corpus
from ragmux.gateway import MockGateway
from ragmux.spaces import EmbedderSpec, build_indexes

DATA_DIR = Path(__file__).parent / "data"


def make_doc(doc_id="doc", title="Title", doc_type="note", children=None, **meta):
    return {
        "metadata": {"doc_id": doc_id, "title": title, "doc_type": doc_type, **meta},
        "root": {"id": "root", "kind": "Section", "text": "", "children": children or []},
    }


def section(nid, text, children):
    return {"id": nid, "kind": "Section", "text": text, "children": children}


def heading(nid, text, children):
    return {"id": nid, "kind": "Heading", "text": text, "children": children}


def para(nid, text):
    return {"id": nid, "kind": "Paragraph", "text": text, "children": []}


def table(nid, caption, rows):
    children = []
    if caption is not None:
        children.append({"id": f"{nid}-cap", "kind": "Caption", "text": caption, "children": []})
    for i, row in enumerate(rows):
        children.append(
            {
                "id": f"{nid}-r{i}",
                "kind": "TableRow",
                "children": [
                    {"id": f"{nid}-r{i}c{j}", "kind": "TableCell", "text": c, "children": []}
                    for j, c in enumerate(row)
                ],
            }
        )
    return {"id": nid, "kind": "Table", "text": "", "children": children}


def figure(nid, text, caption):
    children = []
    if caption is not None:
        children.append({"id": f"{nid}-cap", "kind": "Caption", "text": caption, "children": []})
    return {"id": nid, "kind": "Figure", "text": text, "children": children}


def to_bytes(payload: dict) -> bytes:
    return json.dumps(payload).encode("utf-8")


def corpus_bundle(directory, dim=256):
    loaded = load_corpus(directory)
    gateway = MockGateway(dim=dim)
    bundle = build_indexes(
        loaded.chunks,
        loaded.docs,
        gateway.embed,
        EmbedderSpec(dim=dim),
        cross_links=loaded.cross_links,
        node_kinds=loaded.node_kinds,
        corpus_hash=loaded.corpus_hash,
    )
    return bundle, gateway


@pytest.fixture(scope="session")
def manual_bundle():
    """The vehicle-manual mini corpus (DEF fixture)."""
    return corpus_bundle(DATA_DIR / "delucion_mini")


@pytest.fixture(scope="session")
def dmv_bundle():
    return corpus_bundle(DATA_DIR / "dmv_mini")
