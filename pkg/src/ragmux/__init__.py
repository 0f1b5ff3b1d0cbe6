"""ragmux: structure-aware multi-space retrieval QA engine.

Documents parse into a typed tree, chunk with their heading breadcrumbs,
and index into four parallel views (semantic, lexical, structural,
metadata) fused by reciprocal rank. Queries run through level profiles
L1-L4, from plain semantic retrieval up to the reflective, tool-using
pipeline, and an evaluation harness scores profiles against JSONL
question datasets.
"""

__version__ = "0.1.0"

from .chunking import Chunk, ChunkingPolicy, chunk_tree
from .doctree import DocumentTree, extract_cross_references, heading_path, parse_ccd, serialize_ccd
from .gateway import MockGateway, MockPolicy, RemoteGateway
from .pipeline import Answer, run_pipeline
from .planning import LevelProfile, QueryIntent, assemble_plan, classify_intent
from .retrieval import FusionConfig, fuse_rrf
from .spaces import EmbedderSpec, IndexBundle, build_indexes, mock_embed
from .store import load_bundle, persist_bundle

__all__ = [
    "Answer",
    "Chunk",
    "ChunkingPolicy",
    "DocumentTree",
    "EmbedderSpec",
    "FusionConfig",
    "IndexBundle",
    "LevelProfile",
    "MockGateway",
    "MockPolicy",
    "QueryIntent",
    "RemoteGateway",
    "assemble_plan",
    "build_indexes",
    "chunk_tree",
    "classify_intent",
    "extract_cross_references",
    "fuse_rrf",
    "heading_path",
    "load_bundle",
    "mock_embed",
    "parse_ccd",
    "persist_bundle",
    "run_pipeline",
    "serialize_ccd",
]
