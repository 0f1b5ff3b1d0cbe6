"""Deterministic on-disk persistence for index bundles.

Directory layout:

    manifest.json    bundle manifest plus sha256 digests of every data file
    semantic.bin     <u32 dim> then chunk_id-sorted records of
                     <u16 id-len><id utf-8><dim f64 little-endian>
    lexical.json     postings and BM25 statistics
    structural.json  per-chunk structure, inverted maps, cross-links
    metadata.json    field/value -> doc ids, doc id -> chunk ids
    chunks.json      chunk payloads (text, breadcrumb, modality, paths)

All JSON is written with sorted keys so identical bundles produce
byte-identical files; load verifies every digest before trusting a file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .chunking import Chunk, Modality
from .spaces import (
    FORMAT_VERSION,
    EmbedderSpec,
    Embedding,
    IndexBundle,
    IndexManifest,
    LexicalIndex,
    MetadataIndex,
    SemanticIndex,
    StructuralEntry,
    StructuralIndex,
)


class StoreError(Exception):
    """Base class for persistence failures."""


class IoFailure(StoreError):
    """The index directory or one of its files is missing or unreadable."""


class VersionMismatch(StoreError):
    """The on-disk format version is not supported."""


class CorruptIndex(StoreError):
    """A digest check or structural decode failed."""


_DATA_FILES = ("semantic.bin", "lexical.json", "structural.json", "metadata.json", "chunks.json")


def _dump_json(payload) -> bytes:
    return (json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=1) + "\n").encode("utf-8")


def _semantic_bytes(index: SemanticIndex) -> bytes:
    parts = [struct.pack("<I", index.spec.dim)]
    for chunk_id in sorted(index.entries):
        raw_id = chunk_id.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_id)))
        parts.append(raw_id)
        parts.append(index.entries[chunk_id].values.astype("<f8").tobytes())
    return b"".join(parts)


def _lexical_payload(index: LexicalIndex) -> dict:
    return {
        "postings": {term: [[cid, tf] for cid, tf in pairs] for term, pairs in index.postings.items()},
        "doc_lengths": index.doc_lengths,
        "avg_length": index.avg_length,
        "total_chunks": index.total_chunks,
    }


def _structural_payload(index: StructuralIndex) -> dict:
    return {
        "entries": {
            cid: {
                "breadcrumb_terms": list(e.breadcrumb_terms),
                "node_kinds": list(e.node_kinds),
                "modality": e.modality,
                "depth": e.depth,
            }
            for cid, e in index.entries.items()
        },
        "term_to_chunks": {t: sorted(cids) for t, cids in index.term_to_chunks.items()},
        "modality_to_chunks": {m: sorted(cids) for m, cids in index.modality_to_chunks.items()},
        "cross_links": {cid: list(targets) for cid, targets in index.cross_links.items()},
    }


def _metadata_payload(index: MetadataIndex) -> dict:
    return {
        "field_values": {
            f: {v: sorted(ds) for v, ds in values.items()}
            for f, values in index.field_values.items()
        },
        "doc_chunks": {d: sorted(cs) for d, cs in index.doc_chunks.items()},
    }


def _chunks_payload(chunks: dict[str, Chunk]) -> dict:
    return {
        cid: {
            "doc_id": c.doc_id,
            "node_path": c.node_path,
            "text": c.text,
            "breadcrumb": c.breadcrumb,
            "modality": c.modality.value,
            "token_estimate": c.token_estimate,
        }
        for cid, c in chunks.items()
    }


def persist_bundle(bundle: IndexBundle, directory: str | Path) -> str:
    """Write the bundle; returns the sha256 digest of manifest.json."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        files = {
            "semantic.bin": _semantic_bytes(bundle.semantic),
            "lexical.json": _dump_json(_lexical_payload(bundle.lexical)),
            "structural.json": _dump_json(_structural_payload(bundle.structural)),
            "metadata.json": _dump_json(_metadata_payload(bundle.metadata)),
            "chunks.json": _dump_json(_chunks_payload(bundle.chunks)),
        }
        digests = {name: hashlib.sha256(data).hexdigest() for name, data in files.items()}
        manifest_bytes = _dump_json(
            {
                "format_version": bundle.manifest.format_version,
                "corpus_hash": bundle.manifest.corpus_hash,
                "chunk_count": bundle.manifest.chunk_count,
                "embedder": {
                    "kind": bundle.manifest.embedder.kind,
                    "dim": bundle.manifest.embedder.dim,
                    "model_name": bundle.manifest.embedder.model_name,
                },
                "created_at": bundle.manifest.created_at,
                "files": digests,
            }
        )
        for name, data in files.items():
            (directory / name).write_bytes(data)
        (directory / "manifest.json").write_bytes(manifest_bytes)
    except OSError as exc:
        raise IoFailure(f"cannot write index to {directory}: {exc}") from exc
    return hashlib.sha256(manifest_bytes).hexdigest()


def _read_file(directory: Path, name: str) -> bytes:
    path = directory / name
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _parse_semantic(data: bytes, spec: EmbedderSpec) -> SemanticIndex:
    try:
        (dim,) = struct.unpack_from("<I", data, 0)
        offset = 4
        entries: dict[str, Embedding] = {}
        vec_bytes = dim * 8
        while offset < len(data):
            (id_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            chunk_id = data[offset : offset + id_len].decode("utf-8")
            offset += id_len
            values = np.frombuffer(data[offset : offset + vec_bytes], dtype="<f8")
            if values.shape != (dim,):
                raise CorruptIndex("semantic.bin: truncated record")
            offset += vec_bytes
            entries[chunk_id] = Embedding(values=values.copy(), dim=dim)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise CorruptIndex(f"semantic.bin: {exc}") from exc
    if dim != spec.dim:
        raise CorruptIndex(f"semantic.bin dim {dim} does not match manifest dim {spec.dim}")
    return SemanticIndex(entries=entries, spec=spec)


def load_bundle(directory: str | Path) -> IndexBundle:
    """Read a bundle back; raises IoFailure, VersionMismatch or CorruptIndex."""
    directory = Path(directory)
    if not directory.is_dir():
        raise IoFailure(f"{directory} is not a directory")
    manifest_bytes = _read_file(directory, "manifest.json")
    try:
        manifest_obj = json.loads(manifest_bytes)
    except json.JSONDecodeError as exc:
        raise CorruptIndex(f"manifest.json: {exc}") from exc
    version = manifest_obj.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {version!r} is not supported (want {FORMAT_VERSION})")

    digests = manifest_obj.get("files")
    if not isinstance(digests, dict) or set(digests) != set(_DATA_FILES):
        raise CorruptIndex("manifest.json: bad or missing file digest table")
    blobs: dict[str, bytes] = {}
    for name in _DATA_FILES:
        data = _read_file(directory, name)
        actual = hashlib.sha256(data).hexdigest()
        if actual != digests[name]:
            raise CorruptIndex(f"{name}: digest mismatch")
        blobs[name] = data

    try:
        embedder_obj = manifest_obj["embedder"]
        spec = EmbedderSpec(
            kind=embedder_obj["kind"],
            dim=embedder_obj["dim"],
            model_name=embedder_obj.get("model_name"),
        )
        manifest = IndexManifest(
            corpus_hash=manifest_obj["corpus_hash"],
            chunk_count=manifest_obj["chunk_count"],
            embedder=spec,
            created_at=manifest_obj["created_at"],
            format_version=version,
        )

        lex = json.loads(blobs["lexical.json"])
        lexical = LexicalIndex(
            postings={t: [(cid, tf) for cid, tf in pairs] for t, pairs in lex["postings"].items()},
            doc_lengths=lex["doc_lengths"],
            avg_length=lex["avg_length"],
            total_chunks=lex["total_chunks"],
        )

        st = json.loads(blobs["structural.json"])
        structural = StructuralIndex(
            entries={
                cid: StructuralEntry(
                    breadcrumb_terms=tuple(e["breadcrumb_terms"]),
                    node_kinds=tuple(e["node_kinds"]),
                    modality=e["modality"],
                    depth=e["depth"],
                )
                for cid, e in st["entries"].items()
            },
            term_to_chunks={t: set(cids) for t, cids in st["term_to_chunks"].items()},
            modality_to_chunks={m: set(cids) for m, cids in st["modality_to_chunks"].items()},
            cross_links={cid: tuple(ts) for cid, ts in st["cross_links"].items()},
        )

        md = json.loads(blobs["metadata.json"])
        metadata = MetadataIndex(
            field_values={
                f: {v: set(ds) for v, ds in values.items()}
                for f, values in md["field_values"].items()
            },
            doc_chunks={d: set(cs) for d, cs in md["doc_chunks"].items()},
        )

        ch = json.loads(blobs["chunks.json"])
        chunks = {
            cid: Chunk(
                chunk_id=cid,
                doc_id=c["doc_id"],
                node_path=list(c["node_path"]),
                text=c["text"],
                breadcrumb=list(c["breadcrumb"]),
                modality=Modality(c["modality"]),
                token_estimate=c["token_estimate"],
            )
            for cid, c in ch.items()
        }
        semantic = _parse_semantic(blobs["semantic.bin"], spec)
    except CorruptIndex:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise CorruptIndex(f"cannot decode index files: {exc}") from exc

    return IndexBundle(
        semantic=semantic,
        lexical=lexical,
        structural=structural,
        metadata=metadata,
        chunks=chunks,
        manifest=manifest,
    )
