"""File formats: triplet text files, test pairs, the KGE1 binary store, exports.

Triplet file: one `head_kind:head_key<TAB>relation<TAB>tail_kind:tail_key` per
line, UTF-8, `#` comment lines allowed. Triplets are written in insertion
order, so reloading reproduces identical vocabularies (same local ids).

KGE1 store: magic `KGE1`; header of little-endian u32s (dim, one row count per
entity kind, relation count, flags); all matrices row-major little-endian
float32; then length-prefixed UTF-8 vocabulary tables (entity keys per kind,
then relation names).
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .graph import (
    ENTITY_KINDS,
    RELATION_KINDS,
    EntityKind,
    KnowledgeGraph,
    RelationKind,
)
from .ingest import InteractionRecord, ItemMetaRecord
from .model import EmbeddingStore

MAGIC = b"KGE1"

# external keys live in tab-separated single-line formats
_FORBIDDEN_IN_KEYS = ("\t", "\n", "\r")


class ParseError(ValueError):
    """A text input file line could not be parsed; message carries file:line."""


class FormatError(ValueError):
    """A binary store file is malformed or has the wrong magic/version."""


Vocabs = dict[EntityKind, list[str]]


def _check_key(key: str, path: Path) -> str:
    if any(c in key for c in _FORBIDDEN_IN_KEYS):
        raise ValueError(f"key {key!r} contains tab/newline; cannot serialize to {path}")
    return key


# -- vocabulary digest -----------------------------------------------------------


def vocab_digest(vocabs: Vocabs) -> str:
    """Order-sensitive digest of all vocabularies; guards graph/model pairing."""
    h = hashlib.sha256()
    for kind in ENTITY_KINDS:
        keys = vocabs.get(kind, [])
        h.update(kind.value.encode())
        h.update(struct.pack("<I", len(keys)))
        for key in keys:
            raw = key.encode("utf-8")
            h.update(struct.pack("<I", len(raw)))
            h.update(raw)
    for rel in RELATION_KINDS:
        h.update(rel.value.encode())
    return h.hexdigest()


def graph_vocabs(graph: KnowledgeGraph) -> Vocabs:
    return {kind: list(graph.vocabs[kind].keys) for kind in ENTITY_KINDS}


# -- triplet file -----------------------------------------------------------------


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# user-item knowledge graph triplets\n")
        fh.write(f"# vocab-digest: {vocab_digest(graph_vocabs(graph))}\n")
        for t in graph.triplets:
            head = _check_key(t.head.external_key, path)
            tail = _check_key(t.tail.external_key, path)
            fh.write(
                f"{t.head.kind.value}:{head}\t{t.relation.value}\t{t.tail.kind.value}:{tail}\n"
            )


def load_graph(path: str | Path) -> KnowledgeGraph:
    path = Path(path)
    graph = KnowledgeGraph()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                head_kind, head_key = _split_typed(parts[0])
                relation = RelationKind(parts[1])
                tail_kind, tail_key = _split_typed(parts[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            graph.add_triplet(head_kind, head_key, relation, tail_kind, tail_key)
    return graph


def _split_typed(field: str) -> tuple[EntityKind, str]:
    kind_name, sep, key = field.partition(":")
    if not sep or not key:
        raise ValueError(f"expected kind:key, got {field!r}")
    return EntityKind(kind_name), key


# -- test pairs -------------------------------------------------------------------


def save_test_pairs(truth: dict[str, set[str]], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# held-out (user, item) pairs\n")
        for user_key in sorted(truth):
            for item_key in sorted(truth[user_key]):
                fh.write(f"{_check_key(user_key, path)}\t{_check_key(item_key, path)}\n")


def load_test_pairs(path: str | Path) -> dict[str, set[str]]:
    path = Path(path)
    truth: dict[str, set[str]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected user<TAB>item")
            truth.setdefault(parts[0], set()).add(parts[1])
    return truth


# -- raw input files --------------------------------------------------------------


def load_interactions(path: str | Path) -> list[InteractionRecord]:
    """Parse `user<TAB>item<TAB>timestamp<TAB>review` rows (last two optional)."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2 or len(parts) > 4 or not parts[0] or not parts[1]:
                raise ParseError(
                    f"{path}:{lineno}: expected user<TAB>item[<TAB>timestamp[<TAB>review]]"
                )
            timestamp: int | None = None
            if len(parts) >= 3 and parts[2]:
                try:
                    timestamp = int(parts[2])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad timestamp {parts[2]!r}") from exc
            review = parts[3] if len(parts) == 4 and parts[3] else None
            records.append(InteractionRecord(parts[0], parts[1], review, timestamp))
    return records


def load_item_meta(path: str | Path) -> list[ItemMetaRecord]:
    """Parse `item<TAB>brand<TAB>cat1|...<TAB>ab1|...<TAB>av1|...` rows."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) > 5 or not parts[0]:
                raise ParseError(
                    f"{path}:{lineno}: expected item<TAB>brand<TAB>cats<TAB>also_bought<TAB>also_viewed"
                )
            parts += [""] * (5 - len(parts))
            records.append(
                ItemMetaRecord(
                    item_key=parts[0],
                    brand=parts[1] or None,
                    categories=_split_list(parts[2]),
                    also_bought=_split_list(parts[3]),
                    also_viewed=_split_list(parts[4]),
                )
            )
    return records


def _split_list(field: str) -> tuple[str, ...]:
    return tuple(v for v in field.split("|") if v) if field else ()


# -- KGE1 binary store -------------------------------------------------------------


def save_store(store: EmbeddingStore, vocabs: Vocabs, path: str | Path) -> None:
    path = Path(path)
    for kind in ENTITY_KINDS:
        if store.entity[kind].shape[0] != len(vocabs.get(kind, [])):
            raise ValueError(f"vocab/table row mismatch for kind {kind.value}")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        counts = [len(vocabs.get(kind, [])) for kind in ENTITY_KINDS]
        fh.write(struct.pack("<8I", store.dim, *counts, len(RELATION_KINDS), 0))
        for kind in ENTITY_KINDS:
            fh.write(np.ascontiguousarray(store.entity[kind], dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(store.relation, dtype="<f4").tobytes())
        for kind in ENTITY_KINDS:
            for key in vocabs.get(kind, []):
                raw = key.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
        for rel in RELATION_KINDS:
            raw = rel.value.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def load_store(path: str | Path) -> tuple[EmbeddingStore, Vocabs]:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != MAGIC:
            raise FormatError(f"{path}: not a KGE1 store")
        header = fh.read(8 * 4)
        if len(header) != 32:
            raise FormatError(f"{path}: truncated header")
        dim, *counts, n_rel, _flags = struct.unpack("<8I", header)
        if n_rel != len(RELATION_KINDS):
            raise FormatError(f"{path}: expected {len(RELATION_KINDS)} relations, got {n_rel}")
        entity: dict[EntityKind, np.ndarray] = {}
        for kind, count in zip(ENTITY_KINDS, counts):
            entity[kind] = _read_matrix(fh, count, dim, path)
        relation = _read_matrix(fh, n_rel, dim, path)
        vocabs: Vocabs = {}
        for kind, count in zip(ENTITY_KINDS, counts):
            vocabs[kind] = [_read_string(fh, path) for _ in range(count)]
        rel_names = [_read_string(fh, path) for _ in range(n_rel)]
        if rel_names != [r.value for r in RELATION_KINDS]:
            raise FormatError(f"{path}: relation table mismatch: {rel_names}")
    return EmbeddingStore(entity, relation, dim), vocabs


def _read_matrix(fh, rows: int, dim: int, path: Path) -> np.ndarray:
    raw = fh.read(rows * dim * 4)
    if len(raw) != rows * dim * 4:
        raise FormatError(f"{path}: truncated matrix data")
    return np.frombuffer(raw, dtype="<f4").reshape(rows, dim).astype(np.float32)


def _read_string(fh, path: Path) -> str:
    raw_len = fh.read(4)
    if len(raw_len) != 4:
        raise FormatError(f"{path}: truncated vocabulary table")
    (n,) = struct.unpack("<I", raw_len)
    raw = fh.read(n)
    if len(raw) != n:
        raise FormatError(f"{path}: truncated vocabulary entry")
    return raw.decode("utf-8")


# -- text export --------------------------------------------------------------------


def export_store_text(store: EmbeddingStore, vocabs: Vocabs, path: str | Path) -> None:
    """Lossless inspection dump: kind, external key, then the coordinates."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for kind in ENTITY_KINDS:
            table = store.entity[kind]
            for local_id, key in enumerate(vocabs.get(kind, [])):
                coords = " ".join(str(v) for v in table[local_id])
                fh.write(f"{kind.value}\t{_check_key(key, path)}\t{coords}\n")
        for idx, rel in enumerate(RELATION_KINDS):
            coords = " ".join(str(v) for v in store.relation[idx])
            fh.write(f"relation\t{rel.value}\t{coords}\n")


def import_store_text(path: str | Path) -> tuple[EmbeddingStore, Vocabs]:
    path = Path(path)
    rows: dict[str, list[tuple[str, np.ndarray]]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected kind<TAB>key<TAB>coords")
            vec = np.array([np.float32(tok) for tok in parts[2].split()], dtype=np.float32)
            rows.setdefault(parts[0], []).append((parts[1], vec))
    dims = {vec.shape[0] for group in rows.values() for _, vec in group}
    if len(dims) != 1:
        raise ParseError(f"{path}: inconsistent vector dimensions {sorted(dims)}")
    (dim,) = dims
    entity: dict[EntityKind, np.ndarray] = {}
    vocabs: Vocabs = {}
    for kind in ENTITY_KINDS:
        group = rows.get(kind.value, [])
        vocabs[kind] = [key for key, _ in group]
        entity[kind] = (
            np.stack([vec for _, vec in group])
            if group
            else np.zeros((0, dim), dtype=np.float32)
        )
    rel_group = {key: vec for key, vec in rows.get("relation", [])}
    if set(rel_group) != {r.value for r in RELATION_KINDS}:
        raise ParseError(f"{path}: missing or extra relation vectors")
    relation = np.stack([rel_group[r.value] for r in RELATION_KINDS])
    return EmbeddingStore(entity, relation, dim), vocabs


# -- loss history ---------------------------------------------------------------------


def save_loss_history(history: list[float], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for epoch, loss in enumerate(history, start=1):
            fh.write(f"{epoch},{loss:.8f}\n")
