"""Embedding tables, margin-based hinge loss, negative sampling, SGD training.

Entities and relations live in one D-dimensional space; a relation is a vector
displacement, so a true (head, relation, tail) fact should satisfy
head + relation ~ tail. Training pushes the Euclidean distance of observed
triplets below that of corrupted ones by a margin.

Tables are stored as float32 (matching the on-disk format); all loss, gradient
and update arithmetic is carried out in float64 and rounded once on write-back.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    ENTITY_KINDS,
    RELATION_INDEX,
    RELATION_KINDS,
    EntityKind,
    EntityRef,
    KnowledgeGraph,
    RelationKind,
    Triplet,
)

# Bounded resampling budget for filtered negative draws; past it the last draw
# is accepted unfiltered and counted on the batch.
FILTER_RETRY_BUDGET = 64


class SamplingError(RuntimeError):
    """Negative sampling cannot proceed (candidate pool too small)."""


class GradientError(RuntimeError):
    """A non-finite gradient was about to be applied; the step was aborted."""


@dataclass(frozen=True, slots=True, kw_only=True)
class Hyperparams:
    epochs: int
    dim: int = 300
    learning_rate: float = 0.01
    margin: float = 1.0
    negatives: int = 5
    seed: int = 0
    normalize_entities: bool = True
    type_constrained_sampling: bool = True
    filtered_sampling: bool = True

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class EmbeddingStore:
    """Dense float32 vectors for every entity (per kind) and every relation."""

    entity: dict[EntityKind, np.ndarray]  # (n_kind, dim) float32
    relation: np.ndarray  # (len(RELATION_KINDS), dim) float32
    dim: int

    def entity_vec(self, kind: EntityKind, local_id: int) -> np.ndarray:
        table = self.entity[kind]
        if not 0 <= local_id < table.shape[0]:
            raise KeyError(f"no {kind.value} embedding with local id {local_id}")
        return table[local_id]

    def relation_vec(self, relation: RelationKind) -> np.ndarray:
        return self.relation[RELATION_INDEX[relation]]

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(
            {k: v.copy() for k, v in self.entity.items()}, self.relation.copy(), self.dim
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.entity.values()) and bool(
            np.isfinite(self.relation).all()
        )


@dataclass
class NegativeBatch:
    """k tail-corrupted and k head-corrupted copies of one positive triplet."""

    tail_corruptions: list[Triplet]
    head_corruptions: list[Triplet]
    unfiltered: int = 0  # draws accepted after exhausting the retry budget


@dataclass
class SparseGrads:
    """Float64 gradients for exactly the vectors a training step touched."""

    entity: dict[tuple[EntityKind, int], np.ndarray] = field(default_factory=dict)
    relation: dict[RelationKind, np.ndarray] = field(default_factory=dict)


def _open_unit(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform float32 draws strictly inside (0, 1); exact zeros are redrawn."""
    arr = rng.random(shape, dtype=np.float32)
    zero = arr == 0.0
    while zero.any():
        arr[zero] = rng.random(int(zero.sum()), dtype=np.float32)
        zero = arr == 0.0
    return arr


def _renormalize_rows(table: np.ndarray) -> None:
    if table.size == 0:
        return
    norms = np.linalg.norm(table.astype(np.float64), axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    table[:] = (table.astype(np.float64) / norms).astype(np.float32)


def init_embeddings(graph: KnowledgeGraph, hp: Hyperparams) -> EmbeddingStore:
    """Draw every coordinate i.i.d. uniform from (0, 1), seeded by hp.seed."""
    if all(graph.num_entities(kind) == 0 for kind in ENTITY_KINDS):
        raise ValueError("cannot initialize embeddings for an empty graph")
    rng = np.random.default_rng(hp.seed)
    entity = {
        kind: _open_unit(rng, (graph.num_entities(kind), hp.dim)) for kind in ENTITY_KINDS
    }
    relation = _open_unit(rng, (len(RELATION_KINDS), hp.dim))
    if hp.normalize_entities:
        for table in entity.values():
            _renormalize_rows(table)
    return EmbeddingStore(entity, relation, hp.dim)


def translate(e_head: np.ndarray, e_rel: np.ndarray) -> np.ndarray:
    """Apply the relation displacement to a head embedding (coordinate sum)."""
    e_head = np.asarray(e_head)
    e_rel = np.asarray(e_rel)
    if e_head.shape != e_rel.shape:
        raise ValueError(f"dimension mismatch: {e_head.shape} vs {e_rel.shape}")
    return e_rel + e_head


def distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two embeddings."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def triplet_distance(store: EmbeddingStore, t: Triplet) -> float:
    """d(head + relation, tail) under the store's current embeddings."""
    head = store.entity_vec(t.head.kind, t.head.local_id)
    rel = store.relation_vec(t.relation)
    tail = store.entity_vec(t.tail.kind, t.tail.local_id)
    return distance(translate(head, rel), tail)


# -- negative sampling -------------------------------------------------------


def _kind_offsets(graph: KnowledgeGraph) -> tuple[list[tuple[EntityKind, int]], int]:
    offsets = []
    total = 0
    for kind in ENTITY_KINDS:
        offsets.append((kind, total))
        total += graph.num_entities(kind)
    return offsets, total


def _draw_entity(
    graph: KnowledgeGraph,
    rng: np.random.Generator,
    kind: EntityKind | None,
    offsets: tuple[list[tuple[EntityKind, int]], int],
) -> EntityRef:
    if kind is not None:
        return graph.entity_ref(kind, int(rng.integers(graph.num_entities(kind))))
    table, total = offsets
    flat = int(rng.integers(total))
    for k, start in reversed(table):
        if flat >= start:
            return graph.entity_ref(k, flat - start)
    raise AssertionError("unreachable")


def sample_negatives(
    graph: KnowledgeGraph,
    t: Triplet,
    hp: Hyperparams,
    rng: np.random.Generator,
) -> NegativeBatch:
    """Draw k tail-replacement and k head-replacement corruptions of ``t``.

    Candidates come uniformly from the replaced slot's kind when
    type_constrained_sampling is set, otherwise from all entities. Filtered
    mode resamples draws that reproduce an observed triplet or the original
    entity, giving up (and counting) after FILTER_RETRY_BUDGET attempts.
    """
    offsets = _kind_offsets(graph)
    tail_kind = t.tail.kind if hp.type_constrained_sampling else None
    head_kind = t.head.kind if hp.type_constrained_sampling else None
    for kind in (tail_kind, head_kind):
        pool = graph.num_entities(kind) if kind is not None else offsets[1]
        if pool < 2:
            name = kind.value if kind is not None else "entity"
            raise SamplingError(f"{name} pool has {pool} candidates; need at least 2")

    batch = NegativeBatch([], [])
    for _ in range(hp.negatives):
        corruption, overflowed = _corrupt(graph, t, hp, rng, offsets, replace_tail=True)
        batch.tail_corruptions.append(corruption)
        batch.unfiltered += overflowed
    for _ in range(hp.negatives):
        corruption, overflowed = _corrupt(graph, t, hp, rng, offsets, replace_tail=False)
        batch.head_corruptions.append(corruption)
        batch.unfiltered += overflowed
    return batch


def _corrupt(
    graph: KnowledgeGraph,
    t: Triplet,
    hp: Hyperparams,
    rng: np.random.Generator,
    offsets: tuple[list[tuple[EntityKind, int]], int],
    replace_tail: bool,
) -> tuple[Triplet, bool]:
    original = t.tail if replace_tail else t.head
    kind = original.kind if hp.type_constrained_sampling else None
    draw = _draw_entity(graph, rng, kind, offsets)
    overflowed = False
    if hp.filtered_sampling:
        accepted = False
        for _ in range(FILTER_RETRY_BUDGET):
            candidate = (
                Triplet(t.head, t.relation, draw)
                if replace_tail
                else Triplet(draw, t.relation, t.tail)
            )
            if draw != original and not graph.contains(candidate):
                accepted = True
                break
            draw = _draw_entity(graph, rng, kind, offsets)
        overflowed = not accepted
    corruption = (
        Triplet(t.head, t.relation, draw)
        if replace_tail
        else Triplet(draw, t.relation, t.tail)
    )
    return corruption, overflowed


# -- loss and gradients -------------------------------------------------------


def _vec64(store: EmbeddingStore, ref: EntityRef) -> np.ndarray:
    return store.entity_vec(ref.kind, ref.local_id).astype(np.float64)


def _unit(diff: np.ndarray, norm: float) -> np.ndarray:
    # Gradient of ||v|| at v = 0 is taken as the zero vector.
    if norm == 0.0:
        return np.zeros_like(diff)
    return diff / norm


def triplet_loss_and_grads(
    store: EmbeddingStore,
    t: Triplet,
    neg: NegativeBatch,
    hp: Hyperparams,
) -> tuple[float, SparseGrads]:
    """Hinge loss of one positive against its corruption batch, with exact
    subgradients for every touched vector.

    Each corruption contributes max(0, margin + d_pos - d_neg); the subgradient
    of the hinge at exactly zero is taken as zero.
    """
    grads = SparseGrads()

    def add_entity(ref: EntityRef, vec: np.ndarray) -> None:
        key = (ref.kind, ref.local_id)
        if key in grads.entity:
            grads.entity[key] += vec
        else:
            grads.entity[key] = vec.copy()

    def add_relation(rel: RelationKind, vec: np.ndarray) -> None:
        if rel in grads.relation:
            grads.relation[rel] += vec
        else:
            grads.relation[rel] = vec.copy()

    head = _vec64(store, t.head)
    tail = _vec64(store, t.tail)
    rel = store.relation_vec(t.relation).astype(np.float64)
    pos_diff = head + rel - tail
    d_pos = float(np.linalg.norm(pos_diff))
    u_pos = _unit(pos_diff, d_pos)

    loss = 0.0
    for corr in neg.tail_corruptions:
        corr_tail = _vec64(store, corr.tail)
        diff = _vec64(store, corr.head) + rel - corr_tail
        d_neg = float(np.linalg.norm(diff))
        arg = hp.margin + d_pos - d_neg
        if arg > 0.0:
            loss += arg
            u_neg = _unit(diff, d_neg)
            add_entity(t.head, u_pos)
            add_entity(t.tail, -u_pos)
            add_entity(corr.head, -u_neg)
            add_entity(corr.tail, u_neg)
            add_relation(t.relation, u_pos - u_neg)
    for corr in neg.head_corruptions:
        corr_head = _vec64(store, corr.head)
        diff = corr_head + rel - _vec64(store, corr.tail)
        d_neg = float(np.linalg.norm(diff))
        arg = hp.margin + d_pos - d_neg
        if arg > 0.0:
            loss += arg
            u_neg = _unit(diff, d_neg)
            add_entity(t.head, u_pos)
            add_entity(t.tail, -u_pos)
            add_entity(corr.head, -u_neg)
            add_entity(corr.tail, u_neg)
            add_relation(t.relation, u_pos - u_neg)
    return loss, grads


def sgd_step(store: EmbeddingStore, grads: SparseGrads, hp: Hyperparams) -> EmbeddingStore:
    """Apply v <- v - lr * g to every touched vector; others stay bit-identical."""
    for vec in grads.entity.values():
        if not np.isfinite(vec).all():
            raise GradientError("non-finite entity gradient; step aborted")
    for vec in grads.relation.values():
        if not np.isfinite(vec).all():
            raise GradientError("non-finite relation gradient; step aborted")

    lr = hp.learning_rate
    for (kind, local_id), g in grads.entity.items():
        row = store.entity_vec(kind, local_id)
        row[:] = (row.astype(np.float64) - lr * g).astype(np.float32)
    for relation, g in grads.relation.items():
        row = store.relation_vec(relation)
        row[:] = (row.astype(np.float64) - lr * g).astype(np.float32)
    return store


# -- training loop -------------------------------------------------------------


def _train_slice(
    graph: KnowledgeGraph,
    store: EmbeddingStore,
    hp: Hyperparams,
    triplets: list[Triplet],
    rng: np.random.Generator,
) -> float:
    total = 0.0
    for t in triplets:
        neg = sample_negatives(graph, t, hp, rng)
        loss, grads = triplet_loss_and_grads(store, t, neg, hp)
        sgd_step(store, grads, hp)
        total += loss
    return total


def train_epoch(
    graph: KnowledgeGraph,
    store: EmbeddingStore,
    hp: Hyperparams,
    rng: np.random.Generator,
    threads: int = 1,
) -> tuple[EmbeddingStore, float]:
    """One pass over every triplet in seeded-shuffled order; returns mean loss.

    With threads > 1 the pass is split across workers updating the shared
    store lock-free (racing row writes are tolerated); that mode trades
    bit-determinism for speed and is never the reference path.
    """
    if len(graph) == 0:
        raise ValueError("cannot train on an empty graph")
    order = rng.permutation(len(graph))
    shuffled = [graph.triplets[i] for i in order]

    if threads <= 1:
        total = _train_slice(graph, store, hp, shuffled, rng)
    else:
        chunks = [list(c) for c in np.array_split(np.array(shuffled, dtype=object), threads)]
        worker_rngs = rng.spawn(threads)
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_train_slice, graph, store, hp, list(chunk), wrng)
                for chunk, wrng in zip(chunks, worker_rngs)
            ]
            total = sum(f.result() for f in futures)

    if hp.normalize_entities:
        for table in store.entity.values():
            _renormalize_rows(table)
    return store, total / len(graph)


def train(
    graph: KnowledgeGraph, hp: Hyperparams, threads: int = 1
) -> tuple[EmbeddingStore, list[float]]:
    """Initialize embeddings and run hp.epochs training passes.

    Returns the final store and the per-epoch mean losses. Single-threaded runs
    are bit-deterministic for a fixed (graph, hp).
    """
    if not graph.by_relation[RelationKind.BUY]:
        raise ValueError("graph has no buy triplets; nothing to recommend from")
    store = init_embeddings(graph, hp)
    rng = np.random.default_rng([hp.seed, 1])
    history: list[float] = []
    for _ in range(hp.epochs):
        store, mean_loss = train_epoch(graph, store, hp, rng, threads=threads)
        history.append(mean_loss)
    return store, history
