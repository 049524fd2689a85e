"""Top-N recommendation: rank items by ascending distance under the buy relation."""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .graph import EntityKind, EntityRef, KnowledgeGraph, RelationKind
from .model import EmbeddingStore


@dataclass
class RankedList:
    """Items for one user, ascending by distance, training purchases excluded."""

    user: EntityRef
    items: list[tuple[EntityRef, float]]
    cutoff: int


def recommend_top_n(
    store: EmbeddingStore, graph: KnowledgeGraph, user: EntityRef, n: int
) -> RankedList:
    """Score every candidate item by d(user + buy, item) and keep the n nearest.

    Candidates are all items except the user's training purchases; exact ties
    are broken by ascending item local_id so output is reproducible.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if user.kind is not EntityKind.USER:
        raise KeyError(f"not a user: {user}")
    graph.entity_ref(EntityKind.USER, user.local_id)  # raises on unknown user

    query = store.entity_vec(EntityKind.USER, user.local_id).astype(np.float64)
    query = query + store.relation_vec(RelationKind.BUY).astype(np.float64)
    items = store.entity[EntityKind.ITEM].astype(np.float64)
    dists = np.sqrt(((items - query) ** 2).sum(axis=1))

    bought = graph.tails_of(user, RelationKind.BUY)
    for ref in bought:
        dists[ref.local_id] = np.inf

    # Stable sort on ascending distance == tie-break by ascending local_id.
    order = np.argsort(dists, kind="stable")
    keep = min(n, items.shape[0] - len(bought))
    ranked = [
        (graph.entity_ref(EntityKind.ITEM, int(idx)), float(dists[idx]))
        for idx in order[:keep]
    ]
    return RankedList(user, ranked, n)


def recommend_all(
    store: EmbeddingStore,
    graph: KnowledgeGraph,
    users: list[EntityRef],
    n: int,
    threads: int = 1,
) -> list[RankedList]:
    """Per-user top-N lists, in the order the users were given."""
    if threads <= 1:
        return [recommend_top_n(store, graph, user, n) for user in users]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda u: recommend_top_n(store, graph, u, n), users))


def format_recommendations(lists: list[RankedList]) -> str:
    """One line per recommendation: user, 1-based rank, item, distance."""
    lines = []
    for ranked in lists:
        for rank, (item, dist) in enumerate(ranked.items, start=1):
            lines.append(
                f"{ranked.user.external_key}\t{rank}\t{item.external_key}\t{dist:.6f}"
            )
    return "\n".join(lines) + ("\n" if lines else "")
