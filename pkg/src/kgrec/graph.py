"""Typed user-item knowledge graph: entities, relations, triplets, vocabularies.

The graph is built once (single writer) and is immutable afterwards; readers
(training, ranking, evaluation) may share it freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class EntityKind(str, Enum):
    USER = "user"
    ITEM = "item"
    WORD = "word"
    BRAND = "brand"
    CATEGORY = "category"


class RelationKind(str, Enum):
    BUY = "buy"
    BELONG_TO_CATEGORY = "belong_to_category"
    BELONG_TO_BRAND = "belong_to_brand"
    MENTION_WORD = "mention_word"
    ALSO_BOUGHT = "also_bought"
    ALSO_VIEW = "also_view"


# Fixed head-kinds / tail-kind signature for every relation. The head side of
# mention_word may be either a user or an item; everything else is single-kind.
RELATION_SIGNATURES: dict[RelationKind, tuple[frozenset[EntityKind], EntityKind]] = {
    RelationKind.BUY: (frozenset({EntityKind.USER}), EntityKind.ITEM),
    RelationKind.BELONG_TO_CATEGORY: (frozenset({EntityKind.ITEM}), EntityKind.CATEGORY),
    RelationKind.BELONG_TO_BRAND: (frozenset({EntityKind.ITEM}), EntityKind.BRAND),
    RelationKind.MENTION_WORD: (frozenset({EntityKind.USER, EntityKind.ITEM}), EntityKind.WORD),
    RelationKind.ALSO_BOUGHT: (frozenset({EntityKind.ITEM}), EntityKind.ITEM),
    RelationKind.ALSO_VIEW: (frozenset({EntityKind.ITEM}), EntityKind.ITEM),
}

ENTITY_KINDS: tuple[EntityKind, ...] = tuple(EntityKind)
RELATION_KINDS: tuple[RelationKind, ...] = tuple(RelationKind)
RELATION_INDEX: dict[RelationKind, int] = {r: i for i, r in enumerate(RELATION_KINDS)}


class SignatureError(ValueError):
    """A triplet violates its relation's kind signature (or is a self-loop)."""


@dataclass(frozen=True, slots=True)
class EntityRef:
    """Typed identity of a graph node: (kind, local_id) <-> external_key."""

    kind: EntityKind
    local_id: int
    external_key: str


@dataclass(frozen=True, slots=True)
class Triplet:
    """One directed (head, relation, tail) fact.

    Construction does not validate the relation signature: corrupted triplets
    produced by negative sampling may deliberately break it. Signature and
    self-loop constraints are enforced at graph insertion time.
    """

    head: EntityRef
    relation: RelationKind
    tail: EntityRef


class Vocabulary:
    """Per-kind bijection between external keys and dense local ids."""

    __slots__ = ("keys", "index")

    def __init__(self) -> None:
        self.keys: list[str] = []
        self.index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key: str) -> bool:
        return key in self.index

    def intern(self, key: str) -> int:
        """Return the local id of ``key``, assigning the next one on first sight."""
        local_id = self.index.get(key)
        if local_id is None:
            local_id = len(self.keys)
            self.index[key] = local_id
            self.keys.append(key)
        return local_id

    def id_of(self, key: str) -> int:
        return self.index[key]

    def key_of(self, local_id: int) -> str:
        return self.keys[local_id]


@dataclass
class GraphStats:
    entity_counts: dict[EntityKind, int]
    relation_counts: dict[RelationKind, int]
    buy_density: float


def buy_density(n_buy: int, n_users: int, n_items: int) -> float:
    """Fraction of the user x item grid covered by buy triplets (0 if empty)."""
    if n_users == 0 or n_items == 0:
        return 0.0
    return n_buy / (n_users * n_items)


class KnowledgeGraph:
    """Deduplicated triplet store with per-kind vocabularies and indexes."""

    def __init__(self) -> None:
        self.vocabs: dict[EntityKind, Vocabulary] = {k: Vocabulary() for k in ENTITY_KINDS}
        self.triplets: list[Triplet] = []  # insertion order, drives serialization
        self._triplet_set: set[Triplet] = set()
        self.by_relation: dict[RelationKind, list[Triplet]] = {r: [] for r in RELATION_KINDS}
        self.by_head: dict[tuple[EntityRef, RelationKind], set[EntityRef]] = {}

    def __len__(self) -> int:
        return len(self.triplets)

    # -- vocabulary access -------------------------------------------------

    def num_entities(self, kind: EntityKind) -> int:
        return len(self.vocabs[kind])

    def entity_ref(self, kind: EntityKind, local_id: int) -> EntityRef:
        vocab = self.vocabs[kind]
        if not 0 <= local_id < len(vocab):
            raise KeyError(f"no {kind.value} with local id {local_id}")
        return EntityRef(kind, local_id, vocab.key_of(local_id))

    def lookup(self, kind: EntityKind, key: str) -> EntityRef:
        vocab = self.vocabs[kind]
        if key not in vocab:
            raise KeyError(f"unknown {kind.value} {key!r}")
        return EntityRef(kind, vocab.id_of(key), key)

    def has_entity(self, kind: EntityKind, key: str) -> bool:
        return key in self.vocabs[kind]

    # -- construction ------------------------------------------------------

    def add_triplet(
        self,
        head_kind: EntityKind,
        head_key: str,
        relation: RelationKind,
        tail_kind: EntityKind,
        tail_key: str,
    ) -> bool:
        """Add one fact; returns True iff it was newly inserted.

        Entities are interned only when the triplet is structurally valid, so a
        rejected call leaves the graph (including vocabularies) unchanged.
        """
        if not head_key or not tail_key:
            raise ValueError("entity keys must be non-empty")
        head_kinds, want_tail = RELATION_SIGNATURES[relation]
        if head_kind not in head_kinds or tail_kind is not want_tail:
            raise SignatureError(
                f"{relation.value} requires "
                f"({'|'.join(sorted(k.value for k in head_kinds))} -> {want_tail.value}), "
                f"got ({head_kind.value} -> {tail_kind.value})"
            )
        if head_kind is tail_kind and head_key == tail_key:
            raise SignatureError(f"self-loop {head_kind.value} {head_key!r} -> itself")

        head = EntityRef(head_kind, self.vocabs[head_kind].intern(head_key), head_key)
        tail = EntityRef(tail_kind, self.vocabs[tail_kind].intern(tail_key), tail_key)
        triplet = Triplet(head, relation, tail)
        if triplet in self._triplet_set:
            return False
        self._triplet_set.add(triplet)
        self.triplets.append(triplet)
        self.by_relation[relation].append(triplet)
        self.by_head.setdefault((head, relation), set()).add(tail)
        return True

    # -- queries -----------------------------------------------------------

    def contains(self, triplet: Triplet) -> bool:
        return triplet in self._triplet_set

    def tails_of(self, head: EntityRef, relation: RelationKind) -> set[EntityRef]:
        """All tails t with (head, relation, t) in the graph; empty if none."""
        return set(self.by_head.get((head, relation), ()))

    def stats(self) -> GraphStats:
        return GraphStats(
            entity_counts={k: len(v) for k, v in self.vocabs.items()},
            relation_counts={r: len(ts) for r, ts in self.by_relation.items()},
            buy_density=buy_density(
                len(self.by_relation[RelationKind.BUY]),
                len(self.vocabs[EntityKind.USER]),
                len(self.vocabs[EntityKind.ITEM]),
            ),
        )
