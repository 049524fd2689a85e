"""Raw interaction/metadata records -> train/test split -> knowledge graph."""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import EntityKind, KnowledgeGraph, RelationKind

# Small conventional English stopword list; review processing is config-driven
# and none of these choices are baked in.
DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from has have i if in into is it its me
    my no not of on or so than that the their them they this to was we were
    will with you your""".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True, slots=True)
class InteractionRecord:
    """One purchase row: user bought item, optionally with review and time."""

    user_key: str
    item_key: str
    review_text: str | None = None
    timestamp: int | None = None

    def __post_init__(self) -> None:
        if not self.user_key or not self.item_key:
            raise ValueError("user_key and item_key must be non-empty")


@dataclass(frozen=True, slots=True)
class ItemMetaRecord:
    """Catalog row for one item: brand, categories, co-purchase/co-view lists."""

    item_key: str
    brand: str | None = None
    categories: tuple[str, ...] = ()
    also_bought: tuple[str, ...] = ()
    also_viewed: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.item_key:
            raise ValueError("item_key must be non-empty")
        object.__setattr__(self, "categories", _dedup(self.categories))
        object.__setattr__(self, "also_bought", _dedup(self.also_bought))
        object.__setattr__(self, "also_viewed", _dedup(self.also_viewed))


def _dedup(values: tuple[str, ...]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(v for v in values if v))


@dataclass(frozen=True, slots=True)
class SplitSpec:
    train_fraction: float = 0.70
    seed: int = 0
    min_train_items: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.min_train_items < 1:
            raise ValueError("min_train_items must be positive")


@dataclass(frozen=True, slots=True)
class TokenizerConfig:
    min_token_length: int = 2
    min_corpus_frequency: int = 5
    max_vocab: int = 50_000
    stopwords: frozenset[str] = DEFAULT_STOPWORDS

    def __post_init__(self) -> None:
        if self.min_token_length < 1 or self.min_corpus_frequency < 1 or self.max_vocab < 1:
            raise ValueError("tokenizer thresholds must be positive")


@dataclass
class ReviewTokens:
    """Surviving review vocabulary and which users/items mention each word."""

    vocabulary: tuple[str, ...]  # descending corpus frequency, ties lexicographic
    user_words: dict[str, set[str]]
    item_words: dict[str, set[str]]


@dataclass
class IngestCounters:
    """Audit counters for metadata rows/edges dropped during graph build."""

    unknown_meta_items: int = 0
    unknown_also_bought: int = 0
    unknown_also_viewed: int = 0
    self_referencing_edges: int = 0


def _user_rng(seed: int, user_key: str) -> np.random.Generator:
    # Stable per-user stream: independent of record order and of other users.
    digest = hashlib.blake2b(user_key.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "little")])


def split_interactions(
    records: list[InteractionRecord], spec: SplitSpec
) -> tuple[list[InteractionRecord], list[InteractionRecord]]:
    """Per-user train/test split over each user's distinct items.

    For every user, ceil(train_fraction * n_items) of their distinct items go
    to train, taken in ascending timestamp order when all of the user's items
    carry timestamps and in seeded-shuffle order otherwise. Users with fewer
    than min_train_items items are kept entirely in train. Duplicate records of
    the same (user, item) pair always land on the same side.
    """
    if not records:
        raise ValueError("no interaction records to split")

    # Distinct items per user; earliest timestamp per item.
    per_user: dict[str, dict[str, int | None]] = {}
    for rec in records:
        items = per_user.setdefault(rec.user_key, {})
        if rec.item_key not in items:
            items[rec.item_key] = rec.timestamp
        else:
            prev = items[rec.item_key]
            if rec.timestamp is not None and (prev is None or rec.timestamp < prev):
                items[rec.item_key] = rec.timestamp

    train_frac = Fraction(spec.train_fraction)
    train_side: set[tuple[str, str]] = set()
    for user_key, items in per_user.items():
        n = len(items)
        if n < spec.min_train_items:
            ordered = sorted(items)
            n_train = n
        elif all(ts is not None for ts in items.values()):
            ordered = sorted(items, key=lambda k: (items[k], k))
            n_train = math.ceil(train_frac * n)
        else:
            ordered = sorted(items)
            _user_rng(spec.seed, user_key).shuffle(ordered)
            n_train = math.ceil(train_frac * n)
        train_side.update((user_key, item) for item in ordered[:n_train])

    train: list[InteractionRecord] = []
    test: list[InteractionRecord] = []
    for rec in records:
        if (rec.user_key, rec.item_key) in train_side:
            train.append(rec)
        else:
            test.append(rec)
    return train, test


def tokenize_reviews(
    records: list[InteractionRecord], config: TokenizerConfig
) -> ReviewTokens:
    """Extract the review vocabulary and per-user / per-item word sets.

    Words are lowercased maximal alphanumeric runs, at least min_token_length
    long, not stopwords, with corpus frequency >= min_corpus_frequency, capped
    at max_vocab by descending frequency (ties broken lexicographically).
    """
    freq: dict[str, int] = {}
    for rec in records:
        if not rec.review_text:
            continue
        for token in _TOKEN_RE.findall(rec.review_text.lower()):
            if len(token) >= config.min_token_length and token not in config.stopwords:
                freq[token] = freq.get(token, 0) + 1

    kept = sorted(
        (w for w, c in freq.items() if c >= config.min_corpus_frequency),
        key=lambda w: (-freq[w], w),
    )[: config.max_vocab]
    vocab = set(kept)

    user_words: dict[str, set[str]] = {}
    item_words: dict[str, set[str]] = {}
    for rec in records:
        if not rec.review_text:
            continue
        seen = {
            t for t in _TOKEN_RE.findall(rec.review_text.lower()) if t in vocab
        }
        if seen:
            user_words.setdefault(rec.user_key, set()).update(seen)
            item_words.setdefault(rec.item_key, set()).update(seen)
    return ReviewTokens(tuple(kept), user_words, item_words)


def build_graph(
    train: list[InteractionRecord],
    meta: list[ItemMetaRecord],
    config: TokenizerConfig | None = None,
    relations: frozenset[RelationKind] | set[RelationKind] | None = None,
    counters: IngestCounters | None = None,
) -> KnowledgeGraph:
    """Assemble the knowledge graph from TRAIN interactions plus catalog rows.

    Only the relation kinds in ``relations`` (default: all six) are emitted.
    Metadata rows for unknown items, and also_bought/also_view targets outside
    the item vocabulary, are skipped and tallied in ``counters``. Insertion
    order is canonicalized (sorted keys), so the result is independent of the
    input record order.
    """
    config = config or TokenizerConfig()
    wanted = frozenset(relations) if relations is not None else frozenset(RelationKind)
    counters = counters if counters is not None else IngestCounters()
    graph = KnowledgeGraph()

    if RelationKind.BUY in wanted:
        for user_key, item_key in sorted({(r.user_key, r.item_key) for r in train}):
            graph.add_triplet(
                EntityKind.USER, user_key, RelationKind.BUY, EntityKind.ITEM, item_key
            )

    need_meta = wanted & {
        RelationKind.BELONG_TO_BRAND,
        RelationKind.BELONG_TO_CATEGORY,
        RelationKind.ALSO_BOUGHT,
        RelationKind.ALSO_VIEW,
    }
    if need_meta:
        for record in sorted(meta, key=lambda m: m.item_key):
            if not graph.has_entity(EntityKind.ITEM, record.item_key):
                counters.unknown_meta_items += 1
                continue
            if RelationKind.BELONG_TO_BRAND in wanted and record.brand:
                graph.add_triplet(
                    EntityKind.ITEM, record.item_key,
                    RelationKind.BELONG_TO_BRAND, EntityKind.BRAND, record.brand,
                )
            if RelationKind.BELONG_TO_CATEGORY in wanted:
                for category in record.categories:
                    graph.add_triplet(
                        EntityKind.ITEM, record.item_key,
                        RelationKind.BELONG_TO_CATEGORY, EntityKind.CATEGORY, category,
                    )
            if RelationKind.ALSO_BOUGHT in wanted:
                counters.unknown_also_bought += _add_item_links(
                    graph, record.item_key, record.also_bought,
                    RelationKind.ALSO_BOUGHT, counters,
                )
            if RelationKind.ALSO_VIEW in wanted:
                counters.unknown_also_viewed += _add_item_links(
                    graph, record.item_key, record.also_viewed,
                    RelationKind.ALSO_VIEW, counters,
                )

    if RelationKind.MENTION_WORD in wanted:
        tokens = tokenize_reviews(train, config)
        word_users: dict[str, list[str]] = {w: [] for w in tokens.vocabulary}
        word_items: dict[str, list[str]] = {w: [] for w in tokens.vocabulary}
        for user_key, words in tokens.user_words.items():
            for word in words:
                word_users[word].append(user_key)
        for item_key, words in tokens.item_words.items():
            for word in words:
                word_items[word].append(item_key)
        for word in tokens.vocabulary:
            for user_key in sorted(word_users[word]):
                graph.add_triplet(
                    EntityKind.USER, user_key,
                    RelationKind.MENTION_WORD, EntityKind.WORD, word,
                )
            for item_key in sorted(word_items[word]):
                graph.add_triplet(
                    EntityKind.ITEM, item_key,
                    RelationKind.MENTION_WORD, EntityKind.WORD, word,
                )
    return graph


def _add_item_links(
    graph: KnowledgeGraph,
    source_item: str,
    targets: tuple[str, ...],
    relation: RelationKind,
    counters: IngestCounters,
) -> int:
    skipped = 0
    for target in targets:
        if target == source_item:
            counters.self_referencing_edges += 1
        elif graph.has_entity(EntityKind.ITEM, target):
            graph.add_triplet(
                EntityKind.ITEM, source_item, relation, EntityKind.ITEM, target
            )
        else:
            skipped += 1
    return skipped
