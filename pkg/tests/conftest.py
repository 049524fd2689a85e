import numpy as np
import pytest

from kgrec.graph import EntityKind, KnowledgeGraph, RelationKind


@pytest.fixture
def tiny_graph() -> KnowledgeGraph:
    """3 users x 4 items with a couple of metadata triplets."""
    g = KnowledgeGraph()
    buys = [
        ("u1", "i1"), ("u1", "i3"),
        ("u2", "i2"), ("u2", "i3"),
        ("u3", "i1"), ("u3", "i4"),
    ]
    for user, item in buys:
        g.add_triplet(EntityKind.USER, user, RelationKind.BUY, EntityKind.ITEM, item)
    g.add_triplet(EntityKind.ITEM, "i1", RelationKind.BELONG_TO_BRAND, EntityKind.BRAND, "b1")
    g.add_triplet(EntityKind.ITEM, "i2", RelationKind.BELONG_TO_BRAND, EntityKind.BRAND, "b2")
    g.add_triplet(EntityKind.ITEM, "i2", RelationKind.BELONG_TO_CATEGORY, EntityKind.CATEGORY, "c1")
    g.add_triplet(EntityKind.ITEM, "i3", RelationKind.BELONG_TO_CATEGORY, EntityKind.CATEGORY, "c2")
    g.add_triplet(EntityKind.ITEM, "i1", RelationKind.ALSO_BOUGHT, EntityKind.ITEM, "i2")
    g.add_triplet(EntityKind.USER, "u1", RelationKind.MENTION_WORD, EntityKind.WORD, "great")
    g.add_triplet(EntityKind.ITEM, "i1", RelationKind.MENTION_WORD, EntityKind.WORD, "great")
    g.add_triplet(EntityKind.USER, "u2", RelationKind.MENTION_WORD, EntityKind.WORD, "cheap")
    g.add_triplet(EntityKind.ITEM, "i2", RelationKind.MENTION_WORD, EntityKind.WORD, "cheap")
    return g


def random_graph(seed: int, n_users: int = 20, n_items: int = 30, n_buys: int = 120) -> KnowledgeGraph:
    """Random buy-only graph; duplicates in the draw exercise deduplication."""
    rng = np.random.default_rng(seed)
    g = KnowledgeGraph()
    for _ in range(n_buys):
        user = f"u{rng.integers(n_users)}"
        item = f"i{rng.integers(n_items)}"
        g.add_triplet(EntityKind.USER, user, RelationKind.BUY, EntityKind.ITEM, item)
    return g
