import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgrec.graph import (
    RELATION_SIGNATURES,
    EntityKind,
    KnowledgeGraph,
    RelationKind,
    SignatureError,
    Triplet,
    buy_density,
)

from conftest import random_graph


def test_first_insert_accepted():
    g = KnowledgeGraph()
    assert g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i1")
    assert len(g) == 1


def test_duplicate_insert_rejected():
    g = KnowledgeGraph()
    assert g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i1")
    assert not g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i1")
    assert len(g) == 1


def test_buy_signature_is_user_to_item():
    g = KnowledgeGraph()
    with pytest.raises(SignatureError):
        g.add_triplet(EntityKind.ITEM, "i1", RelationKind.BUY, EntityKind.USER, "u1")
    # rejected call leaves the graph untouched, including vocabularies
    assert len(g) == 0
    assert g.num_entities(EntityKind.ITEM) == 0
    assert g.num_entities(EntityKind.USER) == 0


def test_self_loop_rejected():
    g = KnowledgeGraph()
    with pytest.raises(SignatureError):
        g.add_triplet(EntityKind.ITEM, "i1", RelationKind.ALSO_BOUGHT, EntityKind.ITEM, "i1")
    assert g.num_entities(EntityKind.ITEM) == 0


def test_empty_key_rejected():
    g = KnowledgeGraph()
    with pytest.raises(ValueError):
        g.add_triplet(EntityKind.USER, "", RelationKind.BUY, EntityKind.ITEM, "i1")


def test_mention_word_allows_user_and_item_heads():
    g = KnowledgeGraph()
    assert g.add_triplet(EntityKind.USER, "u1", RelationKind.MENTION_WORD, EntityKind.WORD, "w")
    assert g.add_triplet(EntityKind.ITEM, "i1", RelationKind.MENTION_WORD, EntityKind.WORD, "w")
    with pytest.raises(SignatureError):
        g.add_triplet(EntityKind.BRAND, "b1", RelationKind.MENTION_WORD, EntityKind.WORD, "w")


def test_contains_after_add(tiny_graph):
    u1 = tiny_graph.lookup(EntityKind.USER, "u1")
    i1 = tiny_graph.lookup(EntityKind.ITEM, "i1")
    i2 = tiny_graph.lookup(EntityKind.ITEM, "i2")
    assert tiny_graph.contains(Triplet(u1, RelationKind.BUY, i1))
    assert not tiny_graph.contains(Triplet(u1, RelationKind.BUY, i2))


def test_contains_agrees_with_linear_scan():
    g = random_graph(seed=7, n_users=40, n_items=60, n_buys=1000)
    all_triplets = list(g.triplets)
    # every stored triplet, plus "near misses" built by swapping tails
    probes = list(all_triplets)
    rng = np.random.default_rng(3)
    for _ in range(500):
        a = all_triplets[rng.integers(len(all_triplets))]
        b = all_triplets[rng.integers(len(all_triplets))]
        probes.append(Triplet(a.head, a.relation, b.tail))
    for probe in probes:
        assert g.contains(probe) == (probe in set(all_triplets))


def test_tails_of_basic(tiny_graph):
    u1 = tiny_graph.lookup(EntityKind.USER, "u1")
    tails = tiny_graph.tails_of(u1, RelationKind.BUY)
    assert {t.external_key for t in tails} == {"i1", "i3"}
    i3 = tiny_graph.lookup(EntityKind.ITEM, "i3")
    assert tiny_graph.tails_of(i3, RelationKind.BELONG_TO_BRAND) == set()


def test_tails_of_matches_brute_force_projection():
    g = random_graph(seed=11)
    for kind in (EntityKind.USER, EntityKind.ITEM):
        for local_id in range(g.num_entities(kind)):
            head = g.entity_ref(kind, local_id)
            for rel in RelationKind:
                expected = {t.tail for t in g.triplets if t.head == head and t.relation == rel}
                assert g.tails_of(head, rel) == expected


def test_stats_small_grid():
    g = KnowledgeGraph()
    g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i1")
    g.add_triplet(EntityKind.USER, "u2", RelationKind.MENTION_WORD, EntityKind.WORD, "w")
    g.add_triplet(EntityKind.ITEM, "i2", RelationKind.MENTION_WORD, EntityKind.WORD, "w")
    s = g.stats()
    assert s.entity_counts[EntityKind.USER] == 2
    assert s.entity_counts[EntityKind.ITEM] == 2
    assert s.relation_counts[RelationKind.BUY] == 1
    assert s.buy_density == pytest.approx(0.25)  # 1 buy over a 2x2 grid


def test_stats_empty_graph():
    s = KnowledgeGraph().stats()
    assert all(v == 0 for v in s.entity_counts.values())
    assert all(v == 0 for v in s.relation_counts.values())
    assert s.buy_density == 0.0


@pytest.mark.parametrize(
    "users,items,buys,expected",
    [
        (75258, 64421, 1097592, "0.0226"),
        (39387, 23033, 278677, "0.0307"),
        (27879, 10429, 194493, "0.0669"),
        (22363, 12101, 198502, "0.0734"),
    ],
)
def test_density_formula_reproduces_reference_datasets(users, items, buys, expected):
    assert f"{100.0 * buy_density(buys, users, items):.4f}" == expected


def test_interning_is_idempotent():
    g = KnowledgeGraph()
    g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i1")
    g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, "i2")
    first = g.lookup(EntityKind.USER, "u1").local_id
    assert g.vocabs[EntityKind.USER].intern("u1") == first
    assert g.num_entities(EntityKind.USER) == 1


def test_local_ids_dense_first_seen_order():
    g = KnowledgeGraph()
    for item in ("i9", "i2", "i5"):
        g.add_triplet(EntityKind.USER, "u1", RelationKind.BUY, EntityKind.ITEM, item)
    assert [g.lookup(EntityKind.ITEM, k).local_id for k in ("i9", "i2", "i5")] == [0, 1, 2]


def test_every_indexed_triplet_satisfies_signature():
    g = random_graph(seed=23)
    for rel, triplets in g.by_relation.items():
        head_kinds, tail_kind = RELATION_SIGNATURES[rel]
        for t in triplets:
            assert t.head.kind in head_kinds and t.tail.kind is tail_kind


def test_triplet_count_equals_sum_over_relations(tiny_graph):
    assert len(tiny_graph) == sum(len(ts) for ts in tiny_graph.by_relation.values())
    g = random_graph(seed=5)
    assert len(g) == sum(len(ts) for ts in g.by_relation.values())


@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), min_size=1, max_size=60))
def test_graph_state_consistent_under_random_inserts(pairs):
    g = KnowledgeGraph()
    inserted = set()
    for u, i in pairs:
        accepted = g.add_triplet(
            EntityKind.USER, f"u{u}", RelationKind.BUY, EntityKind.ITEM, f"i{i}"
        )
        assert accepted == ((u, i) not in inserted)
        inserted.add((u, i))
    assert len(g) == len(inserted)
    assert len(g) == sum(len(ts) for ts in g.by_relation.values())
    # by_head is an exact projection of the triplet list
    rebuilt = {}
    for t in g.triplets:
        rebuilt.setdefault((t.head, t.relation), set()).add(t.tail)
    assert rebuilt == g.by_head
