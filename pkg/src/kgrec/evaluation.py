"""Top-K ranking metrics, dataset evaluation, and the relation-ablation harness."""

from __future__ import annotations

import concurrent.futures
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .graph import EntityKind, KnowledgeGraph, RelationKind, Triplet
from .ingest import InteractionRecord, ItemMetaRecord, TokenizerConfig, build_graph
from .model import EmbeddingStore, Hyperparams, train
from .recommend import recommend_top_n

# Held-out purchases per user key.
GroundTruth = dict[str, set[str]]


class EvaluationError(RuntimeError):
    """Evaluation cannot produce a meaningful report (no users, leakage, ...)."""


@dataclass
class EvalReport:
    """Mean metrics over evaluated users, as percentages (paper-table style)."""

    ndcg: float
    recall: float
    hit_ratio: float
    precision: float
    k: int
    users_evaluated: int
    meta: dict = field(default_factory=dict)


def truth_from_records(test_records: list[InteractionRecord]) -> GroundTruth:
    truth: GroundTruth = {}
    for rec in test_records:
        truth.setdefault(rec.user_key, set()).add(rec.item_key)
    return truth


def metrics_at_k(
    ranked: Sequence, relevant: set, k: int
) -> tuple[float, float, float, float]:
    """(ndcg, recall, hit, precision) in [0, 1] for one ranked list.

    Binary relevance; DCG discounts a hit at rank r by 1/log2(r + 1) and the
    ideal DCG places min(k, |relevant|) hits at the top.
    """
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    top = list(ranked[:k])
    if len(set(top)) != len(top):
        raise ValueError("ranked list contains duplicates")

    hit_ranks = [rank for rank, item in enumerate(top, start=1) if item in relevant]
    hits = len(hit_ranks)
    precision = hits / k
    recall = hits / len(relevant)
    hit = 1.0 if hits else 0.0
    dcg = sum(1.0 / math.log2(rank + 1) for rank in hit_ranks)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg, recall, hit, precision


def _check_no_leakage(graph: KnowledgeGraph, truth: GroundTruth) -> None:
    for user_key, item_keys in truth.items():
        user = graph.lookup(EntityKind.USER, user_key)
        for item_key in item_keys:
            if not graph.has_entity(EntityKind.ITEM, item_key):
                continue
            item = graph.lookup(EntityKind.ITEM, item_key)
            if graph.contains(Triplet(user, RelationKind.BUY, item)):
                raise EvaluationError(
                    f"leakage: held-out pair ({user_key}, {item_key}) is a training buy"
                )


def evaluate(
    store: EmbeddingStore,
    graph: KnowledgeGraph,
    truth: GroundTruth,
    k: int = 10,
    meta: dict | None = None,
    threads: int = 1,
) -> EvalReport:
    """Score every user with held-out items and average the four metrics.

    Users whose truth set is empty are skipped, not scored as zero. Asserts
    up front that no held-out pair leaked into the graph's buy triplets.
    """
    _check_no_leakage(graph, truth)
    evaluable = [(u, items) for u, items in truth.items() if items]
    if not evaluable:
        raise EvaluationError("no users with non-empty ground truth")

    started = time.perf_counter()

    def score(entry: tuple[str, set[str]]) -> tuple[float, float, float, float]:
        user_key, relevant = entry
        user = graph.lookup(EntityKind.USER, user_key)
        ranked = recommend_top_n(store, graph, user, k)
        keys = [item.external_key for item, _ in ranked.items]
        ndcg, recall, hit, precision = metrics_at_k(keys, relevant, k)
        assert precision <= hit <= 1.0 and recall <= hit
        return ndcg, recall, hit, precision

    if threads <= 1:
        rows = [score(entry) for entry in evaluable]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(score, evaluable))

    n = len(rows)
    means = [100.0 * sum(col) / n for col in zip(*rows)]
    report_meta = dict(meta or {})
    report_meta.setdefault("wall_time_s", round(time.perf_counter() - started, 3))
    return EvalReport(
        ndcg=means[0],
        recall=means[1],
        hit_ratio=means[2],
        precision=means[3],
        k=k,
        users_evaluated=n,
        meta=report_meta,
    )


# -- ablation ------------------------------------------------------------------

_SHORT_NAMES = {
    RelationKind.BELONG_TO_CATEGORY: "category",
    RelationKind.BELONG_TO_BRAND: "brand",
    RelationKind.MENTION_WORD: "mention",
    RelationKind.ALSO_VIEW: "also_view",
    RelationKind.ALSO_BOUGHT: "also_bought",
}


def subset_label(subset: frozenset[RelationKind]) -> str:
    """Short row label: 'buy', 'buy+category', ..., or 'all'."""
    if subset == frozenset(RelationKind):
        return "all"
    extras = [r for r in RelationKind if r in subset and r is not RelationKind.BUY]
    return "+".join(["buy"] + [_SHORT_NAMES[r] for r in extras])


def ablate(
    train_records: list[InteractionRecord],
    meta: list[ItemMetaRecord],
    truth: GroundTruth,
    relation_subsets: list[frozenset[RelationKind]],
    hp: Hyperparams,
    tokenizer: TokenizerConfig | None = None,
    k: int = 10,
    threads: int = 1,
) -> list[tuple[frozenset[RelationKind], EvalReport]]:
    """Rebuild, retrain and re-evaluate once per relation subset.

    Every subset must include buy. The split, seed and held-out truth are
    shared across subsets so metric differences isolate the relation set.
    """
    for subset in relation_subsets:
        if RelationKind.BUY not in subset:
            raise ValueError(f"relation subset {subset_label(subset)!r} must include buy")

    results = []
    for subset in relation_subsets:
        graph = build_graph(train_records, meta, tokenizer, relations=subset)
        store, history = train(graph, hp, threads=threads)
        report = evaluate(
            store,
            graph,
            truth,
            k=k,
            meta={
                "subset": subset_label(subset),
                "seed": hp.seed,
                "dim": hp.dim,
                "epochs": hp.epochs,
                "final_loss": history[-1] if history else None,
            },
            threads=threads,
        )
        results.append((frozenset(subset), report))
    return results


# -- report formatting ----------------------------------------------------------


def format_report_table(reports: list[EvalReport]) -> str:
    """Aligned plain-text table with one row per report."""
    header = f"{'Relations':<18}{'NDCG':>8}{'Recall':>8}{'HT':>8}{'Prec':>8}{'Users':>8}"
    lines = [header]
    for rep in reports:
        label = rep.meta.get("subset", "all")
        lines.append(
            f"{label:<18}{rep.ndcg:>8.3f}{rep.recall:>8.3f}"
            f"{rep.hit_ratio:>8.3f}{rep.precision:>8.3f}{rep.users_evaluated:>8d}"
        )
    return "\n".join(lines) + "\n"


def format_report_record(rep: EvalReport) -> str:
    """Machine-readable one-liner: subset, k, the four metrics, users, seed."""
    return (
        f"{rep.meta.get('subset', 'all')}\t{rep.k}\t{rep.ndcg:.6f}\t{rep.recall:.6f}"
        f"\t{rep.hit_ratio:.6f}\t{rep.precision:.6f}\t{rep.users_evaluated}"
        f"\t{rep.meta.get('seed', '')}\n"
    )
