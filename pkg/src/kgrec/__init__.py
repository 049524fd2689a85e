"""kgrec: user-item knowledge-graph embeddings for top-N recommendation.

Builds a typed knowledge graph from purchase/metadata/review data, learns
translation-based embeddings for every entity and relation with a
margin-based hinge loss over corrupted triplets, and recommends by ranking
items in ascending distance under the buy relation.
"""

from .graph import (
    EntityKind,
    EntityRef,
    KnowledgeGraph,
    RelationKind,
    SignatureError,
    Triplet,
)
from .ingest import (
    InteractionRecord,
    ItemMetaRecord,
    SplitSpec,
    TokenizerConfig,
    build_graph,
    split_interactions,
    tokenize_reviews,
)
from .model import (
    EmbeddingStore,
    Hyperparams,
    NegativeBatch,
    init_embeddings,
    sample_negatives,
    train,
    train_epoch,
    triplet_distance,
    triplet_loss_and_grads,
)
from .recommend import RankedList, recommend_all, recommend_top_n
from .evaluation import EvalReport, ablate, evaluate, metrics_at_k

__all__ = [
    "EntityKind",
    "EntityRef",
    "KnowledgeGraph",
    "RelationKind",
    "SignatureError",
    "Triplet",
    "InteractionRecord",
    "ItemMetaRecord",
    "SplitSpec",
    "TokenizerConfig",
    "build_graph",
    "split_interactions",
    "tokenize_reviews",
    "EmbeddingStore",
    "Hyperparams",
    "NegativeBatch",
    "init_embeddings",
    "sample_negatives",
    "train",
    "train_epoch",
    "triplet_distance",
    "triplet_loss_and_grads",
    "RankedList",
    "recommend_all",
    "recommend_top_n",
    "EvalReport",
    "ablate",
    "evaluate",
    "metrics_at_k",
]

__version__ = "0.1.0"
