"""Command-line surface: build-graph, train, recommend, evaluate, ablate.

Configuration is a flat `key = value` text file; command-line flags override
file values. `--mode literal-paper` turns entity renormalization and
type-constrained sampling off so training follows the plain algorithm:
uniform corruption over all entities and no norm constraint.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import types
import typing
from dataclasses import dataclass
from pathlib import Path

from . import io as kio
from .evaluation import (
    EvaluationError,
    ablate,
    evaluate,
    format_report_record,
    format_report_table,
    subset_label,
    truth_from_records,
)
from .graph import EntityKind, GraphStats, KnowledgeGraph, RelationKind, SignatureError
from .ingest import (
    DEFAULT_STOPWORDS,
    IngestCounters,
    SplitSpec,
    TokenizerConfig,
    build_graph,
    split_interactions,
)
from .model import GradientError, Hyperparams, SamplingError, train
from .recommend import format_recommendations, recommend_all


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


class VocabMismatchError(RuntimeError):
    """Model and graph files were produced from different vocabularies."""


_RELATION_ALIASES = {
    "category": RelationKind.BELONG_TO_CATEGORY,
    "brand": RelationKind.BELONG_TO_BRAND,
    "mention": RelationKind.MENTION_WORD,
    **{r.value: r for r in RelationKind},
}

# The default ablation rows: buy alone, buy plus each other relation, then all.
DEFAULT_ABLATION_SUBSETS: tuple[frozenset[RelationKind], ...] = (
    frozenset({RelationKind.BUY}),
    frozenset({RelationKind.BUY, RelationKind.BELONG_TO_CATEGORY}),
    frozenset({RelationKind.BUY, RelationKind.BELONG_TO_BRAND}),
    frozenset({RelationKind.BUY, RelationKind.MENTION_WORD}),
    frozenset({RelationKind.BUY, RelationKind.ALSO_VIEW}),
    frozenset({RelationKind.BUY, RelationKind.ALSO_BOUGHT}),
    frozenset(RelationKind),
)


@dataclass(frozen=True)
class RunConfig:
    # paths
    interactions: str | None = None
    metadata: str | None = None
    graph: str | None = None
    model: str | None = None
    test_pairs: str | None = None
    loss_history: str | None = None
    report: str | None = None
    record: str | None = None
    recommendations: str | None = None
    users: str | None = None
    # split
    train_fraction: float = 0.70
    min_train_items: int = 1
    # tokenizer
    min_token_length: int = 2
    min_corpus_frequency: int = 5
    max_vocab: int = 50_000
    stopwords: str = ""  # comma-separated; empty keeps the built-in list
    # model
    dim: int = 300
    lr: float = 0.01
    margin: float = 1.0
    negatives: int = 5
    epochs: int | None = None
    seed: int = 0
    normalize_entities: bool = True
    type_constrained_sampling: bool = True
    filtered_sampling: bool = True
    # run
    relations: str = "all"
    ablate_subsets: str = ""  # ';'-separated ','-lists; empty = default rows
    top_n: int = 10
    threads: int = 1
    mode: str = "default"

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec(self.train_fraction, self.seed, self.min_train_items)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def tokenizer_config(self) -> TokenizerConfig:
        stop = (
            frozenset(s for s in self.stopwords.split(",") if s)
            if self.stopwords
            else DEFAULT_STOPWORDS
        )
        try:
            return TokenizerConfig(
                self.min_token_length, self.min_corpus_frequency, self.max_vocab, stop
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def hyperparams(self) -> Hyperparams:
        if self.epochs is None:
            raise ConfigError("epochs is required (set --epochs or `epochs =` in config)")
        try:
            return Hyperparams(
                epochs=self.epochs,
                dim=self.dim,
                learning_rate=self.lr,
                margin=self.margin,
                negatives=self.negatives,
                seed=self.seed,
                normalize_entities=self.normalize_entities,
                type_constrained_sampling=self.type_constrained_sampling,
                filtered_sampling=self.filtered_sampling,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def relation_set(self) -> frozenset[RelationKind]:
        return _parse_relations(self.relations)

    def ablation_subsets(self) -> list[frozenset[RelationKind]]:
        if not self.ablate_subsets:
            return list(DEFAULT_ABLATION_SUBSETS)
        return [_parse_relations(part) for part in self.ablate_subsets.split(";") if part.strip()]


def _parse_relations(text: str) -> frozenset[RelationKind]:
    text = text.strip()
    if not text or text == "all":
        return frozenset(RelationKind)
    out = set()
    for name in text.split(","):
        name = name.strip()
        if name not in _RELATION_ALIASES:
            raise ConfigError(f"unknown relation {name!r}")
        out.add(_RELATION_ALIASES[name])
    return frozenset(out)


# -- config file parsing / rendering ------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_HINTS = typing.get_type_hints(RunConfig)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _coerce(key: str, raw: str):
    hint = _HINTS[key]
    base = hint
    if typing.get_origin(hint) in (typing.Union, types.UnionType):  # Optional fields
        base = next(a for a in typing.get_args(hint) if a is not type(None))
    if base is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected boolean, got {raw!r}")
    try:
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc
    return raw


def build_config(
    file_values: dict[str, str], overrides: dict[str, object]
) -> RunConfig:
    merged: dict[str, object] = {k: _coerce(k, v) for k, v in file_values.items()}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig(**merged)
    if config.mode not in ("default", "literal-paper"):
        raise ConfigError(f"unknown mode {config.mode!r}")
    if config.mode == "literal-paper":
        config = dataclasses.replace(
            config, normalize_entities=False, type_constrained_sampling=False
        )
    return config


def render_config(config: RunConfig) -> str:
    """Echo the effective configuration; re-parsing reproduces it exactly."""
    lines = ["# kgrec run configuration"]
    for f in dataclasses.fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


# -- commands -----------------------------------------------------------------------


def _require_inputs(config: RunConfig, *names: str) -> None:
    for name in names:
        value = getattr(config, name)
        if value is None:
            raise ConfigError(f"missing required path: {name}")
        if not Path(value).exists():
            raise FileNotFoundError(f"{name} file {value} does not exist")


def _require_outputs(config: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(config, name) is None:
            raise ConfigError(f"missing required output path: {name}")


def format_stats_table(name: str, stats: GraphStats) -> str:
    n_users = stats.entity_counts[EntityKind.USER]
    n_items = stats.entity_counts[EntityKind.ITEM]
    n_buy = stats.relation_counts[RelationKind.BUY]
    lines = [
        f"{'Dataset':<16}{'#Users':>10}{'#Items':>10}{'#Interactions':>16}{'Density':>10}",
        f"{name:<16}{n_users:>10}{n_items:>10}{n_buy:>16}{100.0 * stats.buy_density:>9.4f}%",
        "",
        f"{'Entities':<20}" + "".join(f"{k.value:>12}" for k in EntityKind),
        f"{'':<20}" + "".join(f"{stats.entity_counts[k]:>12}" for k in EntityKind),
        f"{'Triplets':<20}" + "".join(f"{r.value:>20}" for r in RelationKind),
        f"{'':<20}" + "".join(f"{stats.relation_counts[r]:>20}" for r in RelationKind),
    ]
    return "\n".join(lines) + "\n"


def cmd_build_graph(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _require_inputs(config, "interactions")
    _require_outputs(config, "graph", "test_pairs")
    records = kio.load_interactions(config.interactions)
    if config.metadata is not None:
        _require_inputs(config, "metadata")
        meta = kio.load_item_meta(config.metadata)
    else:
        meta = []

    train_records, test_records = split_interactions(records, config.split_spec())
    if not train_records:
        raise ConfigError("split produced an empty training set")
    counters = IngestCounters()
    graph = build_graph(
        train_records,
        meta,
        config.tokenizer_config(),
        relations=config.relation_set(),
        counters=counters,
    )
    kio.save_graph(graph, config.graph)
    kio.save_test_pairs(truth_from_records(test_records), config.test_pairs)

    out.write(format_stats_table(Path(config.graph).stem, graph.stats()))
    skipped = counters.unknown_meta_items + counters.unknown_also_bought + counters.unknown_also_viewed
    out.write(
        f"skipped: {counters.unknown_meta_items} metadata rows, "
        f"{counters.unknown_also_bought} also_bought / {counters.unknown_also_viewed} "
        f"also_view edges, {counters.self_referencing_edges} self references "
        f"({skipped} unknown-item references total)\n"
    )
    return 0


def cmd_train(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _require_inputs(config, "graph")
    _require_outputs(config, "model")
    hp = config.hyperparams()
    graph = kio.load_graph(config.graph)
    store, history = train(graph, hp, threads=config.threads)
    kio.save_store(store, kio.graph_vocabs(graph), config.model)
    if config.loss_history is not None:
        kio.save_loss_history(history, config.loss_history)
    for epoch, loss in enumerate(history, start=1):
        out.write(f"epoch {epoch}: mean loss {loss:.6f}\n")
    return 0


def _load_paired_store(config: RunConfig):
    graph = kio.load_graph(config.graph)
    store, vocabs = kio.load_store(config.model)
    graph_digest = kio.vocab_digest(kio.graph_vocabs(graph))
    store_digest = kio.vocab_digest(vocabs)
    if graph_digest != store_digest:
        raise VocabMismatchError(
            f"model {config.model} was not trained against graph {config.graph} "
            f"(vocab digests {store_digest[:12]} vs {graph_digest[:12]})"
        )
    return graph, store


def cmd_recommend(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _require_inputs(config, "graph", "model")
    graph, store = _load_paired_store(config)
    if config.users is not None:
        _require_inputs(config, "users")
        keys = [
            line.strip()
            for line in Path(config.users).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")
        ]
    else:
        keys = list(graph.vocabs[EntityKind.USER].keys)
    users = [graph.lookup(EntityKind.USER, key) for key in keys]
    lists = recommend_all(store, graph, users, config.top_n, threads=config.threads)
    text = format_recommendations(lists)
    if config.recommendations is not None:
        Path(config.recommendations).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return 0


def cmd_evaluate(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _require_inputs(config, "graph", "model", "test_pairs")
    graph, store = _load_paired_store(config)
    truth = kio.load_test_pairs(config.test_pairs)
    truth = {u: items for u, items in truth.items() if graph.has_entity(EntityKind.USER, u)}
    report = evaluate(
        store,
        graph,
        truth,
        k=config.top_n,
        meta={"subset": config.relations or "all", "seed": config.seed, "dim": store.dim},
        threads=config.threads,
    )
    table = format_report_table([report])
    record = format_report_record(report)
    out.write(table)
    out.write(record)
    if config.report is not None:
        Path(config.report).write_text(table, encoding="utf-8")
    if config.record is not None:
        Path(config.record).write_text(record, encoding="utf-8")
    return 0


def cmd_ablate(config: RunConfig, out=None) -> int:
    out = out or sys.stdout
    _require_inputs(config, "interactions")
    subsets = config.ablation_subsets()
    for subset in subsets:
        if RelationKind.BUY not in subset:
            raise ConfigError(f"ablation subset {subset_label(subset)!r} must include buy")
    hp = config.hyperparams()
    records = kio.load_interactions(config.interactions)
    if config.metadata is not None:
        _require_inputs(config, "metadata")
        meta = kio.load_item_meta(config.metadata)
    else:
        meta = []
    train_records, test_records = split_interactions(records, config.split_spec())
    truth = truth_from_records(test_records)
    results = ablate(
        train_records,
        meta,
        truth,
        subsets,
        hp,
        tokenizer=config.tokenizer_config(),
        k=config.top_n,
        threads=config.threads,
    )
    reports = [report for _, report in results]
    table = format_report_table(reports)
    records_text = "".join(format_report_record(r) for r in reports)
    out.write(table)
    out.write(records_text)
    if config.report is not None:
        Path(config.report).write_text(table, encoding="utf-8")
    if config.record is not None:
        Path(config.record).write_text(records_text, encoding="utf-8")
    return 0


# -- argument parsing -----------------------------------------------------------------

_PATH_FLAGS = (
    "interactions", "metadata", "graph", "model", "test_pairs", "loss_history",
    "report", "record", "recommendations", "users",
)
_VALUE_FLAGS: dict[str, type] = {
    "train_fraction": float, "min_train_items": int, "min_token_length": int,
    "min_corpus_frequency": int, "max_vocab": int, "stopwords": str,
    "dim": int, "lr": float, "margin": float, "negatives": int, "epochs": int,
    "seed": int, "relations": str, "ablate_subsets": str, "top_n": int,
    "threads": int, "mode": str,
}
_BOOL_FLAGS = ("normalize_entities", "type_constrained_sampling", "filtered_sampling")

COMMANDS = {
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key = value config file")
    parser.add_argument("--save-config", default=None, help="write the effective config here")
    for name in _PATH_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)
    for name, typ in _VALUE_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)
    for name in _BOOL_FLAGS:
        flag = name.replace("_", "-")
        group = parser.add_mutually_exclusive_group()
        group.add_argument(f"--{flag}", dest=name, action="store_true", default=None)
        group.add_argument(f"--no-{flag}", dest=name, action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgrec",
        description="Knowledge-graph embeddings for top-N recommendation",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        _add_shared_flags(sub)
    return parser


_ERROR_CLASSES: tuple[tuple[type, str], ...] = (
    (ConfigError, "config-error"),
    (kio.ParseError, "parse-error"),
    (kio.FormatError, "format-error"),
    (SignatureError, "signature-error"),
    (SamplingError, "sampling-error"),
    (GradientError, "numeric-error"),
    (EvaluationError, "evaluation-error"),
    (VocabMismatchError, "vocab-mismatch"),
    (FileNotFoundError, "io-error"),
    (KeyError, "lookup-error"),
    (ValueError, "config-error"),
    (OSError, "io-error"),
)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        name: getattr(args, name)
        for name in list(_PATH_FLAGS) + list(_VALUE_FLAGS) + list(_BOOL_FLAGS)
    }
    try:
        file_values = load_config(args.config) if args.config else {}
        config = build_config(file_values, overrides)
        if args.save_config:
            Path(args.save_config).write_text(render_config(config), encoding="utf-8")
        return COMMANDS[args.command](config)
    except Exception as exc:  # noqa: BLE001 - map every failure to an error class
        for klass, label in _ERROR_CLASSES:
            if isinstance(exc, klass):
                message = exc.args[0] if exc.args else str(exc)
                print(f"{label}: {message}", file=sys.stderr)
                return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
