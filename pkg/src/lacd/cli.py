"""Command-line entry points.

Every subcommand maps onto one library operation, reads artifacts from
paths, and emits JSON on stdout.  Failures print a single machine-parseable
JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .camgraph import Tier, build_graph, load_graph, neighbors, save_graph, stats
from .config import (
    BI_CKPT,
    CROSS_CKPT,
    AppConfig,
    build_case_provider,
    load_config,
    load_models,
    open_cache,
)
from .corpus import ArticleId, Corpus, parse_corpus, serialize_corpus
from .experiment import COMBINATIONS, ExperimentSpec, run_experiment, write_scores
from .index import VectorIndex, load_index, save_index
from .retriever import (
    DraftQuery,
    RetrieverConfig,
    build_index,
    retrieve,
    save_params,
)
from .synth import (
    SynthConfig,
    auto_ontology,
    generate_corpus,
    read_labels,
    serialize_ontology,
    write_gold_rules,
    write_labels,
)
from .trainer import make_splits, train_bi, train_cross

_TIERS = {"act": Tier.ACT, "decree": Tier.ENFORCEMENT_DECREE, "rule": Tier.ENFORCEMENT_RULE}


def _emit(doc) -> None:
    print(json.dumps(doc, ensure_ascii=False))


def _read_corpus(path: str) -> Corpus:
    return parse_corpus(Path(path).read_text("utf-8"))


def _corpus_for(args, graph) -> Corpus:
    if getattr(args, "corpus", None):
        return _read_corpus(args.corpus)
    return Corpus(node.article for node in graph.nodes.values())


def _app_config(args) -> AppConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return AppConfig()


def cmd_synth(args) -> None:
    cfg = SynthConfig(
        seed=args.seed,
        n_acts=args.n_acts,
        n_articles=args.n_articles,
        mention_density=args.mention_density,
        competing_fraction=args.competing_fraction,
        body_length_target=args.body_length,
    )
    ont = auto_ontology(cfg)
    corpus, labels, gold = generate_corpus(cfg, ont)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.txt").write_text(serialize_corpus(corpus), "utf-8")
    (out / "labels.tsv").write_text(write_labels(labels), "utf-8")
    (out / "gold.json").write_text(write_gold_rules(gold), "utf-8")
    (out / "ontology.txt").write_text(serialize_ontology(ont), "utf-8")
    _emit({
        "articles": len(corpus),
        "acts": len(corpus.acts),
        "pairs": len(labels),
        "positives": sum(label for _, _, label in labels),
        "out_dir": str(out),
    })


def cmd_parse(args) -> None:
    corpus = _read_corpus(args.corpus)
    _emit({
        "articles": len(corpus),
        "acts": {act: len(items) for act, items in sorted(corpus.acts.items())},
    })


def cmd_build_graph(args) -> None:
    app = _app_config(args)
    corpus = _read_corpus(args.corpus)
    provider = build_case_provider(app.backends, open_cache(app))
    tier = None if args.tier == "all" else _TIERS[args.tier]
    graph = build_graph(corpus, provider, n_cases=args.n_cases, tier_filter=tier, seed=args.seed)
    save_graph(graph, args.out)
    s = stats(graph)
    _emit({"nodes": s.node_count, "edges": s.edge_count, "out": args.out})


def cmd_gen_cases(args) -> None:
    app = _app_config(args)
    corpus = _read_corpus(args.corpus)
    provider = build_case_provider(app.backends, open_cache(app))
    article = corpus.get(ArticleId.from_canonical(args.article))
    cases = provider.generate(article, args.count, args.seed)
    _emit({"article": args.article, "cases": cases})


def cmd_index(args) -> None:
    app = _app_config(args)
    graph = load_graph(args.graph)
    models = load_models(app, graph)
    index = build_index(models.bi, graph)
    save_index(index, args.out)
    _emit({"vectors": len(index), "dim": models.bi.backend.dim, "out": args.out})


def cmd_train(args) -> None:
    app = _app_config(args)
    graph = load_graph(args.graph)
    labels = read_labels(Path(args.labels).read_text("utf-8"))
    splits = make_splits(labels, seed=args.split_seed)
    models = load_models(app, graph)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    history = []
    if args.stage in ("bi", "both"):
        _, h = train_bi(models.bi, graph, splits, app.train_bi, seed=args.seed)
        history += [dataclasses.asdict(r) | {"stage": "bi"} for r in h]
        save_params([models.bi.projection], out / BI_CKPT,
                    extra_meta={"stage": "bi", "mode": models.bi.mode})
    if args.stage in ("cross", "both"):
        models.node_feats = None  # recompute over the trained projection
        _, h = train_cross(models, graph, splits, app.train_cross, seed=args.seed)
        history += [dataclasses.asdict(r) | {"stage": "cross"} for r in h]
        params = models.probcalc.params() + (models.gnn.params() if models.gnn else [])
        save_params(params, out / CROSS_CKPT,
                    extra_meta={"stage": "cross", "step3": app.retriever.step3})
    with (out / "history.jsonl").open("w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec) + "\n")
    _emit({"stage": args.stage, "steps": len(history), "out_dir": str(out)})


def cmd_eval(args) -> None:
    app = _app_config(args)
    graph = load_graph(args.graph)
    corpus = _corpus_for(args, graph)
    labels = read_labels(Path(args.labels).read_text("utf-8"))
    combos = tuple(COMBINATIONS) if args.combinations == "all" else tuple(args.combinations.split(","))
    seeds = tuple(int(s) for s in args.seeds.split(","))
    ks = tuple(int(k) for k in args.k.split(","))
    spec = ExperimentSpec(
        corpus=corpus,
        graph=graph,
        labeled_pairs=labels,
        combinations=combos,
        seeds=seeds,
        gnn_kind=app.retriever.gnn_kind,
        dim=app.backends.dim,
        theta=app.retriever.theta,
        ks=ks,
        bi_config=app.train_bi,
        cross_config=app.train_cross,
        split_seed=args.split_seed,
    )
    report = run_experiment(spec)
    if args.scores:
        write_scores(report, args.scores)
    if args.table:
        print(report.table())
    else:
        print(report.to_json())


def cmd_retrieve(args) -> None:
    app = _app_config(args)
    graph = load_graph(args.graph)
    corpus = _corpus_for(args, graph)
    models = load_models(app, graph)
    if args.index:
        index = load_index(args.index)
    else:
        index = build_index(models.bi, graph)
    config = RetrieverConfig(
        step1=app.retriever.step1,
        step3=app.retriever.step3,
        k=args.k if args.k is not None else app.retriever.k,
        theta=args.theta if args.theta is not None else app.retriever.theta,
        gnn_kind=app.retriever.gnn_kind,
    )
    if args.query_id:
        query = ArticleId.from_canonical(args.query_id)
    else:
        draft = args.draft if args.draft is not None else Path(args.draft_file).read_text("utf-8")
        query = DraftQuery(draft)
    provider = build_case_provider(app.backends, open_cache(app))
    result = retrieve(config, corpus, graph, index, models, query, provider=provider)
    print(result.to_json())


def cmd_stats(args) -> None:
    graph = load_graph(args.graph)
    s = stats(graph)
    doc = dataclasses.asdict(s)
    if args.id:
        doc["neighbors"] = [n.canonical() for n in neighbors(graph, ArticleId.from_canonical(args.id), args.hops)]
    _emit(doc)


def cmd_serve(args) -> None:
    import uvicorn

    from .service import ServiceState, create_app

    app_cfg = _app_config(args)
    graph = load_graph(args.graph)
    corpus = _corpus_for(args, graph)
    models = load_models(app_cfg, graph)
    index = load_index(args.index) if args.index else build_index(models.bi, graph)
    provider = build_case_provider(app_cfg.backends, open_cache(app_cfg))
    state = ServiceState(
        corpus=corpus, graph=graph, index=index, models=models,
        provider=provider, retriever=app_cfg.retriever,
    )
    host = args.host or app_cfg.service.host
    port = args.port or app_cfg.service.port
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lacd", description="Competing-article retrieval toolkit.")
    parser.add_argument("--config", help="JSON config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-acts", type=int, default=3)
    p.add_argument("--n-articles", type=int, default=30)
    p.add_argument("--mention-density", type=float, default=2.0)
    p.add_argument("--competing-fraction", type=float, default=0.12)
    p.add_argument("--body-length", type=int, default=75)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("parse", help="validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("build-graph", help="build and save the mention graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-cases", type=int, default=2)
    p.add_argument("--tier", choices=[*_TIERS, "all"], default="act")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_build_graph)

    p = sub.add_parser("gen-cases", help="generate hypothetical cases for one article")
    p.add_argument("--corpus", required=True)
    p.add_argument("--article", required=True, help="canonical id, e.g. 'Some Act:12'")
    p.add_argument("--count", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen_cases)

    p = sub.add_parser("index", help="embed graph nodes into a vector index")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("train", help="train the projection and/or pair scorer")
    p.add_argument("--graph", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stage", choices=["bi", "cross", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="run the combination-by-seed experiment grid")
    p.add_argument("--graph", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--combinations", default="all")
    p.add_argument("--seeds", default="0,42,2024")
    p.add_argument("--k", default="5")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--scores", default=None, help="dump per-pair scores as JSONL")
    p.add_argument("--table", action="store_true", help="plain-text table instead of JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("retrieve", help="rank competing candidates for a query")
    p.add_argument("--graph", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--index", default=None)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query-id", default=None)
    group.add_argument("--draft", default=None)
    group.add_argument("--draft-file", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("stats", help="graph statistics, optionally neighborhoods")
    p.add_argument("--graph", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--hops", type=int, default=1)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--graph", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--index", default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
