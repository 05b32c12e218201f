"""Command line entry points: train, eval-nlu, simulate, mine-templates,
serve, chat, ingest."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .db import DomainDb
from .evaluation import (compute_metrics, format_report, nlu_component_metrics,
                         run_episodes, save_logs)
from .nlg import TemplateStore, mine_templates
from .nlu.corpus import convert_multiwoz, examples_from_corpus, load_corpus, save_corpus
from .nlu.model import NluConfig
from .nlu.train import train as train_nlu
from .pipeline import DialogSystem, load_nlu_bundle
from .policy import RulePolicy, load_rule_table
from .schema import DomainSchema
from .text import bpe_train

DEFAULT_DB_DIR = os.path.join(os.path.dirname(__file__), "data", "db")


def _load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _build_system(args, schema: DomainSchema, need_nlu: bool) -> DialogSystem:
    db = DomainDb.load(args.db, schema, seed=getattr(args, "seed", 0))
    rules = load_rule_table(args.rules) if getattr(args, "rules", None) else None
    templates = None
    if getattr(args, "templates", None):
        templates = TemplateStore.load(args.templates, schema)
    nlu = None
    if need_nlu:
        if not (args.checkpoint and args.codec):
            raise SystemExit("--checkpoint and --codec are required for this mode")
        nlu = load_nlu_bundle(args.checkpoint, args.codec, getattr(args, "store", None))
    return DialogSystem(schema, db, RulePolicy(db, schema, rules), templates, nlu)


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    config_raw = _load_json(args.config) if args.config else {}
    corpus_path = args.corpus or config_raw.get("corpus")
    if not corpus_path:
        raise SystemExit("no corpus given (--corpus or config key 'corpus')")
    dialogues = load_corpus(corpus_path)
    examples = examples_from_corpus(dialogues)
    if not examples:
        raise SystemExit("corpus contains no user turns")
    rng = np.random.Generator(np.random.PCG64(args.seed))
    val_fraction = config_raw.get("val_fraction", 0.15)
    order = rng.permutation(len(examples))
    n_val = max(1, int(len(examples) * val_fraction))
    val = [examples[i] for i in order[:n_val]]
    tr = [examples[i] for i in order[n_val:]]

    texts = [ex.utterance for ex in examples] + [t for ex in examples for _s, t in ex.context]
    codec = bpe_train(texts, config_raw.get("merges", 600))
    config = NluConfig(**config_raw.get("model", {}))
    from .embeddings import ContextualEmbeddingProvider
    provider = ContextualEmbeddingProvider(config.d_ctx, args.store)

    result = train_nlu(tr, val, config, codec, provider, seed=args.seed,
                       epochs=args.epochs or config_raw.get("epochs", 5),
                       batch_size=args.batch or config_raw.get("batch_size", 16),
                       lr=config_raw.get("lr", 0.001), clip=config_raw.get("clip", 5.0),
                       log=lambda e: print(json.dumps(e)))
    os.makedirs(args.out, exist_ok=True)
    result.model.save(os.path.join(args.out, "model.ckpt"))
    codec.save(os.path.join(args.out, "codec.txt"))
    with open(os.path.join(args.out, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(result.history, fh, indent=1)
    print(f"saved model to {args.out} (best epoch {result.best_epoch})")
    return 0


def cmd_eval_nlu(args) -> int:
    bundle = load_nlu_bundle(args.checkpoint, args.codec, args.store)
    examples = examples_from_corpus(load_corpus(args.test))
    metrics = nlu_component_metrics(bundle.model, bundle.codec, bundle.provider, examples)
    print(f"{'':12s} {'R':>8s} {'P':>8s} {'F':>8s}")
    for part in ("intent", "tag", "overall"):
        print(f"{part:12s} {metrics[f'{part}_recall']:8.4f} "
              f"{metrics[f'{part}_precision']:8.4f} {metrics[f'{part}_f1']:8.4f}")
    print(f"tag repairs: {int(metrics['repairs'])}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=1)
    return 0


def cmd_simulate(args) -> int:
    schema = DomainSchema.load(args.schema)
    mode = "oracle" if args.oracle else "full"
    system = _build_system(args, schema, need_nlu=mode == "full")
    domains = args.domains.split(",") if args.domains else None
    logs = run_episodes(system, args.episodes, args.seed, mode=mode,
                        max_turns=args.max_turns, goal_domains=domains,
                        booking=not args.no_booking)
    report = compute_metrics(logs, schema, system.db, seed=args.seed,
                             max_turns=args.max_turns)
    print(format_report(report))
    if args.logs:
        save_logs(args.logs, logs)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=1)
    return 0


def cmd_mine_templates(args) -> int:
    schema = DomainSchema.load(args.schema)
    pairs = []
    for turns in load_corpus(args.corpus):
        for turn in turns:
            if turn["speaker"] == "sys" and turn.get("acts") and turn.get("text"):
                pairs.append((turn["acts"], turn["text"]))
    store = mine_templates(pairs, schema)
    store.save(args.out)
    print(f"mined {len(store.index)} templates from {len(pairs)} pairs "
          f"({store.skipped_pairs} skipped)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_json(args.config)
    schema = DomainSchema.load(cfg.get("schema"))
    db = DomainDb.load(cfg.get("db", DEFAULT_DB_DIR), schema, seed=cfg.get("seed", 0))
    rules = load_rule_table(cfg["rules"]) if cfg.get("rules") else None
    templates = TemplateStore.load(cfg["templates"], schema) if cfg.get("templates") else None
    nlu = load_nlu_bundle(cfg["checkpoint"], cfg["codec"], cfg.get("embeddings_store"))
    if "context_window" in cfg:
        nlu.model.config.context_window = int(cfg["context_window"])
    if "threshold" in cfg:
        nlu.model.config.threshold = float(cfg["threshold"])
    system = DialogSystem(schema, db, RulePolicy(db, schema, rules), templates, nlu)
    app = create_app(system, ttl_seconds=cfg.get("session_ttl_seconds", 3600),
                     transcript_dir=cfg.get("transcript_dir"))
    uvicorn.run(app, host=cfg.get("host", "127.0.0.1"), port=int(cfg.get("port", 8700)),
                log_level="warning")
    return 0


def cmd_chat(args) -> int:
    schema = DomainSchema.load(args.schema)
    system = _build_system(args, schema, need_nlu=True)
    session = system.new_session(seed=args.seed)
    print("chat started; empty line or ctrl-d exits")
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line:
            break
        response = system.respond_to_text(session, line)
        if args.verbose:
            print(f"  acts: {[(a.domain_intent, a.slot, a.value) for a in response.user_acts]}")
            print(f"  action: {response.action}")
        print(f"sys> {response.utterance}")
        if session.closed:
            break
    return 0


def cmd_ingest(args) -> int:
    if args.kind == "embeddings":
        from .embeddings import ingest_text_dump
        n = ingest_text_dump(args.src, args.out, args.d_ctx)
        print(f"wrote {n} vectors to {args.out}")
    elif args.kind == "multiwoz-corpus":
        dialogues = convert_multiwoz(_load_json(args.src))
        save_corpus(args.out, dialogues)
        print(f"wrote {len(dialogues)} dialogues to {args.out}")
    elif args.kind == "multiwoz-db":
        os.makedirs(args.out, exist_ok=True)
        for name in os.listdir(args.src):
            if not name.endswith("_db.json"):
                continue
            records = _load_json(os.path.join(args.src, name))
            if isinstance(records, list):
                records = [{str(k).lower(): str(v).lower() for k, v in rec.items()}
                           for rec in records]
            with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
                json.dump(records, fh, indent=1)
        print(f"normalized db files into {args.out}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contextdial",
                                     description="multi-domain dialogue pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the NLU on an annotated corpus")
    p.add_argument("--corpus")
    p.add_argument("--config", help="json config (corpus, merges, epochs, model.*)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--store", help="optional contextual embedding store")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-nlu", help="component metrics on an annotated test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--store")
    p.add_argument("--report")
    p.set_defaults(fn=cmd_eval_nlu)

    p = sub.add_parser("simulate", help="run seeded episodes against the simulator")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", action="store_true", help="exchange acts, bypass NLU/NLG")
    p.add_argument("--db", default=DEFAULT_DB_DIR)
    p.add_argument("--schema")
    p.add_argument("--rules")
    p.add_argument("--templates")
    p.add_argument("--checkpoint")
    p.add_argument("--codec")
    p.add_argument("--store")
    p.add_argument("--max-turns", type=int, default=40)
    p.add_argument("--domains", help="comma-separated goal domain whitelist")
    p.add_argument("--no-booking", action="store_true")
    p.add_argument("--logs", help="write per-episode logs (one json per line)")
    p.add_argument("--report", help="write the metrics report as json")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("mine-templates", help="mine templates from system turns")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema")
    p.set_defaults(fn=cmd_mine_templates)

    p = sub.add_parser("serve", help="run the http chat service")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("chat", help="terminal chat with the full pipeline")
    p.add_argument("--db", default=DEFAULT_DB_DIR)
    p.add_argument("--schema")
    p.add_argument("--rules")
    p.add_argument("--templates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--store")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_chat)

    p = sub.add_parser("ingest", help="convert external resources")
    p.add_argument("kind", choices=["embeddings", "multiwoz-corpus", "multiwoz-db"])
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d-ctx", type=int, default=768)
    p.set_defaults(fn=cmd_ingest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
