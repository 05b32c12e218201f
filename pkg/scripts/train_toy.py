"""Generate the two-domain toy corpus, train the NLU on it, and save a runnable
model directory (checkpoint + codec + corpus + serve config).

    python scripts/train_toy.py --out var/toy_model --seed 1
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from contextdial.cli import DEFAULT_DB_DIR
from contextdial.db import DomainDb
from contextdial.embeddings import ContextualEmbeddingProvider
from contextdial.evaluation import nlu_component_metrics
from contextdial.nlu import NluConfig, examples_from_corpus, save_corpus, train
from contextdial.schema import DomainSchema
from contextdial.text import bpe_train
from contextdial.toygrammar import generate_dialogues


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="var/toy_model")
    parser.add_argument("--train-dialogues", type=int, default=600)
    parser.add_argument("--test-dialogues", type=int, default=120)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--merges", type=int, default=600)
    parser.add_argument("--context-window", type=int, default=3)
    args = parser.parse_args()

    schema = DomainSchema.load()
    db = DomainDb.load(DEFAULT_DB_DIR, schema, seed=3)
    print("generating corpus ...")
    train_d = generate_dialogues(args.train_dialogues, seed=11, schema=schema, db=db)
    test_d = generate_dialogues(args.test_dialogues, seed=999, schema=schema, db=db)
    train_examples = examples_from_corpus(train_d)
    test_examples = examples_from_corpus(test_d)
    print(f"  {len(train_examples)} train / {len(test_examples)} test user turns")

    texts = [e.utterance for e in train_examples] + \
        [t for e in train_examples for _s, t in e.context]
    codec = bpe_train(texts, args.merges)
    config = NluConfig(context_window=args.context_window, d_ctx=48, char_dim=12,
                       char_filters=24, char_kernel=3, token_hidden=24,
                       sentence_hidden=24, dropout=0.5)
    provider = ContextualEmbeddingProvider(config.d_ctx)

    t0 = time.time()
    result = train(train_examples, train_examples[:80], config, codec, provider,
                   seed=args.seed, epochs=args.epochs, batch_size=args.batch,
                   log=lambda e: print(json.dumps(e)))
    print(f"trained in {time.time() - t0:.0f}s (best epoch {result.best_epoch})")

    metrics = nlu_component_metrics(result.model, codec, provider, test_examples)
    print(f"test: intent F1 {metrics['intent_f1']:.3f}  tag F1 {metrics['tag_f1']:.3f}  "
          f"overall F1 {metrics['overall_f1']:.3f}")

    os.makedirs(args.out, exist_ok=True)
    result.model.save(os.path.join(args.out, "model.ckpt"))
    codec.save(os.path.join(args.out, "codec.txt"))
    save_corpus(os.path.join(args.out, "train_corpus.json"), train_d)
    save_corpus(os.path.join(args.out, "test_corpus.json"), test_d)
    with open(os.path.join(args.out, "history.json"), "w") as fh:
        json.dump(result.history, fh, indent=1)
    serve_cfg = {
        "checkpoint": os.path.join(args.out, "model.ckpt"),
        "codec": os.path.join(args.out, "codec.txt"),
        "db": DEFAULT_DB_DIR,
        "host": "127.0.0.1",
        "port": 8700,
    }
    with open(os.path.join(args.out, "serve.json"), "w") as fh:
        json.dump(serve_cfg, fh, indent=1)
    print(f"model directory written to {args.out}")
    print(f"serve it with: python -m contextdial.cli serve --config {args.out}/serve.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
