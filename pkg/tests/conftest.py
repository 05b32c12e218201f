import json
import os
import time

import numpy as np
import pytest

from contextdial.cli import DEFAULT_DB_DIR
from contextdial.db import DomainDb
from contextdial.embeddings import ContextualEmbeddingProvider
from contextdial.nlu import NluConfig, examples_from_corpus, train
from contextdial.nlu.model import NluModel
from contextdial.schema import DomainSchema
from contextdial.text import BpeCodec, bpe_train
from contextdial.toygrammar import generate_dialogues

CACHE_DIR = os.path.join(os.path.dirname(__file__), "..", "var", "toycache")

# one knob for the whole desk-scale experiment
TOY_TRAIN_DIALOGUES = 600
TOY_TEST_DIALOGUES = 120
TOY_SEED = 1
TOY_MERGES = 600
TOY_EPOCHS = 5
TOY_BATCH = 4
TOY_CONFIG = dict(context_window=3, d_ctx=48, char_dim=12, char_filters=24,
                  char_kernel=3, token_hidden=24, sentence_hidden=24, dropout=0.5)


@pytest.fixture(scope="session")
def schema():
    return DomainSchema.load()


@pytest.fixture(scope="session")
def db(schema):
    return DomainDb.load(DEFAULT_DB_DIR, schema, seed=3)


@pytest.fixture(scope="session")
def toy_corpus(schema, db):
    train_d = generate_dialogues(TOY_TRAIN_DIALOGUES, seed=11, schema=schema, db=db)
    test_d = generate_dialogues(TOY_TEST_DIALOGUES, seed=999, schema=schema, db=db)
    return examples_from_corpus(train_d), examples_from_corpus(test_d), train_d, test_d


def _train_toy(train_examples, config_overrides, seed, epochs, batch):
    texts = [e.utterance for e in train_examples] + \
        [t for e in train_examples for _s, t in e.context]
    codec = bpe_train(texts, TOY_MERGES)
    config = NluConfig(**{**TOY_CONFIG, **config_overrides})
    provider = ContextualEmbeddingProvider(config.d_ctx)
    result = train(train_examples, train_examples[:80], config, codec, provider,
                   seed=seed, epochs=epochs, batch_size=batch)
    return result.model, codec, provider


def _cached_toy_model(name, train_examples, config_overrides):
    """Train once per configuration; later runs load the checkpoint.  The wall
    time of the actual training run is kept alongside for timing assertions."""
    os.makedirs(CACHE_DIR, exist_ok=True)
    ckpt = os.path.join(CACHE_DIR, f"{name}.ckpt")
    codec_path = os.path.join(CACHE_DIR, f"{name}.codec")
    time_path = os.path.join(CACHE_DIR, f"{name}.time.json")
    if os.path.exists(ckpt) and os.path.exists(codec_path) and os.path.exists(time_path):
        model = NluModel.load(ckpt)
        codec = BpeCodec.load(codec_path)
        return model, codec, ContextualEmbeddingProvider(model.config.d_ctx)
    t0 = time.time()
    model, codec, provider = _train_toy(train_examples, config_overrides,
                                        TOY_SEED, TOY_EPOCHS, TOY_BATCH)
    with open(time_path, "w", encoding="utf-8") as fh:
        json.dump({"seconds": time.time() - t0}, fh)
    model.save(ckpt)
    codec.save(codec_path)
    return model, codec, provider


def training_seconds(name):
    with open(os.path.join(CACHE_DIR, f"{name}.time.json"), encoding="utf-8") as fh:
        return json.load(fh)["seconds"]


@pytest.fixture(scope="session")
def toy_model(toy_corpus):
    train_examples, _, _, _ = toy_corpus
    return _cached_toy_model("toy", train_examples, {})


@pytest.fixture(scope="session")
def toy_model_no_context(toy_corpus):
    train_examples, _, _, _ = toy_corpus
    return _cached_toy_model("toy_w0", train_examples, {"context_window": 0})


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(12345))
