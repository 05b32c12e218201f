"""Training loop: ADAM with gradient-norm clipping, per-epoch validation,
best-overall-F1 checkpointing, fully reproducible from one seed."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..text import BpeCodec, biox_align, tokenize
from .corpus import TrainingExample
from .model import NluConfig, NluModel


@dataclass
class TrainResult:
    model: NluModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1


def build_inventories(examples: list[TrainingExample]) -> tuple[list[str], list[str]]:
    labels = sorted({label for ex in examples for label in ex.labels})
    span_labels = sorted({s[0] for ex in examples for s in ex.spans})
    tags = ["O", "X"]
    for sl in span_labels:
        tags.append(f"B-{sl}")
        tags.append(f"I-{sl}")
    return labels, tags


def corpus_charset(examples: list[TrainingExample]) -> list[str]:
    chars: set[str] = set("<>usrpadk/")
    for ex in examples:
        chars.update(ex.utterance.lower())
        for _speaker, text in ex.context:
            chars.update(text.lower())
    chars.discard(" ")
    return sorted(chars)


def gold_tag_ids(example: TrainingExample, codec: BpeCodec, tags: list[str]) -> list[int] | None:
    """Subword gold tag ids, or None when a span label is outside the inventory."""
    tok = tokenize(example.utterance, codec)
    tag_index = {t: i for i, t in enumerate(tags)}
    try:
        strs = biox_align(tok, example.spans)
    except ValueError:
        return None
    ids = []
    for t in strs:
        if t not in tag_index:
            return None
        ids.append(tag_index[t])
    return ids


def batch_loss(model: NluModel, examples: list[TrainingExample], codec: BpeCodec,
               provider, gold: list[list[int]], rng=None, train: bool = True) -> T.Var:
    """Mean of per-example joint losses (classification BCE + tag cross-entropy)."""
    if not examples:
        raise ValueError("batch_loss: empty batch")
    total = None
    for ex, g in zip(examples, gold):
        loss = model.example_loss(ex, codec, provider, g, train=train, rng=rng)
        total = loss if total is None else T.add(total, loss)
    return T.scale(total, 1.0 / len(examples))


def train(train_examples: list[TrainingExample], val_examples: list[TrainingExample],
          config: NluConfig, codec: BpeCodec, provider, seed: int = 0, epochs: int = 5,
          batch_size: int = 16, lr: float = 0.001, clip: float = 5.0,
          log=None) -> TrainResult:
    from ..evaluation import nlu_component_metrics

    if not train_examples:
        raise ValueError("train: empty training set")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels, tags = build_inventories(train_examples)
    model = NluModel(config, labels, tags, rng, corpus_charset(train_examples))
    params = model.parameters()
    adam = T.AdamState(learning_rate=lr)

    usable: list[tuple[TrainingExample, list[int]]] = []
    for ex in train_examples:
        g = gold_tag_ids(ex, codec, tags)
        if g is not None:
            usable.append((ex, g))

    result = TrainResult(model)
    best_f1 = -1.0
    best_params: dict[str, np.ndarray] = {}
    for epoch in range(epochs):
        t0 = time.time()
        order = rng.permutation(len(usable))
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            batch = [usable[i] for i in chunk]
            loss = batch_loss(model, [b[0] for b in batch], codec, provider,
                              [b[1] for b in batch], rng=rng, train=True)
            T.backward(loss)
            epoch_loss += float(loss.value) * len(batch)
            T.clip_global_norm(params, clip)
            T.adam_step(params, adam)
        metrics = nlu_component_metrics(model, codec, provider, val_examples)
        entry = {
            "epoch": epoch,
            "train_loss": epoch_loss / max(1, len(usable)),
            "seconds": time.time() - t0,
            **{f"val_{k}": v for k, v in metrics.items()},
        }
        result.history.append(entry)
        if log is not None:
            log(entry)
        if metrics["overall_f1"] > best_f1:
            best_f1 = metrics["overall_f1"]
            result.best_epoch = epoch
            best_params = {p.name: p.value.copy() for p in params}
    if best_params:
        for p in params:
            p.value[...] = best_params[p.name]
    return result
