from .corpus import (DialogContextWindow, TrainingExample, build_context,
                     convert_multiwoz, examples_from_corpus, load_corpus, save_corpus)
from .model import BiLstmParams, NluConfig, NluModel, NluOutput
from .train import TrainResult, batch_loss, build_inventories, gold_tag_ids, train

__all__ = [
    "BiLstmParams", "DialogContextWindow", "NluConfig", "NluModel", "NluOutput",
    "TrainResult", "TrainingExample", "batch_loss", "build_context",
    "build_inventories", "convert_multiwoz", "examples_from_corpus",
    "gold_tag_ids", "load_corpus", "save_corpus", "train",
]
