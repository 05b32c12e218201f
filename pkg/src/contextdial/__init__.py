"""Multi-domain task-oriented dialogue pipeline.

Context-aware NLU (frozen contextual embeddings + CharCNN, stacked BiLSTMs,
bilinear attention over dialogue history, multi-label intent and BIOX slot
heads), a rule dialogue-state tracker and policy over per-domain entity
databases, multi-intent template generation, an agenda-based user simulator
and the automatic evaluation harness that ties them together.
"""

__version__ = "0.1.0"
