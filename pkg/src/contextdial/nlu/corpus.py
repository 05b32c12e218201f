"""Annotated corpus: per-turn acts and word-level slot spans, plus converters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..acts import span_label
from ..text import PAD_TOKEN, SYSTEM_MARKER, USER_MARKER


@dataclass
class TrainingExample:
    utterance: str
    context: list[tuple[str, str]]          # (speaker, text), oldest first
    labels: list[str]                        # gold domain-intent set
    spans: list[tuple[str, int, int]]        # (label+slot, first_word, last_word)
    key: str = ""                            # sentence key for the embedding store
    meta: dict = field(default_factory=dict)


@dataclass
class DialogContextWindow:
    turns: list[tuple[str, str]]
    w: int


def build_context(history: list[tuple[str, str]], w: int) -> tuple[DialogContextWindow, str]:
    """Last ``w`` turns as one marker-delimited text; empty context is a pad token."""
    if w < 0:
        raise ValueError(f"context window must be >= 0, got {w}")
    turns = list(history[-w:]) if w > 0 else []
    window = DialogContextWindow(turns, w)
    if not turns:
        return window, PAD_TOKEN
    parts = []
    for speaker, text in turns:
        marker = USER_MARKER if speaker.lower().startswith("u") else SYSTEM_MARKER
        parts.append(f"{marker} {text}")
    return window, " ".join(parts)


def save_corpus(path, dialogues: list[list[dict]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"dialogues": [{"turns": turns} for turns in dialogues]}, fh, indent=1)


def load_corpus(path) -> list[list[dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return [d["turns"] for d in raw["dialogues"]]


def examples_from_corpus(dialogues: list[list[dict]]) -> list[TrainingExample]:
    """One example per user turn; context carries every completed prior turn."""
    examples = []
    for di, turns in enumerate(dialogues):
        history: list[tuple[str, str]] = []
        for ti, turn in enumerate(turns):
            speaker = turn["speaker"]
            text = turn["text"]
            if speaker == "user":
                examples.append(TrainingExample(
                    utterance=text,
                    context=list(history),
                    labels=sorted(turn.get("acts", {})),
                    spans=[tuple(s) for s in turn.get("spans", [])],
                    key=f"d{di}:t{ti}",
                    meta=dict(turn.get("meta", {})),
                ))
            history.append((speaker, text))
    return examples


def convert_multiwoz(raw: dict) -> list[list[dict]]:
    """Convert MultiWOZ-style {id: {"log": [...]}} records into corpus turns.

    Each log entry carries "text", "dialog_act" and "span_info"
    ([di, slot, value, first_word, last_word]); log entries alternate
    user/system starting with the user.
    """
    dialogues = []
    for _dial_id, dial in sorted(raw.items()):
        turns = []
        for i, entry in enumerate(dial.get("log", [])):
            speaker = "user" if i % 2 == 0 else "sys"
            turn = {"speaker": speaker, "text": entry.get("text", "")}
            if speaker == "user":
                turn["acts"] = {di: [[s, v] for s, v in pairs]
                                for di, pairs in entry.get("dialog_act", {}).items()}
                spans = []
                for di, slot, _value, first, last in entry.get("span_info", []):
                    spans.append([span_label(di, slot), int(first), int(last)])
                turn["spans"] = spans
            turns.append(turn)
        dialogues.append(turns)
    return dialogues
