"""Text normalization, byte-pair subword encoding and BIOX span tagging.

The tag alphabet is {B-label, I-label, O, X}: B/I mark word-initial subwords
of a span, X marks every non-initial subword of any word, O everything else.
Decoding reads only word-initial positions, so alignment round trips exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

END_OF_WORD = "</w>"
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
USER_MARKER = "<usr>"
SYSTEM_MARKER = "<sys>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, USER_MARKER, SYSTEM_MARKER)


class AnnotationError(ValueError):
    """Span annotations are inconsistent with the utterance."""


def normalize(text: str) -> str:
    """Lowercase and collapse all whitespace runs to single spaces."""
    return " ".join(text.lower().split())


def strip_marker(piece: str) -> str:
    """Surface string of a subword piece without the end-of-word marker."""
    return piece[:-len(END_OF_WORD)] if piece.endswith(END_OF_WORD) else piece


@dataclass
class BpeCodec:
    """Learned merge list plus token vocabulary.

    Merges apply in learned order, so encoding is deterministic; every base
    character seen at training time stays in the vocabulary, so any training
    word round-trips losslessly.
    """

    merges: list[tuple[str, str]]
    vocab: dict[str, int]
    inv_vocab: dict[int, str] = field(init=False)

    def __post_init__(self):
        self.inv_vocab = {i: t for t, i in self.vocab.items()}

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK_TOKEN]

    def encode_word(self, word: str) -> list[str]:
        """Split one word into subword pieces (last piece carries </w>)."""
        if not word:
            return []
        symbols = list(word[:-1]) + [word[-1] + END_OF_WORD]
        for left, right in self.merges:
            if len(symbols) == 1:
                break
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                    merged.append(left + right)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return symbols

    def decode_pieces(self, pieces: list[str]) -> str:
        return "".join(strip_marker(p) for p in pieces)

    def piece_id(self, piece: str) -> int:
        return self.vocab.get(piece, self.unk_id)

    def save(self, path) -> None:
        """Plain text: one merge pair per line, then a token/id section."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("#merges\n")
            for left, right in self.merges:
                fh.write(f"{left}\t{right}\n")
            fh.write("#vocab\n")
            for token, idx in sorted(self.vocab.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\n")

    @staticmethod
    def load(path) -> "BpeCodec":
        merges: list[tuple[str, str]] = []
        vocab: dict[str, int] = {}
        section = None
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line == "#merges":
                    section = "merges"
                    continue
                if line == "#vocab":
                    section = "vocab"
                    continue
                if not line:
                    continue
                left, _, right = line.partition("\t")
                if section == "merges":
                    merges.append((left, right))
                elif section == "vocab":
                    vocab[left] = int(right)
        return BpeCodec(merges, vocab)


def bpe_train(corpus: list[str], num_merges: int) -> BpeCodec:
    """Learn up to ``num_merges`` merges by iteratively joining the most
    frequent adjacent symbol pair; frequency ties break lexicographically."""
    if not corpus:
        raise ValueError("bpe_train: empty corpus")
    if num_merges < 0:
        raise ValueError(f"bpe_train: num_merges must be >= 0, got {num_merges}")
    word_counts: Counter[str] = Counter()
    for text in corpus:
        for word in normalize(text).split():
            word_counts[word] += 1
    words = {w: list(w[:-1]) + [w[-1] + END_OF_WORD] for w in word_counts}

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts: Counter[tuple[str, str]] = Counter()
        for w, symbols in words.items():
            n = word_counts[w]
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] += n
        if not pair_counts:
            break
        best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        left, right = best
        for w, symbols in words.items():
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
                    merged.append(left + right)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            words[w] = merged

    tokens: set[str] = set()
    for w in word_counts:
        tokens.update(c for c in w[:-1])
        tokens.add(w[-1] + END_OF_WORD)
    for left, right in merges:
        tokens.add(left + right)
    vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for tok in sorted(tokens):
        vocab[tok] = len(vocab)
    return BpeCodec(merges, vocab)


@dataclass
class TokenizedUtterance:
    """A normalized utterance with its subword segmentation.

    ``word_of_subword[i]`` is the index of the word that produced subword i;
    the mapping is non-decreasing and covers every word.
    """

    raw: str
    words: list[str]
    subwords: list[int]
    pieces: list[str]
    word_of_subword: list[int]

    def __len__(self) -> int:
        return len(self.subwords)

    def word_initial(self, i: int) -> bool:
        return i == 0 or self.word_of_subword[i] != self.word_of_subword[i - 1]


def tokenize(text: str, codec: BpeCodec) -> TokenizedUtterance:
    norm = normalize(text)
    words = norm.split()
    subwords: list[int] = []
    pieces: list[str] = []
    word_of_subword: list[int] = []
    for wi, word in enumerate(words):
        if word in SPECIAL_TOKENS:
            word_pieces = [word]
        else:
            word_pieces = codec.encode_word(word)
        for piece in word_pieces:
            pieces.append(strip_marker(piece))
            subwords.append(codec.piece_id(piece))
            word_of_subword.append(wi)
    return TokenizedUtterance(norm, words, subwords, pieces, word_of_subword)


@dataclass
class SlotSpan:
    """A decoded slot span over whole words."""

    label: str
    value: str
    first_word: int
    last_word: int


def biox_align(tok: TokenizedUtterance, spans: list[tuple[str, int, int]]) -> list[str]:
    """Project word-level spans onto subword BIOX tags."""
    n_words = len(tok.words)
    owner: dict[int, tuple[str, int]] = {}
    for label, first, last in spans:
        if first < 0 or last >= n_words or first > last:
            raise AnnotationError(f"span ({label}, {first}, {last}) outside 0..{n_words - 1}")
        for w in range(first, last + 1):
            if w in owner:
                raise AnnotationError(
                    f"overlapping spans at word {w}: {owner[w][0]} and {label}")
            owner[w] = (label, first)
    tags = []
    for i in range(len(tok)):
        if not tok.word_initial(i):
            tags.append("X")
            continue
        w = tok.word_of_subword[i]
        if w in owner:
            label, first = owner[w]
            tags.append(("B-" if w == first else "I-") + label)
        else:
            tags.append("O")
    return tags


def biox_decode(tok: TokenizedUtterance, tags: list[str]) -> tuple[list[SlotSpan], int]:
    """Recover word-level spans from subword tags.

    Malformed I-tags (no preceding B/I of the same label) are repaired by
    treating them as B; the repair count is returned alongside the spans.
    """
    if len(tags) != len(tok):
        raise AnnotationError(f"{len(tags)} tags for {len(tok)} subwords")
    word_tags: list[str] = []
    for i, tag in enumerate(tags):
        if tok.word_initial(i):
            word_tags.append(tag)
    spans: list[SlotSpan] = []
    repairs = 0
    current: tuple[str, int] | None = None  # (label, first_word)

    def close(last_word: int):
        nonlocal current
        if current is not None:
            label, first = current
            value = " ".join(tok.words[first:last_word + 1])
            spans.append(SlotSpan(label, value, first, last_word))
            current = None

    for w, tag in enumerate(word_tags):
        if tag.startswith("B-"):
            close(w - 1)
            current = (tag[2:], w)
        elif tag.startswith("I-"):
            if current is not None and current[0] == tag[2:]:
                continue
            close(w - 1)
            repairs += 1
            current = (tag[2:], w)
        else:  # O or X (X on a word-initial position is treated as O)
            close(w - 1)
    close(len(word_tags) - 1)
    return spans, repairs
