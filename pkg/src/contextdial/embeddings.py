"""Token embeddings: frozen contextual vectors concatenated with CharCNN features.

Contextual vectors come from a read-only binary store keyed by (sentence,
subword index); tokens missing from the store fall back to a deterministic
hash projection of the token string.  Only the CharCNN side is trainable.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .text import TokenizedUtterance

STORE_HEADER = struct.Struct("<IQ")     # d_ctx, record count
STORE_RECORD_KEY = struct.Struct("<QI")  # sentence-key hash, subword index


def sentence_key_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


def write_store(path, d_ctx: int, records: list[tuple[str, int, np.ndarray]]) -> None:
    """Records are (sentence key, subword index, vector of length d_ctx)."""
    with open(path, "wb") as fh:
        fh.write(STORE_HEADER.pack(d_ctx, len(records)))
        for key, index, vec in records:
            arr = np.asarray(vec, dtype="<f8")
            if arr.shape != (d_ctx,):
                raise ValueError(f"store vector for ({key!r}, {index}) has shape {arr.shape}, want ({d_ctx},)")
            fh.write(STORE_RECORD_KEY.pack(sentence_key_hash(key), index))
            fh.write(arr.tobytes())


def read_store(path) -> tuple[int, dict[tuple[int, int], np.ndarray]]:
    with open(path, "rb") as fh:
        head = fh.read(STORE_HEADER.size)
        if len(head) != STORE_HEADER.size:
            raise ValueError(f"embedding store {path}: truncated header")
        d_ctx, count = STORE_HEADER.unpack(head)
        table: dict[tuple[int, int], np.ndarray] = {}
        vec_bytes = 8 * d_ctx
        for _ in range(count):
            key_raw = fh.read(STORE_RECORD_KEY.size)
            vec_raw = fh.read(vec_bytes)
            if len(key_raw) != STORE_RECORD_KEY.size or len(vec_raw) != vec_bytes:
                raise ValueError(f"embedding store {path}: truncated record")
            key_hash, index = STORE_RECORD_KEY.unpack(key_raw)
            table[(key_hash, index)] = np.frombuffer(vec_raw, dtype="<f8").copy()
    return d_ctx, table


def ingest_text_dump(dump_path, store_path, d_ctx: int) -> int:
    """Convert a text dump (``<sentence-id> <position> <f0> <f1> ...`` per line)
    into the binary store format.  Returns the record count."""
    records: list[tuple[str, int, np.ndarray]] = []
    with open(dump_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 + d_ctx:
                raise ValueError(f"{dump_path}:{lineno}: expected 2+{d_ctx} fields, got {len(parts)}")
            records.append((parts[0], int(parts[1]), np.array([float(x) for x in parts[2:]])))
    write_store(store_path, d_ctx, records)
    return len(records)


class ContextualEmbeddingProvider:
    """Frozen per-subword vectors: store hits preferred, hash fallback otherwise."""

    def __init__(self, d_ctx: int, store_path=None):
        self.d_ctx = d_ctx
        self.table: dict[tuple[int, int], np.ndarray] = {}
        if store_path is not None:
            stored_dim, self.table = read_store(store_path)
            if stored_dim != d_ctx:
                raise ValueError(f"store dimension {stored_dim} != configured {d_ctx}")
        self.hits = 0
        self.misses = 0
        self._fallback_cache: dict[str, np.ndarray] = {}

    def _fallback(self, piece: str) -> np.ndarray:
        # unit-variance components, matching the scale of real contextual vectors
        vec = self._fallback_cache.get(piece)
        if vec is None:
            digest = hashlib.blake2b(piece.encode("utf-8"), digest_size=16).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
            vec = rng.standard_normal(self.d_ctx)
            self._fallback_cache[piece] = vec
        return vec

    def vectors(self, tok: TokenizedUtterance, sentence_key: str | None = None) -> list[np.ndarray]:
        out = []
        key_hash = sentence_key_hash(sentence_key) if sentence_key is not None else None
        for i, piece in enumerate(tok.pieces):
            vec = self.table.get((key_hash, i)) if key_hash is not None else None
            if vec is not None:
                self.hits += 1
            else:
                self.misses += 1
                vec = self._fallback(piece)
            out.append(vec)
        return out

    def fallback_fraction(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0


@dataclass
class CharCnnParams:
    """Character embedding table plus a width-k filter bank with max pooling."""

    char_vocab: dict[str, int]
    embedding: T.Parameter   # (vocab, char_dim)
    filters: T.Parameter     # (n_filters, kernel * char_dim)
    bias: T.Parameter        # (n_filters,)
    kernel: int

    @property
    def n_filters(self) -> int:
        return self.bias.value.shape[0]

    @staticmethod
    def create(rng: np.random.Generator, chars: list[str], char_dim: int = 16,
               n_filters: int = 128, kernel: int = 3, prefix: str = "char") -> "CharCnnParams":
        vocab = {"<unk>": 0}
        for c in sorted(set(chars)):
            vocab.setdefault(c, len(vocab))
        emb = T.Parameter(T.uniform_init(rng, (len(vocab), char_dim), char_dim), f"{prefix}.embedding")
        filt = T.Parameter(T.uniform_init(rng, (n_filters, kernel * char_dim), kernel * char_dim),
                           f"{prefix}.filters")
        bias = T.Parameter(np.zeros(n_filters), f"{prefix}.bias")
        return CharCnnParams(vocab, emb, filt, bias, kernel)

    def parameters(self) -> list[T.Parameter]:
        return [self.embedding, self.filters, self.bias]


def char_cnn_embed(word: str, params: CharCnnParams) -> T.Var:
    """Convolve character embeddings, tanh, then max-over-time pool."""
    if not word:
        return T.constant(np.zeros(params.n_filters))
    ids = [params.char_vocab.get(c, 0) for c in word]
    emb = T.rows_gather(params.embedding, ids)             # (t, char_dim)
    windows = T.char_windows(emb, params.kernel)           # (t, kernel*char_dim)
    responses = T.affine_rows(windows, params.filters, params.bias)
    return T.max_over_rows(T.tanh(responses))              # (n_filters,)


def token_embed(tok: TokenizedUtterance, provider: ContextualEmbeddingProvider,
                params: CharCnnParams | None, sentence_key: str | None = None) -> list[T.Var]:
    """Per-subword embedding: contextual vector ⊕ CharCNN vector of the piece."""
    ctx = provider.vectors(tok, sentence_key)
    out = []
    for piece, vec in zip(tok.pieces, ctx):
        frozen = T.constant(vec)
        if params is None:
            out.append(frozen)
        else:
            out.append(T.concat([frozen, char_cnn_embed(piece, params)]))
    return out
