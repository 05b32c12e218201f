"""Two-headed NLU over hierarchical context.

Token level: each subword embedding (frozen contextual vector ⊕ CharCNN) of
the user utterance and of the stacked dialogue context runs through its own
BiLSTM.  Sentence level: two further BiLSTMs over the utterance states feed
the classification and tagging paths; the classification path's final state
queries a bilinear attention over the context states.  Heads: a multi-label
domain-intent classifier and a per-subword BIOX tagger.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .. import tensor as T
from ..acts import DialogAct, split_span_label
from ..embeddings import CharCnnParams, ContextualEmbeddingProvider, token_embed
from ..text import BpeCodec, SlotSpan, TokenizedUtterance, biox_decode, tokenize
from .corpus import TrainingExample, build_context


@dataclass
class NluConfig:
    context_window: int = 4
    threshold: float = 0.5
    d_ctx: int = 768
    char_dim: int = 16
    char_filters: int = 128
    char_kernel: int = 3
    token_hidden: int = 200
    sentence_hidden: int = 200
    dropout: float = 0.5
    use_char_cnn: bool = True
    use_intent_attention: bool = True
    use_tag_context: bool = True

    @property
    def token_input_dim(self) -> int:
        return self.d_ctx + (self.char_filters if self.use_char_cnn else 0)

    @property
    def token_out_dim(self) -> int:
        return 2 * self.token_hidden

    @property
    def sentence_out_dim(self) -> int:
        return 2 * self.sentence_hidden

    @property
    def intent_concat_dim(self) -> int:
        base = self.sentence_out_dim
        if self.use_intent_attention:
            base += self.token_out_dim * 2  # attended context + last dc state
        return base

    @property
    def tag_concat_dim(self) -> int:
        base = self.sentence_out_dim
        if self.use_tag_context:
            base += self.token_out_dim * 2
        return base


@dataclass
class BiLstmParams:
    fwd: T.LstmParams
    bwd: T.LstmParams

    @staticmethod
    def create(rng, input_size: int, hidden_size: int, name: str) -> "BiLstmParams":
        return BiLstmParams(
            T.LstmParams.create(rng, input_size, hidden_size, f"{name}.fwd"),
            T.LstmParams.create(rng, input_size, hidden_size, f"{name}.bwd"))

    def parameters(self) -> list[T.Parameter]:
        return self.fwd.parameters() + self.bwd.parameters()


@dataclass
class NluOutput:
    intent_probs: dict[str, float]
    predicted_labels: list[str]
    tags: list[str]
    tag_distributions: np.ndarray
    acts: list[DialogAct]
    spans: list[SlotSpan]
    repairs: int
    attention: np.ndarray | None
    tokens: TokenizedUtterance


class NluModel:
    def __init__(self, config: NluConfig, labels: list[str], tags: list[str],
                 rng: np.random.Generator, charset: list[str] | None = None):
        if "O" not in tags:
            raise ValueError("tag inventory must contain O")
        self.config = config
        self.labels = list(labels)
        self.tags = list(tags)
        c = config
        self.char: CharCnnParams | None = None
        if c.use_char_cnn:
            charset = charset or [chr(x) for x in range(ord("a"), ord("z") + 1)] + \
                list("0123456789'<>/-:.,?! ")
            self.char = CharCnnParams.create(rng, charset, c.char_dim, c.char_filters,
                                             c.char_kernel)
        self.tok_uu = BiLstmParams.create(rng, c.token_input_dim, c.token_hidden, "tok_uu")
        self.tok_dc = BiLstmParams.create(rng, c.token_input_dim, c.token_hidden, "tok_dc")
        self.sent_intent = BiLstmParams.create(rng, c.token_out_dim, c.sentence_hidden, "sent_intent")
        self.sent_tag = BiLstmParams.create(rng, c.token_out_dim, c.sentence_hidden, "sent_tag")
        self.attn_m = T.Parameter(
            T.uniform_init(rng, (c.sentence_out_dim, c.token_out_dim), c.token_out_dim), "attn.m")
        self.intent_head_w = T.Parameter(
            T.uniform_init(rng, (len(labels), c.intent_concat_dim), c.intent_concat_dim),
            "intent_head.w")
        self.intent_head_b = T.Parameter(np.zeros(len(labels)), "intent_head.b")
        self.tag_head_w = T.Parameter(
            T.uniform_init(rng, (len(tags), c.tag_concat_dim), c.tag_concat_dim), "tag_head.w")
        self.tag_head_b = T.Parameter(np.zeros(len(tags)), "tag_head.b")

    def parameters(self) -> list[T.Parameter]:
        params: list[T.Parameter] = []
        if self.char is not None:
            params += self.char.parameters()
        for block in (self.tok_uu, self.tok_dc, self.sent_intent, self.sent_tag):
            params += block.parameters()
        params += [self.attn_m, self.intent_head_w, self.intent_head_b,
                   self.tag_head_w, self.tag_head_b]
        return params

    # -- encoding -----------------------------------------------------------

    def _embed(self, tok: TokenizedUtterance, provider, key: str | None) -> list[T.Var]:
        return token_embed(tok, provider, self.char, key)

    def _dropout_seq(self, seq: list[T.Var], rng, train: bool) -> list[T.Var]:
        if not train or self.config.dropout <= 0.0:
            return seq
        return [T.elem_mul_const(v, T.dropout_mask(v.value.shape, self.config.dropout, rng))
                for v in seq]

    def token_level_encode(self, uu_tok: TokenizedUtterance, dc_tok: TokenizedUtterance,
                           provider, train: bool = False, rng=None,
                           uu_key: str | None = None, dc_key: str | None = None
                           ) -> tuple[list[T.Var], list[T.Var]]:
        if len(uu_tok) == 0:
            raise T.EmptyInputError("token_level_encode: empty user utterance")
        if len(dc_tok) == 0:
            raise T.EmptyInputError("token_level_encode: empty dialogue context")
        e_uu = self._dropout_seq(self._embed(uu_tok, provider, uu_key), rng, train)
        e_dc = self._dropout_seq(self._embed(dc_tok, provider, dc_key), rng, train)
        h_uu = T.bilstm_encode(e_uu, self.tok_uu.fwd, self.tok_uu.bwd)
        h_dc = T.bilstm_encode(e_dc, self.tok_dc.fwd, self.tok_dc.bwd)
        return h_uu, h_dc

    def sentence_level_encode(self, h_uu: list[T.Var], h_dc: list[T.Var],
                              train: bool = False, rng=None
                              ) -> tuple[T.Var, T.Var, np.ndarray]:
        """Returns (intent concat vector, per-step tag concat matrix, attention weights)."""
        in_intent = self._dropout_seq(h_uu, rng, train)
        in_tag = self._dropout_seq(h_uu, rng, train)
        h_intent = T.bilstm_encode(in_intent, self.sent_intent.fwd, self.sent_intent.bwd)
        h_tag = T.bilstm_encode(in_tag, self.sent_tag.fwd, self.sent_tag.bwd)
        ctx, weights = T.bilinear_attention(h_intent[-1], h_dc, self.attn_m)
        last_dc = h_dc[-1]
        if self.config.use_intent_attention:
            intent_concat = T.concat([ctx, last_dc, h_intent[-1]])
        else:
            intent_concat = h_intent[-1]
        if self.config.use_tag_context:
            rows = [T.concat([ctx, last_dc, h_t]) for h_t in h_tag]
        else:
            rows = h_tag
        return intent_concat, T.stack_rows(rows), weights

    def forward(self, uu_tok: TokenizedUtterance, dc_tok: TokenizedUtterance, provider,
                train: bool = False, rng=None, uu_key: str | None = None,
                dc_key: str | None = None) -> tuple[T.Var, T.Var, np.ndarray]:
        h_uu, h_dc = self.token_level_encode(uu_tok, dc_tok, provider, train, rng, uu_key, dc_key)
        intent_concat, tag_rows, weights = self.sentence_level_encode(h_uu, h_dc, train, rng)
        intent_logits = T.affine(intent_concat, self.intent_head_w, self.intent_head_b)
        tag_logits = T.affine_rows(tag_rows, self.tag_head_w, self.tag_head_b)
        return intent_logits, tag_logits, weights

    # -- prediction ---------------------------------------------------------

    def predict_domain_intent(self, intent_logits: np.ndarray) -> tuple[dict[str, float], list[str]]:
        probs = 1.0 / (1.0 + np.exp(-intent_logits))
        prob_map = {label: float(p) for label, p in zip(self.labels, probs)}
        chosen = [label for label, p in zip(self.labels, probs) if p >= self.config.threshold]
        if not chosen and self.labels:
            chosen = [self.labels[int(np.argmax(probs))]]
        return prob_map, chosen

    def predict_tags(self, tag_logits: np.ndarray) -> tuple[list[str], np.ndarray]:
        z = tag_logits - tag_logits.max(axis=1, keepdims=True)
        dist = np.exp(z)
        dist /= dist.sum(axis=1, keepdims=True)
        ids = np.argmax(tag_logits, axis=1)
        return [self.tags[i] for i in ids], dist

    def decode_acts(self, predicted_labels: list[str], tags: list[str],
                    tok: TokenizedUtterance) -> tuple[list[DialogAct], list[SlotSpan], int]:
        spans, repairs = biox_decode(tok, tags)
        acts: list[DialogAct] = []
        covered: set[str] = set()
        for span in spans:
            di, slot = split_span_label(span.label)
            domain, _, intent = di.partition("-")
            value = "?" if intent == "Request" else span.value
            acts.append(DialogAct(domain, intent, slot, value))
            covered.add(di)
        for label in predicted_labels:
            if label not in covered:
                domain, _, intent = label.partition("-")
                acts.append(DialogAct(domain, intent, "none", "none"))
        return acts, spans, repairs

    def parse(self, utterance: str, history: list[tuple[str, str]], codec: BpeCodec,
              provider: ContextualEmbeddingProvider, uu_key: str | None = None,
              dc_key: str | None = None) -> NluOutput:
        uu_tok = tokenize(utterance, codec)
        if len(uu_tok) == 0:
            raise T.EmptyInputError("parse: empty user utterance")
        _, dc_text = build_context(history, self.config.context_window)
        dc_tok = tokenize(dc_text, codec)
        intent_logits, tag_logits, weights = self.forward(
            uu_tok, dc_tok, provider, train=False, uu_key=uu_key, dc_key=dc_key)
        prob_map, chosen = self.predict_domain_intent(intent_logits.value)
        tags, dist = self.predict_tags(tag_logits.value)
        acts, spans, repairs = self.decode_acts(chosen, tags, uu_tok)
        return NluOutput(prob_map, chosen, tags, dist, acts, spans, repairs, weights, uu_tok)

    # -- loss ---------------------------------------------------------------

    def example_loss(self, example: TrainingExample, codec: BpeCodec, provider,
                     gold_tags: list[int], train: bool = True, rng=None) -> T.Var:
        uu_tok = tokenize(example.utterance, codec)
        _, dc_text = build_context(example.context, self.config.context_window)
        dc_tok = tokenize(dc_text, codec)
        intent_logits, tag_logits, _ = self.forward(
            uu_tok, dc_tok, provider, train=train, rng=rng, uu_key=example.key or None)
        targets = np.zeros(len(self.labels))
        for label in example.labels:
            if label in self.labels:
                targets[self.labels.index(label)] = 1.0
        return T.add(T.multilabel_bce_loss(intent_logits, targets),
                     T.tag_xent_loss(tag_logits, gold_tags))

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        params = {p.name: p.value for p in self.parameters()}
        manifest = {
            "config": json.dumps(asdict(self.config)),
            "labels": json.dumps(self.labels),
            "tags": json.dumps(self.tags),
            "char_vocab": json.dumps(self.char.char_vocab if self.char else None),
        }
        T.save_checkpoint(path, params, manifest)

    @staticmethod
    def load(path) -> "NluModel":
        params, manifest = T.load_checkpoint(path)
        config = NluConfig(**json.loads(manifest["config"]))
        labels = json.loads(manifest["labels"])
        tags = json.loads(manifest["tags"])
        model = NluModel(config, labels, tags, np.random.Generator(np.random.PCG64(0)))
        if config.use_char_cnn:
            char_vocab = json.loads(manifest["char_vocab"])
            model.char.char_vocab = char_vocab
            # table size may differ from the fresh charset
            model.char.embedding.value = params["char.embedding"]
            model.char.embedding.grad = np.zeros_like(params["char.embedding"])
        for p in model.parameters():
            if p.value.shape != params[p.name].shape:
                p.value = params[p.name].copy()
                p.grad = np.zeros_like(p.value)
            else:
                p.value[...] = params[p.name]
        return model
