"""Print the analytic-vs-finite-difference error for every differentiable op
and for the full two-headed model loss at reduced dimensions."""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from contextdial import tensor as T
from contextdial.embeddings import CharCnnParams, ContextualEmbeddingProvider, char_cnn_embed
from contextdial.nlu import NluConfig, NluModel, TrainingExample, batch_loss, gold_tag_ids
from contextdial.text import bpe_train

rng = np.random.Generator(np.random.PCG64(0))
rows = []

w = T.Parameter(rng.standard_normal((4, 3)), "w")
b = T.Parameter(rng.standard_normal(4), "b")
x = T.Parameter(rng.standard_normal(3), "x")
rows.append(("affine", T.gradcheck(lambda: T.vsum(T.affine(x, w, b)), [w, b, x])))

sx = T.Parameter(rng.standard_normal(6), "sx")
mix = T.constant(rng.standard_normal(6))
rows.append(("softmax", T.gradcheck(lambda: T.vsum(T.mul(T.softmax(sx), mix)), [sx])))

p = T.LstmParams.create(rng, 3, 4, "cell")
h0 = T.Parameter(rng.standard_normal(4) * 0.3, "h0")
c0 = T.Parameter(rng.standard_normal(4) * 0.3, "c0")
lx = T.Parameter(rng.standard_normal(3), "lx")


def lstm_loss():
    h, c = T.lstm_step(lx, h0, c0, p)
    return T.vsum(T.add(h, T.mul(c, c)))


rows.append(("lstm_step", T.gradcheck(lstm_loss, [p.w, p.b, lx, h0, c0])))

pf = T.LstmParams.create(rng, 3, 2, "pf")
pb = T.LstmParams.create(rng, 3, 2, "pb")
m = T.Parameter(rng.standard_normal((4, 4)) * 0.4, "m")
seq = [T.Parameter(rng.standard_normal(3), f"s{i}") for i in range(4)]


def encoder_loss():
    hs = T.bilstm_encode(seq, pf, pb)
    ctx, _ = T.bilinear_attention(hs[-1], hs, m)
    return T.vsum(T.mul(ctx, ctx))


rows.append(("bilstm+attention", T.gradcheck(encoder_loss, [pf.w, pf.b, pb.w, pb.b, m] + seq)))

bl = T.Parameter(rng.standard_normal(5), "bl")
targets = (rng.random(5) < 0.4).astype(float)
rows.append(("multilabel_bce", T.gradcheck(lambda: T.multilabel_bce_loss(bl, targets), [bl])))

tl = T.Parameter(rng.standard_normal((4, 5)), "tl")
gold = [int(g) for g in rng.integers(0, 5, size=4)]
rows.append(("tag_xent", T.gradcheck(lambda: T.tag_xent_loss(tl, gold), [tl])))

cnn = CharCnnParams.create(rng, list("abcde"), 4, 5, 3)
rows.append(("char_cnn", T.gradcheck(lambda: T.vsum(char_cnn_embed("deca", cnn)),
                                     cnn.parameters())))

labels = ["Attraction-Inform", "Attraction-Request"]
tags = ["O", "X", "B-Attraction-Inform+Type", "I-Attraction-Inform+Type",
        "B-Attraction-Request+Addr"]
example = TrainingExample("i want a museum", [("user", "hello"), ("sys", "how can i help")],
                          ["Attraction-Inform"], [("Attraction-Inform+Type", 3, 3)])
codec = bpe_train(["i want a museum hello how can i help"], 10)
config = NluConfig(context_window=2, d_ctx=6, char_dim=4, char_filters=5, char_kernel=3,
                   token_hidden=4, sentence_hidden=4, dropout=0.0)
model = NluModel(config, labels, tags, np.random.Generator(np.random.PCG64(7)))
provider = ContextualEmbeddingProvider(6)
g = gold_tag_ids(example, codec, tags)
rows.append(("full model loss", T.gradcheck(
    lambda: batch_loss(model, [example], codec, provider, [g], train=False),
    model.parameters())))

width = max(len(name) for name, _ in rows)
for name, err in rows:
    print(f"{name.ljust(width)}  max relative error {err:.3e}")
