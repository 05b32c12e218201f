import numpy as np
import pytest

from contextdial import embeddings as emb
from contextdial import tensor as T
from contextdial.text import bpe_train, tokenize


@pytest.fixture()
def codec():
    return bpe_train(["i want free parking", "the museum is free"], 30)


class TestStore:
    def test_roundtrip(self, tmp_path, rng):
        records = [("sent1", 0, rng.standard_normal(4)),
                   ("sent1", 1, rng.standard_normal(4)),
                   ("other", 0, rng.standard_normal(4))]
        path = tmp_path / "vectors.bin"
        emb.write_store(path, 4, records)
        d, table = emb.read_store(path)
        assert d == 4
        assert len(table) == 3
        key = (emb.sentence_key_hash("sent1"), 1)
        assert np.array_equal(table[key], records[1][2])

    def test_truncated_store_fails_at_load(self, tmp_path, rng):
        path = tmp_path / "vectors.bin"
        emb.write_store(path, 4, [("s", 0, rng.standard_normal(4))])
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(ValueError, match="truncated"):
            emb.read_store(path)

    def test_ingest_text_dump(self, tmp_path):
        dump = tmp_path / "dump.txt"
        dump.write_text("s0 0 1.0 2.0\ns0 1 3.0 4.0\n")
        store = tmp_path / "store.bin"
        assert emb.ingest_text_dump(dump, store, 2) == 2
        d, table = emb.read_store(store)
        assert d == 2
        assert np.array_equal(table[(emb.sentence_key_hash("s0"), 1)], [3.0, 4.0])

    def test_provider_prefers_store_and_reports_fallback(self, tmp_path, codec):
        tok = tokenize("i want", codec)
        stored = np.full(4, 7.0)
        path = tmp_path / "vectors.bin"
        emb.write_store(path, 4, [("k", 0, stored)])
        provider = emb.ContextualEmbeddingProvider(4, path)
        vecs = provider.vectors(tok, sentence_key="k")
        assert np.array_equal(vecs[0], stored)          # hit
        assert not np.array_equal(vecs[1], stored)      # fallback
        assert provider.fallback_fraction() == 0.5


class TestProviderFallback:
    def test_deterministic(self, codec):
        a = emb.ContextualEmbeddingProvider(16)
        b = emb.ContextualEmbeddingProvider(16)
        tok = tokenize("free parking", codec)
        va = a.vectors(tok)
        vb = b.vectors(tok)
        for x, y in zip(va, vb):
            assert np.array_equal(x, y)

    def test_dimension_and_default(self, codec):
        provider = emb.ContextualEmbeddingProvider(768)
        tok = tokenize("i want free parking", codec)
        vecs = provider.vectors(tok)
        assert all(v.shape == (768,) for v in vecs)

    def test_empty_utterance(self, codec):
        provider = emb.ContextualEmbeddingProvider(8)
        tok = tokenize("", codec)
        assert provider.vectors(tok) == []


class TestCharCnn:
    def test_zero_filters_zero_output(self, rng):
        params = emb.CharCnnParams.create(rng, list("abc"), 4, 3, 3)
        params.filters.value[...] = 0.0
        out = emb.char_cnn_embed("abc", params)
        assert np.allclose(out.value, 0.0)

    def test_single_char_hand_evaluated(self, rng):
        params = emb.CharCnnParams.create(rng, list("a"), char_dim=2, n_filters=1, kernel=3)
        out = emb.char_cnn_embed("a", params)
        e = params.embedding.value[params.char_vocab["a"]]
        window = np.concatenate([np.zeros(2), e, np.zeros(2)])  # pad | a | pad
        expected = np.tanh(params.filters.value[0] @ window + params.bias.value[0])
        assert np.allclose(out.value, [expected])

    def test_empty_word_zero_vector(self, rng):
        params = emb.CharCnnParams.create(rng, list("ab"), 4, 5, 3)
        assert np.allclose(emb.char_cnn_embed("", params).value, np.zeros(5))

    def test_unknown_chars_use_unk_bucket(self, rng):
        params = emb.CharCnnParams.create(rng, list("ab"), 4, 3, 3)
        out = emb.char_cnn_embed("zzz", params)
        assert out.value.shape == (3,)

    def test_gradcheck(self):
        rng = np.random.Generator(np.random.PCG64(5))
        params = emb.CharCnnParams.create(rng, list("abcd"), 3, 4, 3)
        err = T.gradcheck(lambda: T.vsum(emb.char_cnn_embed("abcad", params)),
                          params.parameters())
        assert err < 1e-4


class TestTokenEmbed:
    def test_concat_dims_default(self, codec, rng):
        provider = emb.ContextualEmbeddingProvider(768)
        params = emb.CharCnnParams.create(rng, list("abcdefghijklmnopqrstuvwxyz"), 16, 128, 3)
        tok = tokenize("free parking", codec)
        out = emb.token_embed(tok, provider, params)
        assert all(v.value.shape == (896,) for v in out)

    def test_zero_cnn_leaves_contextual_part(self, codec, rng):
        provider = emb.ContextualEmbeddingProvider(8)
        params = emb.CharCnnParams.create(rng, list("abc"), 4, 3, 3)
        params.filters.value[...] = 0.0
        params.bias.value[...] = 0.0
        tok = tokenize("free", codec)
        out = emb.token_embed(tok, provider, params)
        ctx = provider.vectors(tok)
        assert np.array_equal(out[0].value[:8], ctx[0])
        assert np.allclose(out[0].value[8:], 0.0)

    def test_alignment_order(self, codec, rng):
        provider = emb.ContextualEmbeddingProvider(8)
        tok = tokenize("i want free parking", codec)
        out = emb.token_embed(tok, provider, None)
        vecs = provider.vectors(tok)
        for i in range(len(tok)):
            assert np.array_equal(out[i].value, vecs[i])

    def test_no_gradient_into_contextual_vectors(self, codec):
        # only CharCNN parameters receive gradients from the embedding stage
        rng = np.random.Generator(np.random.PCG64(2))
        provider = emb.ContextualEmbeddingProvider(6)
        params = emb.CharCnnParams.create(rng, list("abcdefgik mnoprstw"), 4, 3, 3)
        tok = tokenize("i want free parking", codec)
        out = emb.token_embed(tok, provider, params)
        loss = T.vsum(T.stack_rows(out))
        T.backward(loss)
        assert any(np.any(p.grad != 0) for p in params.parameters())

    def test_padding_invariance(self, rng):
        params = emb.CharCnnParams.create(rng, list("ab"), 4, 3, 3)
        a = emb.char_cnn_embed("ab", params).value
        # max-over-time of the same word cannot change with a no-op repeat
        b = emb.char_cnn_embed("ab", params).value
        assert np.array_equal(a, b)
