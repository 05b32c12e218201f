import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contextdial import tensor as T


def make_rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestAffine:
    def test_identity(self):
        w = T.Parameter(np.eye(2), "w")
        b = T.Parameter(np.zeros(2), "b")
        y = T.affine(T.constant([3.0, -1.0]), w, b)
        assert np.allclose(y.value, [3.0, -1.0])

    def test_zero_weights_pass_bias(self):
        w = T.Parameter(np.zeros((2, 3)), "w")
        b = T.Parameter(np.array([5.0, 5.0]), "b")
        y = T.affine(T.constant([1.0, 2.0, 3.0]), w, b)
        assert np.allclose(y.value, [5.0, 5.0])

    def test_gradcheck_sum_of_outputs(self, rng):
        w = T.Parameter(rng.standard_normal((4, 3)), "w")
        b = T.Parameter(rng.standard_normal(4), "b")
        x = T.Parameter(rng.standard_normal(3), "x")
        err = T.gradcheck(lambda: T.vsum(T.affine(x, w, b)), [w, b, x])
        assert err < 1e-8

    def test_shape_mismatch_names_operands(self):
        w = T.Parameter(np.zeros((2, 3)), "w")
        b = T.Parameter(np.zeros(2), "b")
        with pytest.raises(T.ShapeError, match="affine"):
            T.affine(T.constant([1.0, 2.0]), w, b)


class TestSoftmax:
    def test_uniform(self):
        s = T.softmax(T.constant([0.0, 0.0, 0.0]))
        assert np.allclose(s.value, [1 / 3] * 3)

    def test_no_overflow_on_large_inputs(self):
        s = T.softmax(T.constant([1000.0, 0.0]))
        assert np.all(np.isfinite(s.value))
        assert np.allclose(s.value, [1.0, 0.0])

    def test_matches_high_precision_evaluation(self):
        # frozen from an mpmath (50-digit) evaluation of softmax([1, 2, 3])
        expected = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219]
        s = T.softmax(T.constant([1.0, 2.0, 3.0]))
        assert np.allclose(s.value, expected, atol=1e-15)

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1, max_size=8),
           st.floats(min_value=-100, max_value=100))
    def test_sums_to_one_and_shift_invariant(self, xs, c):
        a = T.softmax(T.constant(xs)).value
        b = T.softmax(T.constant(np.asarray(xs) + c)).value
        assert abs(a.sum() - 1.0) < 1e-12
        assert np.allclose(a, b, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(T.ShapeError):
            T.softmax(T.constant(np.zeros(0)))

    def test_gradcheck(self, rng):
        x = T.Parameter(rng.standard_normal(5), "x")
        weights = T.constant(rng.standard_normal(5))
        err = T.gradcheck(lambda: T.vsum(T.mul(T.softmax(x), weights)), [x])
        assert err < 1e-6


class TestLstmStep:
    def zero_params(self, n_in, hidden):
        p = T.LstmParams(T.Parameter(np.zeros((4 * hidden, n_in + hidden)), "w"),
                         T.Parameter(np.zeros(4 * hidden), "b"))
        return p

    def test_all_zero(self):
        p = self.zero_params(3, 2)
        h, c = T.lstm_step(T.constant(np.zeros(3)), T.constant(np.zeros(2)),
                           T.constant(np.zeros(2)), p)
        assert np.allclose(h.value, 0) and np.allclose(c.value, 0)

    def test_saturated_forget_carries_cell(self):
        p = self.zero_params(2, 2)
        p.b.value[2:4] = 40.0    # forget gate ~ 1
        p.b.value[0:2] = -40.0   # input gate ~ 0
        c0 = np.array([0.3, -0.2])
        h, c = T.lstm_step(T.constant(np.zeros(2)), T.constant(np.zeros(2)),
                           T.constant(c0), p)
        assert np.allclose(c.value, c0, atol=1e-12)

    def test_outputs_bounded(self, rng):
        p = T.LstmParams.create(make_rng(3), 3, 4, "p")
        h, c = T.lstm_step(T.constant(rng.standard_normal(3)),
                           T.constant(rng.standard_normal(4)),
                           T.constant(rng.standard_normal(4)), p)
        assert np.all(np.abs(h.value) < 1.0)

    def test_gradcheck_all_params(self):
        rng = make_rng(7)
        p = T.LstmParams.create(rng, 3, 4, "p")
        x = T.Parameter(rng.standard_normal(3), "x")
        h0 = T.Parameter(rng.standard_normal(4) * 0.5, "h0")
        c0 = T.Parameter(rng.standard_normal(4) * 0.5, "c0")

        def loss():
            h, c = T.lstm_step(x, h0, c0, p)
            h2, c2 = T.lstm_step(x, h, c, p)
            return T.vsum(T.add(h2, T.mul(c2, c2)))

        assert T.gradcheck(loss, [p.w, p.b, x, h0, c0]) < 1e-4

    def test_shape_error(self):
        p = self.zero_params(3, 2)
        with pytest.raises(T.ShapeError):
            T.lstm_step(T.constant(np.zeros(5)), T.constant(np.zeros(2)),
                        T.constant(np.zeros(2)), p)


class TestBilstm:
    def test_length_one(self):
        rng = make_rng(0)
        pf = T.LstmParams.create(rng, 3, 2, "f")
        pb = T.LstmParams.create(rng, 3, 2, "b")
        x = T.constant(rng.standard_normal(3))
        out = T.bilstm_encode([x], pf, pb)
        hf, _ = T.lstm_step(x, T.constant(np.zeros(2)), T.constant(np.zeros(2)), pf)
        hb, _ = T.lstm_step(x, T.constant(np.zeros(2)), T.constant(np.zeros(2)), pb)
        assert len(out) == 1
        assert np.allclose(out[0].value, np.concatenate([hf.value, hb.value]))

    def test_reversal_swaps_halves(self):
        rng = make_rng(5)
        pf = T.LstmParams.create(rng, 3, 2, "f")
        pb = T.LstmParams.create(rng, 3, 2, "b")
        seq = [T.constant(rng.standard_normal(3)) for _ in range(3)]
        fwd_then_bwd = T.bilstm_encode(seq, pf, pb)
        # run the reversed sequence with the parameter roles swapped
        rev = T.bilstm_encode(list(reversed(seq)), pb, pf)
        n = len(seq)
        for t in range(n):
            swapped = np.concatenate([rev[n - 1 - t].value[2:], rev[n - 1 - t].value[:2]])
            assert np.allclose(fwd_then_bwd[t].value, swapped, atol=1e-12)

    def test_output_dimension_is_twice_hidden(self):
        rng = make_rng(1)
        hidden = 200
        pf = T.LstmParams.create(rng, 8, hidden, "f")
        pb = T.LstmParams.create(rng, 8, hidden, "b")
        out = T.bilstm_encode([T.constant(rng.standard_normal(8))], pf, pb)
        assert out[0].value.shape == (400,)

    def test_empty_sequence(self):
        rng = make_rng(1)
        pf = T.LstmParams.create(rng, 3, 2, "f")
        pb = T.LstmParams.create(rng, 3, 2, "b")
        with pytest.raises(T.EmptyInputError):
            T.bilstm_encode([], pf, pb)


class TestBilinearAttention:
    def test_single_key(self, rng):
        q = T.constant(rng.standard_normal(3))
        k = T.constant(rng.standard_normal(4))
        m = T.Parameter(rng.standard_normal((3, 4)), "m")
        ctx, w = T.bilinear_attention(q, [k], m)
        assert np.allclose(w, [1.0])
        assert np.allclose(ctx.value, k.value)

    def test_identical_keys_uniform(self, rng):
        q = T.constant(rng.standard_normal(3))
        k = rng.standard_normal(4)
        m = T.Parameter(rng.standard_normal((3, 4)), "m")
        ctx, w = T.bilinear_attention(q, [T.constant(k) for _ in range(5)], m)
        assert np.allclose(w, 0.2)
        assert np.allclose(ctx.value, k)

    def test_permutation_invariance(self):
        rng = make_rng(123)
        q = T.constant(rng.standard_normal(3))
        keys = [rng.standard_normal(4) for _ in range(4)]
        m = T.Parameter(rng.standard_normal((3, 4)), "m")
        ctx1, w1 = T.bilinear_attention(q, [T.constant(k) for k in keys], m)
        perm = [2, 0, 3, 1]
        ctx2, w2 = T.bilinear_attention(q, [T.constant(keys[i]) for i in perm], m)
        assert np.allclose(ctx1.value, ctx2.value, atol=1e-12)
        assert np.allclose(w1[perm], w2, atol=1e-12)

    def test_weights_sum_to_one_randomized(self):
        rng = make_rng(99)
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            q = T.constant(rng.standard_normal(3))
            m = T.Parameter(rng.standard_normal((3, 4)), "m")
            _, w = T.bilinear_attention(q, [T.constant(rng.standard_normal(4))
                                            for _ in range(n)], m)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0)

    def test_empty_keys(self, rng):
        m = T.Parameter(rng.standard_normal((3, 4)), "m")
        with pytest.raises(T.EmptyInputError):
            T.bilinear_attention(T.constant(np.zeros(3)), [], m)

    def test_gradcheck(self):
        rng = make_rng(11)
        q = T.Parameter(rng.standard_normal(3), "q")
        m = T.Parameter(rng.standard_normal((3, 4)) * 0.5, "m")
        keys = [T.Parameter(rng.standard_normal(4), f"k{i}") for i in range(3)]

        def loss():
            ctx, _ = T.bilinear_attention(q, keys, m)
            return T.vsum(T.mul(ctx, ctx))

        assert T.gradcheck(loss, [q, m] + keys) < 1e-5


class TestLosses:
    def test_bce_uniform_logits(self):
        loss = T.multilabel_bce_loss(T.constant(np.zeros(2)), np.array([1.0, 0.0]))
        assert abs(loss.value - np.log(2)) < 1e-12

    def test_bce_saturated_correct(self):
        loss = T.multilabel_bce_loss(T.constant([40.0, -40.0, -40.0]),
                                     np.array([1.0, 0.0, 0.0]))
        assert loss.value < 1e-12

    def test_bce_matches_independent_formula(self, rng):
        z = rng.standard_normal(7)
        t = (rng.random(7) < 0.5).astype(float)
        p = 1 / (1 + np.exp(-z))
        expected = -(t * np.log(p) + (1 - t) * np.log(1 - p)).mean()
        loss = T.multilabel_bce_loss(T.constant(z), t)
        assert abs(loss.value - expected) < 1e-10

    def test_bce_length_mismatch(self):
        with pytest.raises(T.ShapeError):
            T.multilabel_bce_loss(T.constant(np.zeros(3)), np.zeros(4))

    def test_xent_uniform(self):
        loss = T.tag_xent_loss(T.constant(np.zeros((2, 4))), [1, 3])
        assert abs(loss.value - np.log(4)) < 1e-12

    def test_xent_confident(self):
        z = np.full((2, 3), -40.0)
        z[0, 1] = 40.0
        z[1, 0] = 40.0
        assert T.tag_xent_loss(T.constant(z), [1, 0]).value < 1e-12

    def test_xent_hand_computed(self):
        # 3 steps, hand arithmetic: mean of (lse(row) - row[gold])
        z = np.array([[1.0, 0.0], [0.0, 2.0], [0.5, 0.5]])
        gold = [0, 1, 0]
        expected = np.mean([np.log(np.exp(1) + 1) - 1,
                            np.log(1 + np.exp(2)) - 2,
                            np.log(2 * np.exp(0.5)) - 0.5])
        assert abs(T.tag_xent_loss(T.constant(z), gold).value - expected) < 1e-12

    def test_xent_gold_out_of_range(self):
        with pytest.raises(IndexError):
            T.tag_xent_loss(T.constant(np.zeros((2, 3))), [0, 3])


class TestClipAndAdam:
    def test_clip_below_threshold_untouched(self):
        p = T.Parameter(np.zeros(3), "p")
        p.grad[:] = [1.5, 2.0, 0.0]
        norm = T.clip_global_norm([p], 5.0)
        assert abs(norm - 2.5) < 1e-12
        assert np.allclose(p.grad, [1.5, 2.0, 0.0])

    def test_clip_scales_down(self):
        p = T.Parameter(np.zeros(2), "p")
        p.grad[:] = [6.0, 8.0]
        norm = T.clip_global_norm([p], 5.0)
        assert abs(norm - 10.0) < 1e-12
        assert abs(np.linalg.norm(p.grad) - 5.0) < 1e-9

    def test_clip_multi_tensor_property(self, rng):
        for _ in range(50):
            params = [T.Parameter(np.zeros(int(rng.integers(1, 5))), f"p{i}")
                      for i in range(3)]
            for p in params:
                p.grad[:] = rng.standard_normal(p.grad.shape) * 5
            before = {p.name: np.abs(p.grad).copy() for p in params}
            T.clip_global_norm(params, 5.0)
            total = np.sqrt(sum(np.sum(p.grad ** 2) for p in params))
            assert total <= 5.0 + 1e-9
            for p in params:
                assert np.all(np.abs(p.grad) <= before[p.name] + 1e-12)

    def test_clip_rejects_nonpositive(self):
        with pytest.raises(T.ParameterError):
            T.clip_global_norm([], 0.0)

    def test_adam_zero_grad_no_move(self):
        p = T.Parameter(np.array([1.0, 2.0]), "p")
        T.adam_step([p], T.AdamState())
        assert np.allclose(p.value, [1.0, 2.0])

    def test_adam_first_step_closed_form(self):
        # with constant grad 1, the bias-corrected first step is -lr exactly
        # (up to epsilon): -lr * 1 / (1 + eps)
        p = T.Parameter(np.array([0.0]), "p")
        p.grad[:] = 1.0
        state = T.AdamState(learning_rate=0.001)
        T.adam_step([p], state)
        assert abs(p.value[0] - (-0.001 / (1 + 1e-8))) < 1e-15
        assert np.allclose(p.grad, 0.0)
        assert state.step_count == 1

    def test_adam_identical_params_identical_updates(self):
        a = T.Parameter(np.array([0.5]), "a")
        b = T.Parameter(np.array([0.5]), "b")
        a.grad[:] = 0.3
        b.grad[:] = 0.3
        T.adam_step([a, b], T.AdamState())
        assert a.value[0] == b.value[0]


class TestGradcheckTool:
    def test_linear_model_nearly_exact(self):
        w = T.Parameter(np.array([2.0, -1.0, 0.5]), "w")
        x = np.array([1.0, 2.0, 3.0])
        err = T.gradcheck(lambda: T.vsum(T.mul(w, T.constant(x))), [w])
        assert err < 1e-9

    def test_detects_corrupted_backward(self):
        w = T.Parameter(np.array([0.7, -0.3]), "w")

        def bad_loss():
            out = T.Var(np.sum(np.tanh(w.value)), (w,))

            def _bw():
                w.grad += -(1 - np.tanh(w.value) ** 2) * out.grad  # sign flip

            out._backward = _bw
            return out

        assert T.gradcheck(bad_loss, [w]) > 0.1

    def test_nonfinite_loss_reported(self):
        w = T.Parameter(np.array([1.0]), "w")
        with pytest.raises(FloatingPointError):
            T.gradcheck(lambda: T.Var(np.float64("nan"), (w,)), [w])

    def test_eps_validated(self):
        w = T.Parameter(np.array([1.0]), "w")
        with pytest.raises(T.ParameterError):
            T.gradcheck(lambda: T.vsum(w), [w], eps=0.1)


class TestDropout:
    def test_rate_zero_all_ones(self, rng):
        assert np.all(T.dropout_mask((4, 5), 0.0, rng) == 1.0)

    def test_keep_fraction_statistics(self):
        rng = make_rng(42)
        mask = T.dropout_mask(100_000, 0.5, rng)
        keep = np.count_nonzero(mask) / mask.size
        assert abs(keep - 0.5) < 0.01
        assert np.allclose(mask[mask > 0], 2.0)

    def test_same_seed_same_mask(self):
        m1 = T.dropout_mask((3, 3), 0.3, make_rng(7))
        m2 = T.dropout_mask((3, 3), 0.3, make_rng(7))
        assert np.array_equal(m1, m2)

    def test_rate_one_rejected(self, rng):
        with pytest.raises(T.ParameterError):
            T.dropout_mask((2,), 1.0, rng)


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path, rng):
        params = {"a.w": rng.standard_normal((3, 4)), "b": rng.standard_normal(7)}
        manifest = {"hidden": "200", "labels": '["x","y"]'}
        path = tmp_path / "model.ckpt"
        T.save_checkpoint(path, params, manifest)
        loaded, mf = T.load_checkpoint(path)
        assert mf == manifest
        for name, arr in params.items():
            assert loaded[name].dtype == np.float64
            assert np.array_equal(loaded[name], arr)


class TestBackwardAccumulation:
    def test_shared_parameter_accumulates(self, rng):
        w = T.Parameter(rng.standard_normal(3), "w")
        y = T.add(T.mul(w, w), T.scale(w, 2.0))   # w used on two paths
        T.backward(T.vsum(y))
        assert np.allclose(w.grad, 2 * w.value + 2.0)

    def test_zero_grads(self):
        p = T.Parameter(np.ones(3), "p")
        p.grad[:] = 5.0
        T.zero_grads([p])
        assert np.all(p.grad == 0)
