import numpy as np
import numpy.testing as npt
import pytest
from copy import deepcopy
from types import SimpleNamespace

from earda import nn


def tiny_model(seed=1, hidden=4, head_width=8):
    ext, lh, dh = nn.init_params(
        seed=seed, input_dim=2, hidden=hidden, num_layers=2,
        head_width=head_width, label_classes=4, domain_classes=2,
    )
    return SimpleNamespace(extractor=ext, label_head=lh, domain_head=dh)


def random_batch(rng, n=6, t=10, force_labeled=2):
    return [
        (
            rng.standard_normal((t, 2)),
            int(rng.integers(0, 4)),
            int(rng.integers(0, 2)),
            bool(i < force_labeled or rng.integers(0, 2)),
        )
        for i in range(n)
    ]


def zero_model(**kw):
    model = tiny_model(**kw)
    for arr in nn.named_arrays(model).values():
        arr[...] = 0.0
    return model


# ---------------------------------------------------------------------------
# init_params
# ---------------------------------------------------------------------------

class TestInitParams:
    def test_deterministic(self):
        a = nn.init_params(seed=0)
        b = nn.init_params(seed=0)
        for (ka, va), (kb, vb) in zip(
            nn.named_arrays(SimpleNamespace(extractor=a[0], label_head=a[1], domain_head=a[2])).items(),
            nn.named_arrays(SimpleNamespace(extractor=b[0], label_head=b[1], domain_head=b[2])).items(),
        ):
            assert ka == kb
            npt.assert_array_equal(va, vb)

    def test_bias_scheme(self):
        ext, lh, dh = nn.init_params(seed=3)
        for layer in ext.layers:
            for cell in (layer.fwd, layer.bwd):
                npt.assert_array_equal(cell.b_i, 0.0)
                npt.assert_array_equal(cell.b_g, 0.0)
                npt.assert_array_equal(cell.b_o, 0.0)
                npt.assert_array_equal(cell.b_f, 1.0)
        npt.assert_array_equal(lh.b1, 0.0)
        npt.assert_array_equal(lh.b2, 0.0)
        npt.assert_array_equal(dh.b2, 0.0)

    def test_layer1_input_gate_shape(self):
        ext, _, _ = nn.init_params(seed=0)
        assert ext.layers[0].fwd.w_i.shape == (16, 2)
        assert ext.layers[1].fwd.w_i.shape == (16, 32)

    def test_fan_based_range(self):
        ext, _, _ = nn.init_params(seed=8)
        w = ext.layers[0].fwd.w_i
        bound = np.sqrt(6.0 / (2 + 16))
        assert np.all(np.abs(w) <= bound)
        assert np.abs(w).max() > 0.5 * bound  # draws actually fill the range


# ---------------------------------------------------------------------------
# feature_forward
# ---------------------------------------------------------------------------

class TestFeatureForward:
    def test_zero_model_zero_window(self):
        model = zero_model()
        feat, _ = nn.feature_forward(np.zeros((10, 2)), model.extractor)
        npt.assert_array_equal(feat, 0.0)

    def test_feature_length(self):
        ext, _, _ = nn.init_params(seed=2)
        feat, _ = nn.feature_forward(np.zeros((100, 2)), ext)
        assert feat.shape == (32,)

    def test_feature_bounded(self):
        rng = np.random.default_rng(4)
        ext, _, _ = nn.init_params(seed=4)
        for _ in range(5):
            feat, _ = nn.feature_forward(rng.standard_normal((100, 2)) * 10, ext)
            assert np.all(np.abs(feat) < 1.0)

    def test_wrong_shape(self):
        ext, _, _ = nn.init_params(seed=0)
        with pytest.raises(nn.ShapeError):
            nn.feature_forward(np.zeros((100, 3)), ext)
        with pytest.raises(nn.ShapeError):
            nn.feature_forward(np.zeros(100), ext)

    def test_batch_purity(self):
        rng = np.random.default_rng(9)
        ext, _, _ = nn.init_params(seed=9, hidden=8)
        ws = rng.standard_normal((8, 30, 2))
        batched, _ = nn._features_forward(ws, ext)
        for i in range(8):
            single, _ = nn.feature_forward(ws[i], ext)
            npt.assert_allclose(single, batched[i], rtol=0, atol=1e-12)

    def test_direction_swap_symmetry(self):
        rng = np.random.default_rng(12)
        ext, _, _ = nn.init_params(seed=12, hidden=4)
        h = ext.hidden
        swapped = deepcopy(ext)
        for li, layer in enumerate(swapped.layers):
            layer.fwd, layer.bwd = layer.bwd, layer.fwd
            if li > 0:
                # layers above the first consume [fwd, bwd] concatenations,
                # so their input-weight column halves swap too
                for cell in (layer.fwd, layer.bwd):
                    for g in nn.GATES:
                        w = getattr(cell, f"w_{g}")
                        setattr(cell, f"w_{g}", np.concatenate([w[:, h:], w[:, :h]], axis=1))
        for _ in range(5):
            w = rng.standard_normal((20, 2))
            f_orig, _ = nn.feature_forward(w, ext)
            f_swap, _ = nn.feature_forward(w[::-1].copy(), swapped)
            npt.assert_allclose(f_swap[:h], f_orig[h:], atol=1e-12)
            npt.assert_allclose(f_swap[h:], f_orig[:h], atol=1e-12)

    def test_finite_outputs_with_bounded_params(self):
        rng = np.random.default_rng(21)
        ext, lh, dh = nn.init_params(seed=21, hidden=4, head_width=8)
        model = SimpleNamespace(extractor=ext, label_head=lh, domain_head=dh)
        for arr in nn.named_arrays(model).values():
            arr[...] = rng.uniform(-10, 10, size=arr.shape)
        w = rng.standard_normal((50, 2)) * 100
        feat, _ = nn.feature_forward(w, ext)
        assert np.all(np.isfinite(feat))
        logits, _ = nn.head_forward(feat, lh)
        assert np.all(np.isfinite(logits))
        loss, grad = nn.softmax_ce(logits, 0)
        assert np.isfinite(loss) and np.all(np.isfinite(grad))


# ---------------------------------------------------------------------------
# head_forward
# ---------------------------------------------------------------------------

class TestHeadForward:
    def test_zero_everything(self):
        model = zero_model()
        logits, _ = nn.head_forward(np.zeros(8), model.label_head)
        npt.assert_array_equal(logits, 0.0)

    def test_identity_hidden_layer_is_affine(self):
        rng = np.random.default_rng(5)
        head = nn.HeadParams(
            w1=np.eye(8), b1=np.zeros(8),
            w2=rng.standard_normal((4, 8)), b2=rng.standard_normal(4),
        )
        feat = np.abs(rng.standard_normal(8))  # non-negative passes ReLU untouched
        logits, _ = nn.head_forward(feat, head)
        npt.assert_allclose(logits, head.w2 @ feat + head.b2, atol=1e-14)

    def test_negative_preactivations_blocked(self):
        head = nn.HeadParams(
            w1=-np.eye(8), b1=np.zeros(8),
            w2=np.ones((2, 8)), b2=np.zeros(2),
        )
        feat = np.abs(np.random.default_rng(6).standard_normal(8))
        logits, _ = nn.head_forward(feat, head)
        npt.assert_array_equal(logits, 0.0)

    def test_dimension_mismatch(self):
        _, lh, _ = nn.init_params(seed=0)
        with pytest.raises(nn.ShapeError):
            nn.head_forward(np.zeros(7), lh)


# ---------------------------------------------------------------------------
# softmax_ce
# ---------------------------------------------------------------------------

class TestSoftmaxCe:
    def test_uniform_four(self):
        loss, _ = nn.softmax_ce(np.zeros(4), 2)
        assert loss == pytest.approx(np.log(4), abs=1e-12)

    def test_uniform_two(self):
        loss, _ = nn.softmax_ce(np.zeros(2), 0)
        assert loss == pytest.approx(np.log(2), abs=1e-12)

    def test_grad_sums_to_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            logits = rng.standard_normal(4) * 5
            _, grad = nn.softmax_ce(logits, int(rng.integers(0, 4)))
            assert abs(grad.sum()) < 1e-12

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        eps = 1e-6
        for _ in range(20):
            logits = rng.standard_normal(4) * 3
            truth = int(rng.integers(0, 4))
            _, grad = nn.softmax_ce(logits, truth)
            for k in range(4):
                up = logits.copy()
                up[k] += eps
                down = logits.copy()
                down[k] -= eps
                num = (nn.softmax_ce(up, truth)[0] - nn.softmax_ce(down, truth)[0]) / (2 * eps)
                assert abs(num - grad[k]) < 1e-8

    def test_large_logits_stable(self):
        loss, grad = nn.softmax_ce(np.array([1000.0, 0.0, -1000.0]), 0)
        assert np.isfinite(loss) and np.all(np.isfinite(grad))

    def test_out_of_range_truth(self):
        with pytest.raises(IndexError):
            nn.softmax_ce(np.zeros(4), 4)


# ---------------------------------------------------------------------------
# grl_backward
# ---------------------------------------------------------------------------

class TestGrl:
    def test_reference_values(self):
        npt.assert_allclose(nn.grl_backward(np.array([1.0, -2.0]), 0.3), [-0.3, 0.6])

    def test_zero_weight(self):
        npt.assert_array_equal(nn.grl_backward(np.array([3.0, -4.0]), 0.0), 0.0)

    def test_double_application_identity(self):
        g = np.array([1.5, -0.5, 2.0])
        npt.assert_array_equal(nn.grl_backward(nn.grl_backward(g, 1.0), 1.0), g)

    def test_exact_scaling(self):
        rng = np.random.default_rng(11)
        g = rng.standard_normal(32)
        npt.assert_array_equal(nn.grl_backward(g, 0.3), -0.3 * g)


# ---------------------------------------------------------------------------
# backprop_batch
# ---------------------------------------------------------------------------

class TestBackpropBatch:
    def test_weight_linearity(self):
        # grads(w) = label_pathway - w * domain_pathway, so the w=0 gradient is
        # the pure label pathway and everything else is affine in w
        rng = np.random.default_rng(13)
        model = tiny_model(seed=13)
        batch = random_batch(rng)
        _, g0 = nn.backprop_batch(batch, model, 0.0)
        _, g1 = nn.backprop_batch(batch, model, 1.0)
        _, g3 = nn.backprop_batch(batch, model, 0.3)
        for key in g0:
            if key.startswith("feat."):
                expected = g0[key] - 0.3 * (g0[key] - g1[key])
                npt.assert_allclose(g3[key], expected, atol=1e-12)
            else:
                # head gradients do not depend on the reversal weight
                npt.assert_allclose(g3[key], g0[key], atol=1e-15)

    def test_zero_model_uniform_losses(self):
        model = zero_model()
        batch = [(np.zeros((10, 2)), 1, 0, True), (np.zeros((10, 2)), 2, 1, True)]
        parts, _ = nn.backprop_batch(batch, model, 0.3)
        assert parts.label_loss == pytest.approx(np.log(4), abs=1e-12)
        assert parts.domain_loss == pytest.approx(np.log(2), abs=1e-12)

    def test_total_recomputation(self):
        rng = np.random.default_rng(14)
        for trial in range(5):
            model = tiny_model(seed=trial)
            batch = random_batch(rng)
            parts, _ = nn.backprop_batch(batch, model, 0.3)
            assert abs(parts.total - (parts.label_loss - 0.3 * parts.domain_loss)) < 1e-10

    def test_empty_batch(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            nn.backprop_batch([], model, 0.3)

    def test_matches_loss_parts(self):
        rng = np.random.default_rng(15)
        model = tiny_model(seed=15)
        batch = random_batch(rng)
        parts_b, _ = nn.backprop_batch(batch, model, 0.3)
        parts_f = nn.loss_parts(batch, model, 0.3)
        assert parts_b.label_loss == pytest.approx(parts_f.label_loss, abs=1e-12)
        assert parts_b.domain_loss == pytest.approx(parts_f.domain_loss, abs=1e-12)


# ---------------------------------------------------------------------------
# adam_step
# ---------------------------------------------------------------------------

class TestAdamStep:
    def test_zero_grads_leave_params(self):
        p = {"a": np.array([1.0, 2.0])}
        g = {"a": np.zeros(2)}
        st = nn.AdamState(learning_rate=1e-3)
        nn.adam_step(p, g, st)
        nn.adam_step(p, g, st)
        npt.assert_array_equal(p["a"], [1.0, 2.0])
        assert st.step == 2

    def test_first_step_magnitude(self):
        p = {"a": np.array([0.5])}
        g = {"a": np.array([1.0])}
        st = nn.AdamState(learning_rate=1e-3)
        nn.adam_step(p, g, st)
        assert p["a"][0] == pytest.approx(0.5 - 1e-3, abs=1e-6)

    def test_moments_decay(self):
        p = {"a": np.array([0.0])}
        st = nn.AdamState()
        nn.adam_step(p, {"a": np.array([1.0])}, st)
        m1 = st.m["a"].copy()
        nn.adam_step(p, {"a": np.array([0.0])}, st)
        assert st.m["a"][0] == pytest.approx(0.9 * m1[0])

    def test_deterministic_trajectory(self):
        def run():
            rng = np.random.default_rng(0)
            p = {"a": np.ones(4), "b": np.full(3, -2.0)}
            st = nn.AdamState(learning_rate=1e-2)
            for _ in range(50):
                g = {k: rng.standard_normal(v.shape) for k, v in p.items()}
                nn.adam_step(p, g, st)
            return p

        p1, p2 = run(), run()
        npt.assert_array_equal(p1["a"], p2["a"])
        npt.assert_array_equal(p1["b"], p2["b"])

    def test_shape_mismatch(self):
        with pytest.raises(nn.ShapeError):
            nn.adam_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, nn.AdamState())


# ---------------------------------------------------------------------------
# grad_check
# ---------------------------------------------------------------------------

class TestGradCheck:
    @pytest.mark.parametrize("weight", [0.0, 0.3])
    def test_tiny_model_passes(self, weight):
        rng = np.random.default_rng(16)
        model = tiny_model(seed=16)
        batch = random_batch(rng, n=4)
        assert nn.grad_check(model, batch, weight, eps=1e-5) <= 1e-4

    def test_detects_corrupted_gradient(self, monkeypatch):
        rng = np.random.default_rng(17)
        model = tiny_model(seed=17)
        batch = random_batch(rng, n=4)
        real = nn.backprop_batch

        def corrupted(*args, **kw):
            parts, grads = real(*args, **kw)
            grads["feat.l0.fw.w_i"] = grads["feat.l0.fw.w_i"].copy()
            grads["feat.l0.fw.w_i"].flat[0] *= 2.0
            return parts, grads

        monkeypatch.setattr(nn, "backprop_batch", corrupted)
        assert nn.grad_check(model, batch, 0.3, eps=1e-5) > 1e-2

    def test_bad_eps_rejected(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            nn.grad_check(model, random_batch(np.random.default_rng(0)), 0.3, eps=1e-2)
