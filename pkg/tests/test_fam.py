import math

import numpy as np
import pytest

from wildface.errors import ConfigError, DegenerateBatchError, MissingFaceError, ShapeError
from wildface.fam import (
    FamParams,
    backward,
    bce_logits_loss,
    channel_attention,
    channel_scales,
    checkpoint_bytes,
    classifier_head,
    corrupted_gradient_fn,
    default_reduction,
    fam_forward,
    forward_backward,
    grad_check,
    hadamard_fuse,
    init_params,
    load_checkpoint,
    params_from_bytes,
    parse_dims,
    predict,
    random_inputs,
    randomize_params,
    save_checkpoint,
)
from wildface.fam.gradcheck import CheckInputs
from wildface.pose_geometry import Orientation


def scalar_logistic(a):
    return 1.0 / (1.0 + math.exp(-a))


def loop_forward(xb, xf, p):
    """Scalar re-computation of the fused path, one element at a time."""
    C, H, W = xb.shape
    xc = [[[xb[c, i, j] * p.fusion[c, i, j] * xf[c, i, j] for j in range(W)] for i in range(H)]
          for c in range(C)]
    g = [sum(xc[c][i][j] for i in range(H) for j in range(W)) / (H * W) for c in range(C)]
    hidden = [max(0.0, sum(p.se_w1[k, c] * g[c] for c in range(C)) + p.se_b1[k])
              for k in range(p.se_w1.shape[0])]
    s = [scalar_logistic(sum(p.se_w2[c, k] * hidden[k] for k in range(len(hidden))) + p.se_b2[c])
         for c in range(C)]
    return np.array([[[xc[c][i][j] * s[c] + xb[c, i, j] for j in range(W)] for i in range(H)]
                     for c in range(C)])


def loop_head(feat, p, prefix=""):
    C, H, W = feat.shape
    v = [feat[c].sum() / (H * W) for c in range(C)]
    z = sum(getattr(p, prefix + "fc_w")[c] * v[c] for c in range(C)) + float(getattr(p, prefix + "fc_b"))
    mean, var = float(getattr(p, prefix + "bn_running_mean")), float(getattr(p, prefix + "bn_running_var"))
    return (float(getattr(p, prefix + "bn_gamma")) * (z - mean) / math.sqrt(var + 1e-5)
            + float(getattr(p, prefix + "bn_beta")))


@pytest.fixture
def params():
    return randomize_params(init_params((4, 2, 3), reduction=2, seed=3), 3)


class TestHadamard:
    def test_identity_and_annihilator(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal((2, 3, 4, 5))
        assert np.array_equal(hadamard_fuse(a, b, np.ones_like(a)), a * b)
        assert not hadamard_fuse(a, b, np.zeros_like(a)).any()

    def test_scalar(self):
        assert hadamard_fuse(np.full((1, 1, 1), 2.0), np.full((1, 1, 1), 3.0),
                             np.full((1, 1, 1), 0.5))[0, 0, 0] == 3.0

    def test_shape_error_names_operand(self):
        with pytest.raises(ShapeError, match="fusion"):
            hadamard_fuse(np.ones((2, 2, 2)), np.ones((2, 2, 2)), np.ones((2, 2, 1)))
        with pytest.raises(ShapeError, match="x_face"):
            hadamard_fuse(np.ones((2, 2, 2)), np.ones((1, 2, 2)), np.ones((2, 2, 2)))


class TestChannelAttention:
    def test_zero_input(self, params):
        assert not channel_attention(np.zeros((4, 2, 3)), params).any()

    def test_closed_form(self):
        p = FamParams(
            fusion=np.ones((2, 1, 1)), se_w1=np.eye(2), se_b1=np.zeros(2), se_w2=np.eye(2),
            se_b2=np.zeros(2), fc_w=np.ones(2), fc_b=0.0, bn_gamma=1.0, bn_beta=0.0,
            bn_running_mean=0.0, bn_running_var=1.0, reduction=1,
        )
        out = channel_attention(np.ones((2, 1, 1)), p)
        assert out.ravel() == pytest.approx([scalar_logistic(1.0)] * 2, abs=1e-15)
        assert out.ravel() == pytest.approx([0.73106, 0.73106], abs=1e-5)

    def test_scales_in_open_interval(self, params):
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = channel_scales(rng.standard_normal((4, 2, 3)) * 3, params)
            assert np.all((s > 0) & (s < 1))

    def test_shape_error(self, params):
        with pytest.raises(ShapeError):
            channel_attention(np.ones((3, 2, 3)), params)


class TestFamForward:
    def test_zero_fusion_identity(self, params):
        params.fusion[...] = 0.0
        rng = np.random.default_rng(2)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        assert np.array_equal(fam_forward(xb, xf, params), xb)

    def test_structural_identity(self, params):
        params.fusion[...] = 1.0
        xb = np.random.default_rng(3).standard_normal((4, 2, 3))
        expected = channel_attention(xb, params) + xb
        assert np.array_equal(fam_forward(xb, np.ones_like(xb), params), expected)

    def test_matches_scalar_oracle(self):
        p = randomize_params(init_params((4, 2, 3), reduction=2, seed=7), 7)
        rng = np.random.default_rng(7)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        np.testing.assert_allclose(fam_forward(xb, xf, p), loop_forward(xb, xf, p), rtol=1e-13, atol=1e-13)


class TestHeadAndPredict:
    def test_zero_features(self):
        p = init_params((4, 2, 3), reduction=2)
        assert classifier_head(np.zeros((4, 2, 3)), p) == 0.0

    def test_constant_features(self):
        p = init_params((4, 2, 3), reduction=2)
        p.fc_w[...] = [0.5, -0.25, 1.0, 0.25]
        p.fc_b[...] = 0.3
        k = 2.0
        expected = (k * 1.5 + 0.3) / math.sqrt(1 + 1e-5)
        assert classifier_head(np.full((4, 2, 3), k), p) == pytest.approx(expected, rel=1e-14)
        assert classifier_head(np.full((4, 2, 3), k), p) == pytest.approx(k * 1.5 + 0.3, rel=1e-5)

    def test_gamma_zero(self, params):
        params.bn_gamma[...] = 0.0
        feats = np.random.default_rng(4).standard_normal((4, 2, 3))
        assert classifier_head(feats, params) == float(params.bn_beta)

    def test_train_mode_batch(self, params):
        feats = np.random.default_rng(5).standard_normal((6, 4, 2, 3))
        out = classifier_head(feats, params, mode="train")
        assert out.mean() == pytest.approx(float(params.bn_beta), abs=1e-12)
        with pytest.raises(DegenerateBatchError):
            classifier_head(feats[:1], params, mode="train")

    def test_gating(self, params):
        rng = np.random.default_rng(6)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        for o in (Orientation.BACKSIDE, Orientation.SIDEWAYS):
            a = predict(xb, xf, o, params)
            assert a == classifier_head(xb, params, branch="body")
            assert a == predict(xb, xf * 1e6 + 3, o, params)
            assert a == predict(xb, None, o, params)

    def test_frontal_zero_fusion(self, params):
        params.fusion[...] = 0.0
        rng = np.random.default_rng(8)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        assert predict(xb, xf, Orientation.FRONTAL, params) == classifier_head(xb, params, branch="fused")

    def test_frontal_matches_oracle(self, params):
        rng = np.random.default_rng(9)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        expected = loop_head(loop_forward(xb, xf, params), params)
        assert predict(xb, xf, "Frontal", params) == pytest.approx(expected, rel=1e-12)
        assert predict(xb, xf, "Backside", params) == pytest.approx(loop_head(xb, params, "body_"), rel=1e-12)

    def test_missing_face(self, params):
        with pytest.raises(MissingFaceError):
            predict(np.ones((4, 2, 3)), None, Orientation.FRONTAL, params)

    def test_shared_head(self):
        p = init_params((4, 2, 3), reduction=2, shared_head=True)
        assert p.shared_head and p.body_fc_w is None
        xb = np.random.default_rng(1).standard_normal((4, 2, 3))
        assert predict(xb, None, "Backside", p) == classifier_head(xb, p, branch="fused")

    def test_batched_logits_match_single(self, params):
        rng = np.random.default_rng(10)
        xb, xf = rng.standard_normal((2, 5, 4, 2, 3))
        frontal = np.array([True, False, True, True, False])
        res = forward_backward(params, xb, xf, frontal, np.zeros(5), grads=False)
        single = [predict(xb[k], xf[k], "Frontal" if frontal[k] else "Backside", params) for k in range(5)]
        np.testing.assert_allclose(res.logits, single, rtol=1e-13)


class TestLoss:
    def test_values(self):
        assert bce_logits_loss(0.0, 1) == pytest.approx(math.log(2), abs=1e-15)
        assert 0 <= bce_logits_loss(40.0, 1) < 1e-17
        assert bce_logits_loss(-40.0, 1) == pytest.approx(-(-40.0) + math.log1p(math.exp(-40.0)), rel=1e-15)
        assert bce_logits_loss(-40.0, 1) == pytest.approx(40.0)

    def test_extremes_finite(self):
        z = np.linspace(-1e3, 1e3, 2001)
        for y in (0, 1):
            loss = bce_logits_loss(z, np.full_like(z, y))
            assert np.all(np.isfinite(loss)) and np.all(loss >= 0)
        assert bce_logits_loss(1e3, 0) == pytest.approx(1e3)


class TestBackward:
    def test_fusion_gradient_live_at_zero(self, params):
        params.fusion[...] = 0.0
        rng = np.random.default_rng(11)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        g = backward(xb, xf, Orientation.FRONTAL, 1, params)
        assert np.abs(g["fusion"]).max() > 1e-6
        report = grad_check(params, CheckInputs(xb[None], xf[None], np.array([True]), np.array([1.0])))
        assert report.passed

    def test_backside_face_gradient_zero(self, params):
        rng = np.random.default_rng(12)
        xb, xf = rng.standard_normal((2, 4, 2, 3))
        g = backward(xb, xf, Orientation.BACKSIDE, 0, params)
        assert not g["x_face"].any()
        assert not g["fusion"].any()

    def test_zero_inputs(self, params):
        z = np.zeros((4, 2, 3))
        g = backward(z, z, Orientation.FRONTAL, 1, params)
        assert not g["fc_w"].any()
        assert float(g["fc_b"]) != 0.0
        report = grad_check(params, CheckInputs(z[None], z[None], np.array([True]), np.array([1.0])))
        assert report.passed

    def test_zero_everything(self):
        p = init_params((4, 2, 3), reduction=2)
        for name in p.trainable_names():
            getattr(p, name)[...] = 0.0
        z = np.zeros((1, 4, 2, 3))
        assert grad_check(p, CheckInputs(z, z, np.array([True]), np.array([0.0]))).passed

    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check_seeds(self, seed):
        p = randomize_params(init_params((8, 4, 3), seed=seed), seed)
        assert grad_check(p, random_inputs((8, 4, 3), seed)).passed

    def test_negative_control(self):
        p = randomize_params(init_params((8, 4, 3), seed=0), 0)
        report = grad_check(p, random_inputs((8, 4, 3), 0), gradient_fn=corrupted_gradient_fn("se_w1"))
        assert not report.passed
        assert not report.group_passed("se_w1") and report.group_passed("fusion")

    @pytest.mark.parametrize("seed", range(3))
    def test_train_mode_gradients(self, seed):
        # groups of 4 per head keep batch-norm gradients well conditioned
        p = randomize_params(init_params((8, 2, 2), seed=seed), seed)
        inputs = random_inputs((8, 2, 2), seed, orientations=["Frontal"] * 4 + ["Backside"] * 4)
        assert grad_check(p, inputs, mode="train").passed

    def test_step_range(self, params):
        with pytest.raises(ValueError):
            grad_check(params, random_inputs((4, 2, 3)), h=1e-2)

    def test_report_json(self, params):
        import json
        report = grad_check(params, random_inputs((4, 2, 3), 1))
        doc = json.loads(report.to_json())
        assert doc["passed"] is True and set(doc["groups"]) >= {"fusion", "x_face"}


class TestParams:
    def test_default_reduction(self):
        assert default_reduction(2048) == 16
        assert default_reduction(8) == 4
        assert default_reduction(16) == 8
        assert default_reduction(1) == 1

    def test_bad_reduction(self):
        with pytest.raises(ConfigError):
            init_params((8, 4, 3), reduction=3)

    def test_init(self):
        p = init_params((8, 4, 3))
        assert np.all(p.fusion == 1.0)
        assert np.all(np.abs(p.se_w1) <= 1 / math.sqrt(8))
        assert not p.se_b1.any() and not p.se_b2.any()

    def test_parse_dims(self):
        assert parse_dims("8x4x3") == (8, 4, 3)
        with pytest.raises(ConfigError):
            parse_dims("8x4")

    @pytest.mark.parametrize("seed", range(10))
    def test_checkpoint_round_trip(self, seed, tmp_path):
        rng = np.random.default_rng(seed)
        dims = tuple(int(v) for v in rng.integers(1, 6, size=3))
        dims = (int(rng.choice([2, 4, 8, 16])),) + dims[1:]
        p = randomize_params(init_params(dims, seed=seed, shared_head=bool(seed % 2)), seed)
        cfg = {"lr": 0.01, "seed": seed}
        q, cfg2 = params_from_bytes(checkpoint_bytes(p, cfg))
        assert q.equals(p) and cfg2 == cfg
        save_checkpoint(tmp_path / "c.bin", p)
        assert load_checkpoint(tmp_path / "c.bin")[0].equals(p)
        assert checkpoint_bytes(q, cfg) == checkpoint_bytes(p, cfg)

    def test_checkpoint_is_little_endian_float64(self):
        p = init_params((2, 1, 1), reduction=1)
        data = checkpoint_bytes(p)
        assert data[:8] == b"WFCKPT01"
        hlen = int.from_bytes(data[8:16], "little")
        payload = np.frombuffer(data[16 + hlen:], dtype="<f8")
        np.testing.assert_array_equal(payload, p.flat())

    def test_corrupt_checkpoint(self):
        data = checkpoint_bytes(init_params((2, 1, 1), reduction=1))
        with pytest.raises(ValueError):
            params_from_bytes(data[:-8])
        with pytest.raises(ValueError):
            params_from_bytes(b"nope" + data)
