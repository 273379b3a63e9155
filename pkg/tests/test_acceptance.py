"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines live.
Criteria 8 and 9 train models at desk scale and take tens of minutes.
"""

import contextlib
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import check_gradients

from text23d.autodiff import Tensor, default_dtype, no_grad, nn, ops
from text23d.captionsim import DualEncoder, clip_score
from text23d.config import PipelineConfig
from text23d.errors import ContractViolation
from text23d.metrics import consistency_error
from text23d.pipeline import Pipeline
from text23d.radiance import (
    RadianceField,
    evenly_spaced_views,
    mean_color_baseline_psnr,
    reconstruction_psnr,
    render_rays,
    train_views_to_3d,
)
from text23d.radiance.render import composite
from text23d.scene import camera_rig
from text23d.textviews import (
    ContrastiveConfig,
    LossWeights,
    SequenceLayout,
    TextToViews,
    TransformerConfig,
    ViewTransformer,
    combine_losses,
    contrastive_loss,
    generate_views,
    info_nce,
    tokenize_dataset,
)
from text23d.textviews.generator import train_text_to_views
from text23d.textviews.losses import ViewEncoder
from text23d.tokens import BPETokenizer, VQTokenizer, nearest_code_indices, vq_quantize


@contextlib.contextmanager
def criterion(name: str):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL ({time.time() - start:.0f}s)")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS ({time.time() - start:.0f}s)")


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """Desk-scale dataset (64 objects) with tokenizer + captionsim trained."""
    cfg = PipelineConfig()
    cfg.out_dir = str(tmp_path_factory.mktemp("desk_run"))
    pipe = Pipeline(cfg)
    pipe.build_dataset()
    pipe.train_stage("tokenizer", verbose=False)
    pipe.train_stage("captionsim", verbose=False)
    return pipe


# ---------------------------------------------------------------------------
# 1. gradient suite
# ---------------------------------------------------------------------------


def _t(rng, shape, shift=0.0):
    return Tensor(np.asarray(rng.normal(size=shape)) + shift, requires_grad=True)


def _elementwise_cases():
    return {
        "add": lambda rng, a, b: ops.add(a, b),
        "sub": lambda rng, a, b: ops.sub(a, b),
        "mul": lambda rng, a, b: ops.mul(a, b),
        "div": lambda rng, a, b: ops.div(a, ops.add(ops.mul(b, b), 0.5)),
        "neg": lambda rng, a, b: ops.neg(a),
        "pow": lambda rng, a, b: ops.pow_const(ops.add(ops.mul(a, a), 0.3), 1.7),
        "exp": lambda rng, a, b: ops.exp(ops.mul(a, 0.5)),
        "log": lambda rng, a, b: ops.log(ops.add(ops.mul(a, a), 0.4)),
        "sqrt": lambda rng, a, b: ops.sqrt(ops.add(ops.mul(a, a), 0.2)),
        "abs": lambda rng, a, b: ops.abs(a),
        "relu": lambda rng, a, b: ops.relu(a),
        "tanh": lambda rng, a, b: ops.tanh(a),
        "sigmoid": lambda rng, a, b: ops.sigmoid(a),
        "softplus": lambda rng, a, b: ops.softplus(a),
        "gelu": lambda rng, a, b: ops.gelu(a),
    }


def _op_trial(name: str, trial_rng: np.random.Generator) -> float:
    """One random-instance gradient check; returns the relative error."""
    ew = _elementwise_cases()
    if name in ew:
        a = _t(trial_rng, (3, 4))
        b = _t(trial_rng, (3, 4))
        return check_gradients(lambda: ops.mean(ops.mul(ew[name](trial_rng, a, b),
                                                        ew[name](trial_rng, a, b))),
                               [a, b])
    if name == "sum_mean_cumsum":
        a = _t(trial_rng, (2, 3, 4))
        def loss():
            s = ops.sum(a, axis=2)
            m = ops.mean(a, axis=(0, 1), keepdims=True)
            c = ops.cumsum(a, axis=1)
            return ops.add(ops.mean(ops.mul(s, s)),
                           ops.add(ops.mean(ops.mul(m, m)), ops.mean(ops.abs(c))))
        return check_gradients(loss, [a])
    if name == "shape_ops":
        a = _t(trial_rng, (3, 4))
        b = _t(trial_rng, (3, 2))
        def loss():
            c = ops.concat([a, b], axis=1)
            s = ops.stack([c, ops.mul(c, 2.0)], axis=0)
            r = ops.reshape(ops.transpose(s, (1, 0, 2)), (3, 12))
            return ops.mean(ops.mul(r[:, 2:9], r[:, 2:9]))
        return check_gradients(loss, [a, b])
    if name == "matmul":
        a = _t(trial_rng, (2, 3, 4))
        b = _t(trial_rng, (4, 3))
        return check_gradients(lambda: ops.mean(ops.pow_const(ops.matmul(a, b), 2)),
                               [a, b])
    if name == "embedding":
        w = _t(trial_rng, (6, 4))
        ids = trial_rng.integers(0, 6, size=(3, 2))
        return check_gradients(lambda: ops.mean(ops.exp(ops.embedding(w, ids))), [w])
    if name == "layer_norm":
        x = _t(trial_rng, (3, 5))
        g = _t(trial_rng, (5,), shift=1.0)
        b = _t(trial_rng, (5,))
        return check_gradients(lambda: ops.mean(ops.abs(ops.layer_norm(x, g, b))),
                               [x, g, b])
    if name == "softmax":
        x = _t(trial_rng, (3, 5))
        return check_gradients(lambda: ops.mean(ops.pow_const(ops.softmax(x), 2)), [x])
    if name == "log_softmax":
        x = _t(trial_rng, (3, 5))
        return check_gradients(lambda: ops.mean(ops.mul(ops.log_softmax(x),
                                                        ops.sigmoid(x))), [x])
    if name == "cross_entropy":
        x = _t(trial_rng, (4, 6))
        t = trial_rng.integers(0, 6, size=4)
        return check_gradients(lambda: ops.softmax_cross_entropy(x, t), [x])
    if name == "attention_masked":
        q = _t(trial_rng, (2, 4, 3))
        k = _t(trial_rng, (2, 4, 3))
        v = _t(trial_rng, (2, 4, 3))
        mask = np.triu(np.full((4, 4), -np.inf), k=1)
        return check_gradients(
            lambda: ops.mean(ops.pow_const(ops.attention(q, k, v, mask), 2)),
            [q, k, v])
    if name == "conv2d":
        x = _t(trial_rng, (1, 5, 5, 2))
        w = Tensor(np.asarray(trial_rng.normal(size=(3, 3, 2, 3))) * 0.4,
                   requires_grad=True)
        b = _t(trial_rng, (3,))
        return check_gradients(
            lambda: ops.mean(ops.tanh(ops.conv2d(x, w, b, stride=2, padding=1))),
            [x, w, b])
    if name == "conv_transpose2d":
        x = _t(trial_rng, (1, 3, 3, 3))
        w = Tensor(np.asarray(trial_rng.normal(size=(4, 4, 2, 3))) * 0.4,
                   requires_grad=True)
        b = _t(trial_rng, (2,))
        return check_gradients(
            lambda: ops.mean(ops.sigmoid(ops.conv_transpose2d(x, w, b))), [x, w, b])
    if name == "bilinear_sample":
        f = _t(trial_rng, (2, 4, 4, 3))
        coords = trial_rng.uniform(-0.5, 4.0, size=(2, 5, 2))
        valid = trial_rng.uniform(size=(2, 5)) > 0.2
        return check_gradients(
            lambda: ops.mean(ops.pow_const(ops.bilinear_sample(f, coords, valid), 2)),
            [f])
    if name == "straight_through_vq":
        # The hard forward is locally constant, so the documented contract is
        # checked instead: the straight-through gradient must equal the
        # identity-substituted path, and that path matches finite differences.
        feat = _t(trial_rng, (2, 2, 3))
        codes = np.asarray(trial_rng.normal(size=(5, 3)))
        mixer = np.asarray(trial_rng.normal(size=(3,)))

        def st_loss():
            _, quant = vq_quantize(feat, codes)
            return ops.mean(ops.mul(ops.matmul(
                ops.reshape(quant, (4, 3)), Tensor(mixer[:, None])), 1.0))

        def identity_loss():
            return ops.mean(ops.mul(ops.matmul(
                ops.reshape(feat, (4, 3)), Tensor(mixer[:, None])), 1.0))

        st_loss().backward()
        st_grad = feat.grad.copy()
        feat.grad = None
        err_fd = check_gradients(identity_loss, [feat])
        identity_grad = feat.grad.copy()
        assert np.array_equal(st_grad, identity_grad)
        return err_fd
    if name == "contrastive_eq1":
        enc = _tiny_view_encoder(trial_rng)
        imgs = [np.asarray(trial_rng.uniform(size=(8, 8, 3))) for _ in range(4)]
        def loss():
            return contrastive_loss(imgs[0], imgs[1], imgs[2:], enc,
                                    ContrastiveConfig(temperature=0.3))
        return check_gradients(loss, enc.parameters(), max_coords=4, rng=trial_rng)
    if name == "total_objective":
        return _total_objective_trial(trial_rng)
    if name == "volume_render_micro":
        return _render_micro_trial(trial_rng)
    raise AssertionError(name)


@contextlib.contextmanager
def _relu_kink_probe():
    """Track the smallest |pre-activation| seen by any relu call.

    Central differences are only valid where the loss is differentiable;
    relu is not at 0, so trials whose activations sit within the FD step of
    a kink are redrawn (the criterion samples generic random points).
    """
    seen = [np.inf]
    original = ops.relu

    def probed(a):
        if a.data.size:
            seen[0] = min(seen[0], float(np.abs(a.data).min()))
        return original(a)

    ops.relu = probed
    try:
        yield seen
    finally:
        ops.relu = original


def _generic_point(loss_fn, threshold: float = 8e-5) -> bool:
    with _relu_kink_probe() as seen:
        loss_fn()
    return seen[0] > threshold


def _tiny_view_encoder(rng):
    enc = ViewEncoder.__new__(ViewEncoder)
    gen = np.random.default_rng(rng.integers(2**32))
    enc.resolution = 8
    enc.convs = [nn.Conv2d(3, 4, 3, gen, stride=2, padding=1)]
    enc.proj = nn.Linear(4, 5, gen)
    # keep the pre-normalization vector away from zero: the 1/||v||^3
    # curvature of l2_normalize would otherwise swamp finite differences
    enc.proj.bias.data = np.linspace(0.3, 0.9, 5).astype(enc.proj.bias.dtype)
    return enc


def _total_objective_trial(trial_rng) -> float:
    gen = np.random.default_rng(trial_rng.integers(2**32))
    w = nn.uniform_fan_in(gen, (6, 8), 6)
    x = np.asarray(gen.normal(size=(3, 6)))
    targets = gen.integers(0, 8, size=3)
    pix_target = np.asarray(gen.uniform(size=(3, 8)))

    def loss():
        logits = ops.matmul(Tensor(x), w)
        decoded = ops.sigmoid(logits)
        emb = nn.l2_normalize(logits)
        sims = ops.matmul(emb, ops.transpose(emb))
        terms = {
            "pose": ops.softmax_cross_entropy(logits, targets),
            "txt": ops.softmax_cross_entropy(ops.mul(logits, 0.7), targets),
            "prior": ops.softmax_cross_entropy(ops.mul(logits, 1.3), targets),
            "img": ops.softmax_cross_entropy(ops.mul(logits, 0.5), targets),
            "pixel": ops.mean(ops.abs(ops.sub(decoded, Tensor(pix_target)))),
            "caption": ops.neg(ops.mean(sims[0, 1:2])),
            "contrastive": info_nce(sims[0, 1], sims[0, 2:],
                                    ContrastiveConfig(temperature=0.5)),
        }
        return combine_losses(terms, LossWeights())

    return check_gradients(loss, [w])


def _render_micro_trial(trial_rng) -> float:
    gen = np.random.default_rng(trial_rng.integers(2**32))
    field = RadianceField(feature_dim=4, hidden=6, block=4,
                          seed=int(gen.integers(2**31)), resolution=8)
    # nudge biases off zero: with only 6 hidden units a ReLU layer can die
    # completely, parking the next layer exactly on its kink where one-sided
    # finite differences disagree with the subgradient by construction
    for name, p in field.named_parameters():
        if name.endswith("bias"):
            p.data = p.data + gen.uniform(0.02, 0.1, size=p.data.shape)
    pose = camera_rig(int(gen.integers(0, 36)), resolution=8)
    image = np.asarray(gen.uniform(size=(1, 8, 8, 3)))
    origin = pose.position
    direction = -origin / np.linalg.norm(origin)
    gt = np.asarray(gen.uniform(size=(1, 3)))

    def loss():
        feats = field.extract_features(image)
        rgb, t_end, _ = render_rays(
            origin, direction[None],
            lambda pts, ds: field.query(pts, ds, feats, [pose]),
            n_samples=4, rng=None)
        return ops.mean(ops.pow_const(ops.sub(rgb, Tensor(gt)), 2))

    return check_gradients(loss, field.parameters(), max_coords=3, rng=gen)


GRAD_SUITE = (list(_elementwise_cases()) +
              ["sum_mean_cumsum", "shape_ops", "matmul", "embedding",
               "layer_norm", "softmax", "log_softmax", "cross_entropy",
               "attention_masked", "conv2d", "conv_transpose2d",
               "bilinear_sample", "straight_through_vq", "contrastive_eq1",
               "total_objective", "volume_render_micro"])


def test_criterion_1_gradient_suite():
    with criterion("1. gradient suite (FD, 100 trials/op, rel err < 1e-4)"):
        start = time.time()
        with default_dtype(np.float64):
            for op_index, name in enumerate(GRAD_SUITE):
                worst = 0.0
                for trial in range(100):
                    rng = np.random.default_rng([11, op_index, trial])
                    worst = max(worst, _op_trial(name, rng))
                assert worst < 1e-4, f"{name}: rel err {worst}"
        assert time.time() - start < 300


# ---------------------------------------------------------------------------
# 2. quantization oracle
# ---------------------------------------------------------------------------


def test_criterion_2_quantization_oracle():
    with criterion("2. vq_quantize vs exhaustive search (1000 instances, exact)"):
        start = time.time()
        rng = np.random.default_rng(22)
        for _ in range(1000):
            h, w = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            k, nz = int(rng.integers(2, 14)), int(rng.integers(2, 7))
            fmap = rng.normal(size=(h, w, nz))
            codes = rng.normal(size=(k, nz))
            fast = nearest_code_indices(fmap, codes)
            for i in range(h):
                for j in range(w):
                    best, best_d = 0, float("inf")
                    for c in range(k):
                        d = 0.0
                        for z in range(nz):
                            diff = fmap[i, j, z] - codes[c, z]
                            d += diff * diff
                        if d < best_d:
                            best, best_d = c, d
                    assert fast[i, j] == best
        assert time.time() - start < 60


# ---------------------------------------------------------------------------
# 3. volume rendering oracle
# ---------------------------------------------------------------------------


def test_criterion_3_volume_rendering_oracle():
    with criterion("3. transmittance vs exp(-sigma L); monotonicity; weight bound"):
        start = time.time()

        def const_field(sig):
            def fn(pts, ds):
                p = pts.shape[0]
                return (Tensor(np.full(p, sig, dtype=np.float32)),
                        Tensor(np.full((p, 3), 0.5, dtype=np.float32)))
            return fn

        for sigma in (0.1, np.log(2.0), 5.0):
            for length in (0.5, 1.0, 2.0):
                rng = np.random.default_rng([33, int(sigma * 100), int(length * 10)])
                _, t_end, _ = render_rays(
                    np.array([0, 0, 3.0]), np.tile([0, 0, -1.0], (4, 1)),
                    const_field(sigma), n_samples=512,
                    near=0.5, far=0.5 + length, rng=rng)
                expected = np.exp(-sigma * length)
                assert np.abs(t_end.data - expected).max() < 1e-3, (sigma, length)

        rng = np.random.default_rng(34)
        r, s = 1000, 24
        sigma = Tensor(rng.uniform(0, 6, size=(r, s)).astype(np.float32))
        color = Tensor(rng.uniform(size=(r, s, 3)).astype(np.float32))
        depths = np.sort(rng.uniform(1.0, 3.0, size=(r, s)), axis=1)
        _, t_end, _ = composite(sigma, color, depths, far=3.2)
        tau = sigma.data * np.diff(
            np.concatenate([depths, np.full((r, 1), 3.2)], axis=1))
        excl = np.concatenate([np.zeros((r, 1)), np.cumsum(tau, axis=1)[:, :-1]], axis=1)
        trans = np.exp(-excl)
        assert np.all(np.diff(trans, axis=1) <= 0.0)
        weights = trans * (1.0 - np.exp(-tau))
        assert weights.sum(axis=1).max() <= 1.0 + 1e-6
        assert time.time() - start < 120


# ---------------------------------------------------------------------------
# 4. aggregation structure
# ---------------------------------------------------------------------------


def test_criterion_4_field_structure():
    with criterion("4. sigma direction-invariant; view permutation; N=1 identity"):
        start = time.time()
        field = RadianceField(feature_dim=8, hidden=16, block=8, seed=4)
        rng = np.random.default_rng(44)
        images = rng.uniform(size=(4, 48, 48, 3)).astype(np.float32)
        poses = [camera_rig(i) for i in (0, 9, 18, 27)]
        with no_grad():
            feats = field.extract_features(images)
        pts = rng.uniform(-0.6, 0.6, size=(6, 3))

        ref = None
        for _ in range(100):
            dirs = rng.normal(size=(6, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            with no_grad():
                sigma, _ = field.query(pts, dirs, feats, poses)
            if ref is None:
                ref = sigma.data
            else:
                assert np.array_equal(sigma.data, ref)

        dirs = rng.normal(size=(6, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        with no_grad():
            s_a, c_a = field.query(pts, dirs, feats, poses)
        perm = [3, 1, 0, 2]
        with no_grad():
            s_b, c_b = field.query(pts, dirs, Tensor(feats.data[perm]),
                                   [poses[i] for i in perm])
        assert np.abs(s_a.data - s_b.data).max() < 1e-6
        assert np.abs(c_a.data - c_b.data).max() < 1e-6

        # N=1: mean pooling over one view is the identity; duplicating the
        # view leaves (sigma, color) bit-identical ((U+U)/2 == U exactly)
        with no_grad():
            s_1, c_1 = field.query(pts, dirs, Tensor(feats.data[:1]), poses[:1])
            s_dup, c_dup = field.query(pts, dirs,
                                       Tensor(np.repeat(feats.data[:1], 2, axis=0)),
                                       [poses[0], poses[0]])
        assert np.array_equal(s_1.data, s_dup.data)
        assert np.array_equal(c_1.data, c_dup.data)
        assert time.time() - start < 60


# ---------------------------------------------------------------------------
# 5. causality and prior masking
# ---------------------------------------------------------------------------


def test_criterion_5_causality_and_masking():
    with criterion("5. causal logits bit-identical; masked prior blocks content"):
        start = time.time()
        layout = SequenceLayout(n_t=32, n_i=36, caption_vocab=512, image_vocab=128)
        model = ViewTransformer(layout.vocab_size, layout.total_len,
                                TransformerConfig(), seed=5)
        rng = np.random.default_rng(55)
        for _ in range(100):
            target = rng.integers(0, 128, 36)
            prior = rng.integers(0, 128, 36)
            seq = layout.build_sequence(int(rng.integers(0, 36)),
                                        rng.integers(2, 250, 5), prior, target)
            j = int(rng.integers(2, layout.total_len))
            perturbed = seq.copy()
            perturbed[j] = layout.image_token(int(rng.integers(0, 128)))
            with no_grad():
                a = model(seq).data[0]
                b = model(perturbed).data[0]
            assert np.array_equal(a[:j], b[:j])

        for _ in range(100):
            target = rng.integers(0, 128, 36)
            cap = rng.integers(2, 250, 4)
            pose = int(rng.integers(0, 36))
            # two different would-be priors, both masked before embedding
            seq_a = layout.build_sequence(pose, cap, None, target)
            seq_b = layout.build_sequence(pose, cap, None, target)
            assert np.array_equal(seq_a, seq_b)
            with no_grad():
                la = model(seq_a).data[0, layout.target_slice]
                lb = model(seq_b).data[0, layout.target_slice]
            assert np.array_equal(la, lb)
        # sanity: an unmasked prior does influence target logits
        seq_c = layout.build_sequence(pose, cap, rng.integers(0, 128, 36), target)
        with no_grad():
            lc = model(seq_c).data[0, layout.target_slice]
        assert not np.array_equal(la, lc)
        assert time.time() - start < 120


# ---------------------------------------------------------------------------
# 6. contrastive loss values
# ---------------------------------------------------------------------------


def test_criterion_6_contrastive_values():
    with criterion("6. equal-sim loss = ln K_neg; worked example -1.306853"):
        for k in (2, 4, 8):
            sims = Tensor(np.full(k + 1, 0.61))
            loss = info_nce(sims[0], sims[1:], ContrastiveConfig(temperature=0.07))
            assert abs(loss.item() - np.log(k)) < 1e-6
        # identical images through a real f_enc: all similarities equal 1
        enc = ViewEncoder(seed=6)
        img = np.random.default_rng(66).uniform(size=(48, 48, 3)).astype(np.float32)
        for k in (2, 4):
            loss = contrastive_loss(img, img, [img] * k, enc, ContrastiveConfig())
            assert abs(loss.item() - np.log(k)) < 1e-5
        sims = Tensor(np.array([1.0, -1.0, -1.0]))
        loss = info_nce(sims[0], sims[1:], ContrastiveConfig(temperature=1.0))
        assert abs(loss.item() - (-1.306853)) < 1e-5


# ---------------------------------------------------------------------------
# 7. objective weighting
# ---------------------------------------------------------------------------


def test_criterion_7_objective_weighting():
    with criterion("7. perturbing one term by delta moves total by lambda*delta"):
        with default_dtype(np.float64):
            rng = np.random.default_rng(77)
            weights = LossWeights()
            assert tuple(weights.as_dict().values()) == (0.1, 0.1, 0.1, 0.6, 1.0, 1.0, 1.0)
            names = list(weights.as_dict())
            for _ in range(20):
                base = {n: rng.uniform(0.2, 3.0) for n in names}
                delta = float(rng.uniform(1e-4, 1e-2))
                for name, lam in weights.as_dict().items():
                    t0 = combine_losses(
                        {n: Tensor(np.array(v)) for n, v in base.items()}, weights)
                    bumped = dict(base)
                    bumped[name] += delta
                    t1 = combine_losses(
                        {n: Tensor(np.array(v)) for n, v in bumped.items()}, weights)
                    assert abs((t1.item() - t0.item()) - lam * delta) < 1e-9


# ---------------------------------------------------------------------------
# 10. end-to-end determinism (cheap; runs before the training criteria)
# ---------------------------------------------------------------------------


def test_criterion_10_end_to_end_determinism(tmp_path):
    with criterion("10. byte-identical greedy bundles; bit-exact checkpoints"):
        cfg = PipelineConfig()
        cfg.out_dir = str(tmp_path / "run")
        cfg.dataset.objects = 8
        cfg.tokenizer.steps = 40
        cfg.clip.steps = 40
        cfg.t2v.steps = 16
        cfg.t2v.batch_objects = 2
        cfg.v23d.steps = 16
        cfg.v23d.samples_per_ray = 8
        pipe = Pipeline(cfg)
        pipe.build_dataset()
        for stage in ("tokenizer", "captionsim", "t2v", "v23d"):
            pipe.train_stage(stage, verbose=False)

        bundle_a = pipe.generate("Red Round Chair", verbose=False)
        snap = {p.name: p.read_bytes() for p in bundle_a.iterdir()}
        bundle_b = pipe.generate("Red Round Chair", verbose=False)
        assert bundle_a == bundle_b
        names = sorted(p.name for p in bundle_b.iterdir())
        assert names == sorted(snap)
        for name in names:
            assert (bundle_b / name).read_bytes() == snap[name], name

        from text23d.checkpoint import load_checkpoint, save_checkpoint
        for stage in ("tokenizer", "captionsim", "t2v", "v23d"):
            _, tensors, extra, chash = load_checkpoint(pipe.ckpt_path(stage))
            copy_path = tmp_path / f"{stage}_copy.ckpt"
            save_checkpoint(copy_path, stage, chash, tensors, extra)
            _, reloaded, _, _ = load_checkpoint(copy_path)
            assert set(reloaded) == set(tensors)
            for name in tensors:
                assert np.array_equal(reloaded[name], tensors[name])


# ---------------------------------------------------------------------------
# 8. training smoke (slow)
# ---------------------------------------------------------------------------


SMOKE_SEEDS = (0, 1, 2)


def _fresh_t2v(pipe: Pipeline, seed: int, prior: bool, caption_weight: float):
    vq = pipe.make_vq()
    pipe._load_stage("tokenizer", vq.named_parameters())
    bpe = pipe.load_bpe()
    clip = pipe.make_clip()
    pipe._load_stage("captionsim", clip.named_parameters())
    t = pipe.cfg.t2v
    return TextToViews(
        vq, bpe, clip,
        TransformerConfig(t.layers, t.heads, t.head_dim, t.ffn_dim, t.dropout),
        seed=seed, prior_guidance=prior,
        weights=LossWeights(caption=caption_weight),
        contrastive=ContrastiveConfig(t.temperature, t.include_positive))


def _gen_eval(model, captions):
    cons, clips = [], []
    for cap in captions:
        views = generate_views(model, cap, 9)
        imgs = [img for _, img, _ in views]
        cons.append(consistency_error(imgs))
        clips.append(clip_score(model.clip, imgs, model.caption_ids(cap)))
    return float(np.mean(cons)), float(np.mean(clips))


def test_criterion_8_training_smoke(desk):
    with criterion("8. loss drop >= 50%; prior-guidance and caption-guidance trends"):
        start = time.time()
        ds = desk.dataset()
        captions = sorted({o.caption for o in ds.split("val") + ds.split("test")})[:6]
        tokenized = None
        drops, cons_on, cons_off, clip_on, clip_off = [], [], [], [], []
        for seed in SMOKE_SEEDS:
            per_variant = {}
            for variant, prior, cap_w in (("full", True, 1.0),
                                          ("prior_off", False, 1.0),
                                          ("caption_off", True, 0.0)):
                model = _fresh_t2v(desk, seed, prior, cap_w)
                if tokenized is None:
                    tokenized = tokenize_dataset(ds, model, split="train")
                log, _ = train_text_to_views(model, tokenized, steps=2000, seed=seed)
                first = log[0]["total"]
                last = float(np.mean([r["total"] for r in log[-50:]]))
                cons, clip = _gen_eval(model, captions)
                per_variant[variant] = (first, last, cons, clip)
            first, last, cons, clip = per_variant["full"]
            drops.append(1.0 - last / first)
            cons_on.append(cons)
            clip_on.append(clip)
            cons_off.append(per_variant["prior_off"][2])
            clip_off.append(per_variant["caption_off"][3])
            print(f"seed {seed}: drop {drops[-1]:.2f} cons {cons:.2f}/"
                  f"{cons_off[-1]:.2f} clip {clip:.2f}/{clip_off[-1]:.2f}")

        assert np.median(drops) >= 0.5, f"median loss drop {np.median(drops):.2f}"
        assert np.median(cons_on) < np.median(cons_off), \
            f"consistency ON {np.median(cons_on):.3f} !< OFF {np.median(cons_off):.3f}"
        assert np.median(clip_on) > np.median(clip_off), \
            f"clip ON {np.median(clip_on):.2f} !> OFF {np.median(clip_off):.2f}"
        assert time.time() - start < 3600


# ---------------------------------------------------------------------------
# 9. conditioning-views trend (slow)
# ---------------------------------------------------------------------------


def test_criterion_9_views_count_trend(desk):
    with criterion("9. held-out PSNR non-decreasing over N in {1,3,9}; beats baseline"):
        start = time.time()
        ds = desk.dataset()
        train_objs = ds.split("train")
        held = (ds.split("val") + ds.split("test"))[:10]
        assert len(held) == 10
        target = 2
        per_seed = {1: [], 3: [], 9: []}
        for seed in SMOKE_SEEDS:
            field = RadianceField(seed=seed + 300)
            train_views_to_3d(field, train_objs, steps=1500, lr=1.5e-3,
                              seed=seed + 300, n_samples=32)
            for n in (1, 3, 9):
                cond = evenly_spaced_views(n, 36, exclude=target)
                vals = [reconstruction_psnr(field, obj, cond, target, n_samples=64)
                        for obj in held]
                per_seed[n].append(float(np.median(vals)))
            print(f"seed {seed}: " + " ".join(
                f"N={n}:{per_seed[n][-1]:.2f}" for n in (1, 3, 9)))
        med = {n: float(np.median(per_seed[n])) for n in (1, 3, 9)}
        baseline = float(np.median(
            [mean_color_baseline_psnr(obj, target) for obj in held]))
        print(f"medians {med} baseline {baseline:.2f}")
        assert med[1] <= med[3] <= med[9]
        assert med[9] >= baseline + 3.0
        assert time.time() - start < 2700
