import numpy as np
import pytest

from mmnet import tensor as T
from mmnet.checkpoint import Checkpoint, decode, encode
from mmnet.config import RunConfig
from mmnet.errors import CheckpointError, ConfigError, DimensionError, LabelError
from mmnet.model import MMNet, build_model, parameter_manifest
from mmnet.rng import Rng

SMALL = RunConfig(num_classes=3, width=4, n_heads=2)


def frames(seed=0):
    r = np.random.default_rng(seed)
    onset = r.random((3, 224, 224))
    return onset, np.clip(onset + 0.1 * r.standard_normal(onset.shape), 0, 1)


def test_full_model_shapes():
    model = build_model(RunConfig())
    pred = model.forward(*frames())
    assert pred.motion_features.shape == (512, 14, 14)
    assert pred.position_embeddings.shape == (512, 14, 14)
    assert [m.shape for m in pred.attn_maps] == [(1, 112, 112), (1, 56, 56), (1, 28, 28), (1, 14, 14)]
    assert pred.logits.shape == (5,)
    assert pred.probabilities.sum() == pytest.approx(1.0)
    assert pred.predicted_class == int(np.argmax(pred.logits.data))


def test_full_model_parameter_count():
    total = sum(c for _, _, c in parameter_manifest(build_model(RunConfig())))
    # residual-block convs are bias-free; each encoder layer carries two 512-wide layer scales
    assert total == 8_484_113


def test_equal_frames_logits_come_from_position_branch():
    model = build_model(SMALL)
    for name, p in model.main.named_parameters():
        if name.endswith("bias"):
            p.data[...] = 0.0
    onset, _ = frames()
    pred = model.forward(onset, onset)
    assert np.all(pred.motion_features.data == 0.0)
    pos = pred.position_embeddings.data.mean(axis=(1, 2))
    ref = model.head.weight.data @ pos + model.head.bias.data
    np.testing.assert_allclose(pred.logits.data, ref, atol=1e-12)


def test_fusion_matches_oracle():
    model = build_model(SMALL)
    pred = model.forward(*frames(4))
    fm, pos = pred.motion_features.data, pred.position_embeddings.data
    fused = fm / np.sqrt(np.mean(fm**2) + 1e-12) + pos
    ref = model.head.weight.data @ fused.mean(axis=(1, 2)) + model.head.bias.data
    np.testing.assert_allclose(pred.logits.data, ref, atol=1e-10)


def test_baseline_composition():
    model = build_model(SMALL.replace(use_ca=False, use_pc=False))
    names = [n for n, _, _ in parameter_manifest(model)]
    assert not any(n.startswith("pc.") or ".ca." in n for n in names)
    pred = model.forward(*frames())
    assert pred.attn_maps == [] and pred.position_embeddings is None


def test_baseline_matches_primitive_composition():
    model = build_model(SMALL.replace(use_ca=False, use_pc=False))
    p = {n: T.Tensor(a) for n, a in model.state_dict().items()}
    onset, apex = frames(5)
    x = T.Tensor(apex - onset)
    for i in range(4):
        pre = f"main.blocks.{i}."
        c = p[pre + "norm.weight"].shape[0]
        zero = T.Tensor(np.zeros(c))
        main = T.conv2d(T.conv2d(x, p[pre + "conv3.weight"], zero, 2, 1), p[pre + "conv1_main.weight"], zero, 1, 0)
        skip = T.conv2d(x, p[pre + "conv1_skip.weight"], zero, 2, 0)
        x = T.relu(T.map_layer_norm(T.add(main, skip), p[pre + "norm.weight"], p[pre + "norm.bias"]))
    ref = T.linear(T.global_avg_pool(T.rms_normalize(x)), p["head.weight"], p["head.bias"]).data
    np.testing.assert_allclose(model.forward(onset, apex).logits.data, ref, atol=1e-12)


def test_ablation_rows_differ_only_by_modules():
    rows = {(ca, pc): {n for n, _, _ in parameter_manifest(build_model(SMALL.replace(use_ca=ca, use_pc=pc)))}
            for ca in (False, True) for pc in (False, True)}
    full = rows[(True, True)]
    assert rows[(False, False)] == {n for n in full if not n.startswith("pc.") and ".ca." not in n}
    assert rows[(True, False)] == {n for n in full if not n.startswith("pc.")}
    assert rows[(False, True)] == {n for n in full if ".ca." not in n}


def test_manifest_properties():
    a = parameter_manifest(build_model(SMALL))
    assert a == parameter_manifest(build_model(SMALL))
    assert all(int(np.prod(shape)) == count for _, shape, count in a)
    assert not any(n.startswith("pc.") for n, _, _ in parameter_manifest(build_model(SMALL.replace(use_pc=False))))


def test_uniform_logits_loss_is_log_k():
    model = build_model(SMALL)
    model.head.weight.data[...] = 0.0
    model.head.bias.data[...] = 0.0
    pred = model.forward(*frames())
    assert model.loss(pred, 0).item() == pytest.approx(np.log(3), rel=1e-14)


def test_large_margin_loss_vanishes():
    logits = T.Tensor(np.array([30.0, 0.0, 0.0]))
    assert T.cross_entropy(logits, 0).item() < 1e-9


def test_loss_label_range():
    model = build_model(SMALL)
    pred = model.forward(*frames())
    for bad in (-1, 3, 1.0):
        with pytest.raises(LabelError):
            model.loss(pred, bad)


def test_frame_shape_checked():
    with pytest.raises(DimensionError):
        build_model(SMALL).forward(np.zeros((3, 112, 112)), np.zeros((3, 112, 112)))


def test_init_is_seeded():
    a, b = build_model(SMALL).state_dict(), build_model(SMALL).state_dict()
    c = build_model(SMALL, seed=1).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


def test_fan_in_init_bounds():
    model = MMNet(RunConfig(num_classes=2, width=4, n_heads=2), Rng(0))
    w = model.main.blocks[1].conv3.weight.data
    bound = 1 / np.sqrt(4 * 9)
    assert np.abs(w).max() <= bound and np.abs(w).max() > 0.9 * bound
    assert np.all(model.main.blocks[1].conv3.bias.data == 0)


def test_checkpoint_roundtrip(tmp_path):
    model = build_model(SMALL)
    ck = Checkpoint(SMALL, model.state_dict())
    ck.save(tmp_path / "c.bin")
    back = Checkpoint.load(tmp_path / "c.bin", SMALL)
    assert list(back.state) == list(ck.state)
    assert all(back.state[k].tobytes() == ck.state[k].tobytes() for k in ck.state)
    assert back.to_bytes() == ck.to_bytes()


def test_checkpoint_rejects_other_config_and_corruption(tmp_path):
    blob = encode({"w": np.ones((2, 3))}, SMALL.digest)
    with pytest.raises(CheckpointError):
        decode(b"XXXXXXXX" + blob[8:])
    with pytest.raises(CheckpointError):
        decode(blob[:-3])
    (tmp_path / "c.bin").write_bytes(blob)
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "c.bin", SMALL.replace(seed=3))


def test_config_text_roundtrip(tmp_path):
    cfg = RunConfig(num_classes=3, use_pc=False, lr0=1e-3, gamma=0.9, out_dir="x")
    cfg.save(tmp_path / "c.txt")
    assert RunConfig.load(tmp_path / "c.txt") == cfg
    assert cfg.digest == cfg.replace(out_dir="elsewhere").digest
    assert cfg.digest != cfg.replace(seed=1).digest


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(attn_mode="other")
    with pytest.raises(ConfigError):
        RunConfig(width=4, n_heads=3)
    with pytest.raises(ConfigError):
        RunConfig.from_strings({"nope": "1"})
    with pytest.raises(ConfigError):
        RunConfig.from_strings({"use_ca": "maybe"})
    with pytest.raises(ConfigError):
        RunConfig.from_text("epochs = 3\n")


def test_gamma_reaches_one_percent():
    cfg = RunConfig(epochs=70)
    assert cfg.lr0 * cfg.resolved_gamma ** 69 == pytest.approx(cfg.lr0 * 0.01, rel=1e-12)
