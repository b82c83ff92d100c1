import numpy as np
import pytest

from mmnet import tensor as T
from mmnet.ca_branch import CABlock, CAModule, MainBranch, ResidualBlock, channel_schedule
from mmnet.errors import ConfigError, DimensionError, GeometryError
from mmnet.rng import Rng


def zero_biases(module):
    for name, p in module.named_parameters():
        if name.endswith("bias"):
            p.data[...] = 0.0


def test_channel_schedule():
    assert channel_schedule() == [3, 64, 128, 256, 512]
    assert channel_schedule(8) == [3, 8, 16, 32, 64]


def test_zero_attn_conv_gives_half():
    ca = CAModule(Rng(0))
    ca.attn_conv.weight.data[...] = 0.0
    ca.attn_conv.bias.data[...] = 0.0
    out = ca(T.Tensor(np.random.default_rng(0).standard_normal((4, 6, 6))))
    assert out.shape == (1, 6, 6)
    assert np.all(out.data == 0.5)


def test_all_ones_prior_is_identity(rng):
    ca = CAModule(Rng(1))
    f = T.Tensor(rng.standard_normal((4, 5, 6)))
    assert np.array_equal(ca(f, T.Tensor(np.ones((1, 10, 12)))).data, ca(f).data)


def test_ca_matches_composition_oracle(rng):
    ca = CAModule(Rng(2))
    f = rng.standard_normal((4, 4, 4))
    prev = rng.random((1, 8, 8))
    w, b = ca.attn_conv.weight.data, ca.attn_conv.bias.data
    pooled = np.stack([f.max(0), f.mean(0)])
    sig = 1.0 / (1.0 + np.exp(-(np.tensordot(w[:, :, 0, 0], pooled, axes=1) + b[:, None, None])))
    prior = prev.reshape(1, 4, 2, 4, 2).max(axis=(2, 4))
    out = ca(T.Tensor(f), T.Tensor(prev)).data
    np.testing.assert_allclose(out, sig * prior, rtol=0, atol=1e-12)


def test_prior_shape_checked(rng):
    ca = CAModule(Rng(0))
    with pytest.raises(GeometryError):
        ca(T.Tensor(rng.standard_normal((2, 4, 4))), T.Tensor(np.ones((1, 4, 4))))


def test_independent_mode_ignores_prior(rng):
    ca = CAModule(Rng(0), mode="independent")
    f = T.Tensor(rng.standard_normal((2, 4, 4)))
    assert np.array_equal(ca(f, T.Tensor(np.zeros((1, 8, 8)))).data, ca(f).data)


def test_bad_mode():
    with pytest.raises(ConfigError):
        CAModule(Rng(0), mode="sideways")


def test_forced_ones_attention_returns_f_conv(rng):
    block = CABlock(Rng(3), 3, 8)
    x = T.Tensor(rng.standard_normal((3, 16, 16)))
    block.attn_override = T.Tensor(np.ones((1, 8, 8)))
    out, _ = block(x)
    assert np.array_equal(out.data, block.conv_features(x).data)


def test_zero_input_zero_bias_gives_zero():
    block = CABlock(Rng(4), 3, 8)
    zero_biases(block)
    out, attn = block(T.Tensor(np.zeros((3, 16, 16))))
    assert np.all(out.data == 0.0)
    assert attn.shape == (1, 8, 8)


def test_block2_shapes(rng):
    block = CABlock(Rng(5), 64, 128)
    out, attn = block(T.Tensor(rng.standard_normal((64, 112, 112))), T.Tensor(rng.random((1, 112, 112))))
    assert out.shape == (128, 56, 56)
    assert attn.shape == (1, 56, 56)


def test_block_rejects_wrong_channels():
    with pytest.raises(DimensionError):
        ResidualBlock(Rng(0), 3, 4).conv_features(T.Tensor(np.zeros((2, 8, 8))))


def test_residual_block_matches_dense_oracle(rng):
    b = ResidualBlock(Rng(9), 2, 3)
    b.norm.weight.data[...] = rng.standard_normal(3)
    b.norm.bias.data[...] = rng.standard_normal(3)
    x = rng.standard_normal((2, 6, 6))
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    w3 = b.conv3.weight.data
    c3 = np.zeros((3, 3, 3))
    for o in range(3):
        for i in range(3):
            for j in range(3):
                c3[o, i, j] = np.sum(w3[o] * xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 3])
    main = np.einsum("oc,chw->ohw", b.conv1_main.weight.data[:, :, 0, 0], c3)
    skip = np.einsum("oc,chw->ohw", b.conv1_skip.weight.data[:, :, 0, 0], x[:, ::2, ::2])
    s = main + skip
    ref = (s - s.mean()) / np.sqrt(s.var() + 1e-5)
    ref = np.maximum(ref * b.norm.weight.data[:, None, None] + b.norm.bias.data[:, None, None], 0.0)
    np.testing.assert_allclose(b.conv_features(T.Tensor(x)).data, ref, atol=1e-12)


def test_residual_convs_have_no_learnable_bias():
    names = [n for n, _ in ResidualBlock(Rng(0), 3, 4).named_parameters()]
    assert not any(n.startswith("conv") and n.endswith("bias") for n in names)
    assert "norm.bias" in names


def test_block_uses_distinct_skip_weights():
    b = ResidualBlock(Rng(0), 4, 4)
    assert not np.array_equal(b.conv1_main.weight.data, b.conv1_skip.weight.data)


def test_main_branch_shapes_small_width(rng):
    branch = MainBranch(Rng(6), width=4)
    fm, maps = branch(T.Tensor(rng.standard_normal((3, 224, 224))))
    assert fm.shape == (32, 14, 14)
    assert [m.shape for m in maps] == [(1, 112, 112), (1, 56, 56), (1, 28, 28), (1, 14, 14)]


def test_main_branch_equal_frames_zero_bias():
    branch = MainBranch(Rng(7), width=4)
    zero_biases(branch)
    fm, _ = branch(T.Tensor(np.zeros((3, 224, 224))))
    assert np.all(fm.data == 0.0)


def test_modes_coincide_on_block1_and_differ_later(rng):
    x = T.Tensor(rng.standard_normal((3, 224, 224)))
    cont = MainBranch(Rng(8), width=4, mode="continuous")
    ind = MainBranch(Rng(8), width=4, mode="independent")
    _, m_c = cont(x)
    _, m_i = ind(x)
    assert np.array_equal(m_c[0].data, m_i[0].data)
    assert all(np.max(np.abs(a.data - b.data)) > 0 for a, b in zip(m_c[1:], m_i[1:]))


def test_all_ones_block1_map_makes_block2_agree(rng):
    x = T.Tensor(rng.standard_normal((3, 224, 224)))
    branches = [MainBranch(Rng(9), width=4, mode=m) for m in ("continuous", "independent")]
    outs = []
    for b in branches:
        b.blocks[0].attn_override = T.Tensor(np.ones((1, 112, 112)))
        outs.append(b(x))
    (_, cont), (_, ind) = outs
    np.testing.assert_array_equal(cont[1].data, ind[1].data)
    assert np.max(np.abs(cont[2].data - ind[2].data)) > 0


def test_main_branch_rejects_wrong_size():
    with pytest.raises(DimensionError):
        MainBranch(Rng(0), width=4)(T.Tensor(np.zeros((3, 112, 112))))


def test_baseline_branch_has_no_maps(rng):
    fm, maps = MainBranch(Rng(0), width=4, use_ca=False)(T.Tensor(rng.standard_normal((3, 224, 224))))
    assert maps == [] and fm.shape == (32, 14, 14)
