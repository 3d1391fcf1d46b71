import numpy as np
import pytest

from puuma.autograd import Tensor, backward, grad_check, ops, parameter_grad_check, precision
from puuma.nets import (MambaBlock, ConfigError, ModelConfig, build_model, checkpoint_bytes, copy_model,
                        desk_preset, fuse, load_checkpoint, paper_preset, save_checkpoint)
from puuma.nets.checkpoint import checkpoint_from_bytes
from puuma.nets.models import validate_config
from puuma.nets.module import Linear
from puuma.training import Adam, composite_loss


@pytest.fixture(scope="module")
def desk():
    return build_model(desk_preset(), seed=0)


def _inputs(cfg, seed=0):
    rng = np.random.default_rng(seed)
    vol = rng.uniform(20, 200, size=cfg.volume_shape).astype(np.float32)
    patch = rng.uniform(20, 200, size=cfg.patch_shape).astype(np.float32)
    mask = np.zeros(cfg.volume_shape, dtype=np.uint8)
    mask[8:16, 10:20, 4:10] = 1
    return vol, patch, mask


# ---- mamba block ----

def test_mamba_block_starts_as_identity():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 3, 2, 2)))
    block = MambaBlock(np.random.default_rng(1), 4, 3)
    np.testing.assert_array_equal(block(x).data, x.data)


@pytest.mark.parametrize("shape", [(4, 2, 2, 2), (8, 4, 4, 2)])
def test_mamba_block_shape(shape):
    block = MambaBlock(np.random.default_rng(0), shape[0], 4)
    block.out_proj.data = np.random.default_rng(1).normal(size=block.out_proj.shape).astype(np.float32)
    assert block(Tensor(np.random.default_rng(2).normal(size=shape))).shape == shape


def test_mamba_block_gradient():
    rng = np.random.default_rng(3)
    block = MambaBlock(rng, 3, 2)
    block.out_proj.data = rng.normal(size=(3, 3))
    block.astype(np.float64)
    w = rng.normal(size=(3, 2, 2, 2))
    for _ in range(3):
        err = grad_check(lambda t: ops.sum(ops.mul(block(t), Tensor(w))), rng.normal(size=(3, 2, 2, 2)))
        assert err < 1e-3
    x = Tensor(rng.normal(size=(3, 2, 2, 2)), dtype=np.float64)
    assert parameter_grad_check(lambda: ops.sum(ops.mul(block(x), Tensor(w))), block.parameters(),
                                n_coords=30, eps=1e-5) < 1e-3


def test_mamba_block_row_major_order():
    # a causal scan: changing the last voxel (W fastest) must not change earlier outputs
    rng = np.random.default_rng(4)
    block = MambaBlock(rng, 2, 2)
    block.out_proj.data = rng.normal(size=(2, 2)).astype(np.float32)
    x = rng.normal(size=(2, 2, 2, 3)).astype(np.float32)
    y0 = block(Tensor(x)).data
    x[:, -1, -1, -1] += 1.0
    y1 = block(Tensor(x)).data
    np.testing.assert_array_equal(y0.reshape(2, -1)[:, :-1], y1.reshape(2, -1)[:, :-1])
    assert not np.array_equal(y0[:, -1, -1, -1], y1[:, -1, -1, -1])


# ---- presets and structure ----

def test_paper_preset_table_values():
    p = paper_preset("puuma")
    assert (p.local_depth, p.global_depth, p.local_latent_dim, p.global_latent_dim) == (3, 6, 4096, 5120)
    assert tuple(p.fcl_dim) == (5120, 16) and p.num_classes == 4
    for v in ("umamba_global", "unet"):
        q = paper_preset(v)
        assert q.global_depth == 6 and q.global_latent_dim == 5120 and tuple(q.fcl_dim) == (5120, 16)


def test_paper_scale_latents_and_parameter_order():
    counts = {}
    for v in ("puuma", "umamba_global", "unet"):
        m = build_model(paper_preset(v), seed=0)
        counts[v] = m.num_parameters()
        lat = m.latent_lengths()
        assert lat["global"] == 5120
        if v == "puuma":
            assert lat["local"] == 4096
        else:
            assert "local" not in lat
    assert counts["puuma"] > counts["umamba_global"] > counts["unet"]


def test_desk_preset_keeps_structure():
    d = desk_preset()
    assert d.volume_shape == (32, 32, 16) and d.patch_shape == (8, 8, 8) and d.base_channels == 4
    assert d.local_depth < d.global_depth


def test_unet_has_no_ssm():
    assert build_model(desk_preset("unet"), 0).ssm_modules() == []
    assert len(build_model(desk_preset("umamba_global"), 0).ssm_modules()) == desk_preset().global_depth


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        validate_config(desk_preset().__class__(**{**desk_preset().to_dict(), "global_depth": 9}))
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({**desk_preset().to_dict(), "bogus": 1})


def test_build_is_deterministic():
    a, b = build_model(desk_preset(), 5), build_model(desk_preset(), 5)
    assert checkpoint_bytes(a) == checkpoint_bytes(b)
    assert checkpoint_bytes(a) != checkpoint_bytes(build_model(desk_preset(), 6))


# ---- forward contracts ----

def test_output_shapes(desk):
    cfg = desk.config
    vol, patch, _ = _inputs(cfg)
    out = desk(vol, patch, 30.0)
    assert out.seg_logits.shape == (1,) + cfg.volume_shape
    assert out.class_logits_global.shape == (4,) and out.class_logits_local.shape == (4,)
    assert out.ga_global.size == 1 and out.ga_local.size == 1 and out.ga_final.size == 1


def test_shape_mismatch_rejected(desk):
    with pytest.raises(ConfigError):
        desk.global_forward(np.zeros((16, 16, 16), np.float32))
    with pytest.raises(ConfigError):
        desk.local_forward(np.zeros((4, 4, 4), np.float32))


def test_non_degenerate_global_branch(desk):
    cfg = desk.config
    a, _, _ = _inputs(cfg, 1)
    b, _, _ = _inputs(cfg, 2)
    assert desk.global_forward(a)[1].item() != desk.global_forward(b)[1].item()


def test_other_variants_expose_global_as_final():
    for v in ("umamba_global", "unet"):
        m = build_model(desk_preset(v), 0)
        vol, _, _ = _inputs(m.config)
        out = m(vol)
        assert out.ga_local is None and out.ga_final is out.ga_global


def test_argmax_invariant_to_logit_shift(desk):
    vol, _, _ = _inputs(desk.config)
    logits = desk.global_forward(vol)[2].data
    for c in (-50.0, 0.3, 1e3):
        assert np.argmax(logits + c) == np.argmax(logits)
        np.testing.assert_allclose(ops.softmax(Tensor(logits + c)).data, ops.softmax(Tensor(logits)).data,
                                   rtol=1e-4, atol=1e-6)


# ---- fusion ----

def _fusion(weights, bias):
    lin = Linear(np.random.default_rng(0), 11, 1)
    lin.weight.data = np.asarray(weights, dtype=np.float32).reshape(1, 11)
    lin.bias.data = np.asarray([bias], dtype=np.float32)
    return lin


def _fuse_args(rng):
    p_g, p_l = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    return [Tensor([rng.uniform(25, 40)]), Tensor(p_g), Tensor([rng.uniform(25, 40)]), Tensor(p_l),
            float(rng.uniform(15, 37))]


def test_fuse_selector():
    rng = np.random.default_rng(0)
    args = _fuse_args(rng)
    out = fuse(_fusion([1] + [0] * 10, 0.0), *args)
    assert out.item() == args[0].item()


def test_fuse_constant():
    out = fuse(_fusion([0] * 11, 38.5), *_fuse_args(np.random.default_rng(1)))
    assert out.item() == pytest.approx(38.5)


def test_fuse_dot_product():
    rng = np.random.default_rng(2)
    for _ in range(10):
        w, b = rng.normal(size=11), rng.normal()
        args = _fuse_args(rng)
        inputs = np.concatenate([args[0].data, args[1].data, args[2].data, args[3].data, [args[4]]])
        expected = float(np.dot(w.astype(np.float32).astype(np.float64), inputs.astype(np.float64)) + np.float32(b))
        assert fuse(_fusion(w, b), *args).item() == pytest.approx(expected, abs=1e-6 * max(1, abs(expected)) * 10)


def test_fusion_initialised_as_branch_mean(desk):
    vol, patch, _ = _inputs(desk.config)
    out = desk(vol, patch, 30.0)
    assert out.ga_final.item() == pytest.approx(0.5 * (out.ga_global.item() + out.ga_local.item()), rel=1e-5)


# ---- gradients and optimisation ----

def test_local_branch_gradient():
    m = copy_model(build_model(desk_preset(), 1)).astype(np.float64)
    for blk in m.local_encoder.modules():
        if isinstance(blk, MambaBlock):
            blk.out_proj.data = np.random.default_rng(2).normal(size=blk.out_proj.shape) * 0.1
    _, patch, _ = _inputs(m.config)
    params = [p for _, p in m.local_encoder.named_parameters()] + m.local_head.parameters()

    with precision(np.float64):
        def loss():
            ga, logits = m.local_forward(patch.astype(np.float64))
            return ops.add(ops.sum(ops.square(ops.sub(ga, 33.0))), ops.sum(ops.square(logits)))

        assert parameter_grad_check(loss, params, n_coords=40, eps=1e-5) < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_one_small_step_decreases_loss(seed):
    m = build_model(desk_preset(), seed)
    vol, patch, mask = _inputs(m.config, seed)
    opt = Adam(m.parameters())
    loss0, _ = composite_loss(m(vol, patch, 30.0), 34.0, 2, mask)
    backward(loss0)
    opt.step(1e-4)
    loss1, _ = composite_loss(m(vol, patch, 30.0), 34.0, 2, mask)
    assert loss1.item() < loss0.item()


# ---- checkpoints ----

def test_checkpoint_round_trip(tmp_path, desk):
    path = tmp_path / "m.pumc"
    save_checkpoint(desk, path)
    back = load_checkpoint(path)
    assert back.config == desk.config
    assert checkpoint_bytes(back) == path.read_bytes()
    raw = path.read_bytes()
    assert raw[:4] == b"PUMC"
    vol, patch, _ = _inputs(desk.config)
    assert back(vol, patch, 30.0).ga_final.item() == desk(vol, patch, 30.0).ga_final.item()


def test_checkpoint_rejects_truncation(desk):
    blob = checkpoint_bytes(desk)
    with pytest.raises(ValueError):
        checkpoint_from_bytes(blob[:-10])
