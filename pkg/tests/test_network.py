"""Two-stage generator: shapes, determinism, identity init, feature reuse."""

import numpy as np
import pytest

from frfsr.config import TrainConfig
from frfsr.network import (FrontEnd, assign_params, compute_correspondence,
                           flatten_params, init_params, reuse_features,
                           sife_embed, stage1_forward, stage2_forward)
from frfsr.tensor import Tensor, conv2d, leaky_relu, pixel_shuffle, reshape


def tiny_cfg(**kw):
    base = dict(hr_size=32, trunk_channels=8, sife_channels=8,
                offset_mid_channels=8, n_drb_units=1, batch_size=1,
                n_pairs=1, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def front():
    return FrontEnd.create(seed=0)


@pytest.fixture
def images(rng):
    i_lr = Tensor(rng.uniform(size=(1, 3, 8, 8)).astype(np.float32))
    i_ref = Tensor(rng.uniform(size=(1, 3, 32, 32)).astype(np.float32))
    return i_lr, i_ref


class TestForward:
    def test_output_shapes_and_records(self, front, images):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        out = stage1_forward(*images, params, cfg, front)
        assert out.i_sr.shape == (1, 3, 32, 32)
        assert out.f_sr.shape[1] == cfg.trunk_channels
        assert len(out.per_scale) == 3
        sizes = [t.shape[2] for t in out.per_scale]
        assert sizes == [8, 16, 32]

    def test_deterministic(self, front, images):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        a = stage1_forward(*images, params, cfg, front)
        b = stage1_forward(*images, params, cfg, front)
        assert np.array_equal(a.i_sr.data, b.i_sr.data)

    def test_reference_size_enforced(self, front, rng):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        i_lr = Tensor(rng.uniform(size=(1, 3, 8, 8)).astype(np.float32))
        bad_ref = Tensor(rng.uniform(size=(1, 3, 24, 24)).astype(np.float32))
        with pytest.raises(ValueError, match="4x"):
            stage1_forward(i_lr, bad_ref, params, cfg, front)

    def test_wrong_stage_params_rejected(self, front, images):
        cfg = tiny_cfg()
        with pytest.raises(ValueError):
            stage1_forward(*images, init_params(cfg, "all"), cfg, front)
        with pytest.raises(ValueError):
            stage2_forward(*images, None, init_params(cfg, "rec"), cfg, front)

    def test_init_is_seed_deterministic(self):
        cfg = tiny_cfg()
        a = init_params(cfg, "rec").flat()
        b = init_params(cfg, "rec").flat()
        assert all(np.array_equal(a[k].data, b[k].data) for k in a)


class TestIdentityInit:
    def test_zeroed_fusion_and_offsets_give_upsample_path_only(self, front, images):
        """Zero residual/offset/fusion weights: the reference branch is cut
        and the network reduces to stem -> upsample convs -> head on F_LR."""
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        for name, t in params.flat().items():
            if ".taam.fuse_" in name or ".fam.offset." in name or ".res.conv2_" in name:
                t.data[:] = 0
        out = stage1_forward(*images, params, cfg, front)

        # independent re-implementation of the upsampling path
        tree = params.tensors
        x = leaky_relu(conv2d(images[0], tree["lr_stem"]["w"], tree["lr_stem"]["b"],
                              padding=1), 0.1)
        for key in ("up1", "up2"):
            x = leaky_relu(pixel_shuffle(
                conv2d(x, tree[key]["w"], tree[key]["b"], padding=1), 2), 0.1)
        expected = conv2d(x, tree["head"]["w"], tree["head"]["b"], padding=1)
        assert np.abs(out.i_sr.data - expected.data).max() <= 1e-6


class TestStage2AndReuse:
    def test_stage2_shapes_and_reuse_consumed(self, front, images):
        cfg = tiny_cfg()
        p1 = init_params(cfg, "rec")
        p2 = init_params(cfg, "all", seed_offset=1)
        out1 = stage1_forward(*images, p1, cfg, front)
        out2 = stage2_forward(*images, out1.detached(), p2, cfg, front)
        assert out2.i_sr.shape == (1, 3, 32, 32)

    def test_stage2_missing_reuse_rejected(self, front, images):
        cfg = tiny_cfg()
        p2 = init_params(cfg, "all")
        with pytest.raises(ValueError):
            stage2_forward(*images, None, p2, cfg, front)

    def test_no_gradient_flows_into_reuse(self, front, images):
        cfg = tiny_cfg()
        p1 = init_params(cfg, "rec")
        p2 = init_params(cfg, "all", seed_offset=1)
        out1 = stage1_forward(*images, p1, cfg, front)
        reuse = out1.detached()
        out2 = stage2_forward(*images, reuse, p2, cfg, front)
        out2.i_sr.sum().backward()
        for t in reuse.per_scale + [reuse.f_sr]:
            assert t.grad is None
        # stage-1 parameters receive nothing either
        assert all(t.grad is None for t in p1.flat().values())

    def test_reuse_modes_agree_on_shapes(self, front, images):
        cfg_a = tiny_cfg(reuse_mode="per_scale")
        cfg_b = tiny_cfg(reuse_mode="final_downsampled")
        p1 = init_params(cfg_a, "rec")
        out1 = stage1_forward(*images, p1, cfg_a, front)
        ra = reuse_features(out1, cfg_a, 8, 8)
        rb = reuse_features(out1, cfg_b, 8, 8)
        assert [t.shape for t in ra] == [t.shape for t in rb]

    def test_frf_disabled_matches_stage1_topology(self, front, images):
        """With feature reuse off, stage-`all` params carry no reuse columns
        and the forward works without reuse features."""
        cfg = tiny_cfg(frf=False)
        p2 = init_params(cfg, "all")
        out = stage2_forward(*images, None, p2, cfg, front)
        assert out.i_sr.shape == (1, 3, 32, 32)

    def test_zeroed_reuse_columns_match_stage1_topology(self, front, images):
        """Zero the reuse fusion columns and feed zero reuse features: the
        stage-2 forward must equal a stage-1-topology forward with the same
        remaining weights."""
        cfg = tiny_cfg()
        p1 = init_params(cfg, "rec")
        p2 = init_params(cfg, "all", seed_offset=0)  # same seed as p1
        # overwrite shared tensors with stage-1 values; zero reuse columns
        flat1, flat2 = p1.flat(), p2.flat()
        for name, t2 in flat2.items():
            if name.startswith("disc."):
                continue
            t1 = flat1.get(name)
            if t1 is None:
                continue
            if t1.shape == t2.shape:
                t2.data[...] = t1.data
            else:  # widened fusion conv: shared columns first, reuse columns 0
                c_shared = t1.shape[1]
                t2.data[:, :c_shared] = t1.data
                t2.data[:, c_shared:] = 0
        out1 = stage1_forward(*images, p1, cfg, front)
        zero_reuse = out1.detached()
        for t in zero_reuse.per_scale:
            t.data[...] = 0
        out2 = stage2_forward(*images, zero_reuse, p2, cfg, front)
        assert np.abs(out2.i_sr.data - out1.i_sr.data).max() <= 1e-6


class TestParamsIO:
    def test_flatten_assign_roundtrip(self):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        flat = {k: t.data.copy() for k, t in params.flat().items()}
        fresh = init_params(cfg, "rec", seed_offset=3)
        assign_params(fresh, flat)
        for k, t in fresh.flat().items():
            assert np.array_equal(t.data, flat[k])

    def test_assign_rejects_name_mismatch(self):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        flat = {k: t.data.copy() for k, t in params.flat().items()}
        flat["bogus"] = np.zeros(1, dtype=np.float32)
        with pytest.raises(ValueError, match="mismatch"):
            assign_params(params, flat)


class TestCorrespondence:
    def test_levels_align_with_scales(self, front, images):
        corr = compute_correspondence(*images, front)
        assert len(corr.warped_levels) == 3
        sizes = [t.shape[2] for t in corr.warped_levels]
        assert sizes == [8, 16, 32]

    def test_sife_embed_keeps_resolution(self, rng):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        x = Tensor(rng.uniform(size=(1, 3, 8, 8)).astype(np.float32))
        out = sife_embed(x, params.tensors["sife"])
        assert out.shape == (1, cfg.sife_channels, 8, 8)
