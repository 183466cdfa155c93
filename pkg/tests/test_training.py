"""Optimizer behaviour, short training smoke runs, stage-1 freezing, and
training-checkpoint round trips."""

import numpy as np
import pytest

from frfsr.checkpoint import load_checkpoint
from frfsr.config import TrainConfig
from frfsr.network import FrontEnd, init_params
from frfsr.tensor import Tensor
from frfsr.training import (Adam, TrainResult, load_stage1_params,
                            load_stage2_params, save_stage1_checkpoint,
                            save_stage2_checkpoint, train_stage1,
                            train_stage2, train_two_stage)
from frfsr.data import synthetic_dataset


def tiny_cfg(**kw):
    base = dict(hr_size=32, trunk_channels=8, sife_channels=8,
                offset_mid_channels=8, n_drb_units=1, batch_size=1,
                n_pairs=2, steps_stage1=3, steps_stage2=3, seed=0,
                augment=False, shuffle_level="none")
    base.update(kw)
    return TrainConfig(**base)


class TestAdam:
    def test_converges_on_quadratic(self):
        x = Tensor(np.array([5.0, -3.0]), requires_grad=True)
        opt = Adam({"x": x}, lr=0.1, beta1=0.9, beta2=0.999)
        for _ in range(300):
            loss = (x * x).sum()
            opt.zero_grad()
            loss.backward()
            opt.step()
        assert np.abs(x.data).max() < 1e-3

    def test_first_step_size_is_lr(self):
        # with bias correction the very first Adam step has magnitude ~lr
        x = Tensor(np.array([10.0]), requires_grad=True)
        opt = Adam({"x": x}, lr=0.01, beta1=0.9, beta2=0.999)
        (x * x).sum().backward()
        opt.step()
        assert abs((10.0 - x.data[0]) - 0.01) < 1e-6

    def test_skips_params_without_grads(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = Tensor(np.array([2.0]), requires_grad=True)
        opt = Adam({"x": x, "y": y}, lr=0.1, beta1=0.9, beta2=0.999)
        (x * x).sum().backward()
        opt.step()
        assert y.data[0] == 2.0
        assert x.data[0] != 1.0


class TestStage1:
    def test_loss_logged_and_finite(self):
        cfg = tiny_cfg()
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        log = []
        train_stage1(dataset, cfg, front, log=log)
        assert len(log) == cfg.steps_stage1
        assert all(np.isfinite(e["rec"]) for e in log)
        assert all(e["stage"] == 1 for e in log)

    def test_deterministic_given_seed(self):
        cfg = tiny_cfg()
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        p_a = train_stage1(dataset, cfg, front)
        p_b = train_stage1(dataset, cfg, front)
        fa, fb = p_a.flat(), p_b.flat()
        assert all(np.array_equal(fa[k].data, fb[k].data) for k in fa)

    def test_loss_decreases_over_short_run(self):
        cfg = tiny_cfg(steps_stage1=40, lr=1e-3)
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        log = []
        train_stage1(dataset, cfg, front, log=log)
        first = np.mean([e["rec"] for e in log[:5]])
        last = np.mean([e["rec"] for e in log[-5:]])
        assert last < first


class TestStage2:
    def test_stage1_params_untouched(self):
        cfg = tiny_cfg()
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        params1 = train_stage1(dataset, cfg, front)
        before = {k: t.data.copy() for k, t in params1.flat().items()}
        train_stage2(dataset, cfg, front, params1)
        after = params1.flat()
        assert all(np.array_equal(before[k], after[k].data) for k in before)

    def test_log_carries_all_loss_parts(self):
        cfg = tiny_cfg()
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        params1 = train_stage1(dataset, cfg, front)
        log = []
        train_stage2(dataset, cfg, front, params1, log=log)
        assert len(log) == cfg.steps_stage2
        for entry in log:
            for key in ("total", "rec", "per", "adv", "disc"):
                assert np.isfinite(entry[key])

    def test_critic_params_move(self):
        cfg = tiny_cfg()
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
        front = FrontEnd.create(cfg.seed)
        params1 = train_stage1(dataset, cfg, front)
        params2 = init_params(cfg, "all", seed_offset=1)
        before = {k: t.data.copy() for k, t in params2.flat().items()
                  if k.startswith("disc.")}
        train_stage2(dataset, cfg, front, params1, params2)
        after = params2.flat()
        moved = [k for k in before if not np.array_equal(before[k], after[k].data)]
        assert moved


class TestTwoStage:
    def test_full_pipeline(self):
        cfg = tiny_cfg()
        result = train_two_stage(cfg)
        assert isinstance(result, TrainResult)
        assert result.params2 is not None
        assert len(result.loss_log1) == cfg.steps_stage1
        assert len(result.loss_log2) == cfg.steps_stage2

    def test_stage_selection(self):
        cfg = tiny_cfg()
        result = train_two_stage(cfg, stages=("rec",))
        assert result.params2 is None
        assert result.loss_log2 == []


class TestCheckpoints:
    def test_stage1_roundtrip(self, tmp_path):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        path = tmp_path / "s1.ckpt"
        save_stage1_checkpoint(params, cfg, path)
        tensors, fp = load_checkpoint(path)
        assert fp == cfg.fingerprint()
        loaded = load_stage1_params(tensors, cfg)
        orig = params.flat()
        for k, t in loaded.flat().items():
            assert np.array_equal(t.data, orig[k].data)

    def test_stage2_roundtrip(self, tmp_path):
        cfg = tiny_cfg()
        p1 = init_params(cfg, "rec")
        p2 = init_params(cfg, "all", seed_offset=1)
        path = tmp_path / "s2.ckpt"
        save_stage2_checkpoint(p1, p2, cfg, path)
        tensors, fp = load_checkpoint(path)
        l1 = load_stage1_params(tensors, cfg)
        l2 = load_stage2_params(tensors, cfg)
        for k, t in l1.flat().items():
            assert np.array_equal(t.data, p1.flat()[k].data)
        for k, t in l2.flat().items():
            assert np.array_equal(t.data, p2.flat()[k].data)

    def test_fingerprint_detects_config_change(self, tmp_path):
        cfg = tiny_cfg()
        params = init_params(cfg, "rec")
        path = tmp_path / "s1.ckpt"
        save_stage1_checkpoint(params, cfg, path)
        _, fp = load_checkpoint(path)
        other = tiny_cfg(trunk_channels=16)
        assert fp != other.fingerprint()
