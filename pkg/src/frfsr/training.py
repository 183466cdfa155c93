"""Two-stage training: stage 1 minimizes reconstruction error only; stage 2
retrains with reconstruction + perceptual + adversarial losses while reusing
the frozen stage-1 aggregated features as constant inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import (SamplePair, augment_pair, bicubic_downsample,
                   shuffle_patches, synthetic_dataset)
from .losses import (Discriminator, LossWeights, PerceptualExtractor, l_adv,
                     l_disc, l_per, l_rec, l_total)
from .network import (FrontEnd, NetworkParams, StageOutputs,
                      compute_correspondence, init_params, stage1_forward,
                      stage2_forward)
from .tensor import Tensor


class Adam:
    """Adam over a flat name -> Tensor parameter mapping."""

    def __init__(self, params: dict, lr: float, beta1: float, beta2: float,
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.data.astype(p.data.dtype)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class TrainResult:
    params1: NetworkParams
    params2: NetworkParams | None
    front: FrontEnd
    loss_log1: list = field(default_factory=list)
    loss_log2: list = field(default_factory=list)


def _batch(dataset, idx, cfg: TrainConfig, rng) -> tuple:
    """Assemble one (I_HR, I_LR, I_Ref) batch with flip/rotation augmentation
    and patch-shuffle applied to the reference."""
    hrs, lrs, refs = [], [], []
    for i in idx:
        pair = dataset[i]
        hr, ref = pair.hr.data[0], pair.ref.data[0]
        if cfg.augment:
            hr, ref = augment_pair(hr, ref, rng)
        if cfg.shuffle_level != "none":
            ref = shuffle_patches(ref[None], cfg.shuffle_level, rng).data[0]
        hr_t = Tensor(hr[None].astype(np.float32))
        lrs.append(bicubic_downsample(hr_t, 4).data.astype(np.float32))
        hrs.append(hr[None].astype(np.float32))
        refs.append(ref[None].astype(np.float32))
    return (Tensor(np.concatenate(hrs)), Tensor(np.concatenate(lrs)),
            Tensor(np.concatenate(refs)))


def _check_finite(value: float, what: str, step: int, parts: dict = None):
    if np.isfinite(value):
        return
    detail = ""
    if parts:
        detail = " (" + ", ".join(f"{k}={v:.6g}" for k, v in parts.items()) + ")"
    raise FloatingPointError(f"step {step}: {what} is non-finite: {value}{detail}")


def train_stage1(dataset, cfg: TrainConfig, front: FrontEnd,
                 params: NetworkParams = None, log: list = None) -> NetworkParams:
    """Reconstruction-only stage."""
    if params is None:
        params = init_params(cfg, "rec")
    if log is None:
        log = []
    rng = np.random.default_rng(cfg.seed + 101)
    opt = Adam(params.flat(), cfg.lr, cfg.beta1, cfg.beta2)
    for step in range(cfg.steps_stage1):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        i_hr, i_lr, i_ref = _batch(dataset, idx, cfg, rng)
        out = stage1_forward(i_lr, i_ref, params, cfg, front)
        loss = l_rec(i_hr, out.i_sr)
        _check_finite(loss.item(), "L_rec", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.append({"step": step, "stage": 1, "rec": loss.item()})
    return params


def train_stage2(dataset, cfg: TrainConfig, front: FrontEnd,
                 params1: NetworkParams, params2: NetworkParams = None,
                 log: list = None) -> NetworkParams:
    """All-losses stage: the stage-1 network is frozen; its per-batch
    aggregated features enter the stage-2 network as constants.  One critic
    update alternates with each generator update."""
    if params2 is None:
        params2 = init_params(cfg, "all", seed_offset=1)
    if log is None:
        log = []
    # frozen copy of the stage-1 network: no gradient bookkeeping during reuse
    frozen1 = NetworkParams(stage="rec", tensors=_detach_tree(params1.tensors))
    rng = np.random.default_rng(cfg.seed + 202)
    gp_rng = np.random.default_rng(cfg.seed + 303)
    weights = LossWeights(cfg.lambda_rec, cfg.lambda_per, cfg.lambda_adv)
    perceptual = PerceptualExtractor()
    disc = Discriminator(params2.tensors["disc"])
    flat = params2.flat()
    opt_g = Adam({k: v for k, v in flat.items() if not k.startswith("disc.")},
                 cfg.lr, cfg.beta1, cfg.beta2)
    opt_d = Adam({k: v for k, v in flat.items() if k.startswith("disc.")},
                 cfg.lr, cfg.beta1, cfg.beta2)
    for step in range(cfg.steps_stage2):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        i_hr, i_lr, i_ref = _batch(dataset, idx, cfg, rng)
        corr = compute_correspondence(i_lr, i_ref, front)
        reuse = stage1_forward(i_lr, i_ref, frozen1, cfg, front, corr).detached()
        out = stage2_forward(i_lr, i_ref, reuse, params2, cfg, front, corr)

        # critic update
        loss_d = l_disc(out.i_sr, i_hr, disc, cfg.lambda_gp, gp_rng)
        _check_finite(loss_d.item(), "L_disc", step)
        opt_d.zero_grad()
        loss_d.backward()
        opt_d.step()

        # generator update
        parts = {"rec": l_rec(i_hr, out.i_sr),
                 "per": l_per(i_hr, out.i_sr, perceptual),
                 "adv": l_adv(out.i_sr, disc)}
        try:
            loss_g = l_total(parts, weights)
        except FloatingPointError as exc:
            raise FloatingPointError(f"step {step}: {exc}") from exc
        _check_finite(loss_g.item(), "L_total", step,
                      {k: v.item() for k, v in parts.items()})
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()
        log.append({"step": step, "stage": 2, "total": loss_g.item(),
                    "rec": parts["rec"].item(), "per": parts["per"].item(),
                    "adv": parts["adv"].item(), "disc": loss_d.item()})
    return params2


def _detach_tree(tree):
    if isinstance(tree, Tensor):
        return tree.detach()
    if isinstance(tree, dict):
        return {k: _detach_tree(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_detach_tree(v) for v in tree]
    return tree


def train_two_stage(cfg: TrainConfig, dataset=None, front: FrontEnd = None,
                    stages=("rec", "all")) -> TrainResult:
    if dataset is None:
        dataset = synthetic_dataset(cfg.n_pairs, cfg.hr_size, cfg.seed)
    if front is None:
        front = FrontEnd.create(cfg.seed)
    result = TrainResult(params1=init_params(cfg, "rec"), params2=None, front=front)
    if "rec" in stages:
        train_stage1(dataset, cfg, front, result.params1, result.loss_log1)
    if "all" in stages:
        result.params2 = train_stage2(dataset, cfg, front, result.params1,
                                      log=result.loss_log2)
    return result


def save_stage1_checkpoint(params: NetworkParams, cfg: TrainConfig, path):
    flat = {f"net1.{k}": v.data for k, v in params.flat().items()}
    save_checkpoint(flat, path, cfg.fingerprint())


def save_stage2_checkpoint(params1: NetworkParams, params2: NetworkParams,
                           cfg: TrainConfig, path):
    flat = {f"net1.{k}": v.data for k, v in params1.flat().items()}
    flat.update({f"net2.{k}": v.data for k, v in params2.flat().items()})
    save_checkpoint(flat, path, cfg.fingerprint())


def load_stage1_params(tensors: dict, cfg: TrainConfig) -> NetworkParams:
    params = init_params(cfg, "rec")
    network.assign_params(
        params, {k[len("net1."):]: v for k, v in tensors.items()
                 if k.startswith("net1.")})
    return params


def load_stage2_params(tensors: dict, cfg: TrainConfig) -> NetworkParams:
    params = init_params(cfg, "all")
    network.assign_params(
        params, {k[len("net2."):]: v for k, v in tensors.items()
                 if k.startswith("net2.")})
    return params
