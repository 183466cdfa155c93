"""Full generator assembly: SIFE branch, 3-scale ladder of alignment +
aggregation pairs, pixel-shuffle upsampling, reconstruction head, and the
two-stage feature-reuse contract (stage `rec` trains alone; stage `all`
consumes the frozen stage-one features as constants).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import aggregation, alignment
from .config import TrainConfig
from .correspondence import (ReferencePyramid, TextureEncoder, match_textures,
                             texture_encode, warp_reference)
from .losses import Discriminator
from .tensor import (Tensor, conv2d, leaky_relu, pixel_shuffle,
                     resize_bilinear)

SCALES = (1, 2, 4)
# ladder scale s uses pyramid level: s=1 -> coarsest (128ch), s=4 -> finest (32ch)
LEVEL_FOR_SCALE = {1: 2, 2: 1, 4: 0}


@dataclass
class NetworkParams:
    stage: str                   # "rec" | "all"
    tensors: dict                # nested dict of Tensors (lists allowed)

    def __post_init__(self):
        if self.stage not in ("rec", "all"):
            raise ValueError(f"stage must be 'rec' or 'all', got {self.stage!r}")
        if self.stage == "rec" and "disc" in self.tensors:
            raise ValueError("stage 'rec' must not contain a discriminator")

    def flat(self) -> dict:
        return flatten_params(self.tensors)


def flatten_params(tree, prefix: str = "") -> dict:
    out = {}
    if isinstance(tree, Tensor):
        out[prefix] = tree
        return out
    if isinstance(tree, dict):
        items = tree.items()
    elif isinstance(tree, (list, tuple)):
        items = enumerate(tree)
    else:
        return out  # non-tensor leaf (flags etc.)
    for key, val in items:
        name = f"{prefix}.{key}" if prefix else str(key)
        dup = flatten_params(val, name)
        if set(dup) & set(out):
            raise ValueError(f"duplicate parameter names under {name!r}")
        out.update(dup)
    return out


def assign_params(params: NetworkParams, flat_values: dict):
    """Copy checkpoint arrays into an initialized parameter tree by name."""
    own = params.flat()
    if set(own) != set(flat_values):
        missing = sorted(set(own) - set(flat_values))
        extra = sorted(set(flat_values) - set(own))
        raise ValueError(f"parameter name mismatch: missing={missing[:5]} extra={extra[:5]}")
    for name, tensor in own.items():
        value = np.asarray(flat_values[name], dtype=tensor.data.dtype)
        if value.shape != tensor.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {value.shape} vs model {tensor.shape}")
        tensor.data = value.copy()


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _conv_init(rng, oc, ic, k, dtype=np.float32):
    scale = np.sqrt(2.0 / (ic * k * k))
    return {
        "w": Tensor(rng.standard_normal((oc, ic, k, k)).astype(dtype) * dtype(scale),
                    requires_grad=True),
        "b": Tensor(np.zeros(oc, dtype=dtype), requires_grad=True),
    }


def _init_sife(rng, channels: int, n_blocks: int = 2, n_units: int = 3) -> dict:
    params = {"stem": _conv_init(rng, channels, 3, 3), "blocks": []}
    for _ in range(n_blocks):
        block = [{"conv1": _conv_init(rng, channels, channels, 3),
                  "conv2": _conv_init(rng, channels, channels, 3)}
                 for _ in range(n_units)]
        params["blocks"].append(block)
    return params


def init_params(cfg: TrainConfig, stage: str, seed_offset: int = 0) -> NetworkParams:
    """Seed-deterministic parameter tree for one stage.

    Stage `all` parameters are the stage-`rec` tree widened: each TAAM fusion
    conv gains reuse-feature input columns (so shared shapes stay identical),
    plus discriminator parameters.
    """
    rng = np.random.default_rng(cfg.seed + 1000 * seed_offset)
    c = cfg.trunk_channels
    tree = {"lr_stem": _conv_init(rng, c, 3, 3)}
    if cfg.sife:
        tree["sife"] = _init_sife(rng, cfg.sife_channels)
    scales_tree = []
    for s in SCALES:
        ref_c = ReferencePyramid.CHANNELS[LEVEL_FOR_SCALE[s]]
        fam = {
            "offset": alignment.init_offset_params(
                rng, c + 2 * ref_c, cfg.offset_mid_channels),
            "weights": Tensor(
                rng.standard_normal((c, ref_c, 3, 3)).astype(np.float32)
                * np.float32(np.sqrt(2.0 / (ref_c * 9))), requires_grad=True),
            "bias": Tensor(np.zeros(c, dtype=np.float32), requires_grad=True),
        }
        taam_in = 2 * c  # F_tex + F_LR
        if cfg.sife and s == 1:
            taam_in += cfg.sife_channels
        taam = aggregation.init_taam_params(rng, taam_in, c, cfg.n_drb_units,
                                            use_dynamic=cfg.drb)
        scales_tree.append({"fam": fam, "taam": taam})
    tree["scales"] = scales_tree
    tree["up1"] = _conv_init(rng, 4 * c, c, 3)
    tree["up2"] = _conv_init(rng, 4 * c, c, 3)
    tree["head"] = _conv_init(rng, 3, c, 3)

    if stage == "all":
        reuse_rng = np.random.default_rng(cfg.seed + 77 + 1000 * seed_offset)
        if cfg.frf:
            for entry in tree["scales"]:
                fuse = entry["taam"]["fuse_w"]
                oc, ic, _, _ = fuse.shape
                extra = reuse_rng.standard_normal((oc, c, 1, 1)).astype(np.float32)
                extra *= np.float32(np.sqrt(2.0 / (ic + c)))
                fuse.data = np.concatenate([fuse.data, extra], axis=1)
        tree["disc"] = Discriminator.init_params(reuse_rng)
    return NetworkParams(stage=stage, tensors=tree)


# ---------------------------------------------------------------------------
# frozen front ends + correspondence cache
# ---------------------------------------------------------------------------

@dataclass
class FrontEnd:
    texture_encoder: TextureEncoder
    ref_pyramid: ReferencePyramid

    @classmethod
    def create(cls, seed: int = 0) -> "FrontEnd":
        return cls(texture_encoder=TextureEncoder(seed),
                   ref_pyramid=ReferencePyramid(seed + 1))


@dataclass
class Correspondence:
    """Frozen per-pair matching products: one flow per sample plus the warped
    and raw reference pyramid levels (constants w.r.t. training)."""
    flows: list                  # FlowField per batch sample
    ref_levels: list             # [Tensor (n, c_i, s*h, s*w)] ordered by SCALES
    warped_levels: list          # same shapes, flow-warped
    pre_offsets: list            # np arrays (n, 2, s*h, s*w) per scale


def compute_correspondence(i_lr: Tensor, i_ref: Tensor, front: FrontEnd) -> Correspondence:
    n, _, h, w = i_lr.shape
    _, _, hr4, wr4 = i_ref.shape
    if (hr4, wr4) != (4 * h, 4 * w):
        raise ValueError(
            f"reference must be exactly 4x the LR resolution {4 * h}x{4 * w}, "
            f"got {hr4}x{wr4}")
    tex = texture_encode(i_lr, i_ref, front.texture_encoder)
    # matching at the coarsest scale: Ref texture features resized to LR size
    f_ref_coarse = resize_bilinear(tex.ref, h, w)
    flows = []
    for b in range(n):
        _, _, flow = match_textures(tex.lr.data[b], f_ref_coarse.data[b])
        flows.append(flow)
    pyramid = front.ref_pyramid(i_ref)  # scales 1, 1/2, 1/4 of Ref resolution
    ref_levels, warped_levels, pre_offsets = [], [], []
    for s in SCALES:
        level = pyramid[LEVEL_FOR_SCALE[s]]
        warped = np.empty_like(level.data)
        pre = np.empty((n, 2, s * h, s * w), dtype=np.float32)
        for b in range(n):
            warped[b] = warp_reference(level[b:b + 1], flows[b], float(s)).data[0]
            up = np.repeat(np.repeat(flows[b].flow, s, axis=1), s, axis=2)
            pre[b] = s * up
        ref_levels.append(level.detach())
        warped_levels.append(Tensor(warped))
        pre_offsets.append(pre)
    return Correspondence(flows=flows, ref_levels=ref_levels,
                          warped_levels=warped_levels, pre_offsets=pre_offsets)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

@dataclass
class StageOutputs:
    f_sr: Tensor                 # pre-head features at 4x LR
    i_sr: Tensor                 # (n, 3, 4h, 4w)
    per_scale: list = field(default_factory=list)  # aggregated features per scale

    def detached(self) -> "StageOutputs":
        return StageOutputs(f_sr=self.f_sr.detach(), i_sr=self.i_sr.detach(),
                            per_scale=[t.detach() for t in self.per_scale])


def sife_embed(i_lr: Tensor, params: dict) -> Tensor:
    """Residual-in-residual trunk at LR resolution (no upsampling, no head)."""
    x = leaky_relu(conv2d(i_lr, params["stem"]["w"], params["stem"]["b"], padding=1), 0.1)
    for block in params["blocks"]:
        y = x
        for unit in block:
            r = leaky_relu(conv2d(y, unit["conv1"]["w"], unit["conv1"]["b"], padding=1), 0.1)
            r = conv2d(r, unit["conv2"]["w"], unit["conv2"]["b"], padding=1)
            y = y + 0.2 * r
        x = x + 0.2 * (y - x)
    return x


def _upsample(x: Tensor, params: dict) -> Tensor:
    return leaky_relu(pixel_shuffle(conv2d(x, params["w"], params["b"], padding=1), 2), 0.1)


def _forward(i_lr: Tensor, i_ref: Tensor, params: NetworkParams, cfg: TrainConfig,
             front: FrontEnd, corr: Correspondence = None,
             reuse_feats: list = None) -> StageOutputs:
    if corr is None:
        corr = compute_correspondence(i_lr, i_ref, front)
    tree = params.tensors
    x = leaky_relu(conv2d(i_lr, tree["lr_stem"]["w"], tree["lr_stem"]["b"], padding=1), 0.1)
    f_sife = sife_embed(i_lr, tree["sife"]) if cfg.sife else None
    per_scale = []
    for si, s in enumerate(SCALES):
        entry = tree["scales"][si]
        ref_level = corr.ref_levels[si]
        warped = corr.warped_levels[si]
        pred = alignment.predict_offsets(x, ref_level, warped, entry["fam"]["offset"])
        f_tex = alignment.deformable_sample(
            ref_level, corr.pre_offsets[si], pred,
            entry["fam"]["weights"], entry["fam"]["bias"])
        reuse = reuse_feats[si] if reuse_feats is not None else None
        x = aggregation.taam_aggregate(
            f_tex, x, entry["taam"],
            f_sife=f_sife if (cfg.sife and s == 1) else None,
            f_reuse=reuse, smallest_scale=(s == 1))
        per_scale.append(x)
        if s != SCALES[-1]:
            x = _upsample(x, tree["up1" if s == 1 else "up2"])
    f_sr = x
    i_sr = conv2d(f_sr, tree["head"]["w"], tree["head"]["b"], padding=1)
    return StageOutputs(f_sr=f_sr, i_sr=i_sr, per_scale=per_scale)


def stage1_forward(i_lr: Tensor, i_ref: Tensor, params: NetworkParams,
                   cfg: TrainConfig, front: FrontEnd,
                   corr: Correspondence = None) -> StageOutputs:
    """Reconstruction-stage forward; records per-scale features for reuse."""
    if params.stage != "rec":
        raise ValueError(f"stage1_forward needs stage 'rec' params, got {params.stage!r}")
    return _forward(i_lr, i_ref, params, cfg, front, corr)


def reuse_features(outputs: StageOutputs, cfg: TrainConfig, h: int, w: int) -> list:
    """Constant reuse tensors for stage 2, one per scale."""
    if cfg.reuse_mode == "per_scale":
        return [t.detach() for t in outputs.per_scale]
    f = outputs.f_sr.detach()
    return [resize_bilinear(f, s * h, s * w).detach() for s in SCALES]


def stage2_forward(i_lr: Tensor, i_ref: Tensor, reuse: StageOutputs,
                   params: NetworkParams, cfg: TrainConfig, front: FrontEnd,
                   corr: Correspondence = None) -> StageOutputs:
    """All-losses-stage forward; reuse features enter every TAAM as constants."""
    if params.stage != "all":
        raise ValueError(f"stage2_forward needs stage 'all' params, got {params.stage!r}")
    feats = None
    if cfg.frf:
        if reuse is None:
            raise ValueError("stage 2 with feature reuse requires stage-1 outputs")
        feats = reuse_features(reuse, cfg, i_lr.shape[2], i_lr.shape[3])
    return _forward(i_lr, i_ref, params, cfg, front, corr, reuse_feats=feats)
