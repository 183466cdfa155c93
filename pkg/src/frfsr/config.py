"""Training/architecture configuration and the line-oriented config file."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

SHUFFLE_LEVELS = ("none", "easy", "medium", "hard")
REUSE_MODES = ("per_scale", "final_downsampled")


@dataclass
class TrainConfig:
    # optimizer
    lr: float = 1e-4
    beta1: float = 0.99
    beta2: float = 0.999
    batch_size: int = 2          # full-scale training uses 9
    steps_stage1: int = 500
    steps_stage2: int = 500
    # loss weights
    lambda_rec: float = 1.0
    lambda_per: float = 1e-4
    lambda_adv: float = 1e-6
    lambda_gp: float = 10.0
    # data
    hr_size: int = 64            # full-scale training uses 160
    n_pairs: int = 8
    shuffle_level: str = "medium"
    augment: bool = True
    # ablation flags
    sife: bool = True
    drb: bool = True
    frf: bool = True
    # architecture (desk scale)
    trunk_channels: int = 24
    sife_channels: int = 24
    offset_mid_channels: int = 24
    n_drb_units: int = 1
    reuse_mode: str = "per_scale"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.shuffle_level not in SHUFFLE_LEVELS:
            raise ValueError(
                f"shuffle_level must be one of {SHUFFLE_LEVELS}, got {self.shuffle_level!r}")
        if self.reuse_mode not in REUSE_MODES:
            raise ValueError(
                f"reuse_mode must be one of {REUSE_MODES}, got {self.reuse_mode!r}")
        if self.lambda_rec < 0 or self.lambda_per < 0 or self.lambda_adv < 0:
            raise ValueError("loss weights must be non-negative")
        if self.hr_size % 4 != 0:
            raise ValueError(f"hr_size must be divisible by 4, got {self.hr_size}")
        if self.batch_size < 1 or self.n_pairs < 1:
            raise ValueError("batch_size and n_pairs must be >= 1")

    def fingerprint(self) -> int:
        """Stable u64 fingerprint of the full configuration."""
        canon = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        digest = hashlib.sha256(canon.encode()).digest()
        return int.from_bytes(digest[:8], "little")


def _coerce(name: str, raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {name!r}: cannot parse {raw!r} as bool")
    try:
        return typ(raw)
    except ValueError as exc:
        raise ValueError(f"config key {name!r}: cannot parse {raw!r} as {typ.__name__}") from exc


def parse_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; blank lines and #-comments allowed,
    unknown keys rejected."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    types = {"float": float, "int": int, "str": str, "bool": bool}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected `key = value`, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        typ = known[key]
        if isinstance(typ, str):
            typ = types[typ]
        values[key] = _coerce(key, raw, typ)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    with open(path) as f:
        return parse_config(f.read())
