"""Run configuration: one dataclass covering architecture and optimization,
plus a small declarative schema used to validate JSON configs before any
compute happens."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .patching import patch_count


@dataclass
class TrainConfig:
    # architecture
    seq_len: int = 96
    pred_len: int = 96
    patch_len: int = 16
    stride: int = 8
    d_model: int = 512
    n_layers: int = 2
    n_heads: int = 8
    d_ff: int | None = None  # defaults to 2*d_model
    k_time: int = 2
    k_freq: int = 2
    top_k: int = 2
    expert_hidden: int | None = None  # defaults to d_model
    alpha: float = 1e-3
    beta: float = 0.1
    pi_mode: str = "subspace"  # or "linear" (ablation)
    branches: str = "both"  # or "time" / "frequency" (ablation)
    time_norm: str = "layer"  # or "batch"
    dropout: float = 0.0
    instance_norm: bool = False
    # optimization
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    scale: bool = True
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self):
        self.validate()

    @property
    def d_ff_eff(self) -> int:
        return self.d_ff if self.d_ff is not None else 2 * self.d_model

    @property
    def expert_hidden_eff(self) -> int:
        return self.expert_hidden if self.expert_hidden is not None else self.d_model

    @property
    def n_patches(self) -> int:
        return patch_count(self.seq_len, self.patch_len, self.stride)

    def top_k_eff(self, n_experts: int) -> int:
        # expert-count grids commonly include K=1 cells; clamp instead of rejecting
        return min(self.top_k, n_experts)

    def validate(self) -> None:
        positive = [
            "seq_len", "pred_len", "patch_len", "stride", "d_model", "n_layers",
            "n_heads", "k_time", "k_freq", "top_k", "batch_size", "max_epochs",
        ]
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.patch_len > self.seq_len:
            raise ValueError("patch_len must not exceed seq_len")
        if self.stride > self.patch_len:
            raise ValueError("stride must not exceed patch_len")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.pi_mode not in ("subspace", "linear"):
            raise ValueError("pi_mode must be 'subspace' or 'linear'")
        if self.branches not in ("both", "time", "frequency"):
            raise ValueError("branches must be 'both', 'time', or 'frequency'")
        if self.time_norm not in ("layer", "batch"):
            raise ValueError("time_norm must be 'layer' or 'batch'")
        if self.pi_mode == "subspace":
            if self.branches in ("both", "time") and self.d_model % self.k_time != 0:
                raise ValueError("d_model must be divisible by k_time")
            if self.branches in ("both", "frequency") and self.d_model % self.k_freq != 0:
                raise ValueError("d_model must be divisible by k_freq")
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios):
            raise ValueError("split_ratios must be three positive fractions")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError("split_ratios must sum to 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d


# JSON schema: name -> (type(s), required). Documented in the README.
_SCHEMA: dict[str, tuple] = {
    "seq_len": (int,),
    "pred_len": (int,),
    "patch_len": (int,),
    "stride": (int,),
    "d_model": (int,),
    "n_layers": (int,),
    "n_heads": (int,),
    "d_ff": (int, type(None)),
    "k_time": (int,),
    "k_freq": (int,),
    "top_k": (int,),
    "expert_hidden": (int, type(None)),
    "alpha": (int, float),
    "beta": (int, float),
    "pi_mode": (str,),
    "branches": (str,),
    "time_norm": (str,),
    "dropout": (int, float),
    "instance_norm": (bool,),
    "lr": (int, float),
    "batch_size": (int,),
    "max_epochs": (int,),
    "patience": (int,),
    "seed": (int,),
    "scale": (bool,),
    "split_ratios": (list,),
}


def config_from_dict(obj: dict) -> TrainConfig:
    """Validate a JSON object against the schema and build a TrainConfig."""
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(obj) - set(_SCHEMA))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    for key, value in obj.items():
        types = _SCHEMA[key]
        if isinstance(value, bool) and bool not in types:
            raise ValueError(f"config key {key!r}: expected {types}, got bool")
        if not isinstance(value, types):
            names = "/".join(t.__name__ for t in types)
            raise ValueError(f"config key {key!r}: expected {names}, got {type(value).__name__}")
    if "split_ratios" in obj:
        obj = dict(obj)
        obj["split_ratios"] = tuple(float(r) for r in obj["split_ratios"])
    return TrainConfig(**obj)


def config_from_json(path) -> TrainConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON ({e})") from None
    try:
        return config_from_dict(obj)
    except (ValueError, TypeError) as e:
        raise ValueError(f"{path}: {e}") from None
