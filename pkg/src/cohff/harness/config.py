"""Run configuration: JSON files plus ``key=value`` overrides and the COHFF_SEED variable."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from ..fusion import ModelConfig
from ..scene.scenario import TEMPLATES
from ..scene.tiers import TIERS
from ..scene.types import GridSpec

SEED_ENV = "COHFF_SEED"
TOY_GRID = GridSpec((-0.5, -3.0, 0.0), (12, 12, 4), 0.5)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    occ_steps: int = 60
    seg_steps: int = 60
    joint_steps: int = 500
    optimizer: str = "adam"  # adam | sgd
    lr: float = 0.01
    lr_schedule: str = "cosine"  # cosine | constant
    momentum: float = 0.9
    lambda_occ: float = 0.2
    lambda_seg: float = 0.2
    lambda_fused: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0


@dataclass
class RunConfig:
    seed: int = 7
    template: str = "occlusion"
    n_agents: int = 2
    n_objects: int = 12
    scale: float = 0.3
    image_size: tuple = (8, 16)
    grid: GridSpec = TOY_GRID
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sparsification_rate: float = 0.0
    budget: float | None = None  # bytes per step over all messages; None = unlimited
    gps_sigma: float = 0.0
    depth_noise: float = 0.0
    collaboration: bool = True
    gt_tier: str = "collaborative"
    lidar_resolution: float = 1.0
    n_depth_bins: int = 50

    @property
    def max_depth(self) -> float:
        return 40.0 * self.scale

    @property
    def budget_bytes(self) -> float:
        return math.inf if self.budget is None else float(self.budget)

    def validate(self) -> "RunConfig":
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.template in TEMPLATES, f"template must be one of {TEMPLATES}, got {self.template!r}")
        need(self.n_agents >= 1, f"n_agents must be >= 1, got {self.n_agents}")
        need(self.scale > 0, f"scale must be positive, got {self.scale}")
        need(0.0 <= self.sparsification_rate < 1.0,
             f"sparsification_rate must be in [0, 1), got {self.sparsification_rate}")
        need(self.budget is None or self.budget >= 0, f"budget must be >= 0, got {self.budget}")
        need(self.gps_sigma >= 0 and self.depth_noise >= 0, "noise levels must be >= 0")
        need(self.gt_tier in TIERS, f"gt_tier must be one of {TIERS}, got {self.gt_tier!r}")
        t = self.train
        need(min(t.occ_steps, t.seg_steps, t.joint_steps) >= 0, "training steps must be >= 0")
        need(t.optimizer in ("adam", "sgd"), f"optimizer must be adam or sgd, got {t.optimizer!r}")
        need(t.lr > 0, f"lr must be positive, got {t.lr}")
        need(t.lr_schedule in ("cosine", "constant"), f"lr_schedule must be cosine or constant, got {t.lr_schedule!r}")
        m = self.model
        need(m.features % m.heads == 0 and m.f_img % m.heads == 0, "feature widths must be divisible by heads")
        need(min(m.features, m.f_img, m.heads, m.points_per_ref, m.refs_per_query) >= 1,
             "model widths and attention counts must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        d["image_size"] = list(self.image_size)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _build(cls, d: dict, where: str):
    names = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(names)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        if k == "grid":
            try:
                v = GridSpec.from_dict(v)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"bad grid: {e}") from e
        elif k == "model":
            v = _build(ModelConfig, v, "model")
        elif k == "train":
            v = _build(TrainConfig, v, "train")
        elif k == "image_size":
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {where} config: {e}") from e


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return _build(RunConfig, d, "run").validate()


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """Defaults <- JSON file <- ``key=value`` overrides (dotted keys) <- COHFF_SEED."""
    d = RunConfig().to_dict()
    if path is not None:
        try:
            with open(path) as f:
                _merge(d, json.load(f))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    for ov in overrides:
        _apply_override(d, ov)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            d["seed"] = int(env[SEED_ENV])
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from e
    return config_from_dict(d)


def _merge(base: dict, upd: dict) -> None:
    if not isinstance(upd, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v


def _apply_override(d: dict, text: str) -> None:
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw  # bare strings such as template=junction
    node = d
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = val


def with_changes(cfg: RunConfig, **kw) -> RunConfig:
    """Copy with attributes replaced; ``train__lr=...`` reaches into sections.
    The frozen model section is replaced whole (``model=ModelConfig(...)``)."""
    new = copy.deepcopy(cfg)
    for k, v in kw.items():
        target = new
        *path, last = k.split("__")
        for p in path:
            target = getattr(target, p)
        setattr(target, last, v)
    return new.validate()
