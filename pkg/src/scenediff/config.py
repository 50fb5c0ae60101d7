"""Pipeline configuration: one dataclass tree, JSON round-trippable.

Every stage keeps its own parameter dataclass; this module only composes
them, fills defaults, and rejects unknown keys up front so a typo fails
before any stage runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .render import RenderOptions
from .seeds import ThresholdPolicy
from .supervoxels import SupervoxelParams


@dataclass(frozen=True)
class SeedStage:
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    snap_radius: float = 0.03

    def __post_init__(self):
        if self.snap_radius <= 0:
            raise ValueError(f"snap_radius must be positive, got {self.snap_radius}")


@dataclass(frozen=True)
class MaskStage:
    # None means "every label source present in the manifest".
    sources: tuple = None
    depth_tol: float = 0.05
    gamma: float = 1.0

    def __post_init__(self):
        if self.depth_tol <= 0:
            raise ValueError(f"depth_tol must be positive, got {self.depth_tol}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.sources is not None:
            object.__setattr__(self, "sources", tuple(self.sources))


@dataclass(frozen=True)
class SolverStage:
    lam: float = 1.0
    p_seed: float = 0.8
    p_rest: float = 0.5
    epsilon: float = 0.01
    max_outer_iters: int = 10
    min_seed_points: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        for name in ("p_seed", "p_rest"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not (0 <= self.epsilon < 1):
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.min_seed_points < 1:
            raise ValueError("min_seed_points must be >= 1")


@dataclass(frozen=True)
class DetectStage:
    step: float = 0.10
    min_points: int = 50

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"component step must be positive, got {self.step}")
        if self.min_points < 1:
            raise ValueError(f"min_points must be >= 1, got {self.min_points}")


@dataclass(frozen=True)
class EvalStage:
    iou_mode: str = "point"
    recall_ks: tuple = (0.25, 0.5, 0.75)
    ap_k: float = 0.25

    def __post_init__(self):
        if self.iou_mode not in ("point", "box"):
            raise ValueError(f"iou_mode must be 'point' or 'box', got '{self.iou_mode}'")
        object.__setattr__(self, "recall_ks", tuple(float(k) for k in self.recall_ks))
        if not all(0 <= k < 1 for k in self.recall_ks):
            raise ValueError("recall thresholds must lie in [0, 1)")
        if not (0 <= self.ap_k < 1):
            raise ValueError("ap_k must lie in [0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    render: RenderOptions = field(default_factory=RenderOptions)
    seeds: SeedStage = field(default_factory=SeedStage)
    supervoxels: SupervoxelParams = field(default_factory=SupervoxelParams)
    masks: MaskStage = field(default_factory=MaskStage)
    solver: SolverStage = field(default_factory=SolverStage)
    detect: DetectStage = field(default_factory=DetectStage)
    eval: EvalStage = field(default_factory=EvalStage)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["masks"]["sources"] is not None:
            d["masks"]["sources"] = list(d["masks"]["sources"])
        d["eval"]["recall_ks"] = list(d["eval"]["recall_ks"])
        return d

    def with_param(self, name: str, value) -> "PipelineConfig":
        """Returns a copy with one sweepable parameter replaced.

        Accepted names: lambda, p_seed, tau.
        """
        if name == "lambda":
            return dataclasses.replace(self, solver=dataclasses.replace(self.solver, lam=float(value)))
        if name == "p_seed":
            return dataclasses.replace(self, solver=dataclasses.replace(self.solver, p_seed=float(value)))
        if name == "tau":
            policy = dataclasses.replace(self.seeds.policy, tau_fixed=float(value))
            return dataclasses.replace(self, seeds=dataclasses.replace(self.seeds, policy=policy))
        raise ValueError(f"unknown sweep parameter '{name}' (expected lambda, p_seed, or tau)")


_SECTIONS = {
    "render": RenderOptions,
    "seeds": SeedStage,
    "supervoxels": SupervoxelParams,
    "masks": MaskStage,
    "solver": SolverStage,
    "detect": DetectStage,
    "eval": EvalStage,
}


def _build_section(cls, raw: dict, context: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ValueError(f"{context}: unknown parameter '{key}'")
        if key == "policy":
            value = _build_section(ThresholdPolicy, value, f"{context}.policy")
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> PipelineConfig:
    kwargs = {}
    for key, value in raw.items():
        if key not in _SECTIONS:
            raise ValueError(f"config: unknown section '{key}' (expected one of {sorted(_SECTIONS)})")
        kwargs[key] = _build_section(_SECTIONS[key], value, key)
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: config is not valid JSON at line {e.lineno}: {e.msg}") from e
    return config_from_dict(raw)


def save_config(config: PipelineConfig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
