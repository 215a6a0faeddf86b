"""Run configuration: one flat namespace shared by generation, training, and evaluation.

The on-disk format is plain ``key = value`` lines; ``#`` starts a comment.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class Config:
    seed: int = 0

    # horizons: observe T steps, predict the next L
    observe_steps: int = 10
    predict_steps: int = 20

    # model dimensions
    hidden_dim: int = 64
    mlp_hidden: int = 64
    attn_dim: int = 32
    feature_scale: float = 0.001  # mm -> network units

    # transient graph thresholds (mm)
    rho_in_mm: float = 500.0
    rho_out_mm: float = 100.0

    # switch
    beta_init_per_mm: float = 0.002

    # training
    switch_loss_weight: float = 1.0
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    val_fraction: float = 0.2

    # synthetic scene generator
    num_scenes: int = 250
    min_humans: int = 1
    max_humans: int = 2
    min_objects: int = 3
    max_objects: int = 5
    arena_mm: float = 2400.0
    speed_min_mm: float = 30.0
    speed_max_mm: float = 70.0
    episode_rate: float = 1.0
    carry_min_steps: int = 5
    carry_max_steps: int = 10
    label_onset_offset: int = 0
    clearance_mm: float = 180.0
    dt: float = 0.1

    def __post_init__(self):
        if self.switch_loss_weight < 0:
            raise ValueError("switch_loss_weight must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.rho_out_mm > self.rho_in_mm:
            raise ValueError("rho_out_mm must not exceed rho_in_mm")
        if self.observe_steps < 1 or self.predict_steps < 0:
            raise ValueError("horizons must satisfy observe_steps >= 1, predict_steps >= 0")
        for name in ("num_scenes", "min_humans", "max_humans", "min_objects",
                     "max_objects", "epochs", "batch_size"):
            if getattr(self, name) < 1 and not (name == "num_scenes" and self.num_scenes == 0):
                raise ValueError(f"{name} must be positive")

    @property
    def total_steps(self) -> int:
        return self.observe_steps + self.predict_steps

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Config":
        return cls.from_text(Path(path).read_text(), source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "Config":
        types = {f.name: f.type for f in fields(cls)}
        casts = {"int": int, "float": float, "str": str}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in types:
                raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = casts[types[key]](val)
            except ValueError as e:
                raise ValueError(f"{source}:{lineno}: bad value for {key!r}: {val!r}") from e
        return cls(**values)
