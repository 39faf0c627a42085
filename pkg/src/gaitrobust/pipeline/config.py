"""Experiment configuration and training presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..attacks import EPSILON_GRID, GRADIENT_METHODS, Method

VARIANTS = ("model1", "model2", "model1_inoc", "model2_inoc")
BASE_VARIANTS = ("model1", "model2")


@dataclass(frozen=True)
class Preset:
    hcn_epochs: int
    gan_epochs: int
    atgan_epochs: int
    gan_learning_rate: float


PRESETS = {
    # fewer GAN epochs, so a larger Adam step to cover comparable ground
    "fast": Preset(hcn_epochs=30, gan_epochs=150, atgan_epochs=50, gan_learning_rate=0.001),
    "paper": Preset(hcn_epochs=100, gan_epochs=600, atgan_epochs=100, gan_learning_rate=0.0002),
    # plumbing checks only; models barely train
    "smoke": Preset(hcn_epochs=2, gan_epochs=2, atgan_epochs=2, gan_learning_rate=0.001),
}


@dataclass
class ExperimentConfig:
    data_path: str | None = None
    num_subjects: int = 9
    windows_per_subject: int = 200
    videos_per_subject: int = 4
    data_seed: int = 0
    fold_count: int = 10
    folds: list[int] | None = None  # subset of folds to run; None runs all
    seeds: list[int] = field(default_factory=lambda: [1])
    preset: str = "fast"
    mix_fraction: float = 0.5
    sweep_methods: list[str] = field(default_factory=lambda: [m.value for m in GRADIENT_METHODS])
    default_methods: list[str] = field(default_factory=lambda: [m.value for m in Method])
    epsilon_grid: list[float] = field(default_factory=lambda: list(EPSILON_GRID))
    score_samples: int = 900
    out_dir: str | None = None

    def __post_init__(self):
        if self.fold_count < 2:
            raise ValueError("fold_count must be at least 2")
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        grid = np.asarray(self.epsilon_grid, dtype=float)
        if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("epsilon grid must be non-empty, non-negative and ascending")
        for m in self.sweep_methods:
            if Method(m) == Method.GN:
                raise ValueError("GN has no epsilon and cannot be swept")
        for m in self.default_methods:
            Method(m)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.folds is not None and any(not 0 <= f < self.fold_count for f in self.folds):
            raise ValueError(f"fold indices must lie in [0, {self.fold_count - 1}]")

    @property
    def schedule(self) -> Preset:
        return PRESETS[self.preset]

    @property
    def fold_indices(self) -> list[int]:
        return list(range(self.fold_count)) if self.folds is None else sorted(self.folds)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")  # output location does not affect results
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])
