"""Untargeted test-time attacks: FGSM, PGD, BIM, MI-FGSM and additive Gaussian noise.

All gradient attacks ascend the per-sample softmax cross-entropy of the target
and keep samples inside the normalized data range. ``model`` is anything with
``input_gradient(x, labels)`` and ``predict(x)``; :class:`~gaitrobust.hcn.HcnModel`
qualifies.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from .skeldata import SkeletonDataset, read_dataset, write_dataset


class Method(str, Enum):
    FGSM = "FGSM"
    PGD = "PGD"
    BIM = "BIM"
    MIFGSM = "MIFGSM"
    GN = "GN"


GRADIENT_METHODS = (Method.FGSM, Method.PGD, Method.BIM, Method.MIFGSM)


class Target(Protocol):
    def input_gradient(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray: ...

    def predict(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class AttackConfig:
    """Defaults reproduce the reference settings: eps 8/255, step 2/255, 10 steps,
    momentum decay 1.0, noise magnitude 1 with stdev 0.1."""

    method: Method = Method.FGSM
    epsilon: float = 8 / 255
    step_size: float = 2 / 255
    steps: int = 10
    decay: float = 1.0
    gn_magnitude: float = 1.0
    gn_stdev: float = 0.1
    clip_range: tuple[float, float] = (-1.0, 1.0)
    random_start: bool | None = None  # None: on for PGD only
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "clip_range", tuple(self.clip_range))
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.method in (Method.PGD, Method.BIM, Method.MIFGSM):
            if self.steps < 1:
                raise ValueError("iterative attacks need steps >= 1")
            if self.step_size <= 0:
                raise ValueError("step_size must be positive")
        if self.decay < 0 or self.gn_magnitude < 0 or self.gn_stdev < 0:
            raise ValueError("decay and noise parameters must be non-negative")

    @property
    def uses_random_start(self) -> bool:
        return self.method == Method.PGD if self.random_start is None else self.random_start

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["clip_range"] = list(self.clip_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(**d)


def fgsm(model: Target, x: np.ndarray, labels: np.ndarray, epsilon: float,
         clip_range: tuple[float, float] = (-1.0, 1.0)) -> np.ndarray:
    """``clip(x + eps * sign(grad_x loss))`` with each sample using its own loss."""
    x = np.asarray(x, dtype=float)
    if epsilon == 0:
        return x.copy()
    step = epsilon * np.sign(model.input_gradient(x, labels))
    return np.clip(x + step, *clip_range)


def _project(x_adv, x, epsilon, clip_range):
    return np.clip(np.clip(x_adv, x - epsilon, x + epsilon), *clip_range)


def iterative_attack(model: Target, x: np.ndarray, labels: np.ndarray,
                     config: AttackConfig) -> np.ndarray:
    """BIM, PGD or MI-FGSM.

    Every step moves by ``step_size`` along a sign direction, then projects onto
    the l-inf ball of radius ``epsilon`` around ``x`` and the data range. MI-FGSM
    takes the sign of a momentum buffer fed with per-sample l1-normalized
    gradients; samples whose gradient is exactly zero contribute nothing to it.
    """
    if config.method not in (Method.PGD, Method.BIM, Method.MIFGSM):
        raise ValueError(f"{config.method.value} is not an iterative method")
    if config.steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=float)
    eps = config.epsilon
    if eps == 0:
        return x.copy()
    x_adv = x.copy()
    if config.uses_random_start:
        rng = np.random.default_rng([config.seed, 0x9D])
        x_adv = _project(x + rng.uniform(-eps, eps, size=x.shape), x, eps, config.clip_range)
    momentum = np.zeros_like(x)
    axes = tuple(range(1, x.ndim))
    for _ in range(config.steps):
        grad = model.input_gradient(x_adv, labels)
        if config.method == Method.MIFGSM:
            l1 = np.abs(grad).sum(axis=axes, keepdims=True)
            normed = np.divide(grad, l1, out=np.zeros_like(grad), where=l1 > 0)
            momentum = config.decay * momentum + normed
            direction = np.sign(momentum)
        else:
            direction = np.sign(grad)
        x_adv = _project(x_adv + config.step_size * direction, x, eps, config.clip_range)
    return x_adv


def gaussian_noise_attack(x: np.ndarray, gn_magnitude: float = 1.0, gn_stdev: float = 0.1,
                          seed: int = 0, clip_range: tuple[float, float] = (-1.0, 1.0)) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng([seed, 0x6E])
    noise = rng.normal(0.0, gn_stdev, size=x.shape)
    return np.clip(x + gn_magnitude * noise, *clip_range)


def run_attack(model: Target, x: np.ndarray, labels: np.ndarray, config: AttackConfig) -> np.ndarray:
    if config.method == Method.FGSM:
        return fgsm(model, x, labels, config.epsilon, config.clip_range)
    if config.method == Method.GN:
        return gaussian_noise_attack(x, config.gn_magnitude, config.gn_stdev, config.seed,
                                     config.clip_range)
    return iterative_attack(model, x, labels, config)


@dataclass
class AttackTestSet:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def save(self, path: str | Path) -> None:
        """``path`` in SKL1 format plus ``path.json`` with the provenance."""
        write_dataset(SkeletonDataset(self.samples, self.labels, self.num_classes), path)
        Path(str(path) + ".json").write_text(json.dumps(self.provenance, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "AttackTestSet":
        ds = read_dataset(path)
        side = Path(str(path) + ".json")
        prov = json.loads(side.read_text()) if side.exists() else {}
        return cls(ds.samples, ds.labels, ds.num_classes, prov)


def build_attack_test_set(model: Target, x_test: np.ndarray, y_test: np.ndarray,
                          config: AttackConfig, num_classes: int | None = None,
                          source_fold: int | None = None) -> AttackTestSet:
    """Attack every test sample; labels are carried over unchanged (untargeted)."""
    try:
        method = Method(config.method)
    except ValueError:
        raise ValueError(f"unknown attack method {config.method!r}") from None
    config = replace(config, method=method)
    y = np.asarray(y_test).reshape(-1).astype(np.int64)
    x_adv = run_attack(model, x_test, y, config)
    if not np.all(np.isfinite(x_adv)):
        raise FloatingPointError("attack produced non-finite samples")
    k = num_classes if num_classes is not None else getattr(model, "num_classes", int(y.max()) + 1)
    prov = {"method": method.value, "config": config.to_dict(), "seed": config.seed,
            "source_fold": source_fold}
    return AttackTestSet(x_adv, y.copy(), k, prov)


def attack_success_rate(model: Target, attack_set: AttackTestSet) -> float:
    """Fraction of attacked samples the target misclassifies."""
    if len(attack_set) == 0:
        raise ValueError("empty attack set")
    return float(np.mean(model.predict(attack_set.samples) != attack_set.labels))


def robustness(model: Target, attack_set: AttackTestSet) -> float:
    return 1.0 - attack_success_rate(model, attack_set)


EPSILON_GRID = tuple(round(0.01 * i, 2) for i in range(20))
