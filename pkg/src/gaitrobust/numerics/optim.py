"""SGD and Adam updates over a dict of named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np


@dataclass
class Optimizer:
    kind: Literal["adam", "sgd"]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads``."""
        missing = set(params) - set(grads)
        if missing:
            raise KeyError(f"no gradient for parameters {sorted(missing)}")
        for name, p in params.items():
            if grads[name].shape != p.shape:
                raise ValueError(
                    f"gradient for {name!r} has shape {grads[name].shape}, parameter {p.shape}")
        self.step_count += 1
        if self.kind == "sgd":
            for name, p in params.items():
                p -= self.learning_rate * grads[name]
            return
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in params.items():
            g = grads[name]
            m = self.first_moment.get(name)
            if m is None:
                m = self.first_moment[name] = np.zeros_like(p)
                self.second_moment[name] = np.zeros_like(p)
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam(learning_rate: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
         eps: float = 1e-8) -> Optimizer:
    return Optimizer("adam", learning_rate, beta1, beta2, eps)


def sgd(learning_rate: float) -> Optimizer:
    return Optimizer("sgd", learning_rate)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)
