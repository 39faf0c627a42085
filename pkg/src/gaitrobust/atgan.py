"""Attack-generator transfer training and inoculation with its samples.

A trainable copy of a benign conditional generator is pushed to lower the
target classifier's confidence in the conditioning class while staying close,
in mean squared distance, to the frozen original's output for the same noise.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .acgan import GeneratorModel, mix_training_set, one_hot, sample_noise
from .hcn import HcnModel, TrainConfig, fit_hcn
from .numerics import Graph, Optimizer, evaluate, params_digest, value_and_gradient
from .skeldata import SkeletonDataset

log = logging.getLogger(__name__)


@dataclass
class AtganConfig:
    alpha: float = 1.0
    beta: float = 2.0
    epochs: int = 100
    batch_size: int = 900
    learning_rate: float = 0.0002
    optimizer: str = "sgd"
    steps_per_epoch: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.epochs < 0 or self.batch_size < 1 or self.steps_per_epoch < 1:
            raise ValueError(f"invalid AT-GAN schedule {self}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdversarialBatch:
    samples: np.ndarray
    labels: np.ndarray
    noise: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


class AtganObjective:
    """``alpha * A_target + beta * D_attack`` as a differentiable graph.

    ``A_target`` is the mean softmax probability the target assigns to each
    sample's conditioning class and ``D_attack`` the mean squared difference
    to the original generator's output. Only ``gen_attack`` parameters are
    differentiated; the original output enters as a constant.
    """

    def __init__(self, target: HcnModel, gen_orig: GeneratorModel, gen_attack: GeneratorModel):
        if gen_orig.arch != gen_attack.arch:
            raise ValueError("original and attack generators differ in architecture")
        if target.num_classes != gen_orig.num_classes:
            raise ValueError(f"target has {target.num_classes} classes, "
                             f"generator {gen_orig.num_classes}")
        self.target, self.gen_orig, self.gen_attack = target, gen_orig, gen_attack
        g = Graph()
        z = g.input("z", (None, gen_orig.noise_dim))
        c = g.input("c", (None, gen_orig.num_classes))
        y = g.input("y", (None,))
        ref = g.input("ref")
        alpha, beta = g.input("alpha", ()), g.input("beta", ())
        adv = gen_attack.build(g, z, c, scope="attack")
        _, probs = target.build(g, adv, scope="target")
        self.a_target = g.mean(g.pick(probs, y), name="a_target")
        self.d_attack = g.mse(adv, ref, name="d_attack")
        self.loss = g.add(g.mul(alpha, self.a_target), g.mul(beta, self.d_attack), name="loss")
        self.graph = g
        self.wrt = [f"attack/{k}" for k in gen_attack.params]

    def _feeds(self, z, labels, alpha, beta):
        labels = np.asarray(labels, dtype=np.int64)
        return {"z": z, "c": one_hot(labels, self.gen_orig.num_classes), "y": labels,
                "ref": self.gen_orig.generate(z, labels),
                "alpha": np.array(float(alpha)), "beta": np.array(float(beta))}

    def value(self, z, labels, alpha: float, beta: float) -> tuple[float, float, float]:
        out = evaluate(self.graph, self._feeds(z, labels, alpha, beta),
                       [self.loss, self.a_target, self.d_attack])
        return float(out[self.loss]), float(out[self.a_target]), float(out[self.d_attack])

    def value_and_gradient(self, z, labels, alpha: float, beta: float):
        """Returns ``((loss, a_target, d_attack), grads)`` keyed by attack-generator name."""
        vals, grads = value_and_gradient(self.graph, self._feeds(z, labels, alpha, beta),
                                         self.loss, wrt=self.wrt,
                                         outputs=[self.a_target, self.d_attack])
        terms = tuple(float(vals[n]) for n in (self.loss, self.a_target, self.d_attack))
        return terms, {k.split("/", 1)[1]: v for k, v in grads.items()}


def atgan_objective(target: HcnModel, gen_orig: GeneratorModel, gen_attack: GeneratorModel,
                    z: np.ndarray, labels, alpha: float, beta: float) -> tuple[float, float, float]:
    """``(loss, A_target, D_attack)`` for one batch of noise and labels."""
    return AtganObjective(target, gen_orig, gen_attack).value(z, labels, alpha, beta)


def balanced_labels(count: int, num_classes: int) -> np.ndarray:
    return np.arange(count) % num_classes


@dataclass
class AtganHistory:
    """Objective terms on a fixed monitor batch; entry 0 is before any update."""

    objective: list[float] = field(default_factory=list)
    a_target: list[float] = field(default_factory=list)
    d_attack: list[float] = field(default_factory=list)

    def record(self, loss: float, a: float, d: float) -> None:
        self.objective.append(loss)
        self.a_target.append(a)
        self.d_attack.append(d)


def train_attack_generator(target: HcnModel, gen_orig: GeneratorModel, config: AtganConfig,
                           history: AtganHistory | None = None) -> GeneratorModel:
    """Fit a copy of ``gen_orig`` to the weighted objective; both inputs stay untouched.

    Every step draws fresh noise with exactly ``batch_size / K`` labels per class.
    """
    if config.alpha == 0 and config.beta == 0:
        raise ValueError("alpha and beta are both zero: the objective is vacuous")
    k = gen_orig.num_classes
    if config.batch_size % k:
        raise ValueError(f"batch_size {config.batch_size} is not divisible by {k} classes")
    frozen = (params_digest(gen_orig.params), params_digest(target.params))
    gen_attack = gen_orig.copy()
    objective = AtganObjective(target, gen_orig, gen_attack)
    opt = Optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng([config.seed, 0xA7])
    labels = balanced_labels(config.batch_size, k)
    monitor = (sample_noise(gen_orig.noise_dim, config.batch_size, config.seed + 0x3D), labels)

    def record():
        if history is not None:
            history.record(*objective.value(*monitor, config.alpha, config.beta))

    record()
    for epoch in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            z = rng.normal(size=(config.batch_size, gen_orig.noise_dim))
            y = rng.permutation(labels)
            (loss, a, d), grads = objective.value_and_gradient(z, y, config.alpha, config.beta)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite AT-GAN objective at epoch {epoch}")
            opt.step(gen_attack.params, grads)
        record()
        log.debug("atgan epoch %d loss=%.5f a=%.4f d=%.6f", epoch, loss, a, d)
    if (params_digest(gen_orig.params), params_digest(target.params)) != frozen:
        raise RuntimeError("frozen models changed during attack-generator training")
    return gen_attack


def attack_generator_meta(config: AtganConfig, gen_orig: GeneratorModel) -> dict:
    """Sidecar fields for an attack-generator checkpoint."""
    return {"atgan": config.to_dict(), "source_generator_sha256": params_digest(gen_orig.params)}


def generate_adversarial_samples(gen_attack: GeneratorModel, count: int,
                                 seed: int = 0) -> AdversarialBatch:
    if count <= 0:
        raise ValueError("count must be positive")
    labels = balanced_labels(count, gen_attack.num_classes)
    z = sample_noise(gen_attack.noise_dim, count, seed)
    return AdversarialBatch(gen_attack.generate(z, labels), labels, z)


def inoculate(base_train_set: SkeletonDataset, gen_attack: GeneratorModel,
              mix_fraction: float = 0.5, train_config: TrainConfig | None = None,
              seed: int = 0) -> HcnModel:
    """Retrain from scratch on a mix of real and attack-generator samples.

    Generated samples keep their conditioning labels. ``seed`` drives the mix;
    the training seed comes from ``train_config``.
    """
    mixed = mix_training_set(base_train_set, gen_attack, mix_fraction, seed)
    return fit_hcn(mixed, train_config or TrainConfig()).model
