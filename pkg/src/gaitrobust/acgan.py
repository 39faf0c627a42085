"""Auxiliary-classifier GAN over skeleton windows, and real/synthetic training mixes."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .numerics import Graph, adam, evaluate, glorot_uniform, value_and_gradient
from .numerics.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .skeldata import SkeletonDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorArch:
    num_classes: int
    noise_dim: int = 64
    seed_channels: int = 16
    hidden_channels: int = 32
    frames: int = 3
    joints: int = 13


@dataclass(frozen=True)
class DiscriminatorArch:
    num_classes: int
    channels: int = 32
    hidden: int = 64
    frames: int = 3
    joints: int = 13


@dataclass
class GanTrainConfig:
    batch_size: int = 32
    epochs: int = 600
    learning_rate: float = 0.0002
    beta1: float = 0.5
    noise_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.noise_dim) <= 0 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError(f"invalid GAN config {self}")


def _conv_param(params, rng, name, o, c, kh, kw=1):
    params[f"{name}.w"] = glorot_uniform(rng, (o, c, kh, kw), c * kh * kw, o * kh * kw)
    params[f"{name}.b"] = np.zeros(o)


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class GeneratorModel:
    """(noise, one-hot label) -> dense -> reshape -> conv -> conv -> extra conv -> tanh."""

    def __init__(self, arch: GeneratorArch, params: dict[str, np.ndarray]):
        self.arch = arch
        self.params = params
        self._graph: tuple[Graph, dict] | None = None

    @classmethod
    def initialize(cls, arch: GeneratorArch, rng: np.random.Generator) -> "GeneratorModel":
        a = arch
        params: dict[str, np.ndarray] = {}
        n_in, n_seed = a.noise_dim + a.num_classes, a.seed_channels * a.frames * a.joints
        params["fc.w"] = glorot_uniform(rng, (n_in, n_seed), n_in, n_seed)
        params["fc.b"] = np.zeros(n_seed)
        _conv_param(params, rng, "temporal", a.hidden_channels, a.seed_channels, 3)
        _conv_param(params, rng, "mix", a.hidden_channels, a.hidden_channels, 1)
        _conv_param(params, rng, "extra", a.hidden_channels, a.hidden_channels, 1)
        _conv_param(params, rng, "out", 3, a.hidden_channels, 1)
        return cls(arch, params)

    def copy(self) -> "GeneratorModel":
        return GeneratorModel(self.arch, {k: v.copy() for k, v in self.params.items()})

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    @property
    def noise_dim(self) -> int:
        return self.arch.noise_dim

    def build(self, g: Graph, z: str, c: str, scope: str = "gen") -> str:
        a = self.arch
        p = {k: g.parameter(f"{scope}/{k}", v) for k, v in self.params.items()}
        h = g.relu(g.dense(g.concat([z, c], axis=1), p["fc.w"], p["fc.b"]))
        h = g.reshape(h, ("batch", a.seed_channels, a.frames, a.joints))
        h = g.relu(g.conv2d(h, p["temporal.w"], p["temporal.b"], padding="same"))
        h = g.relu(g.conv2d(h, p["mix.w"], p["mix.b"]))
        h = g.relu(g.conv2d(h, p["extra.w"], p["extra.b"]))
        return g.tanh(g.conv2d(h, p["out.w"], p["out.b"]))

    def generate(self, z: np.ndarray, labels: np.ndarray) -> np.ndarray:
        if self._graph is None:
            g = Graph()
            zi = g.input("z", (None, self.noise_dim))
            ci = g.input("c", (None, self.num_classes))
            self._graph = (g, {"out": self.build(g, zi, ci)})
        g, n = self._graph
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            return np.zeros((0, 3, self.arch.frames, self.arch.joints))
        return evaluate(g, {"z": z, "c": one_hot(labels, self.num_classes)}, [n["out"]])[n["out"]]

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        save_checkpoint(path, self.params, {"kind": "generator", "arch": asdict(self.arch),
                                            **(extra or {})})

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorModel":
        params, meta = load_checkpoint(path)
        if not meta or meta.get("kind") != "generator":
            raise CheckpointError(f"{path} is not a generator checkpoint")
        return cls(GeneratorArch(**meta["arch"]), params)


class DiscriminatorModel:
    """Shared trunk over positions and their temporal differences; source and class heads."""

    def __init__(self, arch: DiscriminatorArch, params: dict[str, np.ndarray]):
        self.arch = arch
        self.params = params
        self._graph: tuple[Graph, dict] | None = None

    @classmethod
    def initialize(cls, arch: DiscriminatorArch, rng: np.random.Generator) -> "DiscriminatorModel":
        a = arch
        params: dict[str, np.ndarray] = {}
        _conv_param(params, rng, "point", a.channels, 6, 1)
        _conv_param(params, rng, "temporal", a.channels, a.channels, 2)
        flat = a.channels * (a.frames - 1) * a.joints
        params["fc.w"] = glorot_uniform(rng, (flat, a.hidden), flat, a.hidden)
        params["fc.b"] = np.zeros(a.hidden)
        params["src.w"] = glorot_uniform(rng, (a.hidden, 1), a.hidden, 1)
        params["src.b"] = np.zeros(1)
        params["cls.w"] = glorot_uniform(rng, (a.hidden, a.num_classes), a.hidden, a.num_classes)
        params["cls.b"] = np.zeros(a.num_classes)
        return cls(arch, params)

    def build(self, g: Graph, x: str, scope: str = "disc") -> tuple[str, str]:
        """Returns ``(source_logit[B,1], class_logits[B,K])``."""
        p = {k: g.parameter(f"{scope}/{k}", v) for k, v in self.params.items()}
        h = g.concat([x, g.time_diff(x)], axis=1)
        h = g.leaky_relu(g.conv2d(h, p["point.w"], p["point.b"]))
        h = g.leaky_relu(g.conv2d(h, p["temporal.w"], p["temporal.b"]))
        h = g.leaky_relu(g.dense(g.flatten(h), p["fc.w"], p["fc.b"]))
        return g.dense(h, p["src.w"], p["src.b"]), g.dense(h, p["cls.w"], p["cls.b"])

    def heads(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Real-probability ``[B]`` and class distribution ``[B, K]``."""
        if self._graph is None:
            g = Graph()
            xi = g.input("x", (None, 3, self.arch.frames, self.arch.joints))
            src, cls = self.build(g, xi)
            self._graph = (g, {"src": g.sigmoid(src), "cls": g.softmax(cls)})
        g, n = self._graph
        out = evaluate(g, {"x": x}, [n["src"], n["cls"]])
        return out[n["src"]][:, 0], out[n["cls"]]

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        save_checkpoint(path, self.params, {"kind": "discriminator", "arch": asdict(self.arch),
                                            **(extra or {})})


@dataclass
class GanHistory:
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)


def _gan_graphs(gen: GeneratorModel, disc: DiscriminatorModel):
    a = gen.arch
    dg = Graph()
    x = dg.input("x", (None, 3, a.frames, a.joints))
    src, cls = disc.build(dg, x)
    d_loss = dg.add(dg.bce_logits(src, dg.input("real")),
                    dg.softmax_xent(cls, dg.input("y")), name="d_loss")

    gg = Graph()
    fake = gen.build(gg, gg.input("z"), gg.input("c"))
    src, cls = disc.build(gg, fake)
    g_loss = gg.add(gg.bce_logits(src, gg.input("real")),
                    gg.softmax_xent(cls, gg.input("y")), name="g_loss")
    return (dg, d_loss), (gg, g_loss)


def train_acgan(train_set: SkeletonDataset, config: GanTrainConfig,
                history: GanHistory | None = None, *, freeze_generator: bool = False,
                on_epoch: Callable[[int, GeneratorModel, DiscriminatorModel], None] | None = None,
                ) -> tuple[GeneratorModel, DiscriminatorModel]:
    """Alternate one discriminator and one generator Adam step per real batch.

    The discriminator fits real/fake and the class of both real and generated
    samples; the generator uses the non-saturating objective (be judged real)
    plus the class likelihood of its conditioning label. ``freeze_generator``
    skips generator updates (discriminator-only diagnostics).
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    train_set.validate(require_all_classes=False)
    _, _, t, j = train_set.samples.shape
    k = train_set.num_classes
    rng = np.random.default_rng([config.seed, 0xAC6])
    gen = GeneratorModel.initialize(GeneratorArch(k, config.noise_dim, frames=t, joints=j), rng)
    disc = DiscriminatorModel.initialize(DiscriminatorArch(k, frames=t, joints=j), rng)
    (dg, d_loss), (gg, g_loss) = _gan_graphs(gen, disc)
    d_params = {f"disc/{n}": v for n, v in disc.params.items()}
    g_params = {f"gen/{n}": v for n, v in gen.params.items()}
    d_opt = adam(config.learning_rate, beta1=config.beta1)
    g_opt = adam(config.learning_rate, beta1=config.beta1)
    x_all, y_all = train_set.samples, train_set.labels

    for epoch in range(config.epochs):
        order = rng.permutation(len(y_all))
        d_tot = g_tot = 0.0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            b = len(idx)
            z = rng.normal(size=(b, config.noise_dim))
            c = rng.integers(0, k, b)
            fake = gen.generate(z, c)
            feeds = {"x": np.concatenate([x_all[idx], fake]),
                     "real": np.concatenate([np.ones((b, 1)), np.zeros((b, 1))]),
                     "y": np.concatenate([y_all[idx], c])}
            vals, grads = value_and_gradient(dg, feeds, d_loss, wrt=list(d_params))
            d_opt.step(d_params, grads)
            d_tot += float(vals[d_loss])

            z = rng.normal(size=(b, config.noise_dim))
            c = rng.integers(0, k, b)
            batches += 1
            if freeze_generator:
                continue
            feeds = {"z": z, "c": one_hot(c, k), "real": np.ones((b, 1)), "y": c}
            vals, grads = value_and_gradient(gg, feeds, g_loss, wrt=list(g_params))
            g_opt.step(g_params, grads)
            g_tot += float(vals[g_loss])
        if history is not None:
            history.d_loss.append(d_tot / batches)
            history.g_loss.append(g_tot / batches)
        if not (np.isfinite(d_tot) and np.isfinite(g_tot)):
            raise FloatingPointError(f"non-finite GAN loss at epoch {epoch}")
        if on_epoch is not None:
            on_epoch(epoch, gen, disc)
        log.debug("gan epoch %d d=%.4f g=%.4f", epoch, d_tot / batches, g_tot / batches)
    return gen, disc


def sample_noise(noise_dim: int, count: int, seed: int) -> np.ndarray:
    return np.random.default_rng([seed, 0x5A]).normal(size=(count, noise_dim))


def sample_synthetic(generator: GeneratorModel, labels, seed: int = 0) -> np.ndarray:
    """One generated window per requested label."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= generator.num_classes):
        raise ValueError(f"labels must lie in [0, {generator.num_classes - 1}]")
    return generator.generate(sample_noise(generator.noise_dim, len(labels), seed), labels)


def mix_indices(n: int, mix_fraction: float, seed: int) -> np.ndarray:
    """Sorted positions that :func:`mix_training_set` replaces."""
    if not 0.0 <= mix_fraction <= 1.0:
        raise ValueError("mix_fraction must lie in [0, 1]")
    rng = np.random.default_rng([seed, 0x313])
    return np.sort(rng.permutation(n)[:int(round(mix_fraction * n))])


def mix_training_set(real: SkeletonDataset, generator: GeneratorModel,
                     mix_fraction: float = 0.5, seed: int = 0) -> SkeletonDataset:
    """Replace ``round(mix_fraction * N)`` random real samples by generated ones
    conditioned on the same labels, so size and class histogram are unchanged."""
    chosen = mix_indices(len(real), mix_fraction, seed)
    x = real.samples.copy()
    if len(chosen):
        x[chosen] = sample_synthetic(generator, real.labels[chosen], seed)
    return SkeletonDataset(x, real.labels.copy(), real.num_classes)
