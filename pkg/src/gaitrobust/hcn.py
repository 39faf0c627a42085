"""Two-branch co-occurrence classifier for skeleton person identification.

Branch 1 sees joint positions, branch 2 their frame-to-frame differences. Each
branch runs a point-wise convolution over the coordinate channels, a temporal
convolution, then moves the joint axis into the channel slot so the last
convolution aggregates over all joints at once.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Graph, adam, evaluate, glorot_uniform, value_and_gradient
from .numerics.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .skeldata import SkeletonDataset

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HcnArch:
    num_classes: int
    frames: int = 3
    joints: int = 13
    point_channels: int = 32
    temporal_channels: int = 16
    temporal_kernel: int = 2
    joint_channels: int = 16
    hidden: int = 64

    @property
    def flat_features(self) -> int:
        t_out = self.frames - self.temporal_kernel + 1
        return 2 * self.joint_channels * t_out * self.temporal_channels


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError(f"invalid training config {self}")


def temporal_difference(x: np.ndarray) -> np.ndarray:
    """Frame ``t`` holds ``x[:, t+1] - x[:, t]``; the last frame is zero.

    Accepts a single sample ``[C, T, J]`` or a batch ``[B, C, T, J]``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim not in (3, 4) or x.shape[-2] < 2:
        raise ValueError(f"need [.., C, T>=2, J], got {x.shape}")
    out = np.zeros_like(x)
    out[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return out


class HcnModel:
    def __init__(self, arch: HcnArch, params: dict[str, np.ndarray]):
        self.arch = arch
        self.params = params
        self._graphs: dict[str, tuple[Graph, dict]] = {}

    @classmethod
    def initialize(cls, arch: HcnArch, rng: np.random.Generator) -> "HcnModel":
        a = arch
        params: dict[str, np.ndarray] = {}

        def conv(name, o, c, kh):
            params[f"{name}.w"] = glorot_uniform(rng, (o, c, kh, 1), c * kh, o * kh)
            params[f"{name}.b"] = np.zeros(o)

        for br in ("pos", "mot"):
            conv(f"{br}.point", a.point_channels, 3, 1)
            conv(f"{br}.temporal", a.temporal_channels, a.point_channels, a.temporal_kernel)
            conv(f"{br}.joint", a.joint_channels, a.joints, 1)
        params["fc.w"] = glorot_uniform(rng, (a.flat_features, a.hidden), a.flat_features, a.hidden)
        params["fc.b"] = np.zeros(a.hidden)
        params["out.w"] = glorot_uniform(rng, (a.hidden, a.num_classes), a.hidden, a.num_classes)
        params["out.b"] = np.zeros(a.num_classes)
        return cls(arch, params)

    def copy(self) -> "HcnModel":
        return HcnModel(self.arch, {k: v.copy() for k, v in self.params.items()})

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def build(self, g: Graph, x: str, scope: str = "hcn") -> tuple[str, str]:
        """Add the network to ``g`` reading samples from node ``x``.

        Parameters are registered as ``{scope}/{name}`` and shared by reference.
        Returns ``(logits, probabilities)`` node names.
        """
        p = {k: g.parameter(f"{scope}/{k}", v) for k, v in self.params.items()}

        def branch(name, inp):
            h = g.relu(g.conv2d(inp, p[f"{name}.point.w"], p[f"{name}.point.b"]))
            h = g.conv2d(h, p[f"{name}.temporal.w"], p[f"{name}.temporal.b"])
            h = g.permute(h, (0, 3, 2, 1))  # [B, J, T', C]: joints become channels
            return g.relu(g.conv2d(h, p[f"{name}.joint.w"], p[f"{name}.joint.b"]))

        feats = g.concat([branch("pos", x), branch("mot", g.time_diff(x))], axis=1)
        h = g.relu(g.dense(g.flatten(feats), p["fc.w"], p["fc.b"]))
        logits = g.dense(h, p["out.w"], p["out.b"])
        return logits, g.softmax(logits)

    def _graph(self, kind: str) -> tuple[Graph, dict]:
        if kind not in self._graphs:
            g = Graph()
            a = self.arch
            x = g.input("x", (None, 3, a.frames, a.joints))
            logits, probs = self.build(g, x)
            names = {"x": x, "logits": logits, "probs": probs}
            if kind == "loss":
                y = g.input("y", (None,))
                names["y"] = y
                names["mean_loss"] = g.softmax_xent(logits, y, "mean")
                names["sum_loss"] = g.softmax_xent(logits, y, "sum")
            self._graphs[kind] = (g, names)
        return self._graphs[kind]

    def loss_graph(self) -> tuple[Graph, dict]:
        """Shared graph with inputs ``x``, ``y`` and mean/sum cross-entropy nodes."""
        return self._graph("loss")

    def predict_proba(self, x: np.ndarray, chunk: int = 1024) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 4 or x.shape[1:] != (3, self.arch.frames, self.arch.joints):
            raise ValueError(f"expected [B, 3, {self.arch.frames}, {self.arch.joints}], got {x.shape}")
        g, n = self._graph("forward")
        if len(x) == 0:
            return np.zeros((0, self.num_classes))
        parts = [evaluate(g, {n["x"]: x[i:i + chunk]}, [n["probs"]])[n["probs"]]
                 for i in range(0, len(x), chunk)]
        probs = np.concatenate(parts)
        if not np.all(np.isfinite(probs)):
            raise FloatingPointError("classifier produced non-finite probabilities")
        return probs

    def predict(self, x: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest class index
        return np.argmax(self.predict_proba(x), axis=1)

    def input_gradient(self, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """d(sum of per-sample cross-entropy)/dx, so row i is the gradient of sample i's own loss."""
        g, n = self.loss_graph()
        _, grads = value_and_gradient(g, {n["x"]: x, n["y"]: labels}, n["sum_loss"], wrt=n["x"])
        return grads[n["x"]]

    def mean_loss(self, x: np.ndarray, labels: np.ndarray) -> float:
        g, n = self.loss_graph()
        return float(evaluate(g, {n["x"]: x, n["y"]: labels}, [n["mean_loss"]])[n["mean_loss"]])

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {"kind": "hcn", "arch": asdict(self.arch), **(extra or {})}
        save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> "HcnModel":
        params, meta = load_checkpoint(path)
        if not meta or meta.get("kind") != "hcn":
            raise CheckpointError(f"{path} is not an HCN checkpoint")
        return cls(HcnArch(**meta["arch"]), params)


def hcn_forward(model: HcnModel, batch: np.ndarray) -> np.ndarray:
    return model.predict_proba(batch)


@dataclass
class TrainResult:
    model: HcnModel
    epoch_losses: list[float] = field(default_factory=list)


def train_hcn(train_set: SkeletonDataset, config: TrainConfig, seed: int | None = None,
              arch: HcnArch | None = None) -> HcnModel:
    return fit_hcn(train_set, config, seed, arch).model


def fit_hcn(train_set: SkeletonDataset, config: TrainConfig, seed: int | None = None,
            arch: HcnArch | None = None) -> TrainResult:
    """Minimize mean cross-entropy with Adam over seeded per-epoch shuffles."""
    if len(train_set) == 0:
        raise ValueError("empty training set")
    train_set.validate(require_all_classes=False)
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0x4C4E])
    if arch is None:
        _, _, t, j = train_set.samples.shape
        arch = HcnArch(train_set.num_classes, frames=t, joints=j)
    model = HcnModel.initialize(arch, rng)
    g, n = model.loss_graph()
    opt = adam(config.learning_rate)
    x, y = train_set.samples, train_set.labels
    wrt = [f"hcn/{k}" for k in model.params]
    scoped = {f"hcn/{k}": v for k, v in model.params.items()}
    result = TrainResult(model)
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            vals, grads = value_and_gradient(g, {n["x"]: x[idx], n["y"]: y[idx]},
                                             n["mean_loss"], wrt=wrt)
            opt.step(scoped, grads)
            total += float(vals[n["mean_loss"]]) * len(idx)
        result.epoch_losses.append(total / len(y))
        if not np.isfinite(result.epoch_losses[-1]):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        log.debug("epoch %d loss %.4f", epoch, result.epoch_losses[-1])
    return result


def evaluate_accuracy(model: HcnModel, dataset: SkeletonDataset) -> float:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(model.predict(dataset.samples) == dataset.labels))


def score_from_probabilities(probs: np.ndarray) -> float:
    """exp(mean KL(p(y|x) || p(y))) with probabilities floored at 1e-12 inside the logs."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] < 2:
        raise ValueError("need at least 2 predictive distributions")
    marginal = probs.mean(axis=0)
    log_p = np.log(np.maximum(probs, PROB_FLOOR))
    log_m = np.log(np.maximum(marginal, PROB_FLOOR))
    kl = np.sum(probs * (log_p - log_m), axis=1)
    score = float(np.exp(kl.mean()))
    # exp of a mean KL is bounded by [1, K] up to rounding
    return min(max(score, 1.0), float(probs.shape[1]))


def hcn_id_score(scorer: HcnModel, samples: np.ndarray) -> float:
    return score_from_probabilities(scorer.predict_proba(samples))
