"""Per-fold orchestration: pretraining, attack generators, inoculation, benchmarks."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..acgan import GanTrainConfig, GeneratorModel, mix_training_set, train_acgan
from ..attacks import AttackConfig, Method, attack_success_rate, build_attack_test_set
from ..atgan import (AtganConfig, AtganHistory, attack_generator_meta,
                     generate_adversarial_samples, inoculate, train_attack_generator)
from ..hcn import HcnModel, TrainConfig, evaluate_accuracy, fit_hcn, hcn_id_score
from ..numerics import params_digest
from ..skeldata import (SkeletonDataset, dumps_dataset, read_dataset, stratified_kfold,
                        synthesize_corpus)
from .config import BASE_VARIANTS, ExperimentConfig, derive_seed
from .report import ExperimentReport

log = logging.getLogger(__name__)

# per-fold seed streams
_GAN, _HCN, _MIX, _ATGAN, _INOC, _ATTACK, _SCORE, _SPLIT = range(1, 9)
ATTACK_STREAM = _ATTACK


@dataclass
class FoldRun:
    """Everything trained for one (seed, fold) pair."""

    seed: int
    fold: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    gen_orig: GeneratorModel
    models: dict[str, HcnModel] = field(default_factory=dict)
    train_sets: dict[str, SkeletonDataset] = field(default_factory=dict)
    gen_attack: dict[str, GeneratorModel] = field(default_factory=dict)
    atgan_history: dict[str, AtganHistory] = field(default_factory=dict)

    def sub(self, *parts: int) -> int:
        return derive_seed(self.seed, self.fold, *parts)

    @property
    def key(self) -> str:
        return f"seed{self.seed}/fold{self.fold}"


def load_dataset(config: ExperimentConfig) -> SkeletonDataset:
    if config.data_path is not None:
        return read_dataset(config.data_path).validate()
    return synthesize_corpus(config.num_subjects, config.windows_per_subject,
                             config.videos_per_subject, seed=config.data_seed)


def dataset_digest(dataset: SkeletonDataset) -> str:
    return hashlib.sha256(dumps_dataset(dataset)).hexdigest()


def split_for_seed(dataset: SkeletonDataset, config: ExperimentConfig, seed: int):
    return stratified_kfold(dataset, config.fold_count, seed=derive_seed(seed, _SPLIT))


def rebuild_training_set(config: ExperimentConfig, seed: int, fold: int, variant: str,
                         dataset: SkeletonDataset | None = None,
                         gen_orig: GeneratorModel | None = None) -> SkeletonDataset:
    """The training set a pipeline variant was fitted on (before any inoculation)."""
    dataset = load_dataset(config) if dataset is None else dataset
    train = dataset.subset(split_for_seed(dataset, config, seed).train_indices(fold))
    if variant.startswith("model2"):
        if gen_orig is None:
            raise ValueError("Model 2 training sets need the fold's benign generator")
        train = mix_training_set(train, gen_orig, config.mix_fraction,
                                 derive_seed(seed, fold, _MIX))
    return train


def _train_config(config: ExperimentConfig, run: FoldRun) -> TrainConfig:
    return TrainConfig(epochs=config.schedule.hcn_epochs, seed=run.sub(_HCN))


def fit_real_only(dataset: SkeletonDataset, config: ExperimentConfig, seed: int,
                  fold: int) -> tuple[HcnModel, SkeletonDataset]:
    """Model 1 and its test fold, bit-identical to what pretraining produces but without the GAN."""
    split = split_for_seed(dataset, config, seed)
    cfg = TrainConfig(epochs=config.schedule.hcn_epochs, seed=derive_seed(seed, fold, _HCN))
    model = fit_hcn(dataset.subset(split.train_indices(fold)), cfg).model
    return model, dataset.subset(split.test_indices(fold))


def _run_dir(config: ExperimentConfig, run: FoldRun) -> Path | None:
    if config.out_dir is None:
        return None
    d = Path(config.out_dir) / f"seed{run.seed}" / f"fold{run.fold}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _model_meta(config: ExperimentConfig, run: FoldRun, variant: str) -> dict:
    return {"variant": variant, "seed": run.seed, "fold": run.fold,
            "experiment": config.to_dict(),
            "train_config": vars(_train_config(config, run))}


def run_pretraining(config: ExperimentConfig,
                    dataset: SkeletonDataset | None = None) -> list[FoldRun]:
    """Per fold: the benign generator, Model 1 on real data and Model 2 on the real/synthetic mix."""
    dataset = load_dataset(config) if dataset is None else dataset
    sched = config.schedule
    runs = []
    for seed in config.seeds:
        split = split_for_seed(dataset, config, seed)
        for fold in config.fold_indices:
            train_idx, test_idx = split.train_indices(fold), split.test_indices(fold)
            if np.intersect1d(train_idx, test_idx).size:
                raise RuntimeError(f"fold {fold} leaks test samples into training")
            train = dataset.subset(train_idx)
            log.info("pretraining seed%d/fold%d", seed, fold)
            gan_cfg = GanTrainConfig(epochs=sched.gan_epochs, learning_rate=sched.gan_learning_rate,
                                     seed=derive_seed(seed, fold, _GAN))
            run = FoldRun(seed, fold, train_idx, test_idx, train_acgan(train, gan_cfg)[0])
            cfg = _train_config(config, run)
            run.train_sets["model1"] = train
            run.train_sets["model2"] = mix_training_set(train, run.gen_orig, config.mix_fraction,
                                                        run.sub(_MIX))
            for variant in BASE_VARIANTS:
                run.models[variant] = fit_hcn(run.train_sets[variant], cfg).model
            out = _run_dir(config, run)
            if out is not None:
                run.gen_orig.save(out / "gen_orig.skw", {"gan_config": vars(gan_cfg),
                                                         "seed": seed, "fold": fold})
                for variant in BASE_VARIANTS:
                    run.models[variant].save(out / f"{variant}.skw",
                                             _model_meta(config, run, variant))
                (out / "split.json").write_text(json.dumps(
                    {"train": train_idx.tolist(), "test": test_idx.tolist()}))
            runs.append(run)
    return runs


def train_attack_generators(runs: list[FoldRun], config: ExperimentConfig) -> None:
    """One attack generator per fold and base variant, aimed at that variant."""
    for run in runs:
        for i, variant in enumerate(BASE_VARIANTS):
            log.info("attack generator %s %s", run.key, variant)
            cfg = AtganConfig(epochs=config.schedule.atgan_epochs, seed=run.sub(_ATGAN, i))
            hist = AtganHistory()
            run.gen_attack[variant] = train_attack_generator(run.models[variant], run.gen_orig,
                                                             cfg, hist)
            run.atgan_history[variant] = hist
            out = _run_dir(config, run)
            if out is not None:
                run.gen_attack[variant].save(out / f"gen_attack_{variant}.skw",
                                             attack_generator_meta(cfg, run.gen_orig))


def evaluate_variant(model: HcnModel, test: SkeletonDataset, config: ExperimentConfig, *,
                     seed: int, fold: int, variant: str, attack_seed: int) -> list[dict]:
    """Clean accuracy plus one attack cell per swept (method, epsilon) and per default method."""
    clean = evaluate_accuracy(model, test)
    base = {"seed": seed, "fold": fold, "variant": variant, "clean_accuracy": clean}
    settings = [(m, "sweep", float(e)) for m in config.sweep_methods for e in config.epsilon_grid]
    settings += [(m, "default", None) for m in config.default_methods]
    rows = []
    for method, grid, eps in settings:
        cfg = AttackConfig(method, seed=attack_seed)
        if eps is not None:
            cfg = replace(cfg, epsilon=eps)
        attack_set = build_attack_test_set(model, test.samples, test.labels, cfg,
                                           test.num_classes, source_fold=fold)
        success = attack_success_rate(model, attack_set)
        rows.append({**base, "method": cfg.method.value, "grid": grid,
                     "epsilon": None if cfg.method == Method.GN else cfg.epsilon,
                     "success_rate": success, "robustness": 1.0 - success})
    return rows


def run_attack_benchmark(runs: list[FoldRun], dataset: SkeletonDataset,
                         config: ExperimentConfig, variants=None) -> list[dict]:
    """Attack cells for every run, variant, method and epsilon, in run order."""
    cells = []
    for run in runs:
        test = dataset.subset(run.test_idx)
        for variant in (variants or run.models):
            if variant in run.models:
                log.info("attacking %s %s", run.key, variant)
                cells += evaluate_variant(run.models[variant], test, config, seed=run.seed,
                                          fold=run.fold, variant=variant,
                                          attack_seed=run.sub(_ATTACK))
    return cells


def run_inoculation_study(runs: list[FoldRun], dataset: SkeletonDataset,
                          config: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Inoculate each base variant with its attack generator, then benchmark and score.

    Returns ``(cells, fold_records)``. Inoculated variants start from the same
    training set as their base (real data for Model 1, the benign mix for Model 2).
    """
    cells, records = [], []
    for run in runs:
        if set(run.gen_attack) != set(BASE_VARIANTS):
            raise ValueError(f"{run.key} has no attack generators; train them first")
        cfg = _train_config(config, run)
        for i, variant in enumerate(BASE_VARIANTS):
            log.info("inoculating %s %s", run.key, variant)
            name = f"{variant}_inoc"
            run.models[name] = inoculate(run.train_sets[variant], run.gen_attack[variant],
                                         config.mix_fraction, cfg, seed=run.sub(_INOC, i))
            out = _run_dir(config, run)
            if out is not None:
                run.models[name].save(out / f"{name}.skw", _model_meta(config, run, name))
        cells += run_attack_benchmark([run], dataset, config,
                                      [f"{v}_inoc" for v in BASE_VARIANTS])
        records.append(fold_record(run, dataset, config))
    return cells, records


def fold_record(run: FoldRun, dataset: SkeletonDataset, config: ExperimentConfig) -> dict:
    """Clean accuracy, sample-quality scores and attack-generator effect for one fold."""
    test = dataset.subset(run.test_idx)
    scorer = run.models["model1"]
    batch = generate_adversarial_samples(run.gen_orig, config.score_samples, run.sub(_SCORE))
    orig = batch.samples
    scores = {"real": hcn_id_score(scorer, test.samples), "gen_orig": hcn_id_score(scorer, orig)}
    atgan = {}
    for variant, gen in run.gen_attack.items():
        adv = gen.generate(batch.noise, batch.labels)
        scores[f"gen_attack_{variant}"] = hcn_id_score(scorer, adv)
        target = run.models[variant]
        hist = run.atgan_history.get(variant)
        atgan[variant] = {
            "target_accuracy_orig": float(np.mean(target.predict(orig) == batch.labels)),
            "target_accuracy_attack": float(np.mean(target.predict(adv) == batch.labels)),
            "objective": list(hist.objective) if hist else [],
        }
    return {
        "seed": run.seed, "fold": run.fold,
        "train_size": int(len(run.train_idx)), "test_size": int(len(run.test_idx)),
        "clean_accuracy": {v: evaluate_accuracy(m, test) for v, m in run.models.items()},
        "scores": scores, "atgan": atgan,
        "digests": {**{v: params_digest(m.params) for v, m in run.models.items()},
                    "gen_orig": params_digest(run.gen_orig.params),
                    **{f"gen_attack_{v}": params_digest(g.params)
                       for v, g in run.gen_attack.items()}},
    }


def run_experiment(config: ExperimentConfig,
                   dataset: SkeletonDataset | None = None) -> ExperimentReport:
    """Full protocol: pretraining, base-model benchmark, attack generators, inoculation."""
    dataset = load_dataset(config) if dataset is None else dataset
    runs = run_pretraining(config, dataset)
    cells = run_attack_benchmark(runs, dataset, config, list(BASE_VARIANTS))
    train_attack_generators(runs, config)
    inoc_cells, records = run_inoculation_study(runs, dataset, config)
    order = {v: i for i, v in enumerate(("model1", "model2", "model1_inoc", "model2_inoc"))}
    cells = sorted(cells + inoc_cells, key=lambda c: (c["seed"], c["fold"], order[c["variant"]]))
    report = ExperimentReport(config=config.to_dict(), cells=cells, folds=records,
                              provenance={"dataset_sha256": dataset_digest(dataset),
                                          "num_samples": len(dataset),
                                          "num_classes": dataset.num_classes})
    if config.out_dir is not None:
        report.save(Path(config.out_dir) / "report.json")
    return report
