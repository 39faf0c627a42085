import csv
import json
import math

import numpy as np
import pytest

from gaitrobust.attacks import EPSILON_GRID
from gaitrobust.hcn import HcnModel
from gaitrobust.pipeline import (BASE_VARIANTS, VARIANTS, ExperimentConfig, ExperimentReport,
                                 ReportError, derive_seed, emit_report, load_dataset, mean_std,
                                 plot_series, rebuild_training_set, run_experiment,
                                 run_pretraining, split_for_seed)

TINY = dict(num_subjects=3, windows_per_subject=30, videos_per_subject=2, data_seed=7,
            fold_count=3, folds=[0, 1], preset="smoke", score_samples=30)


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    return ExperimentConfig(**TINY, out_dir=str(tmp_path_factory.mktemp("run")))


@pytest.fixture(scope="module")
def report(tiny_config):
    return run_experiment(tiny_config)


# -- configuration ---------------------------------------------------------------------------


@pytest.mark.parametrize("bad", [
    dict(fold_count=1), dict(preset="slow"), dict(epsilon_grid=[0.1, 0.05]),
    dict(epsilon_grid=[-0.01, 0.0]), dict(epsilon_grid=[]), dict(sweep_methods=["GN"]),
    dict(default_methods=["XYZ"]), dict(seeds=[]), dict(folds=[10]),
])
def test_config_rejects(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


def test_config_defaults_and_roundtrip():
    c = ExperimentConfig()
    assert c.fold_count == 10 and c.mix_fraction == 0.5
    assert c.epsilon_grid == list(EPSILON_GRID) and len(c.epsilon_grid) == 20
    assert c.fold_indices == list(range(10))
    assert ExperimentConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({**c.to_dict(), "bogus": 1})


def test_output_dir_does_not_enter_the_config_echo():
    assert "out_dir" not in ExperimentConfig(out_dir="/somewhere").to_dict()


def test_derive_seed_is_stable_and_separates_streams():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    seeds = {derive_seed(s, f, k) for s in range(3) for f in range(10) for k in range(9)}
    assert len(seeds) == 270
    assert all(0 <= s < 2**32 for s in seeds)


def test_mean_std_is_population_style():
    d = mean_std([1.0, 2.0, 3.0, 4.0])
    assert d["mean"] == 2.5 and d["std"] == pytest.approx(math.sqrt(1.25), abs=1e-15)
    assert mean_std([])["mean"] is None


# -- folds and pretraining --------------------------------------------------------------------


def test_folds_partition_the_dataset():
    cfg = ExperimentConfig(**{**TINY, "folds": None})
    ds = load_dataset(cfg)
    split = split_for_seed(ds, cfg, seed=1)
    tests = [split.test_indices(f) for f in range(cfg.fold_count)]
    for f, test in enumerate(tests):
        assert np.intersect1d(test, split.train_indices(f)).size == 0
    assert np.array_equal(np.sort(np.concatenate(tests)), np.arange(len(ds)))


def test_pretraining_persists_distinct_checkpoints(report, tiny_config):
    from pathlib import Path
    root = Path(tiny_config.out_dir)
    blobs = []
    for fold in tiny_config.fold_indices:
        d = root / "seed1" / f"fold{fold}"
        for name in ("gen_orig", "model1", "model2", "gen_attack_model1", "gen_attack_model2",
                     "model1_inoc", "model2_inoc"):
            assert (d / f"{name}.skw").is_file() and (d / f"{name}.skw.json").is_file()
        split = json.loads((d / "split.json").read_text())
        assert not set(split["train"]) & set(split["test"])
        blobs.append((d / "model1.skw").read_bytes())
    assert len(set(blobs)) == len(blobs)


def test_rebuilt_training_sets_match_pretraining(tiny_config):
    ds = load_dataset(tiny_config)
    cfg = ExperimentConfig(**{**TINY, "folds": [1]})
    (run,) = run_pretraining(cfg, ds)
    real = rebuild_training_set(cfg, 1, 1, "model1", ds)
    mixed = rebuild_training_set(cfg, 1, 1, "model2", ds, gen_orig=run.gen_orig)
    assert np.array_equal(real.samples, run.train_sets["model1"].samples)
    assert np.array_equal(mixed.samples, run.train_sets["model2"].samples)
    assert np.array_equal(mixed.labels, real.labels)
    with pytest.raises(ValueError):
        rebuild_training_set(cfg, 1, 1, "model2", ds)


# -- report contents ---------------------------------------------------------------------------


def test_every_cell_is_filled(report, tiny_config):
    c = tiny_config
    per_variant = len(c.sweep_methods) * len(c.epsilon_grid) + len(c.default_methods)
    assert len(report.cells) == len(c.fold_indices) * len(VARIANTS) * per_variant
    keys = {(x["fold"], x["variant"], x["method"], x["grid"], x["epsilon"]) for x in report.cells}
    assert len(keys) == len(report.cells)
    for cell in report.cells:
        assert 0.0 <= cell["success_rate"] <= 1.0
        assert cell["success_rate"] + cell["robustness"] == 1.0


def test_zero_epsilon_success_is_clean_error(report):
    zero = [c for c in report.cells if c["grid"] == "sweep" and c["epsilon"] == 0.0]
    assert zero
    for c in zero:
        assert c["success_rate"] == pytest.approx(1.0 - c["clean_accuracy"], abs=1e-12)


def test_aggregates_recompute_from_cells(report):
    for agg in report.aggregates():
        rows = [c for c in report.cells if (c["variant"], c["method"], c["grid"], c["epsilon"])
                == (agg["variant"], agg["method"], agg["grid"], agg["epsilon"])]
        s = np.array([r["success_rate"] for r in rows])
        assert agg["n"] == len(rows)
        assert abs(agg["mean_success"] - s.mean()) < 1e-12
        assert abs(agg["std_success"] - s.std()) < 1e-12
        assert abs(agg["mean_robustness"] - (1 - s).mean()) < 1e-12


def test_inoculation_deltas_recompute_from_cells(report):
    deltas = report.inoculation_deltas()
    assert set(deltas) == set(BASE_VARIANTS)
    for base in BASE_VARIANTS:
        for method in ("FGSM", "BIM"):
            def rob(variant):
                return np.array([c["robustness"] for c in report.cells if c["variant"] == variant
                                 and c["method"] == method and c["grid"] == "sweep"])
            diff = rob(base + "_inoc") - rob(base)
            assert abs(deltas[base][method]["sweep"]["mean"] - diff.mean()) < 1e-12


def test_fold_records(report, tiny_config):
    assert [r["fold"] for r in report.folds] == tiny_config.fold_indices
    for rec in report.folds:
        assert set(rec["clean_accuracy"]) == set(VARIANTS)
        assert set(rec["scores"]) == {"real", "gen_orig", "gen_attack_model1", "gen_attack_model2"}
        assert all(1.0 <= s <= 3.0 for s in rec["scores"].values())
        for a in rec["atgan"].values():
            assert len(a["objective"]) == tiny_config.schedule.atgan_epochs + 1
    summary = report.summary()
    assert summary["clean_accuracy"]["model1"]["n"] == len(tiny_config.fold_indices)
    assert set(summary["attack_generator"]) == set(BASE_VARIANTS)


def test_cell_level_provenance(report):
    assert len(report.provenance["dataset_sha256"]) == 64
    assert report.provenance["num_classes"] == 3


# -- serialization -----------------------------------------------------------------------------


def test_json_roundtrip_is_exact(report, tmp_path):
    text = report.to_json()
    parsed = json.loads(text)
    assert parsed == report.to_dict()
    for orig, back in zip(report.cells, parsed["cells"]):
        assert orig["success_rate"].hex() == float(back["success_rate"]).hex()
    path = report.save(tmp_path / "r.json")
    assert ExperimentReport.load(path).to_json() == text


def test_load_rejects_garbage(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ReportError):
        ExperimentReport.load(tmp_path / "bad.json")
    (tmp_path / "partial.json").write_text('{"config": {}}')
    with pytest.raises(ReportError):
        ExperimentReport.load(tmp_path / "partial.json")


def test_emit_report_files(report, tmp_path):
    written = emit_report(report, tmp_path, plot_data=True)
    names = {p.name for p in written}
    assert {"cells.csv", "report.json"} <= names
    with open(tmp_path / "cells.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == len(report.cells) + 1
    back = {(int(r[1]), r[2], r[3], r[4], r[5]): float(r[7]) for r in rows[1:]}
    for c in report.cells:
        eps = "" if c["epsilon"] is None else repr(c["epsilon"])
        assert back[(c["fold"], c["variant"], c["method"], c["grid"], eps)] == c["success_rate"]
    for fig in ("attack_success_base", "inoculation_model1", "inoculation_model2"):
        assert f"series_{fig}.csv" in names
        png = tmp_path / f"series_{fig}.png"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_series_covers_the_grid(report):
    series = plot_series(report, "FGSM")
    for rows in series.values():
        for variant in {r["variant"] for r in rows}:
            eps = [r["epsilon"] for r in rows if r["variant"] == variant]
            assert len(eps) == 20 and eps == sorted(eps)


def test_rendered_figures_are_reproducible(report, tmp_path):
    emit_report(report, tmp_path / "a", formats=(), plot_data=True)
    emit_report(report, tmp_path / "b", formats=(), plot_data=True)
    for png in (tmp_path / "a").glob("*.png"):
        assert png.read_bytes() == (tmp_path / "b" / png.name).read_bytes()


def test_emit_report_unwritable_directory(report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ReportError):
        emit_report(report, blocker / "sub")
    with pytest.raises(ReportError):
        emit_report(report, tmp_path / "ok", formats=("xml",))


def test_rerun_is_bit_identical(report):
    again = run_experiment(ExperimentConfig(**TINY))
    assert again.to_json() == report.to_json()


def test_model_checkpoint_meta_records_provenance(report, tiny_config):
    from pathlib import Path
    path = Path(tiny_config.out_dir) / "seed1" / "fold0" / "model2_inoc.skw"
    meta = json.loads(Path(str(path) + ".json").read_text())
    assert meta["kind"] == "hcn" and meta["variant"] == "model2_inoc"
    assert (meta["seed"], meta["fold"]) == (1, 0)
    assert meta["experiment"] == tiny_config.to_dict()
    assert isinstance(HcnModel.load(path), HcnModel)
