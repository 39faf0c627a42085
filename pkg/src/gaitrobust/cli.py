"""``gaitrobust`` command line.

Every subcommand accepts ``--config FILE``: a YAML mapping whose keys are the
subcommand's flag names (dashes or underscores). Flags given on the command
line override the file. Exit codes: 0 success, 1 usage error, 2 data or format
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .acgan import GeneratorModel
from .attacks import EPSILON_GRID, Method
from .atgan import (AtganConfig, AtganHistory, attack_generator_meta,
                    generate_adversarial_samples, inoculate, train_attack_generator)
from .hcn import HcnModel, TrainConfig, hcn_id_score
from .numerics import CheckpointError
from .pipeline import (ATTACK_STREAM, PRESETS, ExperimentConfig, ExperimentReport, ReportError,
                       derive_seed, emit_report, evaluate_variant, fmt_mean_std, load_dataset,
                       rebuild_training_set, run_experiment, run_pretraining)
from .skeldata import DatasetError, read_dataset, synthesize_corpus, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("gaitrobust")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config_file(path: str) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a key/value mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


# -- subcommands -----------------------------------------------------------------------


def cmd_synth(a) -> int:
    ds = synthesize_corpus(a.subjects, a.windows, a.videos, seed=a.seed)
    write_dataset(ds, a.out)
    print(f"wrote {len(ds)} windows, {ds.num_classes} subjects -> {a.out}")
    return EXIT_OK


def _experiment_config(a, **extra) -> ExperimentConfig:
    kw = dict(data_path=a.data, fold_count=a.folds, seeds=[a.seed], preset=a.preset,
              out_dir=a.out, **extra)
    if getattr(a, "only_fold", None) is not None:
        kw["folds"] = a.only_fold
    return ExperimentConfig(**kw)


def cmd_pretrain(a) -> int:
    cfg = _experiment_config(a)
    runs = run_pretraining(cfg)
    manifest = {"config": cfg.to_dict(),
                "runs": [{"seed": r.seed, "fold": r.fold, "dir": f"seed{r.seed}/fold{r.fold}"}
                         for r in runs]}
    Path(a.out, "manifest.json").write_text(json.dumps(manifest, indent=1))
    print(f"pretrained {len(runs)} folds -> {a.out}")
    return EXIT_OK


def cmd_run(a) -> int:
    cfg = _experiment_config(a)
    report = run_experiment(cfg)
    emit_report(report, a.out, plot_data=True)
    _print_summary(report)
    return EXIT_OK


def _parse_grid(a) -> list[float]:
    if a.eps is not None and a.eps_grid is not None:
        raise UsageError("give either --eps or --eps-grid, not both")
    if a.eps is not None:
        return [a.eps]
    if a.eps_grid in (None, "default"):
        return list(EPSILON_GRID)
    try:
        return [float(x) for x in str(a.eps_grid).split(",")]
    except ValueError:
        raise UsageError(f"--eps-grid must be comma-separated numbers, got {a.eps_grid!r}") from None


def cmd_attack(a) -> int:
    root = Path(a.models)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except OSError as exc:
        raise DatasetError(f"{root} is not a pretraining directory: {exc}") from None
    method = Method(a.method)
    grid = _parse_grid(a)
    cfg_d = dict(manifest["config"], out_dir=None)
    cfg_d.update(sweep_methods=[method.value] if method != Method.GN else [],
                 default_methods=[method.value], epsilon_grid=grid)
    cfg = ExperimentConfig.from_dict(cfg_d)
    dataset = load_dataset(cfg)
    cells = []
    for entry in manifest["runs"]:
        d = root / entry["dir"]
        test = dataset.subset(np.array(json.loads((d / "split.json").read_text())["test"]))
        seed, fold = entry["seed"], entry["fold"]
        attack_seed = derive_seed(seed, fold, ATTACK_STREAM) if a.seed is None else a.seed
        for ckpt in sorted(d.glob("model*.skw")):
            cells += evaluate_variant(HcnModel.load(ckpt), test, cfg, seed=seed, fold=fold,
                                      variant=ckpt.stem, attack_seed=attack_seed)
    report = ExperimentReport(config=cfg.to_dict(), cells=cells)
    report.save(a.out)
    for agg in report.aggregates():
        eps = "-" if agg["epsilon"] is None else f"{agg['epsilon']:.3f}"
        print(f"{agg['variant']:<12} {agg['method']:<7} {agg['grid']:<8} eps={eps} "
              f"success={agg['mean_success']:.3f} ± {agg['std_success']:.3f}")
    return EXIT_OK


def cmd_atgan(a) -> int:
    target = HcnModel.load(a.target)
    gen = GeneratorModel.load(a.generator)
    cfg = AtganConfig(alpha=a.alpha, beta=a.beta, epochs=a.epochs, batch_size=a.batch_size,
                      learning_rate=a.lr, seed=a.seed)
    hist = AtganHistory()
    attack = train_attack_generator(target, gen, cfg, hist)
    attack.save(a.out, attack_generator_meta(cfg, gen))
    batch = generate_adversarial_samples(attack, cfg.batch_size, seed=a.seed)
    orig = gen.generate(batch.noise, batch.labels)
    acc_o = np.mean(target.predict(orig) == batch.labels)
    acc_a = np.mean(target.predict(batch.samples) == batch.labels)
    print(f"objective {hist.objective[0]:.5f} -> {hist.objective[-1]:.5f}; "
          f"target accuracy {acc_o:.3f} (original) vs {acc_a:.3f} (attack) -> {a.out}")
    return EXIT_OK


def _training_set_for(target_path: Path, meta: dict):
    """Rebuild the training split a pipeline checkpoint was fitted on."""
    try:
        cfg = ExperimentConfig.from_dict(dict(meta["experiment"], out_dir=None))
        seed, fold, variant = meta["seed"], meta["fold"], meta["variant"]
        train_cfg = TrainConfig(**meta["train_config"])
    except (KeyError, TypeError):
        raise DatasetError(f"{target_path} carries no training provenance") from None
    gen = None
    if variant.startswith("model2"):
        gen = GeneratorModel.load(target_path.parent / "gen_orig.skw")
    return rebuild_training_set(cfg, seed, fold, variant, gen_orig=gen), train_cfg


def cmd_inoculate(a) -> int:
    target_path = Path(a.target)
    target = HcnModel.load(target_path)
    meta = json.loads(Path(str(target_path) + ".json").read_text())
    train, train_cfg = _training_set_for(target_path, meta)
    attack = GeneratorModel.load(a.attack_gen)
    if attack.num_classes != target.num_classes:
        raise DatasetError("attack generator and target disagree on the class count")
    model = inoculate(train, attack, a.mix, train_cfg, seed=a.seed)
    model.save(a.out, {**meta, "variant": meta.get("variant", "model") + "_inoc",
                       "inoculation": {"attack_generator": str(a.attack_gen), "mix": a.mix,
                                       "seed": a.seed}})
    print(f"inoculated model ({len(train)} training windows, mix {a.mix}) -> {a.out}")
    return EXIT_OK


def cmd_score(a) -> int:
    scorer = HcnModel.load(a.scorer)
    path = Path(a.samples)
    head = path.read_bytes()[:4] if path.exists() else b""
    if head == b"SKW1":
        gen = GeneratorModel.load(path)
        samples = generate_adversarial_samples(gen, a.count, seed=a.seed).samples
        source = f"{a.count} samples from generator {path}"
    else:
        samples = read_dataset(path).samples
        source = f"dataset {path}"
    score = hcn_id_score(scorer, samples)
    result = {"score": score, "num_samples": int(len(samples)), "num_classes": scorer.num_classes,
              "source": source}
    if a.out:
        Path(a.out).write_text(json.dumps(result, indent=1) + "\n")
    print(f"HCN-ID score {score:.4f} over {source}")
    return EXIT_OK


def _print_summary(report: ExperimentReport) -> None:
    s = report.summary()
    print("clean accuracy:")
    for v, d in s["clean_accuracy"].items():
        print(f"  {v:<12} {fmt_mean_std(d)}")
    if s["inoculation"]:
        print("robustness gain from inoculation (sweep mean / default settings):")
        for v, ms in s["inoculation"].items():
            for m, g in ms.items():
                sweep = fmt_mean_std(g["sweep"], 4) if "sweep" in g else "n/a"
                default = fmt_mean_std(g["default"], 4) if "default" in g else "n/a"
                print(f"  {v:<7} {m:<7} {sweep:>18}   {default:>18}")
    if s["scores"]:
        print("HCN-ID scores:")
        for k, d in s["scores"].items():
            print(f"  {k:<20} {fmt_mean_std(d)}")


def cmd_report(a) -> int:
    report = ExperimentReport.load(a.input)
    out = Path(a.out) if a.out else Path(a.input).parent
    formats = a.format or ["csv", "json"]
    written = emit_report(report, out, formats=formats, plot_data=a.plot_data)
    for p in written:
        print(p)
    _print_summary(report)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaitrobust", description="Adversarial robustness workbench for "
                "skeleton-based gait identification.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="YAML file with flag values")
        sp.set_defaults(func=func)
        return sp

    sp = command("synth", cmd_synth, "generate a synthetic gait dataset")
    sp.add_argument("--subjects", type=int, default=9)
    sp.add_argument("--windows", type=int, default=200, help="windows per subject")
    sp.add_argument("--videos", type=int, default=4, help="videos per subject")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    for name, func, help_ in (("pretrain", cmd_pretrain, "train generators and Models 1/2 per fold"),
                              ("run", cmd_run, "full protocol: pretrain, attack, inoculate, report")):
        sp = command(name, func, help_)
        sp.add_argument("--data", help="SKL1 dataset (default: synthesize the standard corpus)")
        sp.add_argument("--folds", type=int, default=10)
        sp.add_argument("--only-fold", type=int, action="append",
                        help="restrict to these fold indices (repeatable)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="fast")
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--out", required=True)

    sp = command("attack", cmd_attack, "attack pretrained models on their held-out folds")
    sp.add_argument("--models", required=True, help="directory written by pretrain")
    sp.add_argument("--method", choices=[m.value for m in Method], default="FGSM")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-grid", help="comma-separated values, or 'default' for 0..0.19")
    sp.add_argument("--seed", type=int, help="attack seed (default: derived per fold)")
    sp.add_argument("--out", required=True, help="JSON report path")

    sp = command("atgan", cmd_atgan, "transfer-train an attack generator")
    sp.add_argument("--target", required=True)
    sp.add_argument("--generator", required=True)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--batch-size", type=int, default=900)
    sp.add_argument("--lr", type=float, default=0.0002)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = command("inoculate", cmd_inoculate, "retrain a model with attack-generator samples")
    sp.add_argument("--target", required=True, help="checkpoint written by pretrain")
    sp.add_argument("--attack-gen", required=True)
    sp.add_argument("--mix", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = command("score", cmd_score, "HCN-ID score of a dataset or generator")
    sp.add_argument("--scorer", required=True)
    sp.add_argument("--samples", required=True, help="SKL1 dataset or generator checkpoint")
    sp.add_argument("--count", type=int, default=900, help="samples drawn from a generator")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")

    sp = command("report", cmd_report, "render a JSON report to CSV/JSON and plots")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--format", choices=["csv", "json"], action="append")
    sp.add_argument("--plot-data", action="store_true")
    sp.add_argument("--out", help="output directory (default: next to the input)")
    return p


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file path")
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with values from ``--config`` as defaults, so explicit flags win."""
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices  # type: ignore[union-attr]
    command = next((tok for tok in argv if tok in choices), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    values = _load_config_file(path)
    sub = choices[command]
    aliases = {"in": "input"}
    values = {aliases.get(k, k): v for k, v in values.items()}
    unknown = set(values) - ({a.dest for a in sub._actions} - {"config", "help"})
    if unknown:
        raise UsageError(f"unknown keys in {path}: {sorted(unknown)}")
    for action in sub._actions:
        if action.dest in values:
            action.required = False
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s: %(message)s")
        with np.errstate(all="raise", under="ignore"):
            return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"gaitrobust: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"gaitrobust: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, CheckpointError, ReportError, OSError, json.JSONDecodeError) as exc:
        print(f"gaitrobust: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gaitrobust: invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
