"""
Pivad command line.

Usage: ``pivad <subcommand> [--config FILE] [--out DIR] [overrides...]``

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from pivad.data.dataset import VideoRecord, load_dataset
from pivad.data.synth import MANIFEST_NAME, generate_dataset
from pivad.entities.entities import ForwardMode, ModalitySource, PivadConfig, SiteSelection, StageFlag
from pivad.exceptions import PivadError, TrainingError
from pivad.model.pivad import PiVadModel, param_count
from pivad.training.ablation import STUDIES, run_ablation
from pivad.training.checkpoint import load_checkpoint, load_teacher, save_checkpoint, save_teacher
from pivad.training.grad_suite import run_grad_suite
from pivad.training.metrics import evaluate
from pivad.training.trainer import PivadTrainer, TrainingLogWriter
from pivad.utils.config_utils import load_config, write_effective_config
from pivad.utils.utils import ensure_dir, format_float, setup_logging, write_lines

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

TEACHER_FILE = "teacher.pvck"
MODEL_FILE = "model.pvck"
TRAINING_LOG = "training_log.tsv"
TEACHER_LOG = "teacher_log.tsv"
EVAL_REPORT = "eval_report.json"
SCORE_HEADER = "PVL-SCORES"

# flag dest -> dotted config keys it overrides
OVERRIDES: Dict[str, Sequence[str]] = {
    "seed": ("model.seed", "train.seed", "synth.seed"),
    "lambda1": ("train.loss_weights.lambda1",),
    "lambda2": ("train.loss_weights.lambda2",),
    "tau": ("train.loss_weights.tau",),
    "epochs_pretrain": ("train.epochs.pretrain",),
    "epochs_warmup": ("train.epochs.warmup",),
    "epochs_main": ("train.epochs.main",),
    "modality_source": ("train.modality_source",),
    "site": ("train.sites",),
    "log_level": ("log_level",),
}


class PivadArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with 1 on usage errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    common = PivadArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, help="seed for data, initialisation and batching")
    common.add_argument("--log-level", help="logging level (default from config, INFO)")
    common.add_argument("--lambda1", type=float, help="alignment weight of the main stage")
    common.add_argument("--lambda2", type=float, help="distillation weight of the main stage")
    common.add_argument("--tau", type=float, help="InfoNCE temperature")
    common.add_argument("--epochs-pretrain", type=int)
    common.add_argument("--epochs-warmup", type=int)
    common.add_argument("--epochs-main", type=int)
    common.add_argument("--modality-source", choices=[s.value for s in ModalitySource])
    common.add_argument("--site", choices=[s.value for s in SiteSelection])
    return common


def _data_options(parser: argparse.ArgumentParser, split: str) -> None:
    parser.add_argument("--data", type=Path, required=True, help="dataset root holding <split>/manifest.tsv")
    parser.add_argument("--split", default=split)


def build_parser() -> PivadArgumentParser:
    common = _common_options()
    parser = PivadArgumentParser(prog="pivad", description="Poly-modal induced video anomaly detection")
    commands = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")

    commands.add_parser("gen-data", parents=[common], help="generate the synthetic benchmark")

    pretrain = commands.add_parser("pretrain-teacher", parents=[common], help="pretrain the RGB teacher")
    _data_options(pretrain, "train")

    train = commands.add_parser("train", parents=[common], help="warm-up then main stage")
    _data_options(train, "train")
    train.add_argument("--teacher", type=Path, help=f"teacher checkpoint (default OUT/{TEACHER_FILE})")
    train.add_argument("--skip-warmup", action="store_true")
    train.add_argument("--allow-unwarmed", action="store_true")

    for name, help_text in (
        ("eval", "write the evaluation report"),
        ("infer", "write per-video score files"),
        ("export-activations", "write per-site modality activation tables"),
    ):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        _data_options(sub, "test")
        sub.add_argument("--checkpoint", type=Path, help=f"model checkpoint (default OUT/{MODEL_FILE})")
        sub.add_argument("--workers", type=int, default=None)
        if name == "eval":
            sub.add_argument("--teacher-only", action="store_true", help="score with the frozen teacher (RGB only)")

    grad = commands.add_parser("grad-check", parents=[common], help="finite-difference gradient suite")
    grad.add_argument("--seeds", type=int, default=10)

    summary = commands.add_parser("summary", parents=[common], help="parameter count table")
    summary.add_argument("--checkpoint", type=Path)

    ablate = commands.add_parser("ablate", parents=[common], help="run an ablation study")
    ablate.add_argument("--study", choices=STUDIES, required=True)
    ablate.add_argument("--seeds", type=int, default=5)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for dest, keys in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            for key in keys:
                values[key] = value
    return values


# *** subcommands ***
def _load_split(
    args: argparse.Namespace, config: PivadConfig, modalities: Sequence[str], required: bool
) -> List[VideoRecord]:
    return load_dataset(
        args.data / args.split / MANIFEST_NAME,
        require_modalities=required,
        modalities=modalities,
        rgb_dim=config.model.backbone.input_dim,
        modality_dims=config.model.inductor.modality_dims,
    )


def _load_model(args: argparse.Namespace, config: PivadConfig) -> PiVadModel:
    path = args.checkpoint or args.out / MODEL_FILE
    model, _ = load_checkpoint(path, config.model if args.config is not None else None)
    model.modality_source = config.train.modality_source
    model.sites = config.train.sites
    return model


def _inference_records(args: argparse.Namespace, config: PivadConfig, model: PiVadModel) -> List[VideoRecord]:
    real = model.modality_source is ModalitySource.REAL
    return _load_split(args, config, model.modality_names if real else [], required=real)


def cmd_gen_data(args: argparse.Namespace, config: PivadConfig) -> int:
    manifests = generate_dataset(config.synth, args.out)
    for split, manifest in manifests.items():
        print(f"{split}\t{manifest}")
    return EXIT_OK


def cmd_pretrain_teacher(args: argparse.Namespace, config: PivadConfig) -> int:
    records = _load_split(args, config, [], required=False)
    trainer = PivadTrainer(config.train, rid="pretrain")
    log = TrainingLogWriter(ensure_dir(args.out) / TEACHER_LOG)
    trainer.on("step_completed", log)
    try:
        backbone = trainer.pretrain_teacher(records, config.model)
    finally:
        log.close()
    save_teacher(backbone, args.out / TEACHER_FILE, trainer.optimizer.state if trainer.optimizer else None)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: PivadConfig) -> int:
    teacher_path = args.teacher or args.out / TEACHER_FILE
    if not teacher_path.is_file():
        raise TrainingError(f"teacher checkpoint not found: {teacher_path}; run pretrain-teacher first")
    records = _load_split(args, config, config.model.inductor.modality_names, required=True)
    model = PiVadModel.build(config.model)
    model.load_teacher(load_teacher(teacher_path, config.model.backbone))

    trainer = PivadTrainer(config.train, rid="train")
    log = TrainingLogWriter(ensure_dir(args.out) / TRAINING_LOG)
    trainer.on("step_completed", log)
    try:
        if not args.skip_warmup:
            trainer.warmup_stage(model, records)
        trainer.main_stage(model, records, allow_unwarmed=args.allow_unwarmed)
    finally:
        log.close()
    save_checkpoint(model, args.out / MODEL_FILE, trainer.optimizer.state if trainer.optimizer else None)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: PivadConfig) -> int:
    model = _load_model(args, config)
    if args.teacher_only:
        scorer, records = model.teacher, _load_split(args, config, [], required=False)
    else:
        scorer, records = model, _inference_records(args, config, model)
    workers = args.workers or config.train.eval_workers
    report = evaluate(scorer, records, config.train.frame_factor, workers)
    target = ensure_dir(args.out) / EVAL_REPORT
    target.write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"AUC {report.auc:.4f}\tAUC_A {report.auc_a:.4f}\tAP {report.ap:.4f}\tAP_A {report.ap_a:.4f}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace, config: PivadConfig) -> int:
    model = _load_model(args, config)
    score_dir = ensure_dir(args.out / "scores")
    for video in _inference_records(args, config, model):
        scores = model.score_video(video)
        write_lines(
            score_dir / f"{video.video_id}.txt",
            (repr(float(value)) for value in scores),
            header=f"{SCORE_HEADER}\t{video.video_id}\t{scores.shape[0]}",
        )
    logger.info("scores written to %s", score_dir)
    return EXIT_OK


def cmd_export_activations(args: argparse.Namespace, config: PivadConfig) -> int:
    model = _load_model(args, config)
    if model.stage is not StageFlag.TRAINED:
        logger.warning("exporting activations of a model that finished stage '%s', not 'trained'", model.stage.value)
    target = ensure_dir(args.out / "activations")
    header = "\t".join(model.modality_names)
    for video in _inference_records(args, config, model):
        trace = model.forward(video, ForwardMode.INFER, model.modality_source, model.sites)
        for site, site_trace in trace.sites.items():
            write_lines(
                target / f"{video.video_id}.{site}.tsv",
                ("\t".join(format_float(v) for v in row) for row in site_trace.activations),
                header=header,
            )
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace, config: PivadConfig) -> int:
    report = run_grad_suite(seeds=range(config.train.seed, config.train.seed + args.seeds))
    target = ensure_dir(args.out) / "grad_check.json"
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    failed = set(report.failures)
    for name, item in report.reports.items():
        print(f"{'FAIL' if name in failed else 'ok  '}\t{name}\t{item.worst:.3e}")
    if not report.passed:
        logger.error("gradient suite failed: %s", ", ".join(report.failures))
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_summary(args: argparse.Namespace, config: PivadConfig) -> int:
    if args.checkpoint is not None:
        model, _ = load_checkpoint(args.checkpoint, config.model if args.config is not None else None)
    else:
        model = PiVadModel.build(config.model)
    counts = param_count(model)
    rows = list(counts.components.items())
    rows += [
        ("rgb_only_backbone", counts.components["student_backbone"]),
        ("deploy (student + PI)", counts.inference_total),
        ("total", counts.total),
    ]
    width = max(len(name) for name, _ in rows)
    print(f"{'component':<{width}}  {'params':>10}")
    for name, value in rows:
        print(f"{name:<{width}}  {value:>10d}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, config: PivadConfig) -> int:
    seeds = list(range(config.train.seed, config.train.seed + args.seeds))
    report = run_ablation(config, args.study, seeds)
    target = ensure_dir(args.out) / f"ablation_{args.study}.json"
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    print(report.table())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, PivadConfig], int]] = {
    "gen-data": cmd_gen_data,
    "pretrain-teacher": cmd_pretrain_teacher,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "export-activations": cmd_export_activations,
    "grad-check": cmd_grad_check,
    "summary": cmd_summary,
    "ablate": cmd_ablate,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_OK

    setup_logging(args.log_level or "INFO")
    try:
        config = load_config(args.config, _overrides(args))
        setup_logging(config.log_level)
        write_effective_config(config, args.out)
        return COMMANDS[args.command](args, config)
    except (PivadError, OSError) as exc:
        logger.error("%s: %s", args.command, exc)
        return EXIT_RUNTIME
    except ValueError as exc:
        logger.error("%s: invalid value: %s", args.command, exc)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run(sys.argv[1:]))
