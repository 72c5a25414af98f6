"""
Ablation harness.

Re-runs the whole pipeline (synthesize -> pretrain teacher -> warm-up -> main
-> evaluate) per seed and variant, and reports median AUC / AUC_A per row.
The teacher of a seed is shared by every variant of that seed; the
RGB-only baseline row is that teacher evaluated on its own.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from pivad.data.synth import synthesize_split
from pivad.entities.base_runner import PivadBaseRunner
from pivad.entities.entities import (
    EvalReport,
    ModalitySource,
    ObjectiveComponents,
    PivadConfig,
    RunnerStatus,
    SiteSelection,
)
from pivad.exceptions import ConfigError
from pivad.model.backbone import Backbone
from pivad.model.pivad import PiVadModel

from .metrics import evaluate
from .trainer import PivadTrainer

logger = logging.getLogger(__name__)

STUDIES = ("components", "sites", "modalities")
CUMULATIVE_ORDER = ("P", "D", "txt", "M", "O")
BASELINE = "rgb_only"


class AblationVariant(BaseModel):
    name: str
    components: ObjectiveComponents = Field(default_factory=ObjectiveComponents)
    modality_source: ModalitySource = ModalitySource.PSEUDO
    sites: SiteSelection = SiteSelection.BOTH
    modalities: Optional[List[str]] = None  # subset of the configured streams, all when None
    baseline: bool = False


class AblationRow(BaseModel):
    variant: str
    auc: List[float]
    auc_a: List[float]
    median_auc: float
    median_auc_a: float


class AblationReport(BaseModel):
    study: str
    seeds: List[int]
    rows: List[AblationRow]

    def row(self, variant: str) -> AblationRow:
        for row in self.rows:
            if row.variant == variant:
                return row
        raise KeyError(variant)

    def table(self) -> str:
        lines = [f"{'variant':<24}{'median AUC':>12}{'median AUC_A':>14}"]
        lines += [f"{row.variant:<24}{row.median_auc:>12.4f}{row.median_auc_a:>14.4f}" for row in self.rows]
        return "\n".join(lines)


def component_variants() -> List[AblationVariant]:
    return [
        AblationVariant(name=BASELINE, baseline=True),
        AblationVariant(name="pmg_only", components=ObjectiveComponents(pmg=True, align=False, distill=False)),
        AblationVariant(name="pmg_align", components=ObjectiveComponents(pmg=True, align=True, distill=False)),
        AblationVariant(name="pmg_distill", components=ObjectiveComponents(pmg=True, align=False, distill=True)),
        AblationVariant(
            name="align_distill_real",
            components=ObjectiveComponents(pmg=False, align=True, distill=True),
            modality_source=ModalitySource.REAL,
        ),
        AblationVariant(name="full"),
    ]


def site_variants() -> List[AblationVariant]:
    return [AblationVariant(name=f"site_{site.value}", sites=site) for site in SiteSelection]


def modality_variants(names: Sequence[str]) -> List[AblationVariant]:
    variants = [AblationVariant(name=BASELINE, baseline=True)]
    variants += [AblationVariant(name=f"only_{name}", modalities=[name]) for name in names]
    ordered = [name for name in CUMULATIVE_ORDER if name in names] + [n for n in names if n not in CUMULATIVE_ORDER]
    for size in range(2, len(ordered) + 1):
        subset = ordered[:size]
        variants.append(AblationVariant(name="+".join(subset), modalities=subset))
    return variants


def study_variants(study: str, config: PivadConfig) -> List[AblationVariant]:
    if study == "components":
        return component_variants()
    if study == "sites":
        return site_variants()
    if study == "modalities":
        return modality_variants(config.model.inductor.modality_names)
    raise ConfigError(f"unknown ablation study '{study}', expected one of {STUDIES}")


class AblationRunner(PivadBaseRunner):
    def __init__(self, config: PivadConfig, rid: Optional[str] = None):
        super().__init__(rid=rid or "ablation")
        for split in ("train", "test"):
            if split not in config.synth.splits:
                raise ConfigError(f"ablation needs a '{split}' split in synth.splits")
        self.config = config

    def _seeded(self, seed: int) -> PivadConfig:
        data = self.config.model_dump(mode="json")
        data["model"]["seed"] = seed
        data["train"]["seed"] = seed
        data["synth"]["seed"] = seed
        return PivadConfig.model_validate(data)

    def _variant_config(self, base: PivadConfig, variant: AblationVariant) -> PivadConfig:
        data = base.model_dump(mode="json")
        data["train"]["components"] = variant.components.model_dump()
        data["train"]["modality_source"] = variant.modality_source.value
        data["train"]["sites"] = variant.sites.value
        if variant.modalities is not None:
            specs = {spec["name"]: spec for spec in data["model"]["inductor"]["modalities"]}
            missing = [name for name in variant.modalities if name not in specs]
            if missing:
                raise ConfigError(f"variant '{variant.name}' uses unconfigured modalities {missing}")
            data["model"]["inductor"]["modalities"] = [specs[name] for name in variant.modalities]
        return PivadConfig.model_validate(data)

    def run_variant(self, variant: AblationVariant, base: PivadConfig, teacher: Backbone, train, test) -> EvalReport:
        if variant.baseline:
            return evaluate(teacher, test, base.train.frame_factor, base.train.eval_workers)
        config = self._variant_config(base, variant)
        if variant.modalities is not None:
            train = [video.select_modalities(variant.modalities) for video in train]
            test = [video.select_modalities(variant.modalities) for video in test]
        model = PiVadModel.build(config.model)
        model.load_teacher(teacher)
        trainer = PivadTrainer(config.train, rid=f"{self.rid}.{variant.name}")
        trainer.train(model, train)
        model.modality_source = config.train.modality_source
        model.sites = config.train.sites
        return evaluate(model, test, config.train.frame_factor, config.train.eval_workers)

    def run_study(
        self, variants: Sequence[AblationVariant], seeds: Sequence[int], study: str = "custom"
    ) -> AblationReport:
        """
        Run every variant for every seed.

        Returns:
            AblationReport: One row per variant, in the given order
        """
        self.set_status(RunnerStatus.WORKING, study=study)
        results: Dict[str, List[EvalReport]] = {variant.name: [] for variant in variants}
        for seed in seeds:
            base = self._seeded(seed)
            train = synthesize_split(base.synth, "train")
            test = synthesize_split(base.synth, "test")
            teacher = PivadTrainer(base.train, rid=f"{self.rid}.teacher").pretrain_teacher(train, base.model)
            for variant in variants:
                report = self.run_variant(variant, base, teacher, train, test)
                results[variant.name].append(report)
                self.emit("row_completed", {"study": study, "variant": variant.name, "seed": seed, "auc": report.auc})
                logger.info("%s / %s seed %d: AUC %.4f", study, variant.name, seed, report.auc)

        rows = [
            AblationRow(
                variant=name,
                auc=[r.auc for r in reports],
                auc_a=[r.auc_a for r in reports],
                median_auc=float(np.median([r.auc for r in reports])),
                median_auc_a=float(np.median([r.auc_a for r in reports])),
            )
            for name, reports in results.items()
        ]
        self.set_status(RunnerStatus.COMPLETED, study=study)
        return AblationReport(study=study, seeds=list(seeds), rows=rows)


def run_ablation(config: PivadConfig, study: str, seeds: Sequence[int]) -> AblationReport:
    runner = AblationRunner(config)
    return runner.run_study(study_variants(study, config), seeds, study)
