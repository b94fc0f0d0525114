"""
Менеджер экспериментов: наборы данных, манифесты и выполнение команд.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from crowd_prompt.cli.formats import (
    read_annotation_file, read_image_archive, render_overlay, write_annotations,
    write_density_pfm, write_image_archive, write_mask_pgm
)
from crowd_prompt.core.bench import (
    gen_dataset, mask_iou, prepare_pseudo_masks, run_ablation, run_convergence_study,
    run_hparam_study, run_iou_study, run_mask_source_study, run_noise_sweep, eval_counts
)
from crowd_prompt.core.config import RunConfig
from crowd_prompt.core.dataset import Dataset, Scene
from crowd_prompt.core.trainer import emit_pseudo_masks, predict_scenes, pretrain_segmenter, train
from crowd_prompt.modules.cache import ContextMaskCache
from crowd_prompt.modules.constants import (
    DEFAULT_NOISE_ALPHAS, MANIFEST_FILE, METRICS_FILE, SERVICE_INFO, PseudoSource
)
from crowd_prompt.modules.errors import FormatError
from crowd_prompt.modules.factory import VariantFactory
from crowd_prompt.modules.prompt import TargetStore, context_cache_key, context_mask, offline_prompt
from crowd_prompt.modules.statistics import MetricsLog, write_table
from crowd_prompt.modules.targets import box_seg_map, density_from_points, point_pseudo_mask
from crowd_prompt.network.model import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

ANNOTATIONS_FILE = "annotations.json"
IMAGES_FILE = "images.npz"
TABLE_COLUMNS = ["alpha", "variant", "mae", "rmse"]


def file_sha256(path: Path) -> str:
    """SHA-256 содержимого файла."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ExperimentManager:
    """Менеджер для выполнения команд над одной проверенной конфигурацией."""

    def __init__(self, config: RunConfig, config_path: Optional[str] = None,
                 data_dir: Optional[str] = None):
        """
        Инициализация менеджера экспериментов.

        Args:
            config: Проверенная конфигурация запуска
            config_path: Файл конфигурации (входной артефакт манифеста)
            data_dir: Каталог набора, записанного gen-synth
        """
        self.config = config
        self.config_path = Path(config_path) if config_path and Path(config_path).exists() else None
        self.data_dir = Path(data_dir) if data_dir else None
        self.out_dir = Path(config.output_dir)
        self.train_config = config.to_train_config()
        self.cache = ContextMaskCache(config.cache.model_dump())
        self._inputs: List[Path] = []
        self._dataset: Optional[Dataset] = None

    # Набор данных

    def load_dataset(self) -> Dataset:
        """
        Прочитать набор из --data или сгенерировать его заново из (config, seed).

        Returns:
            Dataset: Набор сцен
        """
        if self._dataset is not None:
            return self._dataset
        if self.data_dir is None:
            exp = self.config.experiments
            self._dataset = gen_dataset(self.config.scene_spec(), exp.n_train, exp.n_test)
            return self._dataset

        annotations_path = self.data_dir / ANNOTATIONS_FILE
        images_path = self.data_dir / IMAGES_FILE
        annotations, splits = read_annotation_file(annotations_path)
        images = read_image_archive(images_path)
        self._inputs += [annotations_path, images_path]

        train_scenes, test_scenes = [], []
        for ann in annotations:
            if ann.scene_id not in images:
                raise FormatError.from_template(
                    "FORMAT_INVALID", path=images_path, details=f"нет изображения сцены '{ann.scene_id}'"
                )
            image = images[ann.scene_id]
            if image.shape[1:] != ann.shape:
                raise FormatError.from_template(
                    "FORMAT_INVALID", path=images_path,
                    details=f"размер изображения '{ann.scene_id}' {image.shape} не совпадает с {ann.shape}"
                )
            split = splits.get(ann.scene_id, "train")
            scene = Scene(image=image, annotation=ann, split=split)
            (train_scenes if split == "train" else test_scenes).append(scene)
        self._dataset = Dataset(train=train_scenes, test=test_scenes)
        logger.info("Набор прочитан из %s: %d/%d сцен", self.data_dir, len(train_scenes), len(test_scenes))
        return self._dataset

    def save_dataset(self, dataset: Dataset, out_dir: Path) -> List[Path]:
        """Записать аннотации и изображения набора."""
        splits = {s.scene_id: s.split for s in dataset.scenes}
        return [
            write_annotations(out_dir / ANNOTATIONS_FILE, [s.annotation for s in dataset.scenes], splits),
            write_image_archive(out_dir / IMAGES_FILE, dataset.images())
        ]

    def make_store(self) -> TargetStore:
        """Хранилище целевых масок с кэшем контекстных масок из конфигурации."""
        self.cache.load_cache()
        return TargetStore(self.cache)

    # Манифест

    def write_manifest(self, command: str, outputs: Sequence[Path],
                       overrides: Optional[Dict[str, Any]] = None) -> Path:
        """
        Записать манифест: команда, входы и выходы с SHA-256, хэш конфигурации, seed.

        Args:
            command: Имя команды
            outputs: Выходные файлы
            overrides: Переопределения из командной строки

        Returns:
            Path: Путь к манифесту
        """
        inputs = ([self.config_path] if self.config_path else []) + self._inputs

        def describe(path: Path, base: Optional[Path] = None) -> Dict[str, str]:
            name = path.relative_to(base).as_posix() if base else path.as_posix()
            return {"path": name, "sha256": file_sha256(path)}

        manifest = {
            "command": command,
            "overrides": overrides or {},
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "version": SERVICE_INFO["version"],
            "inputs": [describe(p) for p in inputs],
            "outputs": sorted((describe(p, self.out_dir) for p in outputs), key=lambda d: d["path"])
        }
        path = self.out_dir / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
        return path

    # Команды

    def gen_synth(self) -> List[Path]:
        """Сгенерировать синтетический набор и записать его."""
        dataset = self.load_dataset()
        return self.save_dataset(dataset, self.out_dir)

    def make_targets(self) -> List[Path]:
        """Записать цели сцен обучения: плотность, карты боксов, псевдомаски по точкам, m_K и offline маску."""
        dataset = self.load_dataset()
        cfg = self.train_config
        self.cache.load_cache()
        outputs = []
        target_dir = self.out_dir / "targets"
        for scene in dataset.train:
            ann = scene.annotation
            density = density_from_points(ann, cfg.kernel)
            point_mask = point_pseudo_mask(ann, cfg.kernel, cfg.dilation_radius)
            outputs.append(write_density_pfm(density, target_dir / f"{scene.scene_id}_density.pfm"))
            outputs.append(write_mask_pgm(point_mask, target_dir / f"{scene.scene_id}_points.pgm"))
            outputs.append(write_mask_pgm(
                self.cache.get_or_compute(
                    context_cache_key(ann, cfg.prompt.K), lambda: context_mask(ann, cfg.prompt.K)
                ),
                target_dir / f"{scene.scene_id}_context.pgm"
            ))
            if ann.boxes is not None:
                outputs.append(write_mask_pgm(box_seg_map(ann), target_dir / f"{scene.scene_id}_boxes.pgm"))
            outputs.append(write_mask_pgm(
                offline_prompt(point_mask, density), target_dir / f"{scene.scene_id}_offline.pgm"
            ))
        self.cache.save_cache()
        return outputs

    def pretrain_seg(self) -> List[Path]:
        """Предобучить сегментатор и записать контрольную точку и псевдомаски."""
        dataset = self.load_dataset()
        cfg = self.train_config
        source = cfg.pseudo_source
        outputs = []
        if source == PseudoSource.EMPTY:
            masks = emit_pseudo_masks(None, dataset.train, cfg.tau_mask, empty=True)
        else:
            state = pretrain_segmenter(dataset, cfg, source)
            checkpoint = self.out_dir / "segmenter.ckpt"
            save_checkpoint(state, checkpoint)
            outputs.append(checkpoint)
            masks = emit_pseudo_masks(state, dataset.train, cfg.tau_mask)
        for scene_id, mask in sorted(masks.items()):
            outputs.append(write_mask_pgm(mask, self.out_dir / "pseudo" / f"{scene_id}.pgm"))
        return outputs

    def train(self) -> List[Path]:
        """Обучить вариант из конфигурации и записать модель, журнал и целевые маски."""
        dataset = self.load_dataset()
        cfg = self.train_config
        variant = VariantFactory.create_variant(self.config.variant)
        pseudo_masks = prepare_pseudo_masks(dataset, cfg) if variant.use_segmenter else None

        metrics_path = self.out_dir / METRICS_FILE
        store = self.make_store()
        state, _ = train(variant, dataset, pseudo_masks, cfg, MetricsLog(metrics_path), store)
        self.cache.save_cache()

        checkpoint = self.out_dir / "model.ckpt"
        save_checkpoint(state, checkpoint)
        outputs = [metrics_path, checkpoint]
        for scene_id, mask in store.items():
            outputs.append(write_mask_pgm(mask, self.out_dir / "targets" / f"{scene_id}.pgm"))
        return outputs

    def ablate(self) -> List[Path]:
        """Таблица абляции по всем вариантам из конфигурации."""
        rows = run_ablation(self.load_dataset(), self.train_config, self.config.experiments.ablation_variants)
        return [write_table(rows, TABLE_COLUMNS, self.out_dir / "ablation.tsv")]

    def noise_sweep(self, alphas: Optional[Sequence[float]] = None) -> List[Path]:
        """Таблица MAE по (alpha, вариант)."""
        exp = self.config.experiments
        alphas = list(alphas) if alphas is not None else exp.alphas or list(DEFAULT_NOISE_ALPHAS)
        rows = run_noise_sweep(self.load_dataset(), alphas, exp.noise_variants, self.train_config)
        return [write_table(rows, TABLE_COLUMNS, self.out_dir / "noise_sweep.tsv")]

    def converge(self) -> List[Path]:
        """Кривые MAE/RMSE по эпохам для разных λc."""
        curves = run_convergence_study(
            self.load_dataset(), self.train_config, self.config.experiments.convergence_lambdas
        )
        rows = [
            {"lambda_c": lam, "epoch": r.epoch, "test_mae": r.test_mae, "test_rmse": r.test_rmse}
            for lam, records in curves.items() for r in records
        ]
        return [write_table(rows, ["lambda_c", "epoch", "test_mae", "test_rmse"],
                            self.out_dir / "convergence.tsv")]

    def _checkpoint_path(self, checkpoint: Optional[str]) -> Path:
        path = Path(checkpoint) if checkpoint else self.out_dir / "model.ckpt"
        self._inputs.append(path)
        return path

    def evaluate(self, checkpoint: Optional[str] = None) -> List[Path]:
        """
        Оценить контрольную точку на отложенных сценах.

        Записывает eval.json: MAE, RMSE, счетчики по сценам, IoU предсказанных
        масок и записи эпох обучения (если рядом есть журнал).
        """
        path = self._checkpoint_path(checkpoint)
        state = load_checkpoint(path)
        dataset = self.load_dataset()
        scenes = dataset.test or dataset.train
        y_hats, m_hats = predict_scenes(state, scenes)
        result = eval_counts(y_hats, [s.annotation for s in scenes])

        ious = [
            mask_iou(m > self.train_config.tau_mask, box_seg_map(s.annotation))
            for s, m in zip(scenes, m_hats) if s.annotation.boxes is not None
        ]
        metrics_path = path.parent / METRICS_FILE
        records = MetricsLog.read(metrics_path) if metrics_path.exists() else []

        report = {
            "mae": result.mae,
            "rmse": result.rmse,
            "counts": [
                {"scene": s.scene_id, "predicted": p, "true": t}
                for s, (p, t) in zip(scenes, result.counts)
            ],
            "mask_iou": float(np.mean(ious)) if ious else None,
            "metrics": [r.model_dump() for r in records]
        }
        out = self.out_dir / "eval.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [out]

    def render(self, checkpoint: Optional[str] = None, limit: int = 8) -> List[Path]:
        """
        Растры сцен теста: плотность (PFM), маска (PGM) и наложение (PPM).

        С контрольной точкой выводятся предсказания, без нее - цели.
        """
        dataset = self.load_dataset()
        scenes = (dataset.test or dataset.train)[:limit]
        cfg = self.train_config
        if checkpoint:
            state = load_checkpoint(self._checkpoint_path(checkpoint))
            y_hats, m_hats = predict_scenes(state, scenes)
            masks = [m > cfg.tau_mask for m in m_hats]
        else:
            y_hats = [density_from_points(s.annotation, cfg.kernel) for s in scenes]
            masks = [offline_prompt(np.zeros(s.annotation.shape, dtype=bool), y) for s, y in zip(scenes, y_hats)]

        outputs = []
        render_dir = self.out_dir / "render"
        for scene, y_hat, mask in zip(scenes, y_hats, masks):
            outputs.append(write_density_pfm(y_hat, render_dir / f"{scene.scene_id}_density.pfm"))
            outputs.append(write_mask_pgm(mask, render_dir / f"{scene.scene_id}_mask.pgm"))
            outputs.append(render_overlay(scene.image, y_hat, mask, render_dir / f"{scene.scene_id}_overlay.ppm"))
        return outputs

    def mask_study(self) -> List[Path]:
        """Сравнение источников псевдомасок."""
        rows = run_mask_source_study(self.load_dataset(), self.train_config)
        return [write_table(rows, ["source", "variant", "mae", "rmse"], self.out_dir / "mask_sources.tsv")]

    def hparam(self) -> List[Path]:
        """Переборы K, κ и весов потерь, по таблице на перебор."""
        exp = self.config.experiments
        tables = run_hparam_study(
            self.load_dataset(), self.train_config, exp.k_values, exp.kappa_values, exp.weight_grid
        )
        return [
            write_table(rows, ["parameter", "value", "mae", "rmse"], self.out_dir / f"hparam_{name}.tsv")
            for name, rows in tables.items()
        ]

    def iou(self) -> List[Path]:
        """IoU псевдомасок, целевых и предсказанных масок против карт боксов."""
        rows = run_iou_study(self.load_dataset(), self.train_config, self.config.experiments.iou_variants)
        return [write_table(rows, ["variant", "masks", "split", "iou"], self.out_dir / "iou.tsv")]
