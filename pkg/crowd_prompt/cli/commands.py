"""
Команды командной строки Crowd Prompt.
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import yaml

from crowd_prompt.core.config import ConfigManager
from crowd_prompt.core.manager import ExperimentManager
from crowd_prompt.modules.constants import SERVICE_INFO
from crowd_prompt.modules.errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS: Dict[str, Callable[[ExperimentManager, argparse.Namespace], List[Path]]] = {
    "gen-synth": lambda m, a: m.gen_synth(),
    "make-targets": lambda m, a: m.make_targets(),
    "pretrain-seg": lambda m, a: m.pretrain_seg(),
    "train": lambda m, a: m.train(),
    "ablate": lambda m, a: m.ablate(),
    "noise-sweep": lambda m, a: m.noise_sweep(),
    "converge": lambda m, a: m.converge(),
    "eval": lambda m, a: m.evaluate(a.checkpoint),
    "render": lambda m, a: m.render(a.checkpoint, a.limit),
    "mask-study": lambda m, a: m.mask_study(),
    "hparam": lambda m, a: m.hparam(),
    "iou": lambda m, a: m.iou()
}

COMMAND_HELP = {
    "gen-synth": "Сгенерировать синтетический набор сцен",
    "make-targets": "Записать плотности, карты боксов, псевдомаски и контекстные маски",
    "pretrain-seg": "Предобучить сегментатор и выдать псевдомаски",
    "train": "Обучить вариант и записать контрольную точку и журнал метрик",
    "ablate": "Таблица абляции по всем вариантам",
    "noise-sweep": "MAE при шуме боксов",
    "converge": "Кривые сходимости для разных λc",
    "eval": "Оценить контрольную точку на сценах теста",
    "render": "Растры плотности, масок и наложений",
    "mask-study": "Сравнение источников псевдомасок",
    "hparam": "Перебор K, κ и весов потерь",
    "iou": "IoU масок против карт боксов"
}


def parse_alpha_list(value: str) -> List[float]:
    """Разобрать список alpha через запятую."""
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError.from_template("CONFIG_INVALID", details=f"--alpha-list: {e}")


def parse_override(item: str) -> tuple:
    """Разобрать переопределение вида 'train.epochs=5' (значение - YAML)."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError.from_template("CONFIG_INVALID", details=f"--set ожидает key=value, получено '{item}'")
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError.from_template("CONFIG_INVALID", details=f"--set {key}: {e}")


def build_parser() -> argparse.ArgumentParser:
    """Создать разборщик аргументов со всеми подкомандами."""
    parser = argparse.ArgumentParser(prog="crowd_prompt", description=SERVICE_INFO["description"])
    parser.add_argument("--version", action="version", version=f"%(prog)s {SERVICE_INFO['version']}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in COMMAND_HELP.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", default="config.yaml", help="Файл конфигурации (YAML или JSON)")
        sub.add_argument("--out", help="Каталог результатов (output_dir)")
        sub.add_argument("--data", help="Каталог набора, записанного gen-synth")
        sub.add_argument("--seed", type=int, help="Зерно запуска")
        sub.add_argument("--variant", help="Вариант метода (reg, rsg, p_dag, p_ddag, c_dag, dag, ddag)")
        sub.add_argument("--epochs", type=int, help="Число эпох обучения")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="Переопределить поле конфигурации (точечная нотация)")
        if name == "noise-sweep":
            sub.add_argument("--alpha-list", help="Уровни шума через запятую, например 0,0.25,0.5")
        if name in ("eval", "render"):
            sub.add_argument("--checkpoint", help="Контрольная точка (по умолчанию <out>/model.ckpt)")
        if name == "render":
            sub.add_argument("--limit", type=int, default=8, help="Сколько сцен выводить")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """
    Переопределения конфигурации из флагов командной строки.

    Returns:
        Dict[str, Any]: Значения по ключам в точечной нотации
    """
    overrides: Dict[str, Any] = dict(parse_override(item) for item in args.overrides)
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.epochs is not None:
        overrides["train.epochs"] = args.epochs
    if getattr(args, "alpha_list", None):
        overrides["experiments.alphas"] = parse_alpha_list(args.alpha_list)
    return overrides


def load_config_manager(args: argparse.Namespace) -> ConfigManager:
    """Загрузить конфигурацию и применить переопределения."""
    config_manager = ConfigManager(args.config)
    for key, value in collect_overrides(args).items():
        config_manager.update_config(key, value)
    return config_manager


def run_command(args: argparse.Namespace, config_manager: ConfigManager) -> Path:
    """
    Выполнить команду и записать манифест.

    Args:
        args: Разобранные аргументы
        config_manager: Менеджер конфигурации с примененными переопределениями

    Returns:
        Path: Путь к манифесту
    """
    run_config = config_manager.run_config()
    manager = ExperimentManager(run_config, config_path=args.config, data_dir=args.data)

    logger.info("Команда %s, вариант %s, seed %d", args.command, run_config.variant, run_config.seed)
    print(f"🚀 {args.command}: результаты в {manager.out_dir}/")
    outputs = COMMANDS[args.command](manager, args)
    manifest = manager.write_manifest(args.command, outputs, collect_overrides(args))

    print(f"✅ Записано файлов: {len(outputs)}")
    print(f"📄 Манифест: {manifest}")
    return manifest


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
