#!/usr/bin/env python3
"""
Скрипт для запуска Crowd Prompt.
"""

import sys
from pathlib import Path


def check_requirements():
    """Проверить установленные зависимости."""
    try:
        import numpy
        import scipy
        import pydantic
        import yaml
        import tqdm
        print("✅ Все зависимости установлены")
        return True
    except ImportError as e:
        print(f"❌ Отсутствует зависимость: {e}")
        print("Установите зависимости: pip install -r requirements.txt")
        return False


def check_config(config_file: str = "config.yaml"):
    """Проверить конфигурационный файл."""
    if not Path(config_file).exists():
        print(f"⚠️  Файл {config_file} не найден, будет использована конфигурация по умолчанию")
        return False

    print(f"✅ Файл {config_file} найден")
    return True


def main():
    """Главная функция."""
    if len(sys.argv) < 2:
        print("🚀 Crowd Prompt")
        print("=" * 50)
        print("Использование: python run.py <команда> [--config config.yaml] [--out каталог] ...")
        print("Команды: gen-synth, make-targets, pretrain-seg, train, ablate, noise-sweep,")
        print("         converge, eval, render, mask-study, hparam, iou")
        sys.exit(2)

    if not check_requirements():
        sys.exit(1)

    argv = sys.argv[1:]
    config_file = argv[argv.index("--config") + 1] if "--config" in argv[:-1] else "config.yaml"
    check_config(config_file)

    from crowd_prompt.main import main as cli_main
    sys.exit(cli_main(argv))


if __name__ == "__main__":
    main()
