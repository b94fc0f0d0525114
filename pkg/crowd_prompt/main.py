"""
Главный файл Crowd Prompt.
"""

import logging
import os
import sys
from typing import Optional, Sequence

from crowd_prompt.cli.commands import load_config_manager, parse_args, run_command
from crowd_prompt.core.config import ConfigManager
from crowd_prompt.modules.errors import CrowdPromptError


def setup_logging(config: ConfigManager) -> None:
    """Настроить логирование."""
    logging_config = config.get_logging_config()

    handlers = [logging.StreamHandler()]
    log_file = logging_config.get("file")
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.insert(0, logging.FileHandler(log_file, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, str(logging_config.get("level", "INFO")).upper(), logging.INFO),
        format=logging_config.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        handlers=handlers
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Точка входа командной строки.

    Args:
        argv: Аргументы (по умолчанию sys.argv[1:])

    Returns:
        int: Код завершения (0 при успехе, иначе код категории ошибки)
    """
    args = parse_args(argv)
    logger = logging.getLogger(__name__)
    try:
        config_manager = load_config_manager(args)
        config_manager.ensure_directories()
        setup_logging(config_manager)
        run_command(args, config_manager)
        return 0
    except CrowdPromptError as e:
        logger.debug("Команда %s завершилась с ошибкой", args.command, exc_info=True)
        print(f"❌ [{e.category.value}] {e.message}")
        return e.exit_code
    except KeyboardInterrupt:
        print("\n👋 Прервано")
        return 130
    except Exception as e:
        logger.exception("Непредвиденная ошибка в команде %s", args.command)
        print(f"❌ [internal] {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
