"""
Configuração de logging do obstacle_kit
"""
import logging
import os
from typing import Optional, Union

import colorlog

LOGGER_NAME = 'obstacle_kit'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: Union[int, str] = logging.INFO,
                  log_file: Optional[str] = None) -> logging.Logger:
    """Configurar logger raiz do pacote (idempotente)"""
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)

    if not any(getattr(h, '_obstacle_kit_console', False) for h in logger.handlers):
        console = colorlog.StreamHandler()
        console.setFormatter(colorlog.ColoredFormatter(
            '%(log_color)s' + LOG_FORMAT,
            log_colors={
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'red,bg_white',
            },
        ))
        console._obstacle_kit_console = True
        logger.addHandler(console)

    if log_file:
        path = os.path.abspath(log_file)
        known = [h for h in logger.handlers
                 if isinstance(h, logging.FileHandler) and h.baseFilename == path]
        if not known:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            file_handler = logging.FileHandler(path)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(file_handler)

    logger.propagate = False
    return logger
