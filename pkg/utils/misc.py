# coding=utf-8

import logging
import os
import platform
import random

import numpy as np
import torch


def set_seed(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def setup_logger(output_dir=None, log_name='run_log.txt'):
    logger = logging.getLogger()
    logger.setLevel(logging.INFO)
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
               for h in logger.handlers):
        logger.addHandler(logging.StreamHandler())
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        path = os.path.abspath(os.path.join(output_dir, log_name))
        if not any(isinstance(h, logging.FileHandler) and h.baseFilename == path for h in logger.handlers):
            fh = logging.FileHandler(path, mode="a", encoding="utf-8")
            logger.addHandler(fh)
    return logger


def cpu_model() -> str:
    try:
        with open('/proc/cpuinfo', mode='r', encoding='utf-8') as f_in:
            for line in f_in:
                if line.startswith('model name'):
                    return line.split(':', 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine() or 'unknown'


def machine_metadata() -> dict:
    return {
        'cpu_model': cpu_model(),
        'cpu_count': os.cpu_count(),
        'platform': platform.platform(),
        'python': platform.python_version(),
        'torch': torch.__version__,
        'numpy': np.__version__,
    }
