"""
Limite de threads de trabalho
"""
import os
from typing import Optional

THREADS_ENV = 'OBSTACLE_KIT_THREADS'


def max_workers(requested: Optional[int] = None) -> int:
    """Número de threads permitido (pedido, variável de ambiente ou CPUs)"""
    cap = os.cpu_count() or 1
    env_value = os.environ.get(THREADS_ENV)
    if env_value:
        try:
            cap = max(1, int(env_value))
        except ValueError:
            pass
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))
