"""
Newton amortecido para sistemas monótonos esparsos
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..exceptions import NewtonDivergence

logger = logging.getLogger(__name__)

DAMPING_LADDER = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)


@dataclass
class NewtonResult:
    u: np.ndarray
    iterations: int
    residual: float
    method: str = 'newton'


def _norm(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if values.size else 0.0


def _direction(jacobian: sp.spmatrix, r: np.ndarray) -> np.ndarray:
    step = spsolve(sp.csc_matrix(jacobian), -r)
    return np.atleast_1d(step)


def damped_newton(residual: Callable[[np.ndarray], np.ndarray],
                  jacobian: Callable[[np.ndarray], sp.spmatrix],
                  u0: np.ndarray,
                  tol: float,
                  max_iter: int = 50,
                  fixed_point: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  max_fixed_point: int = 500) -> NewtonResult:
    """Resolver residual(u) = 0

    Passos de Newton completos, depois escada de amortecimento 1..1/64 a partir do
    melhor iterado e, por fim, ponto fixo relaxado por bissecção.
    """
    u = np.array(u0, dtype=float)
    r = residual(u)
    norm = _norm(r)
    best_u, best_norm = u.copy(), norm
    iterations = 0

    while norm > tol and iterations < max_iter:
        u = u + _direction(jacobian(u), r)
        r = residual(u)
        norm = _norm(r)
        iterations += 1
        if not np.isfinite(norm):
            break
        if norm < best_norm:
            best_u, best_norm = u.copy(), norm
    if np.isfinite(norm) and norm <= tol:
        return NewtonResult(u, iterations, norm)

    logger.warning(f"Newton sem convergência após {iterations} passos (resíduo {best_norm:.3e}); "
                   "a usar amortecimento")
    u, norm = best_u, best_norm
    r = residual(u)
    for _ in range(max_iter):
        if norm <= tol:
            return NewtonResult(u, iterations, norm, 'damped-newton')
        step = _direction(jacobian(u), r)
        accepted = False
        for damping in DAMPING_LADDER:
            trial = u + damping * step
            trial_r = residual(trial)
            trial_norm = _norm(trial_r)
            if trial_norm <= (1.0 - 1e-4 * damping) * norm:
                u, r, norm = trial, trial_r, trial_norm
                accepted = True
                break
        iterations += 1
        if not accepted:
            break
    if norm <= tol:
        return NewtonResult(u, iterations, norm, 'damped-newton')

    if fixed_point is not None:
        omega = 1.0
        for _ in range(max_fixed_point):
            trial = u + omega * (fixed_point(u) - u)
            trial_norm = _norm(residual(trial))
            iterations += 1
            if trial_norm < norm:
                u, norm = trial, trial_norm
                if norm <= tol:
                    return NewtonResult(u, iterations, norm, 'fixed-point')
            else:
                omega *= 0.5
                if omega < 1e-8:
                    break

    raise NewtonDivergence('nonlinear step did not converge after damping ladder',
                           residual=float(norm), iterations=iterations)
