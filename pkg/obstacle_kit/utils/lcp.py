"""
Problemas de complementaridade nodais com caixa [lower, upper]:

    G(u) = λ,  lower ≤ u ≤ upper,
    λ ≥ 0 onde u = lower, λ ≤ 0 onde u = upper, λ = 0 no interior.

Conjunto ativo primal-dual (Newton semi-suave) com recurso a SOR projetado.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numba import njit

from ..exceptions import LcpStall
from .newton import damped_newton

logger = logging.getLogger(__name__)

ACTIVE_SET_INITS = ('previous', 'empty', 'full')


@dataclass
class LcpResult:
    u: np.ndarray
    multiplier: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    switches: int
    residual: float
    method: str = 'active-set'


def initial_active_sets(init: str, lower: np.ndarray, upper: np.ndarray,
                        previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
                        ) -> Tuple[np.ndarray, np.ndarray]:
    if init == 'previous' and previous is not None:
        act_low, act_up = previous
        return act_low & np.isfinite(lower), act_up & np.isfinite(upper) & ~act_low
    if init == 'full':
        act_low = np.isfinite(lower)
        return act_low, np.isfinite(upper) & ~act_low
    return np.zeros(lower.shape, dtype=bool), np.zeros(upper.shape, dtype=bool)


def _solve_with_active(residual, jacobian, act_low, act_up, lower, upper, guess, tol,
                       max_newton):
    """Newton no sistema modificado (linhas identidade nos nós ativos)"""
    active = act_low | act_up
    bound = np.where(act_low, lower, np.where(act_up, upper, 0.0))
    start = np.where(active, bound, guess)
    if np.all(active):
        return start, 0.0
    keep = (~active).astype(float)

    def reduced_residual(u):
        return np.where(active, u - bound, residual(u))

    def reduced_jacobian(u):
        jac = sp.diags(keep) @ jacobian(u) + sp.diags(active.astype(float))
        return jac.tocsr()

    result = damped_newton(reduced_residual, reduced_jacobian, start, tol, max_iter=max_newton)
    return result.u, result.residual


def active_set_solve(residual: Callable[[np.ndarray], np.ndarray],
                     jacobian: Callable[[np.ndarray], sp.spmatrix],
                     lower: np.ndarray, upper: np.ndarray, guess: np.ndarray,
                     init: str = 'previous',
                     previous: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     tol: float = 1e-10, max_switches: int = 100,
                     max_newton: int = 50) -> LcpResult:
    """Conjunto ativo primal-dual; empates (u = barreira, λ = 0) ficam inativos"""
    act_low, act_up = initial_active_sets(init, lower, upper, previous)
    scale = None
    u = np.clip(guess, lower, upper)

    for switches in range(1, max_switches + 1):
        u, res = _solve_with_active(residual, jacobian, act_low, act_up, lower, upper, u, tol,
                                    max_newton)
        multiplier = residual(u)
        multiplier[~(act_low | act_up)] = 0.0
        if scale is None:
            scale = jacobian(u).diagonal()
        with np.errstate(invalid='ignore'):
            new_low = multiplier + scale * (lower - u) > 0.0
            new_up = (multiplier + scale * (upper - u) < 0.0) & ~new_low
        if np.array_equal(new_low, act_low) and np.array_equal(new_up, act_up):
            return LcpResult(u, multiplier, act_low, act_up, switches, res)
        act_low, act_up = new_low, new_up

    logger.warning(f"Conjunto ativo sem estabilizar após {max_switches} trocas; a usar SOR projetado")
    return psor_solve(residual, jacobian, lower, upper, u, tol)


def complementarity_residual(g: np.ndarray, u: np.ndarray, lower: np.ndarray,
                             upper: np.ndarray) -> float:
    """max de |min(G⁺, u - lower)| e |min(G⁻, upper - u)|; nulo sse (u, G) é complementar na caixa"""
    if not u.size:
        return 0.0
    low_gap = np.minimum(np.maximum(g, 0.0), u - lower)
    up_gap = np.minimum(np.maximum(-g, 0.0), upper - u)
    return float(max(np.max(np.abs(low_gap)), np.max(np.abs(up_gap))))


@njit(cache=True)
def _psor_sweeps(sub, diag, sup, rhs, lower, upper, x, omega, tol, max_sweeps):
    n = x.shape[0]
    for sweep in range(max_sweeps):
        err = 0.0
        for i in range(n):
            s = rhs[i]
            if i > 0:
                s -= sub[i - 1] * x[i - 1]
            if i < n - 1:
                s -= sup[i] * x[i + 1]
            new = x[i] + omega * (s / diag[i] - x[i])
            if new < lower[i]:
                new = lower[i]
            if new > upper[i]:
                new = upper[i]
            change = abs(new - x[i])
            if change > err:
                err = change
            x[i] = new
        if err <= tol:
            return sweep + 1
    return -1


def psor_solve(residual, jacobian, lower, upper, guess, tol: float = 1e-10,
               omega: float = 1.2, max_outer: int = 50, max_sweeps: int = 200000) -> LcpResult:
    """SOR projetado sobre a linearização tridiagonal de G"""
    u = np.clip(np.array(guess, dtype=float), lower, upper)
    for outer in range(1, max_outer + 1):
        jac = sp.csr_matrix(jacobian(u))
        rhs = jac @ u - residual(u)
        x = u.copy()
        sweeps = _psor_sweeps(jac.diagonal(-1).copy(), jac.diagonal().copy(),
                              jac.diagonal(1).copy(), rhs, lower, upper, x, omega,
                              0.01 * tol, max_sweeps)
        if sweeps < 0:
            break
        change = float(np.max(np.abs(x - u))) if x.size else 0.0
        u = x
        if change <= tol:
            g = residual(u)
            res = complementarity_residual(g, u, lower, upper)
            multiplier = g.copy()
            inside = (u > lower) & (u < upper)
            multiplier[inside] = 0.0
            act_low = (u <= lower) & (multiplier > 0.0)
            act_up = (u >= upper) & (multiplier < 0.0)
            return LcpResult(u, multiplier, act_low, act_up, outer, res, 'psor')
    raise LcpStall('complementarity step did not converge (active set and projected SOR)',
                   outer_iterations=outer)
