"""
Problemas de obstáculo com uma e duas barreiras.

O passo contínuo é um problema de complementaridade nodal resolvido por conjunto
ativo primal-dual; nos instantes de salto (da barreira ou de átomos de μ) o
limite à esquerda é projetado sobre [ĥ1, ĥ2] e a diferença é registada como
átomo da medida de reação. A medida ν é guardada em unidades de massa.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..exceptions import ConfigError, SeparationFail, TerminalIncompatible
from ..utils.lcp import ACTIVE_SET_INITS, active_set_solve
from .barriers import AnyBarrier, Barrier, check_separation, precise_version
from .forms import DiscreteForm, Grid
from .measures import DiscreteLoad, MeasureData, discretize
from .pde import (ComparisonReport, FieldLike, PdeSolution, PenalizedReaction, Reaction,
                  ReflectedReaction, as_field, check_step_size, field_comparison,
                  solve_pde, solve_pde_with_load, step_residual)

logger = logging.getLogger(__name__)


@dataclass
class ReactionMeasure:
    """ν = ν⁺ - ν⁻: parte por passo (k = 0..n_t-1) e átomos por instante"""
    grid: Grid
    plus: np.ndarray
    minus: np.ndarray
    atoms_plus: Dict[int, np.ndarray] = field(default_factory=dict)
    atoms_minus: Dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, grid: Grid) -> 'ReactionMeasure':
        shape = (grid.n_t, grid.n_x)
        return cls(grid, np.zeros(shape), np.zeros(shape))

    @property
    def continuous(self) -> np.ndarray:
        return self.plus - self.minus

    @property
    def atom_indices(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.atoms_plus) | set(self.atoms_minus)))

    def atom(self, k: int) -> np.ndarray:
        zeros = np.zeros(self.grid.n_x)
        return self.atoms_plus.get(k, zeros) - self.atoms_minus.get(k, zeros)

    def total_variation(self) -> float:
        return float(self.plus.sum() + self.minus.sum()
                     + sum(v.sum() for v in self.atoms_plus.values())
                     + sum(v.sum() for v in self.atoms_minus.values()))

    def reflected(self) -> 'ReactionMeasure':
        return ReactionMeasure(self.grid, self.minus, self.plus,
                               dict(self.atoms_minus), dict(self.atoms_plus))

    def as_load(self) -> DiscreteLoad:
        """ν como carga (com zeros nas extremidades)"""
        load = DiscreteLoad(continuous=np.pad(self.continuous, ((0, 0), (1, 1))))
        for k in self.atom_indices:
            load.add_atom(k, np.pad(self.atom(k), 1))
        return load

    def to_frame(self) -> pd.DataFrame:
        """Entradas não nulas: kind (cont|atom), k, i, value"""
        frames = []
        cont = self.continuous
        k_idx, i_idx = np.nonzero(cont)
        frames.append(pd.DataFrame({'kind': 'cont', 'k': k_idx, 'i': i_idx + 1,
                                    'value': cont[k_idx, i_idx]}))
        for k in self.atom_indices:
            values = self.atom(k)
            nz = np.nonzero(values)[0]
            frames.append(pd.DataFrame({'kind': 'atom', 'k': k, 'i': nz + 1, 'value': values[nz]}))
        frame = pd.concat(frames, ignore_index=True)
        return frame.astype({'k': int, 'i': int})


@dataclass
class MinimalityResidual:
    precise_lower: float = 0.0
    precise_upper: float = 0.0
    naive_lower: float = 0.0
    naive_upper: float = 0.0

    @property
    def precise(self) -> float:
        return self.precise_lower + self.precise_upper

    @property
    def naive(self) -> float:
        return self.naive_lower + self.naive_upper

    def to_dict(self) -> Dict[str, float]:
        return {'precise_lower': self.precise_lower, 'precise_upper': self.precise_upper,
                'naive_lower': self.naive_lower, 'naive_upper': self.naive_upper}


@dataclass
class ObstacleSolution:
    solution: PdeSolution
    nu: ReactionMeasure
    lower: AnyBarrier
    upper: AnyBarrier
    residuals: Dict[str, float] = field(default_factory=dict)
    active_sets: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.solution.grid

    @property
    def u(self) -> np.ndarray:
        return self.solution.u

    @property
    def u_left(self) -> np.ndarray:
        return self.solution.u_left

    def at(self, t: float, x: float) -> float:
        return self.solution.at(t, x)

    def report(self) -> Dict:
        return {'residuals': dict(self.residuals),
                'nu_total_variation': self.nu.total_variation(),
                'nu_atom_indices': list(self.nu.atom_indices),
                'lcp_methods': dict(self.solution.methods)}


def _bounds(barrier: Optional[AnyBarrier], grid: Grid, side: str) -> Tuple[np.ndarray, np.ndarray, AnyBarrier]:
    if barrier is None:
        barrier = Barrier.none(side)
    return barrier.values(grid), barrier.left_values(grid), barrier


def _sweep(phi: np.ndarray, reaction: Reaction, load: DiscreteLoad,
           lower: Optional[AnyBarrier], upper: Optional[AnyBarrier],
           form: DiscreteForm, grid: Grid, step_tol: float, active_set_init: str,
           compat_tol: float) -> ObstacleSolution:
    """Varredura retrógrada comum às variantes de uma e duas barreiras"""
    if active_set_init not in ACTIVE_SET_INITS:
        raise ConfigError('unknown active set initialisation', active_set_init=active_set_init)
    check_step_size(reaction, grid)
    lo, lo_left, lower = _bounds(lower, grid, 'lower')
    up, up_left, upper = _bounds(upper, grid, 'upper')

    if np.any(lo_left[-1] > phi + compat_tol) or np.any(phi > up_left[-1] + compat_tol):
        raise TerminalIncompatible('terminal data violates the precise barrier at T',
                                   worst_lower=float(np.max(lo_left[-1] - phi)),
                                   worst_upper=float(np.max(phi - up_left[-1])))

    mass = form.interior_mass
    x = grid.nodes
    jumps = set(lower.jump_indices(grid)) | set(upper.jump_indices(grid)) | set(load.atoms)
    u = np.zeros((grid.n_t + 1, grid.n_x))
    u[-1] = phi
    u_left = u.copy()
    nu = ReactionMeasure.zeros(grid)
    iterations = np.zeros(grid.n_t, dtype=int)
    residuals = np.zeros(grid.n_t)
    methods: Dict[str, int] = {}
    active_sets: List[Tuple[np.ndarray, np.ndarray]] = [None] * grid.n_t
    previous = None

    for k in range(grid.n_t - 1, -1, -1):
        nxt = u[k + 1]
        if k + 1 in jumps:
            atom = load.atom(k + 1)
            pre = nxt if atom is None else nxt + atom[1:-1] / mass
            nxt = np.minimum(np.maximum(pre, lo_left[k + 1]), up_left[k + 1])
            lift = mass * np.maximum(lo_left[k + 1] - pre, 0.0)
            drop = mass * np.maximum(pre - up_left[k + 1], 0.0)
            if np.any(lift > 0.0):
                nu.atoms_plus[k + 1] = lift
            if np.any(drop > 0.0):
                nu.atoms_minus[k + 1] = drop
            u_left[k + 1] = nxt

        t = float(grid.times[k])
        rhs = mass * nxt + load.continuous[k, 1:-1]
        residual, jacobian = step_residual(form.step_matrices[k], mass, grid.dt, reaction, t, x, rhs)
        result = active_set_solve(residual, jacobian, lo[k], up[k], nxt,
                                  init=active_set_init, previous=previous, tol=step_tol)
        u[k] = result.u
        u_left[k] = result.u
        nu.plus[k] = np.maximum(result.multiplier, 0.0)
        nu.minus[k] = np.maximum(-result.multiplier, 0.0)
        iterations[k] = result.switches
        residuals[k] = result.residual
        methods[result.method] = methods.get(result.method, 0) + 1
        previous = (result.active_lower, result.active_upper)
        active_sets[k] = previous

    solution = PdeSolution(grid, u, u_left, iterations, residuals, tuple(sorted(jumps)), methods)
    out = ObstacleSolution(solution, nu, lower, upper, active_sets=active_sets)
    out.residuals = _residuals(out)
    return out


def _residuals(sol: ObstacleSolution) -> Dict[str, float]:
    grid = sol.grid
    lo, lo_left = sol.lower.values(grid), sol.lower.left_values(grid)
    up, up_left = sol.upper.values(grid), sol.upper.left_values(grid)
    with np.errstate(invalid='ignore'):
        comp_low = np.where(np.isfinite(lo[:-1]),
                            np.abs(np.minimum(sol.nu.plus, sol.u[:-1] - lo[:-1])), 0.0)
        comp_up = np.where(np.isfinite(up[:-1]),
                           np.abs(np.minimum(sol.nu.minus, up[:-1] - sol.u[:-1])), 0.0)
        feasibility = max(float(np.max(lo - sol.u)), float(np.max(sol.u - up)),
                          float(np.max(lo_left - sol.u_left)), float(np.max(sol.u_left - up_left)),
                          0.0)
    minimality = minimality_residual(sol)
    jordan = float(np.max(np.minimum(sol.nu.plus, sol.nu.minus)))
    return {
        'complementarity': float(max(np.max(comp_low), np.max(comp_up))),
        'feasibility': feasibility,
        'minimality_precise': minimality.precise,
        'minimality_naive': minimality.naive,
        'jordan_overlap': jordan,
        'nu_total_variation': sol.nu.total_variation(),
        'max_step_residual': float(np.max(sol.solution.residuals)),
    }


def solve_one_barrier(phi: FieldLike, f: Reaction, mu: MeasureData, h: AnyBarrier,
                      form: DiscreteForm, grid: Grid, step_tol: float = 1e-10,
                      active_set_init: str = 'previous', compat_tol: float = 1e-12) -> ObstacleSolution:
    """Problema de obstáculo inferior com medida de reação mínima"""
    phi = as_field(phi, grid)
    load = discretize(mu, grid)
    sol = _sweep(phi, f, load, h, None, form, grid, step_tol, active_set_init, compat_tol)
    logger.info(f"Obstáculo (uma barreira): ‖ν‖₁={sol.nu.total_variation():.6g}, "
                f"complementaridade={sol.residuals['complementarity']:.2e}")
    return sol


def solve_upper_barrier(phi: FieldLike, f: Reaction, mu: MeasureData, h: Barrier,
                        form: DiscreteForm, grid: Grid, step_tol: float = 1e-10,
                        active_set_init: str = 'previous', compat_tol: float = 1e-12) -> ObstacleSolution:
    """Barreira superior por reflexão y ↦ -y"""
    phi = as_field(phi, grid)
    reflected = solve_one_barrier(-phi, ReflectedReaction(f), mu.scaled(-1.0), h.reflected(),
                                  form, grid, step_tol, active_set_init, compat_tol)
    inner = reflected.solution
    solution = PdeSolution(grid, -inner.u, -inner.u_left, inner.newton_iterations,
                           inner.residuals, inner.atom_indices, inner.methods)
    active_sets = [(up, low) for low, up in reflected.active_sets]
    sol = ObstacleSolution(solution, reflected.nu.reflected(), Barrier.none('lower'), h,
                           active_sets=active_sets)
    sol.residuals = _residuals(sol)
    return sol


def solve_two_barrier(phi: FieldLike, f: Reaction, mu: MeasureData, h1: Barrier, h2: Barrier,
                      form: DiscreteForm, grid: Grid, step_tol: float = 1e-10,
                      active_set_init: str = 'previous', check: bool = True,
                      compat_tol: float = 1e-12) -> ObstacleSolution:
    """Problema com duas barreiras (complementaridade com caixa)"""
    if check:
        certificate = check_separation(h1, h2, form, grid)
        if not certificate:
            raise SeparationFail('barriers are not separated', witness=certificate.witness,
                                 violation=certificate.violation)
    phi = as_field(phi, grid)
    load = discretize(mu, grid)
    sol = _sweep(phi, f, load, h1, h2, form, grid, step_tol, active_set_init, compat_tol)
    logger.info(f"Obstáculo (duas barreiras): ‖ν‖₁={sol.nu.total_variation():.6g}, "
                f"sobreposição de Jordan={sol.residuals['jordan_overlap']:.2e}")
    return sol


def minimality_residual(sol: ObstacleSolution, h1: Optional[AnyBarrier] = None,
                        h2: Optional[AnyBarrier] = None) -> MinimalityResidual:
    """⟨û - ĥ1, ν⁺⟩ e ⟨ĥ2 - û, ν⁻⟩ com versões precisas nos átomos, e a variante ingénua"""
    grid = sol.grid
    h1 = sol.lower if h1 is None else h1
    h2 = sol.upper if h2 is None else h2
    out = MinimalityResidual()
    for side, barrier, cont, atoms in (('lower', h1, sol.nu.plus, sol.nu.atoms_plus),
                                       ('upper', h2, sol.nu.minus, sol.nu.atoms_minus)):
        if barrier.is_sentinel:
            continue
        sign = 1.0 if side == 'lower' else -1.0
        right = barrier.values(grid)
        left = precise_version(barrier).values(grid)
        gap = sign * (sol.u[:-1] - right[:-1])
        continuous = float(np.sum(np.where(cont > 0.0, gap * cont, 0.0)))
        precise = naive = continuous
        for k, mass in atoms.items():
            precise += float(np.sum(np.where(mass > 0.0, sign * (sol.u_left[k] - left[k]) * mass, 0.0)))
            naive += float(np.sum(np.where(mass > 0.0, sign * (sol.u[k] - right[k]) * mass, 0.0)))
        if side == 'lower':
            out.precise_lower, out.naive_lower = precise, naive
        else:
            out.precise_upper, out.naive_upper = precise, naive
    return out


def solve_penalized(phi: FieldLike, f: Reaction, mu: MeasureData, h: AnyBarrier, n: float,
                    form: DiscreteForm, grid: Grid, step_tol: float = 1e-10) -> PdeSolution:
    """PDE(φ, f + n(y - h)⁻ + μ); a penalização usa o valor à direita h(t_k)"""
    phi = as_field(phi, grid)
    if not h.is_sentinel and np.any(precise_version(h).values(grid)[-1] > phi + 1e-12):
        raise TerminalIncompatible('terminal data violates the precise barrier at T')
    lower = None if h.is_sentinel else h.values(grid)
    return solve_pde(phi, PenalizedReaction(f, grid, n, lower=lower), mu, form, grid, step_tol)


def solve_two_barrier_penalized(phi: FieldLike, f: Reaction, mu: MeasureData, h1: Barrier,
                                h2: Barrier, n: float, form: DiscreteForm, grid: Grid,
                                step_tol: float = 1e-10) -> ObstacleSolution:
    """Barreira superior h2 exata e inferior h1 penalizada; λ_n = sol.nu.minus"""
    lower = None if h1.is_sentinel else h1.values(grid)
    reaction = PenalizedReaction(f, grid, n, lower=lower) if n > 0 and lower is not None else f
    return solve_upper_barrier(phi, reaction, mu, h2, form, grid, step_tol)


def equation_residual(sol: ObstacleSolution, phi: FieldLike, f: Reaction, mu: MeasureData,
                      form: DiscreteForm, grid: Grid, step_tol: float = 1e-10) -> float:
    """Reinserir ν como carga no solver livre e medir a distância a u"""
    load = discretize(mu, grid) + sol.nu.as_load()
    replay = solve_pde_with_load(phi, f, load, form, grid, step_tol)
    return float(max(np.max(np.abs(replay.u - sol.u)), np.max(np.abs(replay.u_left - sol.u_left))))


def comparison_obstacle(sol1: ObstacleSolution, sol2: ObstacleSolution, tol: float = 1e-8,
                        same_barrier: bool = False) -> ComparisonReport:
    """u1 ≤ u2 + tol; com a mesma barreira também dν1 ≥ dν2 - tol"""
    holds, worst, location = field_comparison(
        sol1.grid, [sol1.u, sol1.u_left], [sol2.u, sol2.u_left], tol)
    measure_holds, worst_measure = None, 0.0
    if same_barrier:
        worst_measure = float(np.max(sol2.nu.plus - sol1.nu.plus))
        for k in set(sol1.nu.atoms_plus) | set(sol2.nu.atoms_plus):
            zeros = np.zeros(sol1.grid.n_x)
            gap = sol2.nu.atoms_plus.get(k, zeros) - sol1.nu.atoms_plus.get(k, zeros)
            worst_measure = max(worst_measure, float(np.max(gap)))
        measure_holds = worst_measure <= tol
    return ComparisonReport(holds, worst, location, measure_holds, max(worst_measure, 0.0))
