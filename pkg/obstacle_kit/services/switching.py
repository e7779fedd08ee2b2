"""
Sistema de N modos com barreiras dependentes da solução (comutação ótima).

H^j(t, x, u) = max_{i ∈ A_j} (u^i - c_{j,i}(t, x)) na forma de custos, ou
max_i h_{j,i}(t, x, u^i) com acoplamento geral; o máximo vazio é -inf.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..exceptions import (BoundsInverted, ConfigError, NoConvergence, RegimeViolation,
                          TerminalIncompatible)
from ..utils.workers import max_workers
from .barriers import Barrier
from .forms import DiscreteForm, Grid
from .measures import MeasureData, discretize
from .obstacle import ObstacleSolution, ReactionMeasure, minimality_residual, solve_one_barrier
from .pde import FieldLike, PdeSolution, Reaction, as_field, implicit_step, solve_pde

logger = logging.getLogger(__name__)

CostFn = Callable[[float, np.ndarray], np.ndarray]
CouplingFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SwitchingMode:
    phi: FieldLike
    reaction: Reaction
    mu: MeasureData = MeasureData()
    adjacency: Tuple[int, ...] = ()
    coupled: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = ''


@dataclass(frozen=True)
class SwitchingProblem:
    """Modos, custos de comutação c_{j,i} ≥ c₀ > 0 e acoplamento opcional"""
    modes: Tuple[SwitchingMode, ...]
    costs: Dict[Tuple[int, int], CostFn] = field(default_factory=dict)
    cost_floor: float = 0.0
    coupling: Optional[Dict[Tuple[int, int], CouplingFn]] = None
    user_bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def is_cost_form(self) -> bool:
        return self.coupling is None

    @property
    def y_independent(self) -> bool:
        return all(m.coupled is None and not m.reaction.depends_on_y for m in self.modes)

    def cost(self, j: int, i: int, t: float, x: np.ndarray) -> np.ndarray:
        return np.array(np.broadcast_to(np.asarray(self.costs[(j, i)](t, x), dtype=float),
                                        np.shape(x)))

    def validate(self, grid: Grid) -> None:
        """Índices de adjacência, custos acima do piso e monotonia fora da diagonal"""
        for j, mode in enumerate(self.modes):
            for i in mode.adjacency:
                if i == j or not 0 <= i < self.N:
                    raise ConfigError('invalid adjacency entry', mode=j, target=i)
                if self.is_cost_form and (j, i) not in self.costs:
                    raise ConfigError('missing switching cost', source=j, target=i)
        if self.is_cost_form:
            if self.cost_floor <= 0.0:
                raise ConfigError('cost floor must be positive', cost_floor=self.cost_floor)
            for (j, i) in self.costs:
                for t in grid.times:
                    values = self.cost(j, i, float(t), grid.nodes)
                    if np.min(values) < self.cost_floor:
                        raise ConfigError('switching cost below the declared floor',
                                          source=j, target=i, t=float(t),
                                          value=float(np.min(values)))
        self._check_off_diagonal(grid)

    def _check_off_diagonal(self, grid: Grid, n_samples: int = 16, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        for j, mode in enumerate(self.modes):
            if mode.coupled is None:
                continue
            for t in grid.times[:: max(1, grid.n_t // 4)]:
                for _ in range(n_samples):
                    y = rng.uniform(-1.0, 1.0, (self.N, grid.n_x))
                    bump = np.abs(rng.uniform(0.0, 1.0, (self.N, grid.n_x)))
                    bump[j] = 0.0
                    if np.any(mode.coupled(float(t), grid.nodes, y + bump)
                              < mode.coupled(float(t), grid.nodes, y) - 1e-12):
                        raise ConfigError('reaction is not off-diagonal nondecreasing', mode=j)

    def barrier(self, j: int, U: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
        """H^j(t, x, U) para U com forma (N, len(x))"""
        candidates = self.candidates(j, U, t, x)
        if not candidates:
            return np.full(np.shape(x), -np.inf)
        return np.max(np.vstack([values for _, values in candidates]), axis=0)

    def candidates(self, j: int, U: np.ndarray, t: float, x: np.ndarray) -> List[Tuple[int, np.ndarray]]:
        out = []
        for i in sorted(self.modes[j].adjacency):
            if self.coupling is not None:
                values = np.asarray(self.coupling[(j, i)](t, x, U[i]), dtype=float)
            else:
                values = U[i] - self.cost(j, i, t, x)
            out.append((i, values))
        return out


@dataclass
class ModeFields:
    u: np.ndarray
    u_left: np.ndarray

    @classmethod
    def from_solutions(cls, solutions: Sequence[PdeSolution]) -> 'ModeFields':
        return cls(np.stack([s.u for s in solutions]), np.stack([s.u_left for s in solutions]))


@dataclass
class SwitchingSolution:
    grid: Grid
    u: np.ndarray
    u_left: np.ndarray
    nu: Tuple[ReactionMeasure, ...] = ()
    bounds: Optional[Tuple[ModeFields, ModeFields]] = None
    iterations: List[Dict] = field(default_factory=list)
    residuals: Dict[str, float] = field(default_factory=dict)
    method: str = 'picard'

    def at(self, j: int, t: float, x: float) -> float:
        k = self.grid.index_of(t)
        return float(np.interp(x, self.grid.all_nodes, np.pad(self.u[j, k], 1)))

    def barrier_fields(self, problem: SwitchingProblem) -> np.ndarray:
        out = np.empty_like(self.u)
        for k, t in enumerate(self.grid.times):
            for j in range(problem.N):
                out[j, k] = problem.barrier(j, self.u[:, k], float(t), self.grid.nodes)
        return out

    def stopping_regions(self, problem: SwitchingProblem, eps_switch: Optional[float] = None) -> np.ndarray:
        """Máscara {u^j ≤ H^j(·, u) + eps} por modo"""
        eps = default_eps_switch(self.u) if eps_switch is None else eps_switch
        return self.u <= self.barrier_fields(problem) + eps


def default_eps_switch(u: np.ndarray) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(u))))


def _mode_barrier(problem: SwitchingProblem, j: int, U: ModeFields, grid: Grid) -> Barrier:
    right = np.empty((grid.n_t + 1, grid.n_x))
    left = np.empty_like(right)
    for k, t in enumerate(grid.times):
        right[k] = problem.barrier(j, U.u[:, k], float(t), grid.nodes)
        left[k] = problem.barrier(j, U.u_left[:, k], float(t), grid.nodes)
    return Barrier.from_grid(grid, right, left, name=f'H{j}')


class FrozenModeReaction(Reaction):
    """f^j(t, x, Y) com as outras componentes congeladas num campo anterior"""

    def __init__(self, mode: SwitchingMode, j: int, U: np.ndarray, grid: Grid):
        super().__init__(mode.coupled, monotonicity=mode.reaction.monotonicity,
                         depends_on_y=True, name=f'frozen-mode-{j}')
        self.j = j
        self.U = U
        self.grid = grid

    def value(self, t, x, y):
        Y = self.U[:, self.grid.index_of(t)].copy()
        Y[self.j] = y
        return np.asarray(self.f(t, x, Y), dtype=float)


def _mode_reaction(problem: SwitchingProblem, j: int, U: ModeFields, grid: Grid) -> Reaction:
    mode = problem.modes[j]
    if mode.coupled is None:
        return mode.reaction
    return FrozenModeReaction(mode, j, U.u, grid)


def _max_reaction(problem: SwitchingProblem) -> Reaction:
    def source(t, x):
        y = np.zeros_like(x)
        return np.max(np.vstack([m.reaction.value(t, x, y) for m in problem.modes]), axis=0)
    return Reaction.from_source(source, name='max-reaction')


def _check_bounds(problem: SwitchingProblem, under: ModeFields, over: ModeFields, grid: Grid,
                  tol: float) -> None:
    for name, low, up in (('u', under.u, over.u), ('u_left', under.u_left, over.u_left)):
        gap = float(np.max(low - up))
        if gap > tol:
            raise BoundsInverted('subsolution exceeds supersolution', field=name, gap=gap)
    for j in range(problem.N):
        for k, t in enumerate(grid.times):
            for values in (over.u, over.u_left):
                h = problem.barrier(j, values[:, k], float(t), grid.nodes)
                gap = float(np.max(h - values[j, k]))
                if gap > tol:
                    raise BoundsInverted('barrier of the supersolution exceeds it',
                                         mode=j, t=float(t), gap=gap)


def build_bounds(problem: SwitchingProblem, form: DiscreteForm, grid: Grid,
                 step_tol: float = 1e-10, tol: float = 1e-9) -> Tuple[ModeFields, ModeFields]:
    """Sub e supersolução (u_under, u_over) que enquadram a solução mínima"""
    if problem.user_bounds is not None:
        low, up = (np.asarray(b, dtype=float) for b in problem.user_bounds)
        under, over = ModeFields(low, low.copy()), ModeFields(up, up.copy())
        _check_bounds(problem, under, over, grid, tol)
        return under, over
    if not (problem.is_cost_form and problem.y_independent):
        raise ConfigError('general coupling requires user-supplied bounds')

    under = ModeFields.from_solutions([
        solve_pde(m.phi, m.reaction, m.mu, form, grid, step_tol) for m in problem.modes])
    phi_max = np.max(np.vstack([as_field(m.phi, grid) for m in problem.modes]), axis=0)
    mu_total = MeasureData.zero()
    for mode in problem.modes:
        mu_total = mu_total + mode.mu.positive_part()
    v = solve_pde(phi_max, _max_reaction(problem), mu_total, form, grid, step_tol)
    over = ModeFields(np.repeat(v.u[None], problem.N, axis=0),
                      np.repeat(v.u_left[None], problem.N, axis=0))
    _check_bounds(problem, under, over, grid, tol)
    return under, over


def _check_terminal(problem: SwitchingProblem, U: ModeFields, grid: Grid) -> None:
    for j, mode in enumerate(problem.modes):
        h = problem.barrier(j, U.u_left[:, -1], grid.T, grid.nodes)
        phi = as_field(mode.phi, grid)
        if np.any(h > phi + 1e-12):
            raise TerminalIncompatible('terminal data of a mode lies below its switching barrier',
                                       mode=j, gap=float(np.max(h - phi)))


def solve_switching_picard(problem: SwitchingProblem, form: DiscreteForm, grid: Grid,
                           tol: float = 1e-9, max_iters: int = 200, step_tol: float = 1e-10,
                           workers: Optional[int] = None,
                           active_set_init: str = 'previous') -> SwitchingSolution:
    """Iteração de Picard sobre problemas de uma barreira com H^j(·, u_anterior)"""
    problem.validate(grid)
    under, over = build_bounds(problem, form, grid, step_tol)
    _check_terminal(problem, under, grid)
    parallel = problem.y_independent and max_workers(workers) > 1 and problem.N > 1
    current = under
    log: List[Dict] = []
    solutions: List[ObstacleSolution] = []

    for iteration in range(1, max_iters + 1):
        barriers = [_mode_barrier(problem, j, current, grid) for j in range(problem.N)]

        def solve_mode(j: int) -> ObstacleSolution:
            mode = problem.modes[j]
            return solve_one_barrier(mode.phi, _mode_reaction(problem, j, current, grid), mode.mu,
                                     barriers[j], form, grid, step_tol, active_set_init)

        if parallel:
            with ThreadPoolExecutor(max_workers=max_workers(workers)) as executor:
                solutions = list(executor.map(solve_mode, range(problem.N)))
        else:
            solutions = [solve_mode(j) for j in range(problem.N)]

        new = ModeFields.from_solutions([s.solution for s in solutions])
        change = float(max(np.max(np.abs(new.u - current.u)),
                           np.max(np.abs(new.u_left - current.u_left))))
        decrease = float(max(np.max(current.u - new.u), 0.0))
        log.append({'iteration': iteration, 'change': change, 'monotone_violation': decrease})
        logger.debug(f"Picard {iteration}: variação={change:.3e}")
        current = new
        if change <= tol:
            break
    else:
        raise NoConvergence('Picard iteration did not converge', max_iters=max_iters,
                            last_change=log[-1]['change'])

    residuals = _switching_residuals(problem, current, solutions, grid)
    residuals['fixed_point_change'] = log[-1]['change']
    logger.info(f"Comutação (Picard): {len(log)} iterações, "
                f"u^0(0, meio)={current.u[0, 0, grid.n_x // 2]:.8g}")
    return SwitchingSolution(grid, current.u, current.u_left,
                             tuple(s.nu for s in solutions), (under, over), log, residuals)


def _switching_residuals(problem: SwitchingProblem, fields: ModeFields,
                         solutions: Sequence[ObstacleSolution], grid: Grid) -> Dict[str, float]:
    minimality, feasibility = 0.0, 0.0
    for j, sol in enumerate(solutions):
        own = _mode_barrier(problem, j, fields, grid)
        if not own.is_sentinel:
            minimality = max(minimality, abs(minimality_residual(sol, h1=own).precise))
            feasibility = max(feasibility, float(np.max(own.values(grid) - fields.u[j])),
                              float(np.max(own.left_values(grid) - fields.u_left[j])))
    return {'minimality_precise': minimality, 'feasibility': max(feasibility, 0.0)}


def mode_measures(problem: SwitchingProblem, sol: SwitchingSolution, form: DiscreteForm,
                  grid: Grid, step_tol: float = 1e-10) -> Tuple[ReactionMeasure, ...]:
    """ν^j por modo; a DP não os produz e cada modo é resolvido contra H^j(u) congelada"""
    if sol.nu:
        return sol.nu
    fields = ModeFields(sol.u, sol.u_left)
    out = []
    for j, mode in enumerate(problem.modes):
        own = solve_one_barrier(mode.phi, _mode_reaction(problem, j, fields, grid), mode.mu,
                                _mode_barrier(problem, j, fields, grid), form, grid, step_tol)
        out.append(own.nu)
    return tuple(out)


def _resolve_coupled_atoms(problem: SwitchingProblem, pre: np.ndarray, t: float,
                           x: np.ndarray, clamp: bool) -> np.ndarray:
    """Limite à esquerda conjunto: L^j = max(pre^j, H^j(L))"""
    if not clamp:
        return pre
    left = pre.copy()
    for _ in range(problem.N + 1):
        updated = np.vstack([np.maximum(pre[j], problem.barrier(j, left, t, x))
                             for j in range(problem.N)])
        if np.array_equal(updated, left):
            break
        left = updated
    return left


def _policy_system(K: sp.csr_matrix, policy: np.ndarray, rhs: np.ndarray,
                   costs: Dict[Tuple[int, int], np.ndarray]) -> Tuple[sp.csr_matrix, np.ndarray]:
    N, n = policy.shape
    coo = K.tocoo()
    rows, cols, vals = [], [], []
    b = np.empty(N * n)
    for j in range(N):
        keep = policy[j, coo.row] < 0
        rows.append(j * n + coo.row[keep])
        cols.append(j * n + coo.col[keep])
        vals.append(coo.data[keep])
        b[j * n:(j + 1) * n] = rhs[j]
        switching = np.nonzero(policy[j] >= 0)[0]
        targets = policy[j, switching]
        rows += [j * n + switching, j * n + switching]
        cols += [j * n + switching, targets * n + switching]
        vals += [np.ones(switching.size), -np.ones(switching.size)]
        for s in np.unique(targets):
            nodes = switching[targets == s]
            b[j * n + nodes] = -costs[(j, int(s))][nodes]
    matrix = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(N * n, N * n))
    return matrix, b


def solve_switching_dp(problem: SwitchingProblem, form: DiscreteForm, grid: Grid,
                       max_policy_iters: int = 100) -> SwitchingSolution:
    """Programação dinâmica exata na malha: iteração de políticas (Howard) por passo"""
    if not (problem.is_cost_form and problem.y_independent):
        raise RegimeViolation('dynamic programming oracle needs cost form and y-independent reactions')
    problem.validate(grid)
    N, n = problem.N, grid.n_x
    mass = form.interior_mass
    x = grid.nodes
    loads = [discretize(m.mu, grid) for m in problem.modes]
    atom_times = set().union(*[set(load.atoms) for load in loads])
    U = np.zeros((N, grid.n_t + 1, n))
    U[:, -1] = np.vstack([as_field(m.phi, grid) for m in problem.modes])
    U_left = U.copy()
    policy_iterations = []

    for k in range(grid.n_t - 1, -1, -1):
        pre = U[:, k + 1].copy()
        for j, load in enumerate(loads):
            atom = load.atom(k + 1)
            if atom is not None:
                pre[j] += atom[1:-1] / mass
        nxt = _resolve_coupled_atoms(problem, pre, float(grid.times[k + 1]), x,
                                     clamp=(k + 1) in atom_times)
        U_left[:, k + 1] = nxt

        t = float(grid.times[k])
        K = form.step_matrices[k]
        zeros = np.zeros(n)
        rhs = np.vstack([mass * nxt[j] + loads[j].continuous[k, 1:-1]
                         + grid.dt * mass * problem.modes[j].reaction.value(t, x, zeros)
                         for j in range(N)])
        costs = {key: problem.cost(key[0], key[1], t, x) for key in problem.costs}
        policy = np.full((N, n), -1, dtype=int)
        for count in range(1, max_policy_iters + 1):
            matrix, b = _policy_system(K, policy, rhs, costs)
            u = np.atleast_1d(spsolve(matrix.tocsc(), b)).reshape(N, n)
            new_policy = policy.copy()
            for j in range(N):
                best = K @ u[j] - rhs[j]
                choice = np.full(n, -1, dtype=int)
                for i in sorted(problem.modes[j].adjacency):
                    value = u[j] - u[i] + costs[(j, i)]
                    better = value < best - 1e-13 * (1.0 + np.abs(best))
                    choice[better] = i
                    best = np.where(better, value, best)
                current = _policy_values(K, u, rhs, costs, policy, j)
                keep = current <= best + 1e-13 * (1.0 + np.abs(best))
                new_policy[j] = np.where(keep, policy[j], choice)
            if np.array_equal(new_policy, policy):
                break
            policy = new_policy
        else:
            raise NoConvergence('policy iteration did not settle', k=k)
        policy_iterations.append(count)
        U[:, k] = u
        U_left[:, k] = u

    logger.info(f"Comutação (DP): u^0(0, meio)={U[0, 0, n // 2]:.8g}, "
                f"iterações de política máx={max(policy_iterations)}")
    return SwitchingSolution(grid, U, U_left, method='dp',
                             iterations=[{'policy_iterations_max': max(policy_iterations)}])


def _policy_values(K, u, rhs, costs, policy, j) -> np.ndarray:
    values = K @ u[j] - rhs[j]
    for s in np.unique(policy[j][policy[j] >= 0]):
        nodes = policy[j] == s
        values[nodes] = (u[j] - u[s] + costs[(j, int(s))])[nodes]
    return values


class _PenalizedModeReaction(Reaction):
    def __init__(self, base: Reaction, barrier: np.ndarray, n: float):
        super().__init__(base.f, monotonicity=base.monotonicity, depends_on_y=True,
                         name=f'penalized-mode(n={n:g})')
        self.base = base
        self.h = barrier
        self.n = n

    def value(self, t, x, y):
        return self.base.value(t, x, y) + self.n * np.maximum(self.h - y, 0.0)

    def slope(self, t, x, y):
        return self.base.slope(t, x, y) - self.n * (y < self.h)


def solve_switching_penalized(problem: SwitchingProblem, n: float, form: DiscreteForm,
                              grid: Grid, tol: float = 1e-11, max_sweeps: int = 500,
                              step_tol: float = 1e-10) -> ModeFields:
    """Sistema penalizado n(u^j - H^j(·, u))⁻ com Gauss-Seidel sobre os modos"""
    problem.validate(grid)
    N = problem.N
    mass = form.interior_mass
    x = grid.nodes
    loads = [discretize(m.mu, grid) for m in problem.modes]
    U = np.zeros((N, grid.n_t + 1, grid.n_x))
    U[:, -1] = np.vstack([as_field(m.phi, grid) for m in problem.modes])
    U_left = U.copy()

    for k in range(grid.n_t - 1, -1, -1):
        nxt = U[:, k + 1].copy()
        for j, load in enumerate(loads):
            atom = load.atom(k + 1)
            if atom is not None:
                nxt[j] += atom[1:-1] / mass
        U_left[:, k + 1] = nxt
        t = float(grid.times[k])
        V = nxt.copy()
        for sweep in range(max_sweeps):
            change = 0.0
            for j, mode in enumerate(problem.modes):
                h = problem.barrier(j, V, t, x)
                base = mode.reaction
                if mode.coupled is not None:
                    frozen = np.repeat(V[:, None], grid.n_t + 1, axis=1)
                    base = FrozenModeReaction(mode, j, frozen, grid)
                reaction = _PenalizedModeReaction(base, h, n) if n > 0 else base
                rhs = mass * nxt[j] + loads[j].continuous[k, 1:-1]
                result = implicit_step(form.step_matrices[k], mass, grid.dt, reaction, t, x,
                                       rhs, V[j], step_tol)
                change = max(change, float(np.max(np.abs(result.u - V[j]))))
                V[j] = result.u
            if change <= tol:
                break
        else:
            raise NoConvergence('Gauss-Seidel over modes did not converge', k=k, n=n)
        U[:, k] = V
        U_left[:, k] = V

    logger.info(f"Comutação penalizada n={n:g}: u^0(0, meio)={U[0, 0, grid.n_x // 2]:.8g}")
    return ModeFields(U, U_left)


@dataclass(frozen=True)
class NoLoopCertificate:
    ok: bool
    reason: str
    witness: Optional[Dict] = None

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> Dict:
        return {'ok': self.ok, 'reason': self.reason, 'witness': self.witness}


def _simple_cycles(problem: SwitchingProblem) -> List[Tuple[int, ...]]:
    cycles = []

    def walk(start: int, node: int, path: List[int]) -> None:
        for nxt in sorted(problem.modes[node].adjacency):
            if nxt == start:
                cycles.append(tuple(path))
            elif nxt > start and nxt not in path:
                walk(start, nxt, path + [nxt])

    for start in range(problem.N):
        walk(start, start, [start])
    return cycles


def check_no_loop(problem: SwitchingProblem, grid: Grid) -> NoLoopCertificate:
    """Todo o ciclo de comutação tem custo total estritamente positivo"""
    if not problem.is_cost_form:
        return NoLoopCertificate(False, 'unverifiable')
    cycles = _simple_cycles(problem)
    if not cycles:
        return NoLoopCertificate(True, 'no cycles')
    for cycle in cycles:
        closed = list(cycle) + [cycle[0]]
        for k, t in enumerate(grid.times):
            total = sum(problem.cost(a, b, float(t), grid.nodes) for a, b in zip(closed, closed[1:]))
            if np.min(total) <= 0.0:
                i = int(np.argmin(total))
                return NoLoopCertificate(False, 'zero-cost cycle', {
                    'cycle': list(cycle), 't': float(t), 'x': float(grid.nodes[i]),
                    'total_cost': float(total[i])})
    if problem.cost_floor > 0.0:
        return NoLoopCertificate(True, 'cost floor')
    return NoLoopCertificate(True, 'positive cycles')


@dataclass(frozen=True)
class Strategy:
    """Estratégia realizada ao longo de uma trajetória"""
    start_mode: int
    switch_times: Tuple[float, ...] = ()
    modes: Tuple[int, ...] = ()

    @property
    def n_switches(self) -> int:
        return len(self.switch_times)


class SwitchingRule:
    """Regra de comutação ótima vetorizada sobre trajetórias

    Muda de modo quando u^atual ≤ H^atual + eps; o novo modo é o maior índice
    que atinge o máximo em H.
    """

    def __init__(self, solution: SwitchingSolution, problem: SwitchingProblem,
                 eps_switch: Optional[float] = None, tie_tol: float = 1e-12):
        self.solution = solution
        self.problem = problem
        self.eps = default_eps_switch(solution.u) if eps_switch is None else eps_switch
        self.tie_tol = tie_tol
        self.nodes = solution.grid.all_nodes

    def mode_values(self, k: int, x: np.ndarray) -> np.ndarray:
        return np.vstack([np.interp(x, self.nodes, np.pad(self.solution.u[j, k], 1))
                          for j in range(self.problem.N)])

    def __call__(self, k: int, t: float, x: np.ndarray, modes: np.ndarray) -> np.ndarray:
        values = self.mode_values(k, x)
        new = modes.copy()
        for j in np.unique(modes):
            mask = modes == j
            candidates = self.problem.candidates(int(j), values[:, mask], t, x[mask])
            if not candidates:
                continue
            stacked = np.vstack([c for _, c in candidates])
            h = stacked.max(axis=0)
            target = np.full(h.shape, -1, dtype=int)
            for i, c in candidates:
                target = np.where(c >= h - self.tie_tol * (1.0 + np.abs(h)), i, target)
            switch = values[int(j), mask] <= h + self.eps
            new[mask] = np.where(switch, target, j)
        return new


def extract_strategy(solution: SwitchingSolution, problem: SwitchingProblem, z0: Tuple[float, float],
                     path: np.ndarray, j0: int, exit_col: Optional[int] = None,
                     eps_switch: Optional[float] = None) -> Strategy:
    """Percorrer uma trajetória (valores nos instantes da malha a partir de z0)"""
    grid = solution.grid
    rule = SwitchingRule(solution, problem, eps_switch)
    k0 = grid.index_of(z0[0])
    last = len(path) - 1 if exit_col is None else min(exit_col, len(path) - 1)
    mode = np.array([j0])
    times, modes = [], []
    for c in range(last):
        k = k0 + c
        if k >= grid.n_t:
            break
        t = float(grid.times[k])
        new = rule(k, t, np.array([path[c]], dtype=float), mode)
        if new[0] != mode[0]:
            times.append(t)
            modes.append(int(new[0]))
            mode = new
    return Strategy(j0, tuple(times), tuple(modes))
