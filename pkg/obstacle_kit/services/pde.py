"""
Solver retrógrado (Euler implícito) para o problema de Cauchy semilinear com
dados de medida:

    (M + Δt A_k) u_k = M u_{k+1}^- + Δt M f(t_k, x, u_k) + F_k
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..exceptions import NonFinite, StepSizeViolation
from ..utils.newton import NewtonResult, damped_newton
from .forms import DiscreteForm, Grid
from .measures import DiscreteLoad, MeasureData, discretize

logger = logging.getLogger(__name__)

ReactionFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
FieldLike = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], float]


class Reaction:
    """Termo de reação f(t, x, y) com constante de monotonia λ_f"""

    def __init__(self, f: ReactionFn, df_dy: Optional[ReactionFn] = None,
                 monotonicity: float = 0.0, lipschitz_hint: Optional[float] = None,
                 depends_on_y: bool = True, name: str = 'custom'):
        self.f = f
        self.df_dy = df_dy
        self.monotonicity = monotonicity
        self.lipschitz_hint = lipschitz_hint
        self.depends_on_y = depends_on_y
        self.name = name

    @classmethod
    def zero(cls) -> 'Reaction':
        return cls.constant(0.0)

    @classmethod
    def constant(cls, value: float) -> 'Reaction':
        return cls(lambda t, x, y: np.full_like(y, value, dtype=float),
                   df_dy=lambda t, x, y: np.zeros_like(y, dtype=float),
                   monotonicity=0.0, lipschitz_hint=0.0, depends_on_y=False,
                   name=f'constant({value:g})')

    @classmethod
    def linear(cls, offset: float, rate: float) -> 'Reaction':
        """f(y) = offset + rate·y"""
        return cls(lambda t, x, y: offset + rate * y,
                   df_dy=lambda t, x, y: np.full_like(y, rate, dtype=float),
                   monotonicity=max(rate, 0.0), lipschitz_hint=abs(rate),
                   depends_on_y=rate != 0.0, name=f'linear({offset:g},{rate:g})')

    @classmethod
    def from_source(cls, source: Callable[[float, np.ndarray], np.ndarray],
                    name: str = 'source') -> 'Reaction':
        """Reação independente de y"""
        return cls(lambda t, x, y: np.broadcast_to(
                       np.asarray(source(t, x), dtype=float), y.shape).copy(),
                   df_dy=lambda t, x, y: np.zeros_like(y, dtype=float),
                   depends_on_y=False, lipschitz_hint=0.0, name=name)

    def value(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.f(t, x, y), dtype=float), y.shape)

    def slope(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if not self.depends_on_y:
            return np.zeros_like(y)
        if self.df_dy is not None:
            return np.broadcast_to(np.asarray(self.df_dy(t, x, y), dtype=float), y.shape)
        eps = 1e-7 * (1.0 + np.abs(y))
        return (self.value(t, x, y + eps) - self.value(t, x, y - eps)) / (2.0 * eps)

    def check_monotonicity(self, grid: Grid, n_samples: int = 64, seed: int = 0,
                           spread: float = 10.0, atol: float = 1e-9) -> bool:
        """Sondar (f(y) - f(y'))(y - y') ≤ λ_f |y - y'|²"""
        rng = np.random.default_rng(seed)
        x = grid.nodes
        for t in grid.times[:: max(1, grid.n_t // 8)]:
            for _ in range(max(1, n_samples // 8)):
                y1 = rng.uniform(-spread, spread, x.shape)
                y2 = rng.uniform(-spread, spread, x.shape)
                lhs = (self.value(t, x, y1) - self.value(t, x, y2)) * (y1 - y2)
                if np.any(lhs > self.monotonicity * (y1 - y2) ** 2 + atol):
                    return False
        return True


class PenalizedReaction(Reaction):
    """f + n·(h1 - y)⁺ - n·(y - h2)⁺ com barreiras dadas nos instantes da malha"""

    def __init__(self, base: Reaction, grid: Grid, n: float,
                 lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None):
        super().__init__(base.f, monotonicity=base.monotonicity, depends_on_y=True,
                         name=f'penalized({base.name}, n={n:g})')
        self.base = base
        self.grid = grid
        self.n = float(n)
        self.lower = lower
        self.upper = upper

    def value(self, t, x, y):
        k = self.grid.index_of(t)
        out = np.array(self.base.value(t, x, y), dtype=float)
        if self.lower is not None:
            out += self.n * np.maximum(self.lower[k] - y, 0.0)
        if self.upper is not None:
            out -= self.n * np.maximum(y - self.upper[k], 0.0)
        return out

    def slope(self, t, x, y):
        k = self.grid.index_of(t)
        out = np.array(self.base.slope(t, x, y), dtype=float)
        if self.lower is not None:
            out -= self.n * (y < self.lower[k])
        if self.upper is not None:
            out -= self.n * (y > self.upper[k])
        return out


class ReflectedReaction(Reaction):
    """y ↦ -f(t, x, -y), usada na reflexão do problema com barreira superior"""

    def __init__(self, base: Reaction):
        super().__init__(base.f, monotonicity=base.monotonicity,
                         lipschitz_hint=base.lipschitz_hint,
                         depends_on_y=base.depends_on_y, name=f'reflected({base.name})')
        self.base = base

    def value(self, t, x, y):
        return -np.asarray(self.base.value(t, x, -y))

    def slope(self, t, x, y):
        return np.asarray(self.base.slope(t, x, -y))


@dataclass
class PdeSolution:
    """Campo u(t_k, x_i) nos nós interiores e limites à esquerda nos átomos"""
    grid: Grid
    u: np.ndarray
    u_left: np.ndarray
    newton_iterations: np.ndarray
    residuals: np.ndarray
    atom_indices: Tuple[int, ...] = ()
    methods: Dict[str, int] = field(default_factory=dict)

    def full_field(self, left: bool = False) -> np.ndarray:
        """Campo com os zeros de fronteira (n_t + 1, n_x + 2)"""
        values = self.u_left if left else self.u
        return np.pad(values, ((0, 0), (1, 1)))

    def at(self, t: float, x: float) -> float:
        k = self.grid.index_of(t)
        return float(np.interp(x, self.grid.all_nodes, self.full_field()[k]))

    def to_frame(self) -> pd.DataFrame:
        full = self.full_field()
        grid = self.grid
        return pd.DataFrame({
            't': np.repeat(grid.times, grid.n_x + 2),
            'x': np.tile(grid.all_nodes, grid.n_t + 1),
            'u': full.ravel(),
        })

    def diagnostics(self) -> Dict:
        return {
            'newton_iterations': self.newton_iterations.tolist(),
            'max_step_residual': float(np.max(self.residuals)) if self.residuals.size else 0.0,
            'atom_indices': list(self.atom_indices),
            'methods': dict(self.methods),
        }


def as_field(values: FieldLike, grid: Grid) -> np.ndarray:
    """Converter dado terminal em vetor nos nós interiores"""
    if callable(values):
        out = np.asarray(values(grid.nodes), dtype=float)
    else:
        out = np.asarray(values, dtype=float)
    out = np.array(np.broadcast_to(out, grid.nodes.shape))
    if not np.all(np.isfinite(out)):
        raise NonFinite('terminal field has non-finite values')
    return out


def check_step_size(reaction: Reaction, grid: Grid) -> None:
    if grid.dt * reaction.monotonicity >= 1.0:
        raise StepSizeViolation(
            'implicit step requires dt * lambda_f < 1',
            gate='dt*lambda_f<1', dt=grid.dt, lambda_f=reaction.monotonicity)


def resolve_time_atoms(u_next: np.ndarray, atom: Optional[np.ndarray]) -> np.ndarray:
    """Fatia u(t_k-) = u(t_k) + densidade do átomo"""
    if atom is None:
        return np.array(u_next, dtype=float)
    return u_next + atom


def step_residual(matrix: sp.csr_matrix, mass: np.ndarray, dt: float,
                  reaction: Reaction, t: float, x: np.ndarray, rhs: np.ndarray):
    """Resíduo G(u) = K u - Δt M f(t, x, u) - rhs e o seu jacobiano"""
    def residual(u):
        return matrix @ u - dt * mass * reaction.value(t, x, u) - rhs

    def jacobian(u):
        return (matrix - sp.diags(dt * mass * reaction.slope(t, x, u))).tocsr()

    return residual, jacobian


def implicit_step(matrix: sp.csr_matrix, mass: np.ndarray, dt: float, reaction: Reaction,
                  t: float, x: np.ndarray, rhs: np.ndarray, guess: np.ndarray,
                  step_tol: float = 1e-10, max_newton: int = 50) -> NewtonResult:
    """Um passo implícito (Newton amortecido com ponto fixo de recurso)"""
    if not reaction.depends_on_y:
        source = dt * mass * reaction.value(t, x, guess)
        u = np.atleast_1d(spsolve(matrix.tocsc(), rhs + source))
        res = float(np.max(np.abs(matrix @ u - source - rhs)))
        return NewtonResult(u, 1, res, 'linear')

    residual, jacobian = step_residual(matrix, mass, dt, reaction, t, x, rhs)
    solver = matrix.tocsc()

    def fixed_point(u):
        return np.atleast_1d(spsolve(solver, rhs + dt * mass * reaction.value(t, x, u)))

    return damped_newton(residual, jacobian, guess, step_tol, max_iter=max_newton,
                         fixed_point=fixed_point)


def solve_pde_with_load(phi: FieldLike, reaction: Reaction, load: DiscreteLoad,
                        form: DiscreteForm, grid: Grid, step_tol: float = 1e-10) -> PdeSolution:
    """Varredura retrógrada com uma carga já discretizada"""
    check_step_size(reaction, grid)
    mass = form.interior_mass
    x = grid.nodes
    u = np.zeros((grid.n_t + 1, grid.n_x))
    u[-1] = as_field(phi, grid)
    u_left = u.copy()
    iterations = np.zeros(grid.n_t, dtype=int)
    residuals = np.zeros(grid.n_t)
    methods: Dict[str, int] = {}

    for k in range(grid.n_t - 1, -1, -1):
        atom = load.atom(k + 1)
        nxt = resolve_time_atoms(u[k + 1], None if atom is None else atom[1:-1] / mass)
        u_left[k + 1] = nxt
        rhs = mass * nxt + load.continuous[k, 1:-1]
        result = implicit_step(form.step_matrices[k], mass, grid.dt, reaction,
                               float(grid.times[k]), x, rhs, nxt, step_tol)
        u[k] = result.u
        u_left[k] = result.u
        iterations[k] = result.iterations
        residuals[k] = result.residual
        methods[result.method] = methods.get(result.method, 0) + 1

    if not np.all(np.isfinite(u)):
        raise NonFinite('solution field is not finite')
    logger.debug(f"PDE resolvida: passos={grid.n_t}, Newton máx={int(iterations.max())}, "
                 f"resíduo máx={residuals.max():.2e}")
    return PdeSolution(grid, u, u_left, iterations, residuals,
                       tuple(sorted(load.atoms)), methods)


def solve_pde(phi: FieldLike, f: Reaction, mu: MeasureData, form: DiscreteForm,
              grid: Grid, step_tol: float = 1e-10) -> PdeSolution:
    """Resolver PDE(φ, f + dμ) por Euler implícito retrógrado"""
    check_step_size(f, grid)
    load = discretize(mu, grid)
    solution = solve_pde_with_load(phi, f, load, form, grid, step_tol)
    logger.info(f"solve_pde: n_x={grid.n_x}, n_t={grid.n_t}, "
                f"u(0, meio)={solution.u[0, grid.n_x // 2]:.8g}")
    return solution


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    worst_violation: float
    location: Optional[Tuple[float, float]] = None
    measure_holds: Optional[bool] = None
    worst_measure_violation: float = 0.0

    def to_dict(self) -> Dict:
        return {'holds': self.holds, 'worst_violation': self.worst_violation,
                'location': self.location, 'measure_holds': self.measure_holds,
                'worst_measure_violation': self.worst_measure_violation}


def field_comparison(grid: Grid, lower_fields: Sequence[np.ndarray],
                     upper_fields: Sequence[np.ndarray], tol: float) -> Tuple[bool, float, Optional[Tuple[float, float]]]:
    """Verificar lower ≤ upper + tol; devolve (ok, pior violação, local)"""
    worst, location = 0.0, None
    for low, up in zip(lower_fields, upper_fields):
        gap = low - up
        idx = np.unravel_index(int(np.argmax(gap)), gap.shape)
        if gap[idx] > worst:
            worst = float(gap[idx])
            location = (float(grid.times[idx[0]]), float(grid.nodes[idx[1]]))
    return worst <= tol, worst, location


def comparison_check(sol1: PdeSolution, sol2: PdeSolution, tol: float = 1e-8) -> ComparisonReport:
    """Princípio de comparação: u1 ≤ u2 + tol em todos os nós"""
    holds, worst, location = field_comparison(
        sol1.grid, [sol1.u, sol1.u_left], [sol2.u, sol2.u_left], tol)
    if not holds:
        logger.warning(f"Comparação violada: {worst:.3e} em {location}")
    return ComparisonReport(holds, worst, location)
