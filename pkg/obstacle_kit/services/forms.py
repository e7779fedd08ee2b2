"""
Formas bilineares discretas dependentes do tempo numa malha 1D.

B(t)(u, v) = ∫ a u'v' + ∫ b u'v, elementos P1 com massa condensada e
condição de Dirichlet homogénea nas extremidades.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigvalsh_tridiagonal

from ..exceptions import CoefficientViolation, ConfigError, DegenerateForm, NonFinite

logger = logging.getLogger(__name__)

CoefficientFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Grid:
    """Malha uniforme espaço-tempo"""
    x_min: float
    x_max: float
    n_x: int
    T: float
    n_t: int

    def __post_init__(self):
        if self.n_x < 3:
            raise ConfigError('n_x must be at least 3', n_x=self.n_x)
        if self.n_t < 2:
            raise ConfigError('n_t must be at least 2', n_t=self.n_t)
        if not self.x_min < self.x_max:
            raise ConfigError('x_min must be smaller than x_max',
                              x_min=self.x_min, x_max=self.x_max)
        if not self.T > 0:
            raise ConfigError('horizon T must be positive', T=self.T)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x + 1)

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @cached_property
    def all_nodes(self) -> np.ndarray:
        """Nós incluindo as duas extremidades (n_x + 2)"""
        nodes = self.x_min + self.dx * np.arange(self.n_x + 2)
        nodes[-1] = self.x_max
        return nodes

    @cached_property
    def nodes(self) -> np.ndarray:
        """Nós interiores x_1..x_{n_x}"""
        return self.all_nodes[1:-1].copy()

    @cached_property
    def times(self) -> np.ndarray:
        times = np.linspace(0.0, self.T, self.n_t + 1)
        times[-1] = self.T
        return times

    @cached_property
    def cell_widths(self) -> np.ndarray:
        """Pesos da massa condensada, com meias células nas extremidades"""
        widths = np.full(self.n_x + 2, self.dx)
        widths[0] = widths[-1] = 0.5 * self.dx
        return widths

    @cached_property
    def cell_midpoints(self) -> np.ndarray:
        """Ponto médio de cada célula dual"""
        mids = self.all_nodes.copy()
        mids[0] = self.x_min + 0.25 * self.dx
        mids[-1] = self.x_max - 0.25 * self.dx
        return mids

    @cached_property
    def element_midpoints(self) -> np.ndarray:
        return 0.5 * (self.all_nodes[:-1] + self.all_nodes[1:])

    def index_of(self, t: float) -> int:
        """Índice do instante de malha mais próximo de t"""
        k = int(np.floor(t / self.dt + 0.5))
        return min(max(k, 0), self.n_t)

    def snap(self, t: float, lowest: int = 0) -> Tuple[int, float]:
        """Ajustar t à malha; devolve (índice, distância)"""
        k = max(self.index_of(t), lowest)
        return k, abs(float(self.times[k]) - t)

    def contains(self, x: float) -> bool:
        return self.x_min < x < self.x_max

    def to_dict(self) -> Dict[str, float]:
        return {'x_min': self.x_min, 'x_max': self.x_max, 'n_x': self.n_x,
                'T': self.T, 'n_t': self.n_t}


def _broadcast(values, shape) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(values, dtype=float), shape))


@dataclass(frozen=True)
class FormCoefficients:
    """Coeficientes a(t, x) (difusão) e b(t, x) (deriva)"""
    a: CoefficientFn
    b: CoefficientFn
    a_floor: float
    name: str = 'custom'
    constant_values: Optional[Tuple[float, float]] = None

    @classmethod
    def constant(cls, a: float = 1.0, b: float = 0.0,
                 a_floor: Optional[float] = None) -> 'FormCoefficients':
        return cls(a=lambda t, x: np.full_like(x, a, dtype=float),
                   b=lambda t, x: np.full_like(x, b, dtype=float),
                   a_floor=a if a_floor is None else a_floor,
                   name='constant', constant_values=(float(a), float(b)))

    def sample(self, t: float, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return _broadcast(self.a(t, x), x.shape), _broadcast(self.b(t, x), x.shape)

    def a_slope(self, t: float, x: np.ndarray, eps: float) -> np.ndarray:
        """Derivada espacial de a por diferenças centradas"""
        x = np.asarray(x, dtype=float)
        return (_broadcast(self.a(t, x + eps), x.shape)
                - _broadcast(self.a(t, x - eps), x.shape)) / (2.0 * eps)

    def is_constant(self, grid: Grid, atol: float = 1e-14) -> bool:
        """Coeficientes constantes em (t, x) nas amostras da malha"""
        if self.constant_values is not None:
            return True
        first_a, first_b = self.sample(0.0, grid.all_nodes[:1])
        for t in grid.times:
            a_vals, b_vals = self.sample(t, grid.all_nodes)
            if (np.max(np.abs(a_vals - first_a[0])) > atol
                    or np.max(np.abs(b_vals - first_b[0])) > atol):
                return False
        return True

    def constant_pair(self, grid: Grid) -> Tuple[float, float]:
        if self.constant_values is not None:
            return self.constant_values
        a_vals, b_vals = self.sample(0.0, grid.all_nodes[:1])
        return float(a_vals[0]), float(b_vals[0])


@dataclass(frozen=True)
class DiscreteForm:
    """Massa condensada e matrizes de rigidez A_k por instante"""
    grid: Grid
    mass: np.ndarray
    diffusion: Tuple[sp.csr_matrix, ...]
    drift: Tuple[sp.csr_matrix, ...]
    stiffness: Tuple[sp.csr_matrix, ...]
    step_matrices: Tuple[sp.csr_matrix, ...]
    upwinded: bool = False
    peclet: float = 0.0

    @property
    def interior_mass(self) -> np.ndarray:
        return self.mass[1:-1]

    def report(self) -> Dict[str, float]:
        return {'upwinded': self.upwinded, 'mesh_peclet': self.peclet,
                'n_matrices': len(self.stiffness)}


def _validate_samples(coeffs: FormCoefficients, grid: Grid) -> List[Tuple[np.ndarray, np.ndarray]]:
    samples = []
    for k, t in enumerate(grid.times):
        a_vals, b_vals = coeffs.sample(float(t), grid.element_midpoints)
        if not (np.all(np.isfinite(a_vals)) and np.all(np.isfinite(b_vals))):
            raise NonFinite('non-finite coefficient sample', k=k, t=float(t))
        if np.min(a_vals) < coeffs.a_floor:
            i = int(np.argmin(a_vals))
            raise CoefficientViolation(
                'diffusion coefficient below declared floor',
                k=k, t=float(t), x=float(grid.element_midpoints[i]),
                a=float(a_vals[i]), a_floor=coeffs.a_floor)
        samples.append((a_vals, b_vals))
    return samples


def assemble(coeffs: FormCoefficients, grid: Grid, upwind: str = 'auto') -> DiscreteForm:
    """Montar M e {A_k} com coeficientes nos pontos médios dos elementos"""
    samples = _validate_samples(coeffs, grid)
    dx, dt = grid.dx, grid.dt

    max_b = max(float(np.max(np.abs(b_vals))) for _, b_vals in samples)
    min_a = min(float(np.min(a_vals)) for a_vals, _ in samples)
    peclet = dx * max_b / (2.0 * min_a)
    if upwind == 'auto':
        use_upwind = peclet > 1.0
    else:
        use_upwind = upwind == 'always'
    if use_upwind:
        logger.warning(f"Deriva descentrada (upwind): Péclet de malha {peclet:.3g} > 1")

    interior_mass = grid.cell_widths[1:-1]
    mass_matrix = sp.diags(interior_mass, format='csr')
    diffusion, drift, stiffness, steps = [], [], [], []
    cache: Dict[bytes, Tuple] = {}

    for a_vals, b_vals in samples:
        key = a_vals.tobytes() + b_vals.tobytes()
        if key not in cache:
            ka = a_vals / dx
            diff = sp.diags(
                [-ka[1:-1], ka[:-1] + ka[1:], -ka[1:-1]], [-1, 0, 1], format='csr')
            if use_upwind:
                bp = np.maximum(b_vals, 0.0)
                bm = np.minimum(b_vals, 0.0)
                adv = sp.diags(
                    [-bp[1:-1], bp[:-1] - bm[1:], bm[1:-1]], [-1, 0, 1], format='csr')
            else:
                adv = sp.diags(
                    [-0.5 * b_vals[1:-1], 0.5 * (b_vals[:-1] - b_vals[1:]), 0.5 * b_vals[1:-1]],
                    [-1, 0, 1], format='csr')
            full = (diff + adv).tocsr()
            cache[key] = (diff, adv, full, (mass_matrix + dt * full).tocsr())
        d, v, a_k, s_k = cache[key]
        diffusion.append(d)
        drift.append(v)
        stiffness.append(a_k)
        steps.append(s_k)

    logger.debug(f"Forma montada: n_x={grid.n_x}, n_t={grid.n_t}, matrizes distintas={len(cache)}")
    return DiscreteForm(
        grid=grid,
        mass=grid.cell_widths.copy(),
        diffusion=tuple(diffusion),
        drift=tuple(drift),
        stiffness=tuple(stiffness),
        step_matrices=tuple(steps[:-1]),
        upwinded=use_upwind,
        peclet=peclet,
    )


@dataclass(frozen=True)
class SectorReport:
    alpha0: float
    K: float
    lam: float
    dense_checked: bool = False
    n_samples: int = 0
    details: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, float]:
        return {'alpha0': self.alpha0, 'K': self.K, 'lambda': self.lam,
                'dense_checked': self.dense_checked, 'n_samples': self.n_samples}


def _symmetric_part(matrix: sp.csr_matrix) -> sp.csr_matrix:
    return (0.5 * (matrix + matrix.T)).tocsr()


def _quadratic(sym: sp.csr_matrix, vectors: np.ndarray) -> np.ndarray:
    """q(u) = uᵀ S u para cada linha de vectors"""
    return np.einsum('ij,ij->i', vectors, (sym @ vectors.T).T)


def sector_report(coeffs: FormCoefficients, grid: Grid,
                  form: Optional[DiscreteForm] = None,
                  n_samples: int = 256, seed: int = 0,
                  dense_limit: int = 64) -> SectorReport:
    """Estimar α₀, a constante de setor K e a constante de equivalência λ"""
    form = form or assemble(coeffs, grid)
    n = grid.n_x
    mass = form.interior_mass

    unique: Dict[bytes, sp.csr_matrix] = {}
    for a_k in form.stiffness:
        unique.setdefault(a_k.toarray().tobytes(), a_k)
    matrices = list(unique.values())

    lam_min = []
    for a_k in matrices:
        sym = _symmetric_part(a_k)
        eigs = eigvalsh_tridiagonal(sym.diagonal(), sym.diagonal(1))
        lam_min.append(float(eigs[0]) / float(mass[0]))
    alpha0 = max(0.0, -min(lam_min))
    shift = alpha0 if min(lam_min) > 0.0 else alpha0 + 1.0

    rng = np.random.default_rng(seed)
    samples_u = rng.standard_normal((n_samples, n))
    samples_v = rng.standard_normal((n_samples, n))
    dense = n <= dense_limit

    sector = 1.0
    mass_matrix = sp.diags(mass, format='csr')
    for a_k in matrices:
        sym_shift = (_symmetric_part(a_k) + shift * mass_matrix).tocsr()
        cross = np.einsum('ij,ij->i', samples_v, (a_k @ samples_u.T).T)
        denom = np.sqrt(_quadratic(sym_shift, samples_u) * _quadratic(sym_shift, samples_v))
        sector = max(sector, float(np.max(np.abs(cross) / denom)))
        if dense:
            w, q = eigh(sym_shift.toarray())
            root_inv = (q / np.sqrt(w)) @ q.T
            sector = max(sector, float(np.linalg.norm(root_inv @ a_k.toarray() @ root_inv, 2)))

    sym0 = _symmetric_part(form.stiffness[0])
    q0 = _quadratic(sym0, samples_u)
    eig0 = eigvalsh_tridiagonal(sym0.diagonal(), sym0.diagonal(1))
    if eig0[0] <= 0.0 or np.any(q0 <= 0.0):
        raise DegenerateForm('form at t=0 is not positive definite',
                             smallest_eigenvalue=float(eig0[0]))

    lam = 1.0
    for a_k in matrices:
        sym = _symmetric_part(a_k)
        ratios = _quadratic(sym, samples_u) / q0
        if dense:
            gen = eigh(sym.toarray(), sym0.toarray(), eigvals_only=True)
            ratios = np.concatenate([ratios, gen])
        if np.any(ratios <= 0.0):
            raise DegenerateForm('forms are not comparable in time',
                                 smallest_ratio=float(np.min(ratios)))
        lam = max(lam, float(np.max(ratios)), float(np.max(1.0 / ratios)))

    report = SectorReport(alpha0=alpha0, K=sector, lam=lam, dense_checked=dense,
                          n_samples=n_samples, details={'shift': shift})
    logger.info(f"Setor: α₀={alpha0:.3g}, K={sector:.6g}, λ={lam:.6g}")
    return report
