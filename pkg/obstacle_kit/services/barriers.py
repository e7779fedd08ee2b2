"""
Barreiras contínuas por troços no tempo (contínuas à direita), as suas versões
precisas (limites à esquerda nos saltos) e as condições de separação.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigError, NoConvergence, NoSandwich
from .forms import DiscreteForm, Grid
from .measures import MeasureData, SnapRecord

logger = logging.getLogger(__name__)

Profile = Callable[[float, np.ndarray], np.ndarray]


def _evaluate(profile: Profile, t: float, x: np.ndarray, left: bool = False) -> np.ndarray:
    if left and hasattr(profile, 'left_limit'):
        values = profile.left_limit(t, x)
    else:
        values = profile(t, x)
    return np.array(np.broadcast_to(np.asarray(values, dtype=float), np.shape(x)))


class ConstantProfile:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t, x):
        return np.full(np.shape(x), self.value)


class ProductProfile:
    """g(x)·q(t)"""

    def __init__(self, space: Callable[[np.ndarray], np.ndarray],
                 time: Callable[[float], float]):
        self.space = space
        self.time = time

    def __call__(self, t, x):
        return np.asarray(self.space(x), dtype=float) * float(self.time(t))


class GridTableProfile:
    """Tabela nos instantes e nós interiores da malha, com limites à esquerda"""

    def __init__(self, grid: Grid, right: np.ndarray, left: Optional[np.ndarray] = None):
        self.grid = grid
        self.right = np.asarray(right, dtype=float)
        self.left = self.right if left is None else np.asarray(left, dtype=float)

    def _lookup(self, table: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
        k = self.grid.index_of(t)
        if np.shape(x) == self.grid.nodes.shape and np.array_equal(x, self.grid.nodes):
            return table[k].copy()
        return np.interp(x, self.grid.nodes, table[k])

    def __call__(self, t, x):
        return self._lookup(self.right, t, x)

    def left_limit(self, t, x):
        return self._lookup(self.left, t, x)


class AffineProfile:
    """scale·h + shift, preservando limites à esquerda"""

    def __init__(self, base: Profile, scale: float = 1.0, shift: float = 0.0):
        self.base = base
        self.scale = scale
        self.shift = shift

    def __call__(self, t, x):
        return self.scale * _evaluate(self.base, t, x) + self.shift

    def left_limit(self, t, x):
        return self.scale * _evaluate(self.base, t, x, left=True) + self.shift


@dataclass(frozen=True)
class BarrierSegment:
    t_start: float
    profile: Profile


@dataclass(frozen=True)
class Barrier:
    """Barreira com troços [t_start, t_seguinte); sentinela ±inf = sem barreira"""
    segments: Tuple[BarrierSegment, ...] = ()
    sentinel: Optional[float] = None
    snaps: Tuple[SnapRecord, ...] = ()
    name: str = 'barrier'

    @classmethod
    def none(cls, side: str = 'lower') -> 'Barrier':
        return cls(sentinel=-np.inf if side == 'lower' else np.inf, name='none')

    @classmethod
    def constant(cls, value: float) -> 'Barrier':
        return cls(segments=(BarrierSegment(0.0, ConstantProfile(value)),),
                   name=f'constant({value:g})')

    @classmethod
    def piecewise(cls, grid: Grid, pieces: Sequence[Tuple[float, Profile]],
                  name: str = 'piecewise') -> 'Barrier':
        """Construir a partir de (t_start, perfil); saltos ajustados à malha"""
        if not pieces:
            raise ConfigError('barrier needs at least one segment')
        ordered = sorted(pieces, key=lambda piece: piece[0])
        segments, snaps, seen = [], [], set()
        for position, (t_start, profile) in enumerate(ordered):
            k, distance = grid.snap(t_start)
            if position == 0:
                k = 0
            elif k == 0:
                raise ConfigError('only the first barrier segment may start at t=0',
                                  t_start=t_start)
            if k in seen:
                raise ConfigError('barrier segments collapse after snapping to the grid',
                                  t_start=t_start, index=k)
            seen.add(k)
            snapped = float(grid.times[k])
            if abs(snapped - t_start) > 1e-12:
                snaps.append(SnapRecord('barrier_jump', float(t_start), snapped, abs(snapped - t_start)))
                logger.warning(f"Salto da barreira ajustado de t={t_start:.6g} para t={snapped:.6g}")
            segments.append(BarrierSegment(snapped, profile))
        return cls(segments=tuple(segments), snaps=tuple(snaps), name=name)

    @classmethod
    def from_grid(cls, grid: Grid, right: np.ndarray, left: Optional[np.ndarray] = None,
                  jump_indices: Optional[Sequence[int]] = None,
                  name: str = 'grid') -> 'Barrier':
        """Barreira tabelada nos nós interiores; limites à esquerda opcionais"""
        right = np.asarray(right, dtype=float)
        left = right if left is None else np.asarray(left, dtype=float)
        if np.all(np.isneginf(right)) and np.all(np.isneginf(left)):
            return cls.none('lower')
        if np.all(np.isposinf(right)) and np.all(np.isposinf(left)):
            return cls.none('upper')
        if jump_indices is None:
            differs = np.any(left != right, axis=1)
            jump_indices = [int(k) for k in np.nonzero(differs)[0] if k > 0]
        profile = GridTableProfile(grid, right, left)
        starts = [0] + sorted({int(k) for k in jump_indices if k > 0})
        segments = tuple(BarrierSegment(float(grid.times[k]), profile) for k in starts)
        return cls(segments=segments, name=name)

    @property
    def is_sentinel(self) -> bool:
        return self.sentinel is not None

    @property
    def starts(self) -> np.ndarray:
        return np.array([segment.t_start for segment in self.segments])

    @property
    def jump_times(self) -> Tuple[float, ...]:
        return tuple(segment.t_start for segment in self.segments[1:])

    def jump_indices(self, grid: Grid) -> Tuple[int, ...]:
        return tuple(grid.index_of(t) for t in self.jump_times)

    def _segment_index(self, t: float) -> int:
        eps = 1e-12 * max(1.0, abs(t))
        return max(int(np.searchsorted(self.starts, t + eps, side='right')) - 1, 0)

    def evaluate(self, t: float, x: np.ndarray, left: bool = False) -> np.ndarray:
        """Valor em (t, x); com left=True devolve o limite à esquerda num salto"""
        x = np.asarray(x, dtype=float)
        if self.is_sentinel:
            return np.full(x.shape, self.sentinel)
        s = self._segment_index(t)
        if left and s > 0 and abs(t - self.segments[s].t_start) <= 1e-12 * max(1.0, abs(t)):
            return _evaluate(self.segments[s - 1].profile, t, x, left=True)
        return _evaluate(self.segments[s].profile, t, x)

    def values(self, grid: Grid) -> np.ndarray:
        """Valores contínuos à direita (n_t + 1, n_x)"""
        if self.is_sentinel:
            return np.full((grid.n_t + 1, grid.n_x), self.sentinel)
        out = np.empty((grid.n_t + 1, grid.n_x))
        for k, t in enumerate(grid.times):
            out[k] = self.evaluate(float(t), grid.nodes)
        if not np.all(np.isfinite(out)):
            raise ConfigError('barrier profile has non-finite values', name=self.name)
        return out

    def left_values(self, grid: Grid) -> np.ndarray:
        out = self.values(grid)
        if self.is_sentinel:
            return out
        for s, k in enumerate(self.jump_indices(grid), start=1):
            out[k] = _evaluate(self.segments[s - 1].profile, float(grid.times[k]), grid.nodes,
                               left=True)
        return out

    def reflected(self) -> 'Barrier':
        return self.affine(-1.0, 0.0)

    def shifted(self, shift: float) -> 'Barrier':
        return self.affine(1.0, shift)

    def affine(self, scale: float, shift: float) -> 'Barrier':
        if self.is_sentinel:
            return Barrier(sentinel=scale * self.sentinel + shift, name=self.name)
        segments = tuple(BarrierSegment(s.t_start, AffineProfile(s.profile, scale, shift))
                         for s in self.segments)
        return Barrier(segments=segments, snaps=self.snaps, name=f'{scale:g}*{self.name}+{shift:g}')


@dataclass(frozen=True)
class PreciseBarrier:
    """Versão precisa: limite à esquerda em cada instante de salto"""
    source: Barrier

    @property
    def is_sentinel(self) -> bool:
        return self.source.is_sentinel

    def jump_indices(self, grid: Grid) -> Tuple[int, ...]:
        return self.source.jump_indices(grid)

    def values(self, grid: Grid) -> np.ndarray:
        return self.source.left_values(grid)

    def left_values(self, grid: Grid) -> np.ndarray:
        return self.source.left_values(grid)

    def evaluate(self, t: float, x: np.ndarray, left: bool = True) -> np.ndarray:
        return self.source.evaluate(t, x, left=True)


AnyBarrier = Union[Barrier, PreciseBarrier]


def precise_version(h: AnyBarrier) -> PreciseBarrier:
    if isinstance(h, PreciseBarrier):
        return h
    return PreciseBarrier(h)


def terminal_compatibility(h: AnyBarrier, phi: np.ndarray, grid: Grid, side: str = 'lower',
                           tol: float = 1e-12) -> bool:
    """ĥ(T) ≤ φ (barreira inferior) ou φ ≤ ĥ(T) (superior)"""
    if h.is_sentinel:
        return True
    h_terminal = precise_version(h).values(grid)[-1]
    phi = np.asarray(phi, dtype=float)
    if side == 'lower':
        return bool(np.all(h_terminal <= phi + tol))
    return bool(np.all(phi <= h_terminal + tol))


class SeparationKind(Enum):
    STRICT = 'strict'
    MOKOBODZKI = 'mokobodzki'
    FAIL = 'fail'


@dataclass(frozen=True)
class SeparationCertificate:
    kind: SeparationKind
    potential: Optional[np.ndarray] = None
    potential_left: Optional[np.ndarray] = None
    witness: Optional[Tuple[float, float]] = None
    violation: float = 0.0

    def __bool__(self) -> bool:
        return self.kind is not SeparationKind.FAIL

    def to_dict(self) -> Dict:
        return {'kind': self.kind.value, 'witness': self.witness, 'violation': self.violation}


def _sandwich_candidate(h1: Barrier, h2: Barrier, form: DiscreteForm, grid: Grid,
                        tol: float) -> SeparationCertificate:
    """Menor potencial acima de h1 (réduite) testado contra h2"""
    from .obstacle import solve_one_barrier
    from .pde import Reaction

    if h1.is_sentinel:
        v = np.zeros((grid.n_t + 1, grid.n_x))
        v_left = v
    else:
        phi = precise_version(h1).values(grid)[-1]
        reduite = solve_one_barrier(phi, Reaction.zero(), MeasureData.zero(), h1, form, grid)
        v, v_left = reduite.u, reduite.u_left

    with np.errstate(invalid='ignore'):
        gap = np.maximum(v - h2.values(grid), v_left - h2.left_values(grid))
    worst = np.unravel_index(int(np.argmax(gap)), gap.shape)
    violation = float(gap[worst])
    if violation <= tol:
        return SeparationCertificate(SeparationKind.MOKOBODZKI, v, v_left)
    witness = (float(grid.times[worst[0]]), float(grid.nodes[worst[1]]))
    return SeparationCertificate(SeparationKind.FAIL, witness=witness, violation=violation)


def check_separation(h1: Barrier, h2: Barrier, form: DiscreteForm, grid: Grid,
                     tol: float = 1e-10) -> SeparationCertificate:
    """Separação estrita ou condição de Mokobodzki; Fail não é erro"""
    with np.errstate(invalid='ignore'):
        strict = (np.all(h1.values(grid) < h2.values(grid))
                  and np.all(h1.left_values(grid) < h2.left_values(grid)))
    if strict:
        return SeparationCertificate(SeparationKind.STRICT)
    certificate = _sandwich_candidate(h1, h2, form, grid, tol)
    if not certificate:
        logger.warning(f"Separação não certificada: violação {certificate.violation:.3e} "
                       f"em {certificate.witness}")
    return certificate


def reduce_measurable(h1_raw: Optional[np.ndarray], h2_raw: Optional[np.ndarray],
                      phi, f, mu: MeasureData, form: DiscreteForm, grid: Grid,
                      tol: float = 1e-6, n0: float = 1.0,
                      max_doublings: int = 40) -> Tuple[Barrier, Barrier]:
    """Substituir barreiras mensuráveis por (w ∧ v, w ∨ v)

    v é o potencial intercalado e w o limite da penalização bilateral.
    """
    from .pde import PenalizedReaction, solve_pde

    h1 = Barrier.none('lower') if h1_raw is None else Barrier.from_grid(grid, h1_raw, name='h1')
    h2 = Barrier.none('upper') if h2_raw is None else Barrier.from_grid(grid, h2_raw, name='h2')
    certificate = _sandwich_candidate(h1, h2, form, grid, tol)
    if not certificate:
        raise NoSandwich('no sandwiched potential between the barriers',
                         witness=certificate.witness, violation=certificate.violation)
    v, v_left = certificate.potential, certificate.potential_left

    lower = None if h1.is_sentinel else h1.values(grid)
    upper = None if h2.is_sentinel else h2.values(grid)
    n, previous = n0, None
    for _ in range(max_doublings):
        w = solve_pde(phi, PenalizedReaction(f, grid, n, lower=lower, upper=upper), mu, form, grid)
        if previous is not None and float(np.max(np.abs(w.u - previous.u))) < tol:
            break
        previous, n = w, 2.0 * n
    else:
        raise NoConvergence('two-sided penalization did not settle', n=n, tol=tol)

    eta1 = Barrier.from_grid(grid, np.minimum(w.u, v), np.minimum(w.u_left, v_left), name='eta1')
    eta2 = Barrier.from_grid(grid, np.maximum(w.u, v), np.maximum(w.u_left, v_left), name='eta2')
    logger.info(f"Barreiras reduzidas com n={n:g}")
    return eta1, eta2
