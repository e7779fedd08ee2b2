"""
Dados de medida com sinal em (0, T] x E e a sua discretização em cargas nodais.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..exceptions import AtomOutOfDomain, NonFinite
from .forms import DiscreteForm, Grid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AbsolutelyContinuous:
    """Densidade d(t, x) por unidade de tempo e comprimento"""
    density: Callable[[float, np.ndarray], np.ndarray]
    sign: float = 1.0

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.sign * np.broadcast_to(np.asarray(self.density(t, x), dtype=float), x.shape)


@dataclass(frozen=True)
class TimeAtom:
    """Átomo no instante t0 com densidade espacial g(x)"""
    t0: float
    profile: Callable[[np.ndarray], np.ndarray]
    sign: float = 1.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.sign * np.broadcast_to(np.asarray(self.profile(x), dtype=float), x.shape)


@dataclass(frozen=True)
class SpaceAtom:
    """Átomo no ponto x0 com densidade temporal q(t)"""
    x0: float
    rate: Callable[[np.ndarray], np.ndarray]
    sign: float = 1.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return self.sign * np.broadcast_to(np.asarray(self.rate(t), dtype=float), t.shape)


@dataclass(frozen=True)
class PointAtom:
    t0: float
    x0: float
    mass: float
    sign: float = 1.0


@dataclass(frozen=True)
class MeasureData:
    """Medida com sinal decomposta por componentes"""
    ac: Tuple[AbsolutelyContinuous, ...] = ()
    time_atoms: Tuple[TimeAtom, ...] = ()
    space_atoms: Tuple[SpaceAtom, ...] = ()
    point_atoms: Tuple[PointAtom, ...] = ()

    @classmethod
    def zero(cls) -> 'MeasureData':
        return cls()

    def __add__(self, other: 'MeasureData') -> 'MeasureData':
        return MeasureData(
            ac=self.ac + other.ac,
            time_atoms=self.time_atoms + other.time_atoms,
            space_atoms=self.space_atoms + other.space_atoms,
            point_atoms=self.point_atoms + other.point_atoms,
        )

    def scaled(self, factor: float) -> 'MeasureData':
        return MeasureData(
            ac=tuple(replace(c, sign=c.sign * factor) for c in self.ac),
            time_atoms=tuple(replace(c, sign=c.sign * factor) for c in self.time_atoms),
            space_atoms=tuple(replace(c, sign=c.sign * factor) for c in self.space_atoms),
            point_atoms=tuple(replace(c, sign=c.sign * factor) for c in self.point_atoms),
        )

    def positive_part(self) -> 'MeasureData':
        """Parte positiva componente a componente"""
        ac = tuple(AbsolutelyContinuous(lambda t, x, c=c: np.maximum(c.evaluate(t, x), 0.0))
                   for c in self.ac)
        time_atoms = tuple(TimeAtom(c.t0, lambda x, c=c: np.maximum(c.evaluate(x), 0.0))
                           for c in self.time_atoms)
        space_atoms = tuple(SpaceAtom(c.x0, lambda t, c=c: np.maximum(c.evaluate(t), 0.0))
                            for c in self.space_atoms)
        point_atoms = tuple(PointAtom(c.t0, c.x0, c.sign * c.mass)
                            for c in self.point_atoms if c.sign * c.mass > 0.0)
        return MeasureData(ac, time_atoms, space_atoms, point_atoms)

    @property
    def is_zero(self) -> bool:
        return not (self.ac or self.time_atoms or self.space_atoms or self.point_atoms)

    @property
    def has_spatial_atoms(self) -> bool:
        return bool(self.space_atoms or self.point_atoms)

    def validate(self, grid: Grid) -> None:
        for atom in self.time_atoms + self.point_atoms:
            if not 0.0 < atom.t0 <= grid.T:
                raise AtomOutOfDomain('atom time outside (0, T]', t0=atom.t0, T=grid.T)
        for atom in self.space_atoms + self.point_atoms:
            if not grid.contains(atom.x0):
                raise AtomOutOfDomain('atom position outside (x_min, x_max)', x0=atom.x0,
                                      x_min=grid.x_min, x_max=grid.x_max)

    def density_at(self, t: float, x: np.ndarray) -> np.ndarray:
        """Soma das densidades absolutamente contínuas"""
        total = np.zeros_like(np.asarray(x, dtype=float))
        for component in self.ac:
            total = total + component.evaluate(t, x)
        return total


@dataclass(frozen=True)
class SnapRecord:
    kind: str
    requested: float
    snapped: float
    distance: float


@dataclass
class DiscreteLoad:
    """Cargas por passo (unidades de massa) e átomos temporais por índice"""
    continuous: np.ndarray
    atoms: Dict[int, np.ndarray] = field(default_factory=dict)
    snaps: List[SnapRecord] = field(default_factory=list)

    @classmethod
    def zeros(cls, grid: Grid) -> 'DiscreteLoad':
        return cls(continuous=np.zeros((grid.n_t, grid.n_x + 2)))

    def atom(self, k: int) -> Optional[np.ndarray]:
        return self.atoms.get(k)

    def add_atom(self, k: int, values: np.ndarray) -> None:
        if k in self.atoms:
            self.atoms[k] = self.atoms[k] + values
        else:
            self.atoms[k] = np.array(values, dtype=float)

    def __add__(self, other: 'DiscreteLoad') -> 'DiscreteLoad':
        out = DiscreteLoad(continuous=self.continuous + other.continuous,
                           atoms={k: v.copy() for k, v in self.atoms.items()},
                           snaps=self.snaps + other.snaps)
        for k, values in other.atoms.items():
            out.add_atom(k, values)
        return out

    def without_atom(self, k: int) -> Tuple['DiscreteLoad', Optional[np.ndarray]]:
        atoms = dict(self.atoms)
        removed = atoms.pop(k, None)
        return DiscreteLoad(self.continuous, atoms, list(self.snaps)), removed

    def total_mass(self) -> float:
        return float(self.continuous.sum() + sum(v.sum() for v in self.atoms.values()))

    def to_frame(self) -> pd.DataFrame:
        """Tabela (k, i, continuous, atom) para inspeção"""
        n_rows, n_nodes = self.continuous.shape
        k_index = np.repeat(np.arange(n_rows + 1), n_nodes)
        i_index = np.tile(np.arange(n_nodes), n_rows + 1)
        continuous = np.vstack([self.continuous, np.zeros(n_nodes)]).ravel()
        atom = np.zeros((n_rows + 1, n_nodes))
        for k, values in self.atoms.items():
            atom[k] = values
        return pd.DataFrame({'k': k_index, 'i': i_index,
                             'continuous': continuous, 'atom': atom.ravel()})


def _spatial_split(x0: float, grid: Grid) -> Tuple[int, float]:
    """Nó à esquerda e peso linear do vizinho direito"""
    s = (x0 - grid.x_min) / grid.dx
    r = round(s)
    if abs(s - r) <= 1e-9:
        return int(r), 0.0
    j = min(max(int(np.floor(s)), 0), grid.n_x)
    return j, s - j


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFinite(f'non-finite samples in {what}')


def discretize(mu: MeasureData, grid: Grid) -> DiscreteLoad:
    """Distribuir a medida pelos passos e nós da malha conservando a massa"""
    mu.validate(grid)
    load = DiscreteLoad.zeros(grid)
    dt = grid.dt
    t_mid = grid.times[:-1] + 0.5 * dt
    widths = grid.cell_widths
    midpoints = grid.cell_midpoints

    for component in mu.ac:
        for k in range(grid.n_t):
            load.continuous[k] += component.evaluate(float(t_mid[k]), midpoints) * dt * widths
    _check_finite(load.continuous, 'absolutely continuous part')

    for atom in mu.space_atoms:
        j, theta = _spatial_split(atom.x0, grid)
        masses = atom.evaluate(t_mid) * dt
        _check_finite(masses, 'space atom rate')
        load.continuous[:, j] += (1.0 - theta) * masses
        if theta > 0.0:
            load.continuous[:, j + 1] += theta * masses

    for atom in mu.time_atoms:
        k, distance = grid.snap(atom.t0, lowest=1)
        values = atom.evaluate(midpoints) * widths
        _check_finite(values, 'time atom profile')
        load.add_atom(k, values)
        _record_snap(load, 'time_atom', atom.t0, float(grid.times[k]), distance)

    for atom in mu.point_atoms:
        k, distance = grid.snap(atom.t0, lowest=1)
        j, theta = _spatial_split(atom.x0, grid)
        values = np.zeros(grid.n_x + 2)
        values[j] += (1.0 - theta) * atom.sign * atom.mass
        if theta > 0.0:
            values[j + 1] += theta * atom.sign * atom.mass
        load.add_atom(k, values)
        _record_snap(load, 'point_atom', atom.t0, float(grid.times[k]), distance)

    return load


def _record_snap(load: DiscreteLoad, kind: str, requested: float, snapped: float,
                 distance: float) -> None:
    load.snaps.append(SnapRecord(kind, requested, snapped, distance))
    if distance > 1e-12:
        logger.warning(f"Átomo ({kind}) ajustado de t={requested:.6g} para t={snapped:.6g}")


def weighted_norm(mu: MeasureData, rho: Callable[[float, np.ndarray], np.ndarray],
                  grid: Grid) -> float:
    """Norma ponderada Σ ρ·|carga| das componentes discretizadas"""
    load = discretize(mu, grid)
    nodes = grid.all_nodes
    t_mid = grid.times[:-1] + 0.5 * grid.dt
    total = 0.0
    for k in range(grid.n_t):
        weight = np.broadcast_to(np.asarray(rho(float(t_mid[k]), nodes), dtype=float), nodes.shape)
        total += float(np.sum(weight * np.abs(load.continuous[k])))
    for k, values in sorted(load.atoms.items()):
        weight = np.broadcast_to(np.asarray(rho(float(grid.times[k]), nodes), dtype=float),
                                 nodes.shape)
        total += float(np.sum(weight * np.abs(values)))
    if not np.isfinite(total):
        raise NonFinite('weighted norm is not finite')
    return total


def potential(mu: MeasureData, form: DiscreteForm, grid: Grid, step_tol: float = 1e-10):
    """Potencial discreto: solução retrógrada com reação nula e carga μ

    O átomo em T (se existir) passa a dado terminal.
    """
    from .pde import Reaction, solve_pde_with_load

    load = discretize(mu, grid)
    load, terminal_atom = load.without_atom(grid.n_t)
    phi = np.zeros(grid.n_x)
    if terminal_atom is not None:
        phi = terminal_atom[1:-1] / form.interior_mass
    return solve_pde_with_load(phi, Reaction.zero(), load, form, grid, step_tol=step_tol)
