"""
Construção dos objetos do domínio a partir de uma configuração validada.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import (BarrierConfig, CoefficientConfig, ExperimentConfig, FunctionSpec,
                     MeasureComponentConfig, ReactionConfig, SwitchingConfig)
from .exceptions import ConfigError
from .services.barriers import Barrier
from .services.forms import DiscreteForm, FormCoefficients, Grid, assemble
from .services.measures import (AbsolutelyContinuous, MeasureData, PointAtom, SpaceAtom,
                                TimeAtom)
from .services.pde import Reaction
from .services.switching import SwitchingMode, SwitchingProblem
from .utils.profiles import (grid_table_function, space_function, space_time_function,
                             time_function)

logger = logging.getLogger(__name__)


@dataclass
class Experiment:
    config: ExperimentConfig
    grid: Grid
    coeffs: FormCoefficients
    form: DiscreteForm
    phi: np.ndarray
    reaction: Reaction
    mu: MeasureData
    lower: Optional[Barrier] = None
    upper: Optional[Barrier] = None
    switching: Optional[SwitchingProblem] = None

    @property
    def z0(self):
        return tuple(self.config.monte_carlo.z0)


def build_grid(config: ExperimentConfig) -> Grid:
    g = config.grid
    return Grid(g.x_min, g.x_max, g.n_x, g.T, g.n_t)


def _constant_value(spec: FunctionSpec) -> Optional[float]:
    if spec.kind == 'constant' and spec.time is None:
        value = spec.params.get('value', 0.0)
        if spec.floor is not None:
            value = max(value, spec.floor)
        if spec.ceiling is not None:
            value = min(value, spec.ceiling)
        return float(value)
    return None


def _coefficient_function(spec: FunctionSpec, column: str, grid: Optional[Grid],
                          base_dir: Optional[str]):
    if spec.kind != 'grid_table':
        return space_time_function(spec, base_dir)
    if grid is None:
        raise ConfigError('grid_table coefficients need the experiment grid', coefficient=column)
    return grid_table_function(spec, grid, column, base_dir)


def build_coefficients(section: CoefficientConfig, base_dir: Optional[str] = None,
                       grid: Optional[Grid] = None) -> FormCoefficients:
    a_const, b_const = _constant_value(section.a), _constant_value(section.b)
    if a_const is not None and b_const is not None:
        return FormCoefficients.constant(a_const, b_const, section.a_floor)
    a = _coefficient_function(section.a, 'a', grid, base_dir)
    b = _coefficient_function(section.b, 'b', grid, base_dir)
    if section.a_floor is None:
        raise ConfigError('variable diffusion coefficients need an explicit a_floor')
    return FormCoefficients(a=a, b=b, a_floor=section.a_floor, name='configured')


def build_reaction(section: ReactionConfig, base_dir: Optional[str] = None) -> Reaction:
    if section.kind == 'zero':
        return Reaction.zero()
    if section.kind == 'constant':
        return Reaction.constant(section.value)
    if section.kind == 'linear':
        return Reaction.linear(section.offset, section.rate)
    if section.kind == 'cubic':
        if section.rate < 0:
            raise ConfigError('cubic damping needs a nonnegative rate', rate=section.rate)
        offset, rate = section.offset, section.rate
        return Reaction(lambda t, x, y: offset - rate * y ** 3,
                        df_dy=lambda t, x, y: -3.0 * rate * y ** 2,
                        monotonicity=0.0, name=f'cubic({offset:g},{rate:g})')
    return Reaction.from_source(space_time_function(section.source, base_dir))


def build_measure(components: Sequence[MeasureComponentConfig],
                  base_dir: Optional[str] = None) -> MeasureData:
    ac, time_atoms, space_atoms, point_atoms = [], [], [], []
    for c in components:
        if c.kind == 'ac':
            ac.append(AbsolutelyContinuous(space_time_function(c.density, base_dir), c.sign))
        elif c.kind == 'time_atom':
            time_atoms.append(TimeAtom(c.t0, space_function(c.density, base_dir), c.sign))
        elif c.kind == 'space_atom':
            space_atoms.append(SpaceAtom(c.x0, time_function(c.density, base_dir), c.sign))
        else:
            point_atoms.append(PointAtom(c.t0, c.x0, c.mass, c.sign))
    return MeasureData(tuple(ac), tuple(time_atoms), tuple(space_atoms), tuple(point_atoms))


def build_barrier(section: Optional[BarrierConfig], grid: Grid, side: str,
                  base_dir: Optional[str] = None) -> Barrier:
    if section is None:
        return Barrier.none(side)
    pieces = [(seg.t_start, space_time_function(seg.profile, base_dir)) for seg in section.segments]
    return Barrier.piecewise(grid, pieces, name=section.name)


def build_switching(section: SwitchingConfig, base_dir: Optional[str] = None) -> SwitchingProblem:
    """Modos com custos constantes ou perfis; adjacência por omissão completa"""
    N = len(section.modes)
    modes = []
    for j, mode in enumerate(section.modes):
        adjacency = ([i for i in range(N) if i != j] if mode.adjacency is None
                     else list(mode.adjacency))
        modes.append(SwitchingMode(
            phi=space_function(mode.terminal, base_dir),
            reaction=build_reaction(mode.reaction, base_dir),
            mu=build_measure(mode.measure, base_dir),
            adjacency=tuple(adjacency),
            name=mode.name or f'mode{j}',
        ))
    costs = {}
    for entry in section.costs:
        costs[(entry.source, entry.target)] = space_time_function(entry.cost, base_dir)
    if section.default_cost is not None:
        value = section.default_cost
        for j, mode in enumerate(modes):
            for i in mode.adjacency:
                costs.setdefault((j, i), lambda t, x, v=value: np.full(np.shape(x), v))
    if not 0 <= section.start_mode < N:
        raise ConfigError('start mode out of range', start_mode=section.start_mode, N=N)
    return SwitchingProblem(tuple(modes), costs, cost_floor=section.cost_floor)


def build_experiment(config: ExperimentConfig, base_dir: Optional[str] = None) -> Experiment:
    """Grid, forma montada, dados terminais, reação, medida, barreiras e sistema"""
    grid = build_grid(config)
    coeffs = build_coefficients(config.coefficients, base_dir, grid)
    form = assemble(coeffs, grid, upwind=config.coefficients.upwind)
    phi = space_function(config.terminal, base_dir)(grid.nodes)
    reaction = build_reaction(config.reaction, base_dir)
    mu = build_measure(config.measure, base_dir)
    mu.validate(grid)

    target = config.target
    lower = upper = None
    if target == 'obstacle1':
        lower = build_barrier(config.barrier, grid, 'lower', base_dir)
    elif target == 'obstacle2':
        lower = build_barrier(config.lower_barrier, grid, 'lower', base_dir)
        upper = build_barrier(config.upper_barrier, grid, 'upper', base_dir)
    switching = build_switching(config.switching, base_dir) if target == 'switching' else None

    logger.info(f"Experiência '{config.name}': {target}, n_x={grid.n_x}, n_t={grid.n_t}")
    return Experiment(config, grid, coeffs, form, np.asarray(phi, dtype=float), reaction, mu,
                      lower, upper, switching)
