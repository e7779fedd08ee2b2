"""
Esquema das experiências (pydantic v2) e carregamento de ficheiros JSON/YAML.
"""
import hashlib
import logging
import os
from typing import Dict, List, Literal, Optional, Tuple

import orjson
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from pydantic import ValidationError as PydanticValidationError

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ('pde', 'obstacle1', 'obstacle2', 'switching', 'certify')


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class FunctionSpec(StrictModel):
    """Perfil nomeado; `time` multiplica o perfil espacial por q(t)

    `grid_table` lê amostras (k, i, a, b) da malha e só vale para coeficientes.
    """
    kind: Literal['constant', 'sine', 'sinusoidal', 'linear', 'linear-in-t', 'exp',
                  'gaussian', 'table', 'grid_table'] = 'constant'
    params: Dict[str, float] = Field(default_factory=dict)
    path: Optional[str] = None
    floor: Optional[float] = None
    ceiling: Optional[float] = None
    time: Optional['FunctionSpec'] = None

    @model_validator(mode='after')
    def _table_needs_path(self):
        if self.kind in ('table', 'grid_table') and not self.path:
            raise ValueError(f'{self.kind} profiles need a path')
        if self.floor is not None and self.ceiling is not None and self.floor > self.ceiling:
            raise ValueError('floor exceeds ceiling')
        return self


FunctionSpec.model_rebuild()


class GridConfig(StrictModel):
    x_min: float = 0.0
    x_max: float = 1.0
    n_x: PositiveInt = 49
    T: PositiveFloat = 1.0
    n_t: PositiveInt = 100


class CoefficientConfig(StrictModel):
    a: FunctionSpec = FunctionSpec(kind='constant', params={'value': 1.0})
    b: FunctionSpec = FunctionSpec(kind='constant', params={'value': 0.0})
    a_floor: Optional[PositiveFloat] = None
    upwind: Literal['auto', 'always', 'never'] = 'auto'


class ReactionConfig(StrictModel):
    kind: Literal['zero', 'constant', 'linear', 'cubic', 'source'] = 'zero'
    value: float = 0.0
    offset: float = 0.0
    rate: float = 0.0
    source: Optional[FunctionSpec] = None

    @model_validator(mode='after')
    def _source_needs_profile(self):
        if self.kind == 'source' and self.source is None:
            raise ValueError('source reactions need a source profile')
        return self


class MeasureComponentConfig(StrictModel):
    kind: Literal['ac', 'time_atom', 'space_atom', 'point_atom']
    density: Optional[FunctionSpec] = None
    t0: Optional[float] = None
    x0: Optional[float] = None
    mass: Optional[float] = None
    sign: float = 1.0

    @model_validator(mode='after')
    def _required_fields(self):
        needed = {'ac': ('density',), 'time_atom': ('t0', 'density'),
                  'space_atom': ('x0', 'density'), 'point_atom': ('t0', 'x0', 'mass')}[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.kind} component is missing {", ".join(missing)}')
        return self


class BarrierSegmentConfig(StrictModel):
    t_start: float = 0.0
    profile: FunctionSpec


class BarrierConfig(StrictModel):
    name: str = 'barrier'
    segments: List[BarrierSegmentConfig] = Field(min_length=1)


class ModeConfig(StrictModel):
    name: str = ''
    terminal: FunctionSpec = FunctionSpec()
    reaction: ReactionConfig = ReactionConfig()
    measure: List[MeasureComponentConfig] = Field(default_factory=list)
    adjacency: Optional[List[int]] = None


class SwitchingCostConfig(StrictModel):
    source: int
    target: int
    cost: FunctionSpec


class SwitchingConfig(StrictModel):
    modes: List[ModeConfig] = Field(min_length=1)
    costs: List[SwitchingCostConfig] = Field(default_factory=list)
    default_cost: Optional[PositiveFloat] = None
    cost_floor: PositiveFloat = 1e-3
    method: Literal['picard', 'dp', 'both'] = 'picard'
    start_mode: int = 0
    eps_switch: Optional[PositiveFloat] = None


class MonteCarloConfig(StrictModel):
    seed: int = 0
    n_paths: PositiveInt = 20000
    block_size: PositiveInt = 4096
    bridge_correction: bool = True
    tree_depth: PositiveInt = 2000
    z0: Tuple[float, float] = (0.0, 0.5)
    n_perturbations: int = Field(default=20, ge=0)
    band_floor: PositiveFloat = 1e-2


class ToleranceConfig(StrictModel):
    step: PositiveFloat = 1e-10
    complementarity: PositiveFloat = 1e-8
    comparison: PositiveFloat = 1e-8
    separation: PositiveFloat = 1e-10
    picard: PositiveFloat = 1e-9
    compatibility: PositiveFloat = 1e-12
    tree: PositiveFloat = 5e-3


class CertifyConfig(StrictModel):
    target: Literal['obstacle1', 'switching'] = 'obstacle1'
    tree: bool = True
    rbsde: bool = True
    uniqueness: bool = True
    strategy: bool = True


class OutputConfig(StrictModel):
    directory: Optional[str] = None
    write_u: bool = True
    write_nu: bool = True


class ExperimentConfig(StrictModel):
    name: str = 'experiment'
    kind: Literal['pde', 'obstacle1', 'obstacle2', 'switching', 'certify']
    grid: GridConfig = GridConfig()
    coefficients: CoefficientConfig = CoefficientConfig()
    terminal: FunctionSpec = FunctionSpec()
    reaction: ReactionConfig = ReactionConfig()
    measure: List[MeasureComponentConfig] = Field(default_factory=list)
    barrier: Optional[BarrierConfig] = None
    lower_barrier: Optional[BarrierConfig] = None
    upper_barrier: Optional[BarrierConfig] = None
    penalty_ladder: List[PositiveFloat] = Field(default_factory=list)
    active_set_init: Literal['previous', 'empty', 'full'] = 'previous'
    switching: Optional[SwitchingConfig] = None
    monte_carlo: MonteCarloConfig = MonteCarloConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    certify: CertifyConfig = CertifyConfig()
    outputs: OutputConfig = OutputConfig()

    @model_validator(mode='after')
    def _sections_for_kind(self):
        target = self.certify.target if self.kind == 'certify' else self.kind
        if target == 'obstacle1' and self.barrier is None:
            raise ValueError('obstacle1 experiments need a barrier section')
        if target == 'obstacle2' and (self.lower_barrier is None or self.upper_barrier is None):
            raise ValueError('obstacle2 experiments need lower_barrier and upper_barrier')
        if target == 'switching' and self.switching is None:
            raise ValueError('switching experiments need a switching section')
        return self

    @property
    def target(self) -> str:
        return self.certify.target if self.kind == 'certify' else self.kind


def _plain_errors(exc: PydanticValidationError) -> List[Dict]:
    return [{'loc': [str(part) for part in err['loc']], 'msg': err['msg'], 'type': err['type']}
            for err in exc.errors()]


def parse_config(data: Dict) -> ExperimentConfig:
    """Validar o dicionário; chaves de topo começadas por "_" são comentários"""
    data = {k: v for k, v in data.items() if not str(k).startswith("_")}
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as exc:
        raise ConfigError('invalid experiment configuration', errors=_plain_errors(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    """Ler um ficheiro de experiência (.json, .yaml ou .yml)"""
    if not os.path.exists(path):
        raise ConfigError('configuration file not found', path=path)
    with open(path, 'rb') as f:
        raw = f.read()
    try:
        if path.endswith(('.yaml', '.yml')):
            data = yaml.safe_load(raw)
        else:
            data = orjson.loads(raw)
    except (orjson.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError('configuration file is not valid JSON/YAML', path=path,
                          reason=str(exc)) from exc
    if not isinstance(data, dict):
        raise ConfigError('configuration root must be a mapping', path=path)
    config = parse_config(data)
    logger.info(f"Configuração carregada: {config.name} ({config.kind}) de {path}")
    return config


def canonical_bytes(config: ExperimentConfig) -> bytes:
    return orjson.dumps(config.model_dump(mode='json'), option=orjson.OPT_SORT_KEYS)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 da forma canónica (chaves ordenadas, valores por omissão incluídos)"""
    return hashlib.sha256(canonical_bytes(config)).hexdigest()
