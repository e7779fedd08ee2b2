"""
Perfis nomeados usados pelas configurações (coeficientes, dados terminais,
barreiras, densidades de medida e fontes).
"""
import os
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from ..exceptions import ConfigError

DEFAULT_PARAMS: Dict[str, Dict[str, float]] = {
    'constant': {'value': 0.0},
    'sine': {'amplitude': 1.0, 'frequency': 1.0, 'phase': 0.0, 'offset': 0.0},
    'linear': {'slope': 0.0, 'intercept': 0.0},
    'exp': {'amplitude': 1.0, 'rate': 1.0, 'offset': 0.0},
    'gaussian': {'amplitude': 1.0, 'center': 0.5, 'width': 0.1},
    'table': {},
    'linear-in-t': {'slope': 0.0, 'intercept': 0.0},
    'grid_table': {},
}

# nomes alternativos aceites nas configurações
KIND_ALIASES = {'sinusoidal': 'sine'}

GRID_TABLE_COLUMNS = ('k', 'i', 'a', 'b')


def canonical_kind(kind: str) -> str:
    return KIND_ALIASES.get(kind, kind)


def _params(spec) -> Dict[str, float]:
    defaults = DEFAULT_PARAMS[canonical_kind(spec.kind)]
    unknown = set(spec.params) - set(defaults)
    if unknown:
        raise ConfigError('unknown profile parameters', kind=spec.kind, unknown=sorted(unknown))
    return {**defaults, **spec.params}


def _resolve(path: str, base_dir: Optional[str]) -> str:
    full = path if os.path.isabs(path) or base_dir is None else os.path.join(base_dir, path)
    if not os.path.exists(full):
        raise ConfigError('profile table not found', path=full)
    return full


def load_table(path: str, base_dir: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Tabela CSV com colunas (x, value), ordenada por x"""
    full = _resolve(path, base_dir)
    frame = pd.read_csv(full)
    if not {'x', 'value'} <= set(frame.columns):
        raise ConfigError('profile table needs x and value columns', path=full,
                          columns=list(frame.columns))
    frame = frame.sort_values('x')
    return frame['x'].to_numpy(dtype=float), frame['value'].to_numpy(dtype=float)


def _base_function(spec, base_dir: Optional[str]) -> Callable[[np.ndarray], np.ndarray]:
    p = _params(spec)
    kind = canonical_kind(spec.kind)
    if kind == 'constant':
        return lambda s: np.full(np.shape(s), p['value'])
    if kind == 'sine':
        return lambda s: p['amplitude'] * np.sin(p['frequency'] * np.pi * np.asarray(s) + p['phase']) + p['offset']
    if kind in ('linear', 'linear-in-t'):
        return lambda s: p['slope'] * np.asarray(s) + p['intercept']
    if kind == 'exp':
        return lambda s: p['amplitude'] * np.exp(p['rate'] * np.asarray(s)) + p['offset']
    if kind == 'gaussian':
        return lambda s: p['amplitude'] * np.exp(-0.5 * ((np.asarray(s) - p['center']) / p['width']) ** 2)
    if kind == 'grid_table':
        raise ConfigError('grid_table profiles are only valid for form coefficients',
                          path=spec.path)
    xs, values = load_table(spec.path, base_dir)
    return lambda s: np.interp(s, xs, values)


def _clipped(fn: Callable, spec) -> Callable:
    if spec.floor is None and spec.ceiling is None:
        return fn
    lo = -np.inf if spec.floor is None else spec.floor
    hi = np.inf if spec.ceiling is None else spec.ceiling
    return lambda *args: np.clip(fn(*args), lo, hi)


def space_function(spec, base_dir: Optional[str] = None) -> Callable[[np.ndarray], np.ndarray]:
    """g(x); um fator temporal é ignorado (avaliado em t = 0)"""
    if spec.kind == 'linear-in-t':
        fn = space_time_function(spec, base_dir)
        return lambda x: fn(0.0, x)
    if spec.time is not None:
        q0 = float(time_function(spec.time)(0.0))
        base = _base_function(spec, base_dir)
        return _clipped(lambda x: q0 * base(x), spec)
    return _clipped(_base_function(spec, base_dir), spec)


def time_function(spec, base_dir: Optional[str] = None) -> Callable[[np.ndarray], np.ndarray]:
    """q(t), vetorizada em t"""
    return _clipped(_base_function(spec, base_dir), spec)


def space_time_function(spec, base_dir: Optional[str] = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """g(x)·q(t); `linear-in-t` é constante em x e afim em t"""
    if spec.kind == 'linear-in-t':
        ramp = _base_function(spec, base_dir)
        q = (lambda t: 1.0) if spec.time is None else time_function(spec.time, base_dir)
        return _clipped(lambda t, x: np.full(np.shape(x), float(ramp(np.asarray(t)) * q(np.asarray(t)))),
                        spec)
    space = _base_function(spec, base_dir)
    if spec.time is None:
        return _clipped(lambda t, x: space(x), spec)
    time = time_function(spec.time, base_dir)
    return _clipped(lambda t, x: space(x) * float(time(np.asarray(t))), spec)


def load_grid_table(path: str, grid, base_dir: Optional[str] = None) -> Dict[str, np.ndarray]:
    """Amostras (k, i, a, b) por instante k = 0..n_t e elemento i = 0..n_x da malha

    Devolve {'a': ..., 'b': ...} com forma (n_t + 1, n_x + 1); cada par (k, i) aparece
    exatamente uma vez.
    """
    full = _resolve(path, base_dir)
    frame = pd.read_csv(full)
    missing = [name for name in GRID_TABLE_COLUMNS if name not in frame.columns]
    if missing:
        raise ConfigError('grid table needs k, i, a and b columns', path=full, missing=missing)
    shape = (grid.n_t + 1, grid.n_x + 1)
    k = frame['k'].to_numpy()
    i = frame['i'].to_numpy()
    if not (np.issubdtype(k.dtype, np.integer) and np.issubdtype(i.dtype, np.integer)):
        raise ConfigError('grid table indices must be integers', path=full)
    if len(frame) and (k.min() < 0 or k.max() >= shape[0] or i.min() < 0 or i.max() >= shape[1]):
        raise ConfigError('grid table index outside the grid', path=full,
                          k_range=[int(k.min()), int(k.max())],
                          i_range=[int(i.min()), int(i.max())], shape=list(shape))
    flat = k * shape[1] + i
    if len(frame) != shape[0] * shape[1] or np.unique(flat).size != flat.size:
        raise ConfigError('grid table does not cover the grid exactly once', path=full,
                          rows=len(frame), expected=shape[0] * shape[1])
    out = {}
    for column in ('a', 'b'):
        values = np.empty(shape[0] * shape[1])
        values[flat] = frame[column].to_numpy(dtype=float)
        out[column] = values.reshape(shape)
    return out


def grid_table_function(spec, grid, column: str,
                        base_dir: Optional[str] = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """Coeficiente amostrado por (k, i): instante de malha mais próximo, linear entre elementos"""
    table = load_grid_table(spec.path, grid, base_dir)[column]
    midpoints = grid.element_midpoints
    fn = lambda t, x: np.interp(x, midpoints, table[grid.index_of(float(t))])
    return _clipped(fn, spec)
