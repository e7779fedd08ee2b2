"""
Escrita de artefactos (CSV/JSON) e manifesto reprodutível de cada execução.
"""
import hashlib
import logging
import platform
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numba
import numpy as np
import orjson
import pandas as pd
import scipy

from . import __version__
from .config import ExperimentConfig, canonical_bytes, config_hash
from .exceptions import ConfigError

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
FLOAT_FORMAT = '%.17g'
MANIFEST_NAME = 'manifest.json'


def _default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'cannot serialize {type(value).__name__}')


def _finite(value: Any) -> Any:
    """inf/nan não são JSON válido: passam a texto"""
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def dumps(payload: Any) -> bytes:
    return orjson.dumps(_finite(payload), option=JSON_OPTIONS, default=_default)


def file_checksum(path: Path) -> str:
    """SHA-256 do ficheiro lido por blocos"""
    sha256_hash = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            sha256_hash.update(chunk)
    return sha256_hash.hexdigest()


def library_versions() -> Dict[str, str]:
    return {
        'obstacle_kit': __version__,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
        'numba': numba.__version__,
    }


class RunArtifacts:
    """Diretório de saída de uma execução"""

    def __init__(self, directory: str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.directory / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        self._register(name)
        logger.debug(f"CSV escrito: {path} ({len(frame)} linhas)")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        path = self.directory / name
        path.write_bytes(dumps(payload))
        self._register(name)
        return path

    def _register(self, name: str) -> None:
        if name not in self.files:
            self.files.append(name)

    def export(self, targets: Dict[str, str]) -> Dict[str, str]:
        """Copiar artefactos escritos para caminhos externos; devolve {artefacto: destino}"""
        done = {}
        for name, destination in sorted(targets.items()):
            if name not in self.files:
                raise ConfigError('requested output was not produced by this run', artifact=name,
                                  destination=str(destination))
            target = Path(destination)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(self.directory / name, target)
            done[name] = str(target)
            logger.info(f"Artefacto {name} copiado para {target}")
        return done

    def write_manifest(self, config: ExperimentConfig, seeds: Optional[Dict[str, int]] = None,
                       command: Optional[str] = None) -> Path:
        """Hash da configuração, versões, sementes e checksums; sem carimbos temporais"""
        manifest = {
            'experiment': config.name,
            'kind': config.kind,
            'command': command,
            'config_sha256': config_hash(config),
            'config': orjson.loads(canonical_bytes(config)),
            'versions': library_versions(),
            'seeds': seeds or {},
            'artifacts': [{'path': name, 'sha256': file_checksum(self.directory / name)}
                          for name in sorted(self.files)],
        }
        path = self.directory / MANIFEST_NAME
        path.write_bytes(dumps(manifest))
        logger.info(f"Manifesto escrito em {path} ({len(self.files)} artefactos)")
        return path


def read_json(path: Path) -> Dict:
    return orjson.loads(Path(path).read_bytes())


def read_field_csv(path: str, columns: Tuple[str, ...] = ('t', 'x', 'u')) -> pd.DataFrame:
    """Campo u escrito por uma execução anterior (colunas t, x, u e opcionalmente mode)"""
    if not Path(path).exists():
        raise ConfigError('reference field file not found', path=str(path))
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ConfigError('reference field is not a readable CSV', path=str(path),
                          reason=str(exc)) from exc
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise ConfigError('reference field is missing columns', path=str(path), missing=missing)
    values = frame[list(columns)].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise ConfigError('reference field has non-finite entries', path=str(path))
    return frame
