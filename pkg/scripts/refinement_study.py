#!/usr/bin/env python3
"""
============================================================
OBSTACLE_KIT - ESTUDO DE REFINAMENTO
============================================================

Refina Δx e Δt por metade a partir de uma configuração e regista o valor em z0,
o erro contra uma referência (exata no calor, árvore trinomial no obstáculo) e a
razão entre erros consecutivos.

Uso:
    python3 scripts/refinement_study.py configs/heat_pde.json --levels 4
    python3 scripts/refinement_study.py configs/p1_obstacle.json --out results/refino
============================================================
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from obstacle_kit.config import ExperimentConfig, load_config  # noqa: E402
from obstacle_kit.exceptions import ObstacleKitError, RegimeViolation, ValidationError  # noqa: E402
from obstacle_kit.experiment import build_experiment  # noqa: E402
from obstacle_kit.services.montecarlo import snell_oracle  # noqa: E402
from obstacle_kit.services.obstacle import solve_one_barrier  # noqa: E402
from obstacle_kit.services.pde import solve_pde  # noqa: E402
from obstacle_kit.storage import RunArtifacts  # noqa: E402
from obstacle_kit.utils.logger import setup_logging  # noqa: E402

logger = logging.getLogger('obstacle_kit.refinement')


def refined(config: ExperimentConfig, level: int) -> ExperimentConfig:
    """Nível k: n_x -> 2^k (n_x + 1) - 1 e n_t -> 2^k n_t"""
    g = config.grid
    grid = g.model_copy(update={'n_x': 2 ** level * (g.n_x + 1) - 1, 'n_t': 2 ** level * g.n_t})
    return config.model_copy(update={'grid': grid})


def heat_reference(config: ExperimentConfig) -> float:
    t0, x0 = config.monte_carlo.z0
    T = config.grid.T
    length = config.grid.x_max - config.grid.x_min
    return float(np.exp(-(np.pi / length) ** 2 * (T - t0))
                 * np.sin(np.pi * (x0 - config.grid.x_min) / length))


def study_level(config: ExperimentConfig, base_dir: str) -> Dict:
    exp = build_experiment(config, base_dir)
    if config.target == 'pde':
        value = solve_pde(exp.phi, exp.reaction, exp.mu, exp.form, exp.grid).at(*exp.z0)
        reference = heat_reference(config)
    elif config.target == 'obstacle1':
        value = solve_one_barrier(exp.phi, exp.reaction, exp.mu, exp.lower, exp.form,
                                  exp.grid).at(*exp.z0)
        reference = snell_oracle(exp.coeffs, exp.grid, exp.phi, exp.reaction, exp.mu, exp.lower,
                                 exp.z0, config.monte_carlo.tree_depth).value
    else:
        raise RegimeViolation('refinement study supports pde and obstacle1 targets only',
                              target=config.target)
    return {'n_x': exp.grid.n_x, 'n_t': exp.grid.n_t, 'dx': exp.grid.dx, 'dt': exp.grid.dt,
            'value': value, 'reference': reference, 'error': abs(value - reference)}


def plot_errors(frame: pd.DataFrame, path: Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.loglog(frame['dx'], frame['error'], 'o-', label='|u_h(z0) - referência|')
    anchor = frame['error'].iloc[0] / frame['dx'].iloc[0]
    ax.loglog(frame['dx'], anchor * frame['dx'], '--', color='gray', label='ordem 1')
    ax.set_xlabel('Δx')
    ax.set_ylabel('erro')
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which='both', alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def main(argv: List[str] = None) -> int:
    parser = argparse.ArgumentParser(description='Estudo de refinamento de malha')
    parser.add_argument('config', help='ficheiro de experiência (pde ou obstacle1)')
    parser.add_argument('--levels', type=int, default=3, help='número de refinamentos')
    parser.add_argument('--out', default=None, help='diretório de saída')
    parser.add_argument('--log-level', default='INFO')
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    try:
        config = load_config(args.config)
        base_dir = str(Path(args.config).resolve().parent)
        rows = []
        for level in range(args.levels + 1):
            row = study_level(refined(config, level), base_dir)
            if rows:
                row['ratio'] = rows[-1]['error'] / row['error'] if row['error'] > 0 else np.inf
            logger.info(f"Nível {level}: n_x={row['n_x']} n_t={row['n_t']} "
                        f"erro={row['error']:.3e}")
            rows.append(row)
    except ObstacleKitError as exc:
        logger.error(f"Estudo interrompido: {exc.message}")
        return 3 if isinstance(exc, ValidationError) else 2

    frame = pd.DataFrame(rows, columns=['n_x', 'n_t', 'dx', 'dt', 'value', 'reference', 'error',
                                        'ratio'])
    store = RunArtifacts(args.out or str(Path('results') / f'{config.name}_refinement'))
    store.write_csv('refinement.csv', frame)
    plot_errors(frame, store.directory / 'refinement.png', config.name)
    store.write_manifest(config, command='refinement-study')
    print(frame.to_string(index=False))
    return 0


if __name__ == '__main__':
    sys.exit(main())
