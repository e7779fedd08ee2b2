"""
Execução de experiências: despacho para os solvers e escrita dos artefactos.
"""
import logging
import os
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import ExperimentConfig
from .exceptions import ConfigError, RegimeViolation, SeparationFail
from .experiment import Experiment, build_experiment
from .services.barriers import check_separation
from .services.montecarlo import (evaluate_strategy, perturbed_rules, rbsde_backward,
                                  simulate_paths, snell_oracle, strategy_payoffs)
from .services.measures import discretize
from .services.obstacle import (equation_residual, minimality_residual, solve_one_barrier,
                                solve_penalized, solve_two_barrier,
                                solve_two_barrier_penalized)
from .services.pde import solve_pde
from .services.switching import (SwitchingRule, check_no_loop, mode_measures,
                                 solve_switching_dp, solve_switching_penalized,
                                 solve_switching_picard)
from .storage import RunArtifacts, read_field_csv

logger = logging.getLogger(__name__)

SUBCOMMAND_KINDS = {
    'solve-pde': ('pde', 'obstacle1', 'obstacle2'),
    'solve-obstacle': ('obstacle1', 'obstacle2'),
    'solve-switching': ('switching',),
    'certify': ('certify', 'obstacle1', 'switching'),
}


def _field_frame(grid, u: np.ndarray, mode: Optional[int] = None) -> pd.DataFrame:
    full = np.pad(u, ((0, 0), (1, 1)))
    frame = pd.DataFrame({'t': np.repeat(grid.times, grid.n_x + 2),
                          'x': np.tile(grid.all_nodes, grid.n_t + 1),
                          'u': full.ravel()})
    if mode is not None:
        frame.insert(0, 'mode', mode)
    return frame


def _base_report(exp: Experiment) -> Dict:
    return {'experiment': exp.config.name, 'kind': exp.config.kind, 'grid': exp.grid.to_dict(),
            'form': exp.form.report(), 'z0': list(exp.z0)}


def run_pde(exp: Experiment, store: RunArtifacts) -> Dict:
    tol = exp.config.tolerances
    sol = solve_pde(exp.phi, exp.reaction, exp.mu, exp.form, exp.grid, tol.step)
    if exp.config.outputs.write_u:
        store.write_csv('u.csv', sol.to_frame())
    _write_load(store, exp)
    report = _base_report(exp)
    report.update({
        'value_at_z0': sol.at(*exp.z0),
        'max_newton_iterations': int(sol.newton_iterations.max()),
        'max_step_residual': float(sol.residuals.max()),
        'step_methods': dict(sol.methods),
        'atom_indices': list(sol.atom_indices),
    })
    return report


def _penalty_frame(rows: List[Dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=['n', 'gap_sup', 'monotone_violation', 'lambda_norm'])


def run_obstacle1(exp: Experiment, store: RunArtifacts) -> Dict:
    cfg = exp.config
    tol = cfg.tolerances
    sol = solve_one_barrier(exp.phi, exp.reaction, exp.mu, exp.lower, exp.form, exp.grid,
                            tol.step, cfg.active_set_init, tol.compatibility)
    _write_obstacle(store, cfg, sol)
    _write_load(store, exp)
    report = _base_report(exp)
    report.update({
        'value_at_z0': sol.at(*exp.z0),
        'residuals': sol.residuals,
        'minimality': minimality_residual(sol).to_dict(),
        'equation_residual': equation_residual(sol, exp.phi, exp.reaction, exp.mu, exp.form,
                                               exp.grid, tol.step),
        'nu_atom_indices': list(sol.nu.atom_indices),
        'barrier_snaps': [vars(s) for s in exp.lower.snaps],
    })
    if cfg.penalty_ladder:
        rows, previous = [], None
        for n in cfg.penalty_ladder:
            pen = solve_penalized(exp.phi, exp.reaction, exp.mu, exp.lower, n, exp.form, exp.grid,
                                  tol.step)
            rows.append({'n': n, 'gap_sup': float(np.max(np.abs(pen.u - sol.u))),
                         'monotone_violation': 0.0 if previous is None
                         else float(max(np.max(previous.u - pen.u), 0.0)),
                         'lambda_norm': np.nan})
            previous = pen
        store.write_csv('penalty.csv', _penalty_frame(rows))
        report['penalty'] = rows
    return report


def run_obstacle2(exp: Experiment, store: RunArtifacts) -> Dict:
    cfg = exp.config
    tol = cfg.tolerances
    certificate = check_separation(exp.lower, exp.upper, exp.form, exp.grid, tol.separation)
    if not certificate:
        raise SeparationFail('barriers are not separated', witness=certificate.witness,
                             violation=certificate.violation)
    sol = solve_two_barrier(exp.phi, exp.reaction, exp.mu, exp.lower, exp.upper, exp.form,
                            exp.grid, tol.step, cfg.active_set_init, check=False,
                            compat_tol=tol.compatibility)
    _write_obstacle(store, cfg, sol)
    _write_load(store, exp)
    report = _base_report(exp)
    report.update({
        'value_at_z0': sol.at(*exp.z0),
        'separation': certificate.to_dict(),
        'residuals': sol.residuals,
        'minimality': minimality_residual(sol).to_dict(),
        'equation_residual': equation_residual(sol, exp.phi, exp.reaction, exp.mu, exp.form,
                                               exp.grid, tol.step),
    })
    if cfg.penalty_ladder:
        rows, previous = [], None
        for n in cfg.penalty_ladder:
            pen = solve_two_barrier_penalized(exp.phi, exp.reaction, exp.mu, exp.lower, exp.upper,
                                              n, exp.form, exp.grid, tol.step)
            lam = float(pen.nu.minus.sum() + sum(v.sum() for v in pen.nu.atoms_minus.values()))
            rows.append({'n': n, 'gap_sup': float(np.max(np.abs(pen.u - sol.u))),
                         'monotone_violation': 0.0 if previous is None
                         else float(max(np.max(previous.u - pen.u), 0.0)),
                         'lambda_norm': lam})
            previous = pen
        store.write_csv('penalty.csv', _penalty_frame(rows))
        report['penalty'] = rows
    return report


def _write_obstacle(store: RunArtifacts, cfg: ExperimentConfig, sol) -> None:
    if cfg.outputs.write_u:
        store.write_csv('u.csv', sol.solution.to_frame())
    if cfg.outputs.write_nu:
        store.write_csv('nu.csv', sol.nu.to_frame())


def _write_load(store: RunArtifacts, exp: Experiment) -> None:
    """Carga discreta de μ por passo e nó (colunas k, i, continuous, atom)"""
    store.write_csv('load.csv', discretize(exp.mu, exp.grid).to_frame())


def _solve_switching(exp: Experiment, method: str):
    tol = exp.config.tolerances
    if method == 'dp':
        return solve_switching_dp(exp.switching, exp.form, exp.grid)
    return solve_switching_picard(exp.switching, exp.form, exp.grid, tol=tol.picard,
                                  step_tol=tol.step,
                                  active_set_init=exp.config.active_set_init)


def _stopping_frame(grid, mask: np.ndarray) -> pd.DataFrame:
    return pd.DataFrame({'t': np.repeat(grid.times, grid.n_x),
                         'x': np.tile(grid.nodes, grid.n_t + 1),
                         'stop': mask.ravel().astype(int)})


def _write_switching_modes(store: RunArtifacts, exp: Experiment, sol) -> None:
    """ν^j e regiões de paragem {u^j ≤ H^j(u) + eps} por modo"""
    cfg = exp.config
    problem = exp.switching
    if cfg.outputs.write_nu:
        measures = mode_measures(problem, sol, exp.form, exp.grid, cfg.tolerances.step)
        for j, nu in enumerate(measures):
            store.write_csv(f'nu_{j}.csv', nu.to_frame())
    stopping = sol.stopping_regions(problem, cfg.switching.eps_switch)
    for j in range(problem.N):
        store.write_csv(f'stopping_{j}.csv', _stopping_frame(exp.grid, stopping[j]))


def run_switching(exp: Experiment, store: RunArtifacts) -> Dict:
    cfg = exp.config
    section = cfg.switching
    problem = exp.switching
    primary = 'dp' if section.method == 'dp' else 'picard'
    sol = _solve_switching(exp, primary)
    if cfg.outputs.write_u:
        frame = pd.concat([_field_frame(exp.grid, sol.u[j], j) for j in range(problem.N)],
                          ignore_index=True)
        store.write_csv('u.csv', frame)
    _write_switching_modes(store, exp, sol)
    store.write_json('iterations.json', {'method': sol.method, 'iterations': sol.iterations})
    report = _base_report(exp)
    report.update({
        'method': sol.method,
        'values_at_z0': [sol.at(j, *exp.z0) for j in range(problem.N)],
        'iterations': len(sol.iterations),
        'residuals': sol.residuals,
        'no_loop': check_no_loop(problem, exp.grid).to_dict(),
    })
    if section.method == 'both':
        dp = solve_switching_dp(problem, exp.form, exp.grid)
        report['dp_gap'] = float(np.max(np.abs(dp.u - sol.u)))
    if cfg.penalty_ladder:
        rows, previous = [], None
        for n in cfg.penalty_ladder:
            pen = solve_switching_penalized(problem, n, exp.form, exp.grid, step_tol=cfg.tolerances.step)
            rows.append({'n': n, 'gap_sup': float(np.max(np.abs(pen.u - sol.u))),
                         'monotone_violation': 0.0 if previous is None
                         else float(max(np.max(previous.u - pen.u), 0.0)),
                         'lambda_norm': np.nan})
            previous = pen
        store.write_csv('penalty.csv', _penalty_frame(rows))
        report['penalty'] = rows
    return report


def _check(name: str, passed: bool, **values) -> Dict:
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"Certificado {name}: {'ok' if passed else 'FALHOU'}")
    return {'name': name, 'passed': bool(passed), **values}


def _certify_obstacle(exp: Experiment, store: RunArtifacts) -> Tuple[List[Dict], pd.DataFrame]:
    cfg = exp.config
    tol, mc = cfg.tolerances, cfg.monte_carlo
    sol = solve_one_barrier(exp.phi, exp.reaction, exp.mu, exp.lower, exp.form, exp.grid,
                            tol.step, cfg.active_set_init, tol.compatibility)
    _write_obstacle(store, cfg, sol)
    value = sol.at(*exp.z0)
    checks = [_check('complementarity', sol.residuals['complementarity'] <= tol.complementarity,
                     value=sol.residuals['complementarity']),
              _check('minimality_precise',
                     abs(sol.residuals['minimality_precise'])
                     <= tol.complementarity * max(1.0, sol.nu.total_variation()),
                     value=sol.residuals['minimality_precise'])]

    if cfg.certify.uniqueness:
        other_init = 'empty' if cfg.active_set_init != 'empty' else 'full'
        other = solve_one_barrier(exp.phi, exp.reaction, exp.mu, exp.lower, exp.form, exp.grid,
                                  tol.step, other_init, tol.compatibility)
        gap_u = float(np.max(np.abs(other.u - sol.u)))
        gap_nu = float(np.max(np.abs(other.nu.continuous - sol.nu.continuous)))
        checks.append(_check('uniqueness', max(gap_u, gap_nu) <= tol.complementarity,
                             gap_u=gap_u, gap_nu=gap_nu, second_init=other_init))

    if cfg.certify.tree:
        try:
            tree = snell_oracle(exp.coeffs, exp.grid, exp.phi, exp.reaction, exp.mu, exp.lower,
                                exp.z0, mc.tree_depth)
            checks.append(_check('tree', abs(tree.value - value) <= tol.tree, value=tree.value,
                                 reference=value, band=tol.tree))
        except RegimeViolation as exc:
            checks.append({'name': 'tree', 'passed': None, 'skipped': exc.message})

    if cfg.certify.rbsde:
        paths = simulate_paths(exp.coeffs, exp.grid, exp.z0, mc.n_paths, mc.seed,
                               mc.bridge_correction, mc.block_size)
        est = rbsde_backward(paths, exp.phi, exp.reaction, exp.mu, exp.lower)
        band = est.band(mc.band_floor)
        checks.append(_check('rbsde', abs(est.value - value) <= band, value=est.value,
                             stderr=est.stderr, reference=value, band=band,
                             skorokhod_left=est.diagnostics['skorokhod_left']))
    return checks, sol.solution.to_frame()


def _certify_switching(exp: Experiment, store: RunArtifacts) -> Tuple[List[Dict], pd.DataFrame]:
    cfg = exp.config
    mc = cfg.monte_carlo
    problem = exp.switching
    j0 = cfg.switching.start_mode
    sol = _solve_switching(exp, 'picard')
    dp = solve_switching_dp(problem, exp.form, exp.grid)
    gap = float(np.max(np.abs(dp.u - sol.u)))
    no_loop = check_no_loop(problem, exp.grid)
    checks = [_check('dp_equivalence', gap <= 1e-6, gap=gap),
              _check('no_loop', bool(no_loop), **no_loop.to_dict())]
    if cfg.certify.strategy:
        value = sol.at(j0, *exp.z0)
        paths = simulate_paths(exp.coeffs, exp.grid, exp.z0, mc.n_paths, mc.seed,
                               mc.bridge_correction, mc.block_size)
        rule = SwitchingRule(sol, problem, cfg.switching.eps_switch)
        est = evaluate_strategy(paths, problem, rule, j0)
        band = est.band(mc.band_floor)
        checks.append(_check('strategy_value', abs(est.value - value) <= band, value=est.value,
                             stderr=est.stderr, reference=value, band=band))
        worst = -np.inf
        for name, candidate in perturbed_rules(rule, problem, mc.n_perturbations, mc.seed):
            payoff, _ = strategy_payoffs(paths, problem, candidate, j0)
            stderr = float(payoff.std(ddof=1) / np.sqrt(payoff.size))
            excess = (float(payoff.mean()) - est.value) / (3.0 * np.hypot(stderr, est.stderr))
            worst = max(worst, excess)
        checks.append(_check('strategy_optimality', worst <= 1.0, worst_scaled_excess=worst,
                             n_perturbations=mc.n_perturbations))
    field = pd.concat([_field_frame(exp.grid, sol.u[j], j) for j in range(problem.N)],
                      ignore_index=True)
    return checks, field


def _against_check(field: pd.DataFrame, path: str, tol: float) -> Dict:
    """Confrontar um campo u lido de CSV com o resolvido nesta execução, nó a nó"""
    keys = ['mode', 't', 'x'] if 'mode' in field.columns else ['t', 'x']
    reference = read_field_csv(path, columns=tuple(keys) + ('u',))
    if len(reference) != len(field):
        raise ConfigError('reference field does not match the grid', path=str(path),
                          rows=len(reference), expected=len(field))
    ours = field.sort_values(keys, kind='mergesort').reset_index(drop=True)
    theirs = reference.sort_values(keys, kind='mergesort').reset_index(drop=True)
    if not np.allclose(ours[keys].to_numpy(dtype=float), theirs[keys].to_numpy(dtype=float),
                       rtol=0.0, atol=1e-9):
        raise ConfigError('reference field nodes differ from the grid', path=str(path))
    gaps = np.abs(ours['u'].to_numpy(dtype=float) - theirs['u'].to_numpy(dtype=float))
    worst = int(np.argmax(gaps))
    return _check('against', gaps[worst] <= tol, max_gap=float(gaps[worst]), band=tol,
                  path=str(path), t=float(ours['t'][worst]), x=float(ours['x'][worst]))


def run_certify(exp: Experiment, store: RunArtifacts, against: Optional[str] = None) -> Dict:
    if exp.config.target == 'switching':
        checks, field = _certify_switching(exp, store)
    else:
        checks, field = _certify_obstacle(exp, store)
    if against is not None:
        checks.append(_against_check(field, against, exp.config.tolerances.comparison))
    report = _base_report(exp)
    report['checks'] = checks
    report['all_passed'] = all(c['passed'] is not False for c in checks)
    store.write_json('certify.json', report)
    return report


RUNNERS: Dict[str, Callable[[Experiment, RunArtifacts], Dict]] = {
    'pde': run_pde,
    'obstacle1': run_obstacle1,
    'obstacle2': run_obstacle2,
    'switching': run_switching,
}


def run(config: ExperimentConfig, subcommand: str, out_dir: Optional[str] = None,
        base_dir: Optional[str] = None, against: Optional[str] = None,
        exports: Optional[Dict[str, str]] = None) -> Dict:
    """Executar uma experiência e escrever u/ν, relatório e manifesto

    `exports` copia artefactos do diretório (ex.: {"u.csv": "campo.csv"}) para caminhos
    pedidos na linha de comandos, depois de escrito o manifesto.
    """
    allowed = SUBCOMMAND_KINDS[subcommand]
    if config.kind not in allowed:
        raise ConfigError('experiment kind does not match the subcommand', kind=config.kind,
                          subcommand=subcommand, allowed=list(allowed))
    directory = out_dir or config.outputs.directory or os.path.join('results', config.name)
    exp = build_experiment(config, base_dir)
    store = RunArtifacts(directory)

    if subcommand == 'certify':
        report = run_certify(exp, store, against)
    elif subcommand == 'solve-pde':
        report = run_pde(exp, store)
    else:
        report = RUNNERS[config.target](exp, store)

    store.write_json('report.json', report)
    seeds = {'monte_carlo': config.monte_carlo.seed} if subcommand == 'certify' else {}
    store.write_manifest(config, seeds, command=subcommand)
    if exports:
        report['exports'] = store.export(exports)
    report['output_directory'] = str(store.directory)
    return report
