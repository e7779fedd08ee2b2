"""
Testes da linha de comandos (códigos de saída, artefactos e relatório)
"""
import io
import os
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

import orjson
import pandas as pd

from obstacle_kit.cli import main
from obstacle_kit.exceptions import NewtonDivergence
from obstacle_kit.storage import file_checksum, read_json
from obstacle_kit.utils.workers import THREADS_ENV

SMALL_PDE = {
    'name': 'small_heat',
    'kind': 'pde',
    'grid': {'n_x': 19, 'T': 0.1, 'n_t': 20},
    'terminal': {'kind': 'sine'},
}

SMALL_OBSTACLE = {
    'name': 'small_p1',
    'kind': 'obstacle1',
    'grid': {'n_x': 19, 'T': 0.1, 'n_t': 20},
    'terminal': {'kind': 'sine', 'floor': 0.25},
    'barrier': {'segments': [{'t_start': 0.0,
                               'profile': {'kind': 'constant', 'params': {'value': 0.25}}}]},
    'measure': [{'kind': 'time_atom', 't0': 0.05, 'density': {'kind': 'constant',
                                                              'params': {'value': 0.5}}}],
    'certify': {'tree': False, 'rbsde': False},
}

SMALL_SWITCHING = {
    'name': 'small_switching',
    'kind': 'switching',
    'grid': {'n_x': 19, 'T': 0.5, 'n_t': 40},
    'coefficients': {'a': {'kind': 'constant', 'params': {'value': 0.1}}},
    'switching': {
        'modes': [
            {'reaction': {'kind': 'source', 'source': {'kind': 'linear',
                                                       'params': {'slope': -2.0, 'intercept': 1.0}}}},
            {'reaction': {'kind': 'source', 'source': {'kind': 'linear',
                                                       'params': {'slope': 2.0, 'intercept': -1.0}}}},
        ],
        'default_cost': 0.1,
        'cost_floor': 0.1,
    },
}


def run_cli(argv):
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = main(['--log-level', 'ERROR'] + argv)
    return code, buffer.getvalue()


class CliTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.write_config('heat.json', SMALL_PDE)
        self.out = str(self.dir / 'out')

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, name, payload):
        path = self.dir / name
        path.write_bytes(orjson.dumps(payload))
        return str(path)

    def test_solve_pde_writes_artifacts(self):
        """Testa solve-pde: u.csv, report.json e manifesto com checksums"""
        code, _ = run_cli(['solve-pde', self.config, '--out', self.out])
        self.assertEqual(code, 0)
        out = Path(self.out)
        frame = pd.read_csv(out / 'u.csv')
        self.assertEqual(len(frame), 21 * 21)
        manifest = read_json(out / 'manifest.json')
        self.assertEqual(manifest['command'], 'solve-pde')
        for artifact in manifest['artifacts']:
            self.assertEqual(artifact['sha256'], file_checksum(out / artifact['path']))
        report = read_json(out / 'report.json')
        self.assertEqual(report['experiment'], 'small_heat')

    def test_invalid_config_exit_code(self):
        """Testa código 3 e corpo JSON no stdout para configuração inválida"""
        bad = self.write_config('bad.json', {**SMALL_PDE, 'unexpected': 1})
        code, stdout = run_cli(['solve-pde', bad, '--out', self.out])
        self.assertEqual(code, 3)
        body = orjson.loads(stdout)
        self.assertEqual(body['error'], 'ConfigError')
        self.assertIn('errors', body['details'])

    def test_missing_config_file(self):
        """Testa código 3 para ficheiro inexistente"""
        code, stdout = run_cli(['solve-pde', str(self.dir / 'missing.json')])
        self.assertEqual(code, 3)
        self.assertEqual(orjson.loads(stdout)['error'], 'ConfigError')

    def test_kind_mismatch(self):
        """Testa código 3 quando o tipo não corresponde ao subcomando"""
        code, stdout = run_cli(['solve-switching', self.config, '--out', self.out])
        self.assertEqual(code, 3)
        self.assertEqual(orjson.loads(stdout)['details']['kind'], 'pde')

    def test_solver_error_exit_code(self):
        """Testa código 2 para erros de solver"""
        error = NewtonDivergence('nonlinear step did not converge after damping ladder',
                                 residual=1.0, iterations=50)
        with patch('obstacle_kit.cli.run', side_effect=error):
            code, stdout = run_cli(['solve-pde', self.config, '--out', self.out])
        self.assertEqual(code, 2)
        body = orjson.loads(stdout)
        self.assertEqual(body['error'], 'NewtonDivergence')
        self.assertEqual(body['details']['iterations'], 50)

    def test_report_subcommand(self):
        """Testa report em texto e em JSON"""
        run_cli(['solve-pde', self.config, '--out', self.out])
        code, text = run_cli(['report', self.out])
        self.assertEqual(code, 0)
        self.assertIn('small_heat', text)
        self.assertIn('u(z0) =', text)
        code, stdout = run_cli(['report', self.out, '--json'])
        self.assertEqual(code, 0)
        summary = orjson.loads(stdout)
        self.assertEqual(summary['manifest']['experiment'], 'small_heat')
        self.assertIn('value_at_z0', summary['report'])

    def test_report_without_manifest(self):
        """Testa código 3 para diretório sem manifesto"""
        code, _ = run_cli(['report', str(self.dir)])
        self.assertEqual(code, 3)

    def test_solve_pde_config_flag_and_csv_out(self):
        """Testa solve-pde --config <file> --out <csv>: o campo u é copiado para o CSV pedido"""
        run_dir = str(self.dir / 'run')
        config = self.write_config('heat_dir.json', {**SMALL_PDE, 'outputs': {'directory': run_dir}})
        target = self.dir / 'campo.csv'
        code, _ = run_cli(['solve-pde', '--config', config, '--out', str(target)])
        self.assertEqual(code, 0)
        self.assertEqual(target.read_bytes(), (Path(run_dir) / 'u.csv').read_bytes())
        self.assertEqual(list(pd.read_csv(target).columns), ['t', 'x', 'u'])

    def test_config_given_twice_or_missing(self):
        """Testa código 3 sem ficheiro de experiência ou com dois ficheiros diferentes"""
        code, stdout = run_cli(['solve-pde', '--out', self.out])
        self.assertEqual(code, 3)
        self.assertEqual(orjson.loads(stdout)['message'], 'no experiment file given')
        other = self.write_config('other.json', SMALL_PDE)
        code, _ = run_cli(['solve-pde', self.config, '--config', other])
        self.assertEqual(code, 3)

    def test_load_csv_in_manifest(self):
        """Testa load.csv (k, i, continuous, atom) em solve-pde e solve-obstacle"""
        run_cli(['solve-pde', self.config, '--out', self.out])
        load = pd.read_csv(Path(self.out) / 'load.csv')
        self.assertEqual(list(load.columns), ['k', 'i', 'continuous', 'atom'])
        self.assertEqual(len(load), 21 * 21)
        self.assertEqual(float(load['atom'].abs().sum()), 0.0)

        config = self.write_config('p1.json', SMALL_OBSTACLE)
        out = self.dir / 'obstacle'
        code, _ = run_cli(['solve-obstacle', config, '--out', str(out)])
        self.assertEqual(code, 0)
        load = pd.read_csv(out / 'load.csv')
        self.assertEqual(sorted(load.loc[load['atom'] != 0.0, 'k'].unique()), [10])
        manifest = read_json(out / 'manifest.json')
        self.assertIn('load.csv', [artifact['path'] for artifact in manifest['artifacts']])

    def test_solve_obstacle_output_flags(self):
        """Testa --out-u, --out-nu e --report de solve-obstacle"""
        config = self.write_config('p1.json', SMALL_OBSTACLE)
        paths = {flag: self.dir / name for flag, name in
                 (('--out-u', 'u.csv'), ('--out-nu', 'nu.csv'), ('--report', 'relatorio.json'))}
        argv = ['solve-obstacle', '--config', config, '--out', self.out]
        for flag, path in paths.items():
            argv += [flag, str(path)]
        code, _ = run_cli(argv)
        self.assertEqual(code, 0)
        self.assertEqual(paths['--out-u'].read_bytes(), (Path(self.out) / 'u.csv').read_bytes())
        nu = pd.read_csv(paths['--out-nu'])
        self.assertEqual(list(nu.columns), ['kind', 'k', 'i', 'value'])
        report = read_json(paths['--report'])
        self.assertEqual(report['experiment'], 'small_p1')
        self.assertIn('minimality', report)

    def test_certify_against_reference_field(self):
        """Testa certify --against: desvio nulo com o próprio u e igual à perturbação aplicada"""
        config = self.write_config('p1.json', SMALL_OBSTACLE)
        field = self.dir / 'u.csv'
        run_cli(['solve-obstacle', '--config', config, '--out', self.out, '--out-u', str(field)])

        report_path = self.dir / 'certify.json'
        code, _ = run_cli(['certify', '--config', config, '--out', str(self.dir / 'cert'),
                           '--against', str(field), '--report', str(report_path)])
        self.assertEqual(code, 0)
        checks = {c['name']: c for c in read_json(report_path)['checks']}
        self.assertTrue(checks['against']['passed'])
        self.assertEqual(checks['against']['max_gap'], 0.0)

        shifted = pd.read_csv(field)
        shifted['u'] += 1e-3
        shifted_path = self.dir / 'u_shifted.csv'
        shifted.to_csv(shifted_path, index=False, float_format='%.17g')
        code, _ = run_cli(['certify', config, '--out', str(self.dir / 'cert2'),
                           '--against', str(shifted_path)])
        self.assertEqual(code, 0)
        report = read_json(self.dir / 'cert2' / 'certify.json')
        against = {c['name']: c for c in report['checks']}['against']
        self.assertFalse(against['passed'])
        self.assertAlmostEqual(against['max_gap'], 1e-3, delta=1e-12)
        self.assertFalse(report['all_passed'])

    def test_certify_against_wrong_grid(self):
        """Testa código 3 quando o CSV de referência não tem os nós da malha"""
        config = self.write_config('p1.json', SMALL_OBSTACLE)
        partial = self.dir / 'partial.csv'
        pd.DataFrame({'t': [0.0], 'x': [0.5], 'u': [0.3]}).to_csv(partial, index=False)
        code, stdout = run_cli(['certify', config, '--out', self.out, '--against', str(partial)])
        self.assertEqual(code, 3)
        self.assertEqual(orjson.loads(stdout)['details']['rows'], 1)

    def test_solve_switching_out_dir(self):
        """Testa solve-switching --out-dir: ν e regiões de paragem por modo e iterations.json"""
        config = self.write_config('switching.json', SMALL_SWITCHING)
        code, _ = run_cli(['solve-switching', '--config', config, '--out-dir', self.out])
        self.assertEqual(code, 0)
        out = Path(self.out)
        names = [artifact['path'] for artifact in read_json(out / 'manifest.json')['artifacts']]
        for j in range(2):
            self.assertIn(f'nu_{j}.csv', names)
            self.assertIn(f'stopping_{j}.csv', names)
            nu = pd.read_csv(out / f'nu_{j}.csv')
            self.assertEqual(list(nu.columns), ['kind', 'k', 'i', 'value'])
            stopping = pd.read_csv(out / f'stopping_{j}.csv')
            self.assertEqual(len(stopping), 41 * 19)
            self.assertGreater(int(stopping['stop'].sum()), 0)
            self.assertEqual(int(stopping.loc[stopping['t'] == stopping['t'].max(), 'stop'].sum()), 0)
        log = read_json(out / 'iterations.json')
        self.assertEqual(log['method'], 'picard')
        changes = [entry['change'] for entry in log['iterations']]
        self.assertGreaterEqual(len(changes), 2)
        self.assertLessEqual(changes[-1], 1e-9)

    def test_switching_dp_writes_mode_measures(self):
        """Testa ν^j por modo também quando o método principal é a DP"""
        payload = {**SMALL_SWITCHING,
                   'switching': {**SMALL_SWITCHING['switching'], 'method': 'dp'}}
        config = self.write_config('switching_dp.json', payload)
        code, _ = run_cli(['solve-switching', config, '--out', self.out])
        self.assertEqual(code, 0)
        for j in range(2):
            nu = pd.read_csv(Path(self.out) / f'nu_{j}.csv')
            self.assertGreater(len(nu), 0)
        self.assertEqual(read_json(Path(self.out) / 'iterations.json')['method'], 'dp')

    def test_threads_option(self):
        """Testa que --threads fixa a variável de ambiente"""
        with patch.dict(os.environ, {}):
            run_cli(['--threads', '2', 'solve-pde', self.config, '--out', self.out])
            self.assertEqual(os.environ[THREADS_ENV], '2')


if __name__ == '__main__':
    unittest.main()
