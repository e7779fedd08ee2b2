"""
Linha de comandos do obstacle_kit.

Códigos de saída: 0 sucesso, 2 erro de solver, 3 erro de validação. Em caso de
erro o corpo JSON ({"error", "message", "details"}) é escrito no stdout.
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .config import load_config
from .exceptions import ConfigError, ObstacleKitError
from .runner import SUBCOMMAND_KINDS, run
from .storage import MANIFEST_NAME, dumps, read_json
from .utils.logger import setup_logging
from .utils.workers import THREADS_ENV

logger = logging.getLogger(__name__)

SOLVE_HELP = {
    'solve-pde': 'resolver o problema sem barreiras (ignora secções de barreira)',
    'solve-obstacle': 'resolver o problema de obstáculo com uma ou duas barreiras',
    'solve-switching': 'resolver o sistema de comutação ótima',
    'certify': 'resolver e confrontar com oráculos independentes (árvore, EDSR, DP, Monte Carlo)',
}

# Caminhos de saída por subcomando: (opção, artefacto copiado, ajuda)
OUTPUT_FLAGS = {
    'solve-pde': (),
    'solve-obstacle': (('--out-u', 'u.csv', 'CSV do campo u (t, x, u)'),
                       ('--out-nu', 'nu.csv', 'CSV de ν (kind, k, i, value)'),
                       ('--report', 'report.json', 'JSON com resíduos e diagnósticos')),
    'solve-switching': (),
    'certify': (('--report', 'certify.json', 'JSON com estimativas, stderr e bandas'),),
}


def _dest(flag: str) -> str:
    return 'export_' + flag.lstrip('-').replace('-', '_')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='obstacle-kit',
        description='Problemas de obstáculo parabólicos com dados de medida e comutação ótima')
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='nível de logging da consola')
    parser.add_argument('--log-file', default=None, help='ficheiro de log adicional')
    parser.add_argument('--threads', type=int, default=None,
                        help=f'limite de threads de trabalho (sobrepõe {THREADS_ENV})')
    subparsers = parser.add_subparsers(dest='command', required=True)

    for name, help_text in SOLVE_HELP.items():
        kinds = ', '.join(SUBCOMMAND_KINDS[name])
        sub = subparsers.add_parser(name, help=help_text,
                                    description=f'{help_text} (tipos aceites: {kinds})')
        sub.add_argument('config', nargs='?', default=None,
                         help='ficheiro de experiência (forma curta de --config)')
        sub.add_argument('--config', dest='config_file', default=None,
                         help='ficheiro de experiência (.json, .yaml ou .yml)')
        if name == 'solve-pde':
            out_help = ('CSV do campo u (t, x, u) se terminar em .csv; caso contrário diretório '
                        'de saída')
        else:
            out_help = 'diretório de saída (por omissão outputs.directory ou results/<nome>)'
        sub.add_argument('--out', default=None, help=out_help)
        if name == 'solve-switching':
            sub.add_argument('--out-dir', dest='out', default=None,
                             help='diretório com u, ν^j, regiões de paragem e iterations.json')
        for flag, artifact, flag_help in OUTPUT_FLAGS[name]:
            sub.add_argument(flag, dest=_dest(flag), default=None,
                             help=f'{flag_help} (cópia de {artifact})')
        if name == 'certify':
            sub.add_argument('--against', default=None,
                             help='CSV de u (t, x, u[, mode]) a confrontar nó a nó com a solução')

    report = subparsers.add_parser('report', help='resumir um diretório de resultados',
                                   description='resumir um diretório de resultados')
    report.add_argument('directory', help='diretório com manifest.json')
    report.add_argument('--json', action='store_true', help='imprimir o resumo em JSON')
    return parser


def summarize(directory: str) -> Dict:
    """Manifesto e relatório de uma execução anterior"""
    path = Path(directory)
    if not (path / MANIFEST_NAME).exists():
        raise ConfigError('no manifest in directory', directory=str(path))
    manifest = read_json(path / MANIFEST_NAME)
    report = read_json(path / 'report.json') if (path / 'report.json').exists() else {}
    return {'manifest': manifest, 'report': report}


def _print_summary(summary: Dict) -> None:
    manifest, report = summary['manifest'], summary['report']
    print(f"Experiência: {manifest['experiment']} ({manifest['kind']}, {manifest['command']})")
    print(f"Config SHA-256: {manifest['config_sha256']}")
    for artifact in manifest['artifacts']:
        print(f"  {artifact['path']}: {artifact['sha256'][:16]}")
    if 'value_at_z0' in report:
        print(f"u(z0) = {report['value_at_z0']:.10g}")
    if 'values_at_z0' in report:
        for j, value in enumerate(report['values_at_z0']):
            print(f"u^{j}(z0) = {value:.10g}")
    for name, value in sorted(report.get('residuals', {}).items()):
        print(f"  {name}: {value}")
    for check in report.get('checks', []):
        status = {True: 'ok', False: 'FALHOU', None: 'ignorado'}[check['passed']]
        print(f"  [{status}] {check['name']}")


def resolve_invocation(args: argparse.Namespace) -> Tuple[str, Optional[str], Dict[str, str]]:
    """Ficheiro de experiência, diretório de saída e artefactos a copiar"""
    if args.config and args.config_file and args.config != args.config_file:
        raise ConfigError('experiment file given twice', positional=args.config,
                          option=args.config_file)
    path = args.config_file or args.config
    if not path:
        raise ConfigError('no experiment file given', command=args.command)
    out_dir, exports = args.out, {}
    if args.command == 'solve-pde' and out_dir and out_dir.endswith('.csv'):
        out_dir, exports = None, {'u.csv': args.out}
    for flag, artifact, _ in OUTPUT_FLAGS[args.command]:
        destination = getattr(args, _dest(flag))
        if destination:
            exports[artifact] = destination
    return path, out_dir, exports


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    if args.threads is not None:
        os.environ[THREADS_ENV] = str(max(1, args.threads))

    try:
        if args.command == 'report':
            summary = summarize(args.directory)
            if args.json:
                sys.stdout.write(dumps(summary).decode() + '\n')
            else:
                _print_summary(summary)
            return 0
        path, out_dir, exports = resolve_invocation(args)
        config = load_config(path)
        base_dir = os.path.dirname(os.path.abspath(path))
        report = run(config, args.command, out_dir, base_dir,
                     against=getattr(args, 'against', None), exports=exports)
        logger.info(f"Concluído: resultados em {report['output_directory']}")
        if args.command == 'certify' and not report['all_passed']:
            logger.warning("Há certificados que falharam; ver certify.json")
        return 0
    except ObstacleKitError as exc:
        logger.error(f"{type(exc).__name__}: {exc.message}")
        sys.stdout.write(dumps(exc.to_dict()).decode() + '\n')
        return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
