import logging
import sys
from argparse import ArgumentParser
from collections.abc import Sequence
from pathlib import Path

from .config import KINDS, load_mapping, parse_config
from .errors import PyCascadeError
from .experiments import emit_plot_data, run
from .parallel import THREADS_VARIABLE

logger = logging.getLogger('pycascade')


def parse_threads(value: str) -> int:
    threads = int(value)
    if threads < 1:
        raise ValueError(value)
    return threads


parser = ArgumentParser(
    prog='pycascade',
    description='Experiments on random cascade measures over self-similar sets',
    epilog=f'the {THREADS_VARIABLE} environment variable sets the default number of threads',
)
parser.add_argument(
    'kind',
    metavar='KIND',
    choices=KINDS,
    help=f'experiment to run ({", ".join(KINDS)})',
)
parser.add_argument(
    '-c',
    '--config',
    type=Path,
    required=True,
    help='path of the YAML experiment config',
)
parser.add_argument(
    '--seed',
    type=int,
    help='master seed (overrides the config)',
)
parser.add_argument(
    '-o',
    '--out',
    type=Path,
    help='output directory (default: config output, else results/KIND)',
)
parser.add_argument(
    '-t',
    '--threads',
    type=parse_threads,
    help=f'worker threads (default: ${THREADS_VARIABLE} or the number of cores)',
)
parser.add_argument(
    '--no-plots',
    dest='plots',
    action='store_false',
    help='skip the plot data tables',
)
parser.add_argument(
    '-v',
    '--verbose',
    dest='level',
    action='store_const',
    const=logging.DEBUG,
    default=logging.WARNING,
    help='log progress',
)
parser.add_argument(
    '-q',
    '--quiet',
    dest='level',
    action='store_const',
    const=logging.ERROR,
    help='log errors only',
)


def main(argv: Sequence[str] | None = None) -> None:
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.level, format='%(levelname)s %(name)s: %(message)s')
    try:
        config = parse_config(load_mapping(args.config), kind=args.kind, seed=args.seed)
        record = run(config, threads=args.threads)
        out = args.out or config.output or Path('results') / config.kind
        written = record.write(out)
        if args.plots:
            written += emit_plot_data(record, out)
    except PyCascadeError as e:
        logger.error('%s: %s', type(e).__name__, e)  # noqa: TRY400
        sys.exit(e.exit_code)
    except KeyboardInterrupt:
        sys.exit(130)
    print(record.summary_text(), end='')  # noqa: T201
    logger.info('Wrote %d files to %s', len(written), out)


if __name__ == '__main__':
    main()
