"""
Command-line entry point: a2snas {gen, search, train, eval, map}.

Progress goes to stderr through logging; every result is written to a file in the output
directory (by default the dataset directory with ".out" appended).
"""
import argparse
import logging
import sys
from pathlib import Path

from ._report_creator import create_report_xlsx_file
from .classification_map import render_false_color, render_ground_truth, render_map, write_ppm
from .config import RunConfig
from .data import gen_synthetic, load_cube, make_splits, save_cube
from .exception import A2SNASException, ConfigException, SplitException, UsageException
from .network import build_compact, save_genotype, load_genotype
from .search import GENOTYPE_SELECTIONS, load_checkpoint, restore_checkpoint, save_checkpoint
from .search.history import BASE_COLUMNS, search_columns, to_csv
from .solver import Solver
from .tensor import Rng

logger = logging.getLogger(__name__)

GENOTYPE_FILE = 'genotype'
SUPERNET_DIR = 'supernet'
COMPACT_DIR = 'compact'
SEARCH_HISTORY_FILE = 'history.csv'
TRAIN_HISTORY_FILE = 'train_history.csv'
REPORT_FILE = 'report.txt'
CONFUSION_FILE = 'confusion.csv'
WORKBOOK_FILE = 'report.xlsx'
MAP_FILE = 'map.ppm'
GROUND_TRUTH_FILE = 'groundtruth.ppm'
FALSE_COLOR_FILE = 'false_color.ppm'


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageException(message)


"""
Shared setup
"""


def _run_config(args):
    overrides = {
        'seed': args.seed,
        'data': args.data,
        'out': args.out,
        'patch_size': args.patch_size,
        'stem_channels': args.stem_channels,
        'search_epochs': args.search_epochs,
        'retrain_epochs': args.retrain_epochs,
        'batch_size': args.batch_size,
        'lambda': args.beta_decay,
        'genotype_selection': args.genotype_selection,
    }
    config = RunConfig.load(args.config, overrides)
    if config.data is None:
        raise ConfigException('data', "missing, pass --data or set it in the config file")
    if not Path(config.data).is_dir():
        raise UsageException(f"dataset directory {config.data} does not exist")
    return config


def _output_dir(config):
    out = Path(config.out) if config.out is not None else Path(config.data.rstrip('/\\') + '.out')
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver(config, cube):
    return Solver(cube, config.search, patch_size=config.patch_size, stem_channels=config.stem_channels,
                  normalize=config.normalize)


def _existing(path, what):
    path = Path(path)
    if not path.exists():
        raise UsageException(f"{what} {path} does not exist")
    return path


def _load_compact(args, config, solver, out):
    """
    Rebuilds the retrained compact network from its checkpoint.
    """
    checkpoint = load_checkpoint(_existing(args.checkpoint or out / COMPACT_DIR, 'checkpoint directory'))
    net = build_compact(checkpoint.genotype, solver.net_config, Rng(config.seed).spawn('compact'))
    restore_checkpoint(checkpoint, net)
    return net


"""
Subcommands
"""


def _gen(args):
    cube = gen_synthetic(args.classes, args.bands, args.size, args.size, noise=args.noise, seed=args.seed,
                         bump_width=args.bump_width)
    save_cube(cube, args.out)
    logger.info("wrote synthetic cube to %s\n%s", args.out, cube)
    return 0


def _search(args):
    config = _run_config(args)
    out = _output_dir(config)
    cube = load_cube(config.data)
    solver = _solver(config, cube)
    splits = make_splits(cube.labels, config.search_split)
    logger.info("search split %r: %d train, %d val", config.search_split, len(splits.train), len(splits.val))

    if args.seeds:
        genotype = solver.search_multi_seed(args.seeds, splits.train, splits.val, verbose=args.verbose)
        agent = solver.search_agent
        save_checkpoint(out / SUPERNET_DIR, agent.net, agent.state,
                        metrics={'val_oa': agent.history[-1]['val_oa']} if agent.history else None,
                        rng_state=agent.rng.state(), history_columns=search_columns())
    else:
        genotype = solver.search(splits.train, splits.val, checkpoint_dir=out / SUPERNET_DIR, resume=args.resume,
                                 verbose=args.verbose)

    save_genotype(genotype, out / GENOTYPE_FILE)
    (out / SEARCH_HISTORY_FILE).write_text(to_csv(solver.search_agent.history, search_columns()), encoding='utf-8')
    occupancy = genotype.occupancy()
    logger.info("genotype [%s], asymmetric pooling in %.0f%% of blocks", genotype, occupancy['asymmetric'] * 100)
    logger.info("wrote %s, %s and %s to %s", GENOTYPE_FILE, SUPERNET_DIR, SEARCH_HISTORY_FILE, out)
    return 0


def _train(args):
    config = _run_config(args)
    out = _output_dir(config)
    genotype = load_genotype(_existing(args.genotype or out / GENOTYPE_FILE, 'genotype file'))
    cube = load_cube(config.data)
    solver = _solver(config, cube)
    splits = make_splits(cube.labels, config.eval_split)
    logger.info("eval split %r: %d train, %d val, %d test",
                config.eval_split, len(splits.train), len(splits.val), len(splits.test))

    solver.train(splits.train, splits.val, genotype=genotype, checkpoint_dir=out / COMPACT_DIR, verbose=args.verbose)
    (out / TRAIN_HISTORY_FILE).write_text(to_csv(solver.trainer.state.history, BASE_COLUMNS), encoding='utf-8')
    logger.info("best val OA %.4f at epoch %d, wrote %s and %s to %s", solver.trainer.best_val_oa,
                solver.trainer.best_epoch, COMPACT_DIR, TRAIN_HISTORY_FILE, out)
    return 0


def _eval(args):
    config = _run_config(args)
    out = _output_dir(config)
    cube = load_cube(config.data)
    solver = _solver(config, cube)
    net = _load_compact(args, config, solver, out)
    splits = make_splits(cube.labels, config.eval_split)
    if not splits.test:
        raise SplitException("the eval split leaves no test pixels")

    report = solver.evaluate(splits.test, net)
    (out / REPORT_FILE).write_text(report.to_text(cube.class_names), encoding='utf-8')
    (out / CONFUSION_FILE).write_text(report.confusion.to_csv(), encoding='utf-8')
    create_report_xlsx_file(report, out / WORKBOOK_FILE, class_names=cube.class_names, genotype=net.genotype)
    for line in report.to_text(cube.class_names).splitlines()[:3]:
        logger.info(line)
    logger.info("wrote %s, %s and %s to %s", REPORT_FILE, CONFUSION_FILE, WORKBOOK_FILE, out)
    return 0


def _map(args):
    config = _run_config(args)
    out = _output_dir(config)
    cube = load_cube(config.data)
    solver = _solver(config, cube)
    net = _load_compact(args, config, solver, out)

    write_ppm(render_map(solver.predict_map(net), cube.num_classes), out / MAP_FILE)
    write_ppm(render_ground_truth(cube), out / GROUND_TRUTH_FILE)
    write_ppm(render_false_color(cube, args.bands), out / FALSE_COLOR_FILE)
    logger.info("wrote %s, %s and %s to %s", MAP_FILE, GROUND_TRUTH_FILE, FALSE_COLOR_FILE, out)
    return 0


"""
Parser
"""


def _add_run_arguments(parser):
    parser.add_argument('--config', help='YAML run config (see docs/configuration.rst)')
    parser.add_argument('--data', help='dataset directory (meta, cube.f32, labels.u16)')
    parser.add_argument('--out', help='output directory, defaults to <data>.out')
    parser.add_argument('--seed', type=int, help='overrides the config seed')
    parser.add_argument('--patch-size', type=int, dest='patch_size')
    parser.add_argument('--stem-channels', type=int, dest='stem_channels')
    parser.add_argument('--search-epochs', type=int, dest='search_epochs')
    parser.add_argument('--retrain-epochs', type=int, dest='retrain_epochs')
    parser.add_argument('--batch-size', type=int, dest='batch_size')
    parser.add_argument('--lambda', type=float, dest='beta_decay', help='beta-decay regularization weight')
    parser.add_argument('--genotype-selection', choices=GENOTYPE_SELECTIONS, dest='genotype_selection',
                        help='take the genotype of the final or of the best-validation search epoch')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging and progress bars')


def build_parser():
    """
    :rtype: argparse.ArgumentParser
    """
    parser = _ArgumentParser(prog='a2snas', description='Architecture search for hyperspectral image classification')
    subparsers = parser.add_subparsers(dest='command', required=True)

    gen = subparsers.add_parser('gen', help='write a synthetic cube directory')
    gen.add_argument('--out', required=True, help='cube directory to create')
    gen.add_argument('--classes', type=int, default=5)
    gen.add_argument('--bands', type=int, default=32)
    gen.add_argument('--size', type=int, default=64, help='height and width in pixels')
    gen.add_argument('--seed', type=int, required=True)
    gen.add_argument('--noise', type=float, default=0.1, help='standard deviation of the additive noise')
    gen.add_argument('--bump-width', type=float, dest='bump_width', help='width of the class spectra')
    gen.add_argument('-v', '--verbose', action='store_true')
    gen.set_defaults(func=_gen)

    search = subparsers.add_parser('search', help='search a genotype')
    _add_run_arguments(search)
    search.add_argument('--resume', action='store_true', help='continue from <out>/supernet')
    search.add_argument('--seeds', type=int, nargs='+',
                        help='run one search per seed in parallel and keep the best final val OA')
    search.set_defaults(func=_search)

    train = subparsers.add_parser('train', help='retrain the compact network of a genotype')
    _add_run_arguments(train)
    train.add_argument('--genotype', help='genotype file, defaults to <out>/genotype')
    train.set_defaults(func=_train)

    evaluate = subparsers.add_parser('eval', help='evaluate the retrained network on the test split')
    _add_run_arguments(evaluate)
    evaluate.add_argument('--checkpoint', help='compact checkpoint, defaults to <out>/compact')
    evaluate.set_defaults(func=_eval)

    map_parser = subparsers.add_parser('map', help='render the classification map')
    _add_run_arguments(map_parser)
    map_parser.add_argument('--checkpoint', help='compact checkpoint, defaults to <out>/compact')
    map_parser.add_argument('--bands', type=int, nargs=3, metavar=('RED', 'GREEN', 'BLUE'),
                            help='false-colour bands')
    map_parser.set_defaults(func=_map)
    return parser


def main(argv=None):
    """
    Runs one subcommand.

    :type argv: [str]
    :param argv: arguments without the program name, defaults to sys.argv[1:]

    :rtype: int
    :returns: 0 on success, 1 on a usage or config error, 2 on a data or format error
    """
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format='%(asctime)s %(levelname)s %(message)s',
                        datefmt='%m/%d %I:%M:%S %p')
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.func(args)
    except (UsageException, ConfigException) as e:
        logger.error("%s", e)
        return 1
    except (A2SNASException, OSError) as e:
        logger.error("%s", e)
        return 2
