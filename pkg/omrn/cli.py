import argparse
import json
import logging
import os
import sys

import prettytable
import torch

from omrn.grounder.gradcheck import grad_check
from omrn.grounder.localizer import DEFAULT_LAMBDAS, DEFAULT_WIDTHS
from omrn.grounder.network import ABLATIONS, NonFiniteError
from omrn.grounder.omrn_sklearn import OMRNGrounder
from omrn.pipeline.omrn_sklearn import GroundingPipeline
from omrn.processor.region_sklearn import RegionProcessor
from omrn.utils.converters import load_dataset, write_predictions
from omrn.utils.evaluation import evaluate_files
from omrn.utils.synthetic import SynthConfig, generate_synthetic, write_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

METRIC_NAMES = ['m_tIoU', 'm_vIoU', 'vIoU@0.3', 'vIoU@0.5']


class UsageError(ValueError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so that argument problems share the validation exit code."""

    def error(self, message):
        raise UsageError("{}: {}".format(self.prog, message))


def fmt(value):
    return '{:.6g}'.format(value)


def _require(args, *names):
    missing = ['--{}'.format(name) for name in names if getattr(args, name, None) is None]
    if missing:
        raise UsageError("{} requires {}".format(args.command, ', '.join(missing)))


def _add_network_arguments(parser):
    parser.add_argument("--hidden_size", default=256, type=int,
                        help="Width of region, word and frame features.")
    parser.add_argument("--attention_size", default=256, type=int,
                        help="Width of the attention projections.")
    parser.add_argument("--widths", default=list(DEFAULT_WIDTHS), type=int, nargs='+',
                        help="Candidate segment widths.")
    parser.add_argument("--alpha", default=0.6, type=float,
                        help="Weight of the box overlap (IoU) term in the linking score.")
    parser.add_argument("--radius", default=5, type=int,
                        help="Frames linked on each side during temporal aggregation.")
    parser.add_argument("--ablations", default=[], nargs='*', choices=ABLATIONS,
                        help="Components to switch off.")


def build_parser():
    parser = ArgumentParser(prog='omrn', description="Spatio-temporal video grounding with OMRN.")
    parser.add_argument("--config", default=None, type=str,
                        help="JSON file of default flag values, keyed by long flag name.")
    parser.add_argument("--seed", default=None, type=int, help="Random seed.")
    parser.add_argument("--verbose", action='store_true', help="Log progress to stderr.")
    subparsers = parser.add_subparsers(dest='command')

    gen = subparsers.add_parser('gen', help="Write a synthetic dataset.")
    gen.add_argument("--samples", default=4, type=int)
    gen.add_argument("--frames", default=12, type=int)
    gen.add_argument("--regions", default=5, type=int)
    gen.add_argument("--objects", default=3, type=int)
    gen.add_argument("--feature_dim", default=16, type=int)
    gen.add_argument("--word_dim", default=16, type=int)
    gen.add_argument("--sentence_length", default=8, type=int)
    gen.add_argument("--num_classes", default=12, type=int)
    gen.add_argument("--noise_std", default=0.0, type=float)
    gen.add_argument("--interrogative_rate", default=0.0, type=float)
    gen.add_argument("--split", default='train', type=str)
    gen.add_argument("--out", default=None, type=str, help="Output directory.")

    train = subparsers.add_parser('train', help="Train a grounder and write a checkpoint.")
    train.add_argument("--data", default=None, type=str, help="Dataset manifest.")
    train.add_argument("--out", default=None, type=str, help="Checkpoint directory.")
    train.add_argument("--steps", default=500, type=int)
    train.add_argument("--batch_size", default=4, type=int)
    train.add_argument("--learning_rate", default=0.0005, type=float,
                       help="The learning rate for Adam.")
    train.add_argument("--lambdas", default=list(DEFAULT_LAMBDAS), type=float, nargs=4,
                       help="Weights of L_s, L_t, L_r and L_d.")
    train.add_argument("--smooth_l1_threshold", default=1.0, type=float)
    train.add_argument("--bce_epsilon", default=1e-7, type=float)
    train.add_argument("--init_scale", default=1.0, type=float)
    train.add_argument("--dtype", default='float32', choices=['float32', 'float64'])
    _add_network_arguments(train)

    infer = subparsers.add_parser('infer', help="Predict tubes with a checkpoint.")
    infer.add_argument("--checkpoint", default=None, type=str)
    infer.add_argument("--data", default=None, type=str, help="Dataset manifest.")
    infer.add_argument("--out", default=None, type=str, help="Predictions JSON file.")
    infer.add_argument("--given_segment", action='store_true',
                       help="Ground spatially inside the ground truth segment.")

    evaluate = subparsers.add_parser('eval', help="Score a predictions file.")
    evaluate.add_argument("--predictions", default=None, type=str)
    evaluate.add_argument("--data", default=None, type=str, help="Dataset manifest.")
    evaluate.add_argument("--out", default=None, type=str, help="Metrics JSON file.")

    gradcheck = subparsers.add_parser('gradcheck', help="Compare gradients with finite differences.")
    gradcheck.add_argument("--frames", default=6, type=int)
    gradcheck.add_argument("--regions", default=4, type=int)
    gradcheck.add_argument("--words", default=8, type=int)
    gradcheck.add_argument("--objects", default=3, type=int)
    gradcheck.add_argument("--dim", default=16, type=int,
                           help="Feature, embedding, hidden and attention width.")
    gradcheck.add_argument("--widths", default=[3, 5, 7], type=int, nargs='+')
    gradcheck.add_argument("--noise_std", default=0.1, type=float)
    gradcheck.add_argument("--tolerance", default=1e-4, type=float)
    gradcheck.add_argument("--step", default=1e-5, type=float)
    gradcheck.add_argument("--max_entries", default=32, type=int,
                           help="Coordinates checked per parameter, 0 checks all.")
    gradcheck.add_argument("--ablations", default=[], nargs='*', choices=ABLATIONS)

    for command in subparsers.choices.values():
        command.add_argument("--seed", default=argparse.SUPPRESS, type=int, help="Random seed.")

    return parser, subparsers.choices


def parse_args(argv=None):
    """Parses flags, filling unset ones from --config. Flags > file > defaults."""
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: {}".format(', '.join(commands)))

    if args.config:
        if not os.path.exists(args.config):
            raise UsageError("Config file not found: {}".format(args.config))
        with open(args.config) as f:
            config = json.load(f)
        if not isinstance(config, dict):
            raise UsageError("Config file must hold a JSON object")

        config = {key.lstrip('-').replace('-', '_'): value for key, value in config.items()}
        known_global = {'seed', 'verbose'}
        known_command = {action.dest for action in commands[args.command]._actions}
        known_command -= known_global | {'help'}
        unknown = sorted(set(config) - known_global - known_command)
        if unknown:
            raise UsageError("Unknown config keys for {}: {}".format(args.command, unknown))

        parser.set_defaults(**{k: v for k, v in config.items() if k in known_global})
        commands[args.command].set_defaults(**{k: v for k, v in config.items() if k in known_command})
        args = parser.parse_args(argv)

    if args.seed is None:
        args.seed = 0 if args.command in ('gen', 'gradcheck') else 42
    return args


def cmd_gen(args):
    _require(args, 'out')
    cfg = SynthConfig(num_samples=args.samples, N=args.frames, K=args.regions, T=args.objects,
                      feature_dim=args.feature_dim, noise_std=args.noise_std, seed=args.seed,
                      word_dim=args.word_dim, sentence_length=args.sentence_length,
                      num_classes=args.num_classes, interrogative_rate=args.interrogative_rate)
    manifest_path = write_synthetic(cfg, args.out, split=args.split)
    print(manifest_path)
    return EXIT_OK


def cmd_train(args):
    _require(args, 'data', 'out')
    _, samples = load_dataset(args.data)
    pipeline = GroundingPipeline(alpha=args.alpha,
                                 radius=args.radius,
                                 widths=tuple(args.widths),
                                 ablations=tuple(args.ablations),
                                 hidden_size=args.hidden_size,
                                 attention_size=args.attention_size,
                                 lambdas=tuple(args.lambdas),
                                 smooth_l1_threshold=args.smooth_l1_threshold,
                                 bce_epsilon=args.bce_epsilon,
                                 learning_rate=args.learning_rate,
                                 steps=args.steps,
                                 batch_size=args.batch_size,
                                 seed=args.seed,
                                 init_scale=args.init_scale,
                                 dtype=args.dtype,
                                 verbose_logging=args.verbose)
    pipeline.fit(samples)
    pipeline.save(args.out)

    history = pipeline.grounder.history_
    history.to_csv(os.path.join(args.out, 'loss_log.csv'), index=False, float_format='%.6g')
    if len(history):
        last = history.iloc[-1]
        print("step {} total {} (floor {})".format(int(last['step']), fmt(last['total']),
                                                   fmt(last['floor'])))
    return EXIT_OK


def cmd_infer(args):
    _require(args, 'checkpoint', 'data', 'out')
    _, samples = load_dataset(args.data)
    pipeline = GroundingPipeline(grounder=args.checkpoint)
    predictions = pipeline.predict(samples, given_segment=args.given_segment)
    write_predictions(predictions, args.out)
    print("Wrote {} predictions to {}".format(len(predictions), args.out))
    return EXIT_OK


def metrics_table(metrics):
    table = prettytable.PrettyTable(['sentences'] + METRIC_NAMES)
    table.add_row(['all'] + [fmt(metrics[name]) for name in METRIC_NAMES])
    for sentence_type, values in sorted(metrics.get('by_type', {}).items()):
        table.add_row([sentence_type] + [fmt(values[name]) for name in METRIC_NAMES])
    return table


def cmd_eval(args):
    _require(args, 'predictions', 'data')
    metrics, _ = evaluate_files(args.data, args.predictions)
    print(metrics_table(metrics))
    if args.out:
        with open(args.out, 'w') as outfile:
            json.dump(metrics, outfile, indent=2, sort_keys=True)
    else:
        print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = SynthConfig(num_samples=1, N=args.frames, K=args.regions, T=args.objects,
                      feature_dim=args.dim, noise_std=args.noise_std, seed=args.seed,
                      word_dim=args.dim, sentence_length=args.words,
                      num_classes=max(12, args.objects + 1))
    samples = generate_synthetic(cfg).samples
    features = RegionProcessor(widths=tuple(args.widths),
                               ablations=tuple(args.ablations)).fit_transform(samples)

    grounder = OMRNGrounder(hidden_size=args.dim, attention_size=args.dim,
                            widths=tuple(args.widths), ablations=tuple(args.ablations),
                            seed=args.seed, dtype='float64', verbose_logging=args.verbose)
    grounder.initialize(args.dim, args.dim)
    report = grad_check(grounder, features, tolerance=args.tolerance, step=args.step,
                        max_entries=args.max_entries or None, seed=args.seed)

    summary = report.groupby('parameter', sort=False).agg(
        {'max_rel_error': 'max', 'max_abs_error': 'max', 'checked': 'max', 'passed': 'all'})
    table = prettytable.PrettyTable(['parameter', 'max_rel_error', 'max_abs_error', 'checked',
                                     'passed'])
    for name, row in summary.iterrows():
        table.add_row([name, fmt(row['max_rel_error']), fmt(row['max_abs_error']),
                       int(row['checked']), bool(row['passed'])])
    print(table)

    failures = report[~report['passed']]
    if len(failures):
        for _, row in failures.iterrows():
            print("FAILED {} on {}: relative error {}".format(row['parameter'], row['term'],
                                                              fmt(row['max_rel_error'])),
                  file=sys.stderr)
        return EXIT_RUNTIME
    print("All {} gradient checks passed".format(len(report)))
    return EXIT_OK


COMMANDS = {'gen': cmd_gen,
            'train': cmd_train,
            'infer': cmd_infer,
            'eval': cmd_eval,
            'gradcheck': cmd_gradcheck}


def main(argv=None):
    try:
        args = parse_args(argv)
        if args.verbose:
            logging.basicConfig(format='%(asctime)s - %(levelname)s - %(name)s -   %(message)s',
                                datefmt='%m/%d/%Y %H:%M:%S',
                                level=logging.INFO)
        logger.info("Running omrn %s with seed %d", args.command, args.seed)
        torch.set_num_threads(1)
        return COMMANDS[args.command](args)
    except (NonFiniteError, RuntimeError) as error:
        print("error: {}".format(error), file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, TypeError, OSError) as error:
        print("error: {}".format(error), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
