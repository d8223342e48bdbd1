import filecmp
import json
import os

import pytest

from omrn.cli import build_parser, main, parse_args


def run(*argv):
    return main([str(a) for a in argv])


def gen(tmp_path, name='data', *extra):
    out = str(tmp_path / name)
    assert run('gen', '--samples', 4, '--frames', 12, '--regions', 5, '--objects', 3,
               '--seed', 7, '--out', out, *extra) == 0
    return os.path.join(out, 'manifest.json')


TRAIN_FLAGS = ['--hidden_size', 16, '--attention_size', 16, '--widths', 3, 5, 7, '--radius', 2]


def test_gen_is_deterministic(tmp_path):
    first = gen(tmp_path, 'a')
    second = gen(tmp_path, 'b')
    names = sorted(os.listdir(os.path.dirname(first)))
    assert 'manifest.json' in names and 'synth-0000.regions.omrn' in names
    _, mismatch, errors = filecmp.cmpfiles(os.path.dirname(first), os.path.dirname(second), names,
                                           shallow=False)
    assert mismatch == [] and errors == []


def test_validation_errors_exit_with_one(tmp_path, capsys):
    assert run('gen', '--objects', 9, '--regions', 5, '--out', str(tmp_path)) == 1
    assert 'T=9' in capsys.readouterr().err
    assert run('gen', '--no_such_flag', 1) == 1
    assert run('train', '--out', str(tmp_path)) == 1
    assert run() == 1
    assert run('eval', '--data', str(tmp_path / 'missing.json'), '--predictions', 'x.json') == 1


def test_train_infer_eval(tmp_path, capsys):
    manifest = gen(tmp_path)
    checkpoint = str(tmp_path / 'ckpt')
    predictions = str(tmp_path / 'predictions.json')
    metrics_file = str(tmp_path / 'metrics.json')

    assert run('train', '--data', manifest, '--out', checkpoint, '--steps', 3, *TRAIN_FLAGS) == 0
    with open(os.path.join(checkpoint, 'loss_log.csv')) as f:
        header = f.readline().strip().split(',')
        rows = f.readlines()
    assert header[:6] == ['step', 'L_s', 'L_t', 'L_r', 'L_d', 'total']
    assert len(rows) == 3

    assert run('infer', '--checkpoint', checkpoint, '--data', manifest, '--out', predictions) == 0
    assert run('eval', '--predictions', predictions, '--data', manifest, '--out', metrics_file) == 0
    with open(metrics_file) as f:
        metrics = json.load(f)
    for name in ['m_tIoU', 'm_vIoU', 'vIoU@0.3', 'vIoU@0.5']:
        assert 0. <= metrics[name] <= 1.
    assert 'm_vIoU' in capsys.readouterr().out


def test_given_segment_inference(tmp_path):
    manifest = gen(tmp_path)
    checkpoint = str(tmp_path / 'ckpt')
    predictions = str(tmp_path / 'predictions.json')
    metrics_file = str(tmp_path / 'metrics.json')
    assert run('train', '--data', manifest, '--out', checkpoint, '--steps', 0, *TRAIN_FLAGS) == 0
    assert run('infer', '--checkpoint', checkpoint, '--data', manifest, '--out', predictions,
               '--given_segment') == 0
    assert run('eval', '--predictions', predictions, '--data', manifest, '--out', metrics_file) == 0
    with open(metrics_file) as f:
        assert json.load(f)['m_tIoU'] == pytest.approx(1.0)


def test_training_and_inference_are_reproducible(tmp_path):
    manifest = gen(tmp_path)
    outputs = []
    for name in ['one', 'two']:
        checkpoint = str(tmp_path / name)
        predictions = str(tmp_path / '{}.json'.format(name))
        assert run('train', '--data', manifest, '--out', checkpoint, '--steps', 2, '--seed', 5,
                   *TRAIN_FLAGS) == 0
        assert run('infer', '--checkpoint', checkpoint, '--data', manifest, '--out',
                   predictions) == 0
        outputs.append((checkpoint, predictions))

    (ckpt_a, pred_a), (ckpt_b, pred_b) = outputs
    names = sorted(os.listdir(ckpt_a))
    _, mismatch, errors = filecmp.cmpfiles(ckpt_a, ckpt_b, names, shallow=False)
    assert mismatch == [] and errors == []
    assert filecmp.cmp(pred_a, pred_b, shallow=False)


def test_config_file_precedence(tmp_path):
    manifest = gen(tmp_path)
    config = str(tmp_path / 'config.json')
    with open(config, 'w') as f:
        json.dump({'steps': 2, 'hidden_size': 16, 'attention_size': 16, 'widths': [3, 5, 7]}, f)

    args = parse_args(['--config', config, 'train', '--data', manifest, '--steps', '1'])
    assert args.steps == 1
    assert args.hidden_size == 16
    assert args.widths == [3, 5, 7]
    assert args.learning_rate == 0.0005
    assert args.lambdas == [1.0, 1.0, 0.001, 1.0]

    with open(config, 'w') as f:
        json.dump({'stepz': 2}, f)
    assert run('--config', config, 'train', '--data', manifest, '--out', str(tmp_path / 'c')) == 1


def test_seed_flag_after_subcommand():
    assert parse_args(['gen', '--seed', '7']).seed == 7
    assert parse_args(['--seed', '3', 'gen']).seed == 3
    assert parse_args(['gen']).seed == 0


def test_gradcheck_command(capsys):
    assert run('gradcheck', '--max_entries', 4) == 0
    assert 'localizer.W_conf' in capsys.readouterr().out


def test_alpha_help_names_the_overlap_term():
    _, commands = build_parser()
    help_text = ' '.join(commands['train'].format_help().split())
    assert 'overlap (IoU) term' in help_text
    assert 'appearance' not in help_text
