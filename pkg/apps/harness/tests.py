import contextlib
import io
import json
import os
import tempfile

import numpy as np
import yaml
from django.test import SimpleTestCase

from apps.classifier.entities import ResNetConfig
from apps.classifier.resnet import build_resnet
from apps.classifier.services import logits
from apps.datasets.entities import Dataset
from apps.dreamer.entities import DreamConfig
from apps.dreamer.exceptions import DreamConfigError
from apps.dreamer.services import run_dream
from apps.dreamer.targets import target_logits
from apps.evaluator.services import EvaluationContext
from utils.exceptions import (
    EXIT_BAD_FILE,
    EXIT_CONFIG,
    EXIT_MISSING_WEIGHTS,
    EXIT_OK,
    EXIT_PATH,
    EXIT_USAGE,
)
from utils.test import trained_synthetic_model

from .cli import SUBCOMMANDS, cli_main
from .config import dream_config, load_config, parse_config, resnet_config
from .exceptions import ConfigError, GridSpecError, MissingPathError
from .grid import DEFAULT_AXES, GRID_AXES, GridSpec, RunManifest, expand_grid, rank_runs, run_grid
from .layout import RunLayout

# 讓整條流程在幾秒內跑完的設定
TINY_CONFIG = {
    'data': {'synth': {'n_train': 16, 'n_test': 8, 'length': 32}},
    'model': {'channels': [4, 4, 6]},
    'train': {'epochs': 2, 'lr': 0.01, 'batch_size': 8},
    'dream': {'steps': 5},
    'grid': {
        'steps': [2, 3], 'lr': [1.0], 'alpha': [6], 'beta': [2], 'sigma': [3],
        'lambda_alpha': [0.001], 'lambda_beta': [0.001], 'lambda_sm': [0.1], 'class': 1,
    },
}


def singleton_spec(**axes):
    values = {name: (DEFAULT_AXES[name][0],) for name in GRID_AXES}
    values.update(axes)
    return values


class ConfigTests(SimpleTestCase):

    def test_sections_are_validated(self):
        cfg = parse_config({
            'data': {'delimiter': 'comma', 'synth': {'length': 64}},
            'model': {'channels': [8, 16, 16]},
            'train': {'beta1': 0.8},
            'dream': {'class': 1, 'variant': 'target', 'lambda_sm': 0.2},
            'eval': {'layer': 'penultimate'},
        })
        self.assertEqual(cfg.dream, {'target_class': 1, 'variant': 'target', 'lambda_sm': 0.2})
        self.assertEqual(cfg.train, {'beta_1': 0.8})
        self.assertEqual(cfg.synth, {'n_train': 200, 'n_test': 100, 'length': 64})
        self.assertEqual(cfg.evaluation['layer'], 'penultimate')
        self.assertEqual(resnet_config(cfg, 2, 64).channels, (8, 16, 16))

    def test_errors_name_the_dotted_key(self):
        cases = [
            ({'dream': {'clas': 1}}, 'dream.clas'),
            ({'dream': {'steps': 'many'}}, 'dream.steps'),
            ({'dream': {'variant': 'frequency'}}, 'dream.variant'),
            ({'data': {'synth': {'n_train': 1}}}, 'data.synth.n_train'),
            ({'plots': {}}, 'plots'),
        ]
        for raw, key in cases:
            with self.assertRaises(ConfigError) as ctx:
                parse_config(raw)
            self.assertTrue(str(ctx.exception).startswith(key), str(ctx.exception))
            self.assertEqual(ctx.exception.exit_code, EXIT_CONFIG)

    def test_dream_config_precedence(self):
        cfg = parse_config({'dream': {'class': 1, 'steps': 40}})
        dream = dream_config(cfg, seed=3, steps=7, mode=None)
        self.assertEqual((dream.target_class, dream.steps, dream.seed, dream.mode), (1, 7, 3, 'center'))
        with self.assertRaises(ConfigError):
            dream_config(parse_config({}), seed=3, require_class=True)
        with self.assertRaises(DreamConfigError) as ctx:
            dream_config(cfg, seed=3, steps=0)
        self.assertIn('dream.steps', str(ctx.exception))

    def test_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingPathError):
                load_config(os.path.join(tmp, 'missing.yaml'))
            bad = os.path.join(tmp, 'bad.yaml')
            with open(bad, 'w') as f:
                f.write('dream: [unclosed\n')
            with self.assertRaises(ConfigError):
                load_config(bad)
            good = os.path.join(tmp, 'good.yaml')
            with open(good, 'w') as f:
                yaml.safe_dump(TINY_CONFIG, f)
            self.assertEqual(load_config(good).grid['target_class'], 1)


class ExpandGridTests(SimpleTestCase):

    def test_product_order(self):
        spec = GridSpec(axes=singleton_spec(steps=[20, 10], lr=[0.3, 0.1, 0.2]))
        configs = expand_grid(spec)
        self.assertEqual(len(configs), 6)
        self.assertEqual([(c.steps, c.lr) for c in configs],
                         [(10, 0.1), (10, 0.2), (10, 0.3), (20, 0.1), (20, 0.2), (20, 0.3)])
        self.assertEqual(len({c.run_id for c in configs}), 6)
        self.assertEqual([c.run_id for c in configs], [c.run_id for c in expand_grid(spec)])
        self.assertTrue(configs[0].run_id.startswith('g0000-'))

    def test_base_config_changes_run_ids(self):
        spec = GridSpec(axes=singleton_spec(steps=[20, 10]))
        plain = [c.run_id for c in expand_grid(spec)]
        changed = expand_grid(spec, DreamConfig(target_multiplier=3.0))
        self.assertTrue(all(c.target_multiplier == 3.0 for c in changed))
        self.assertEqual([r[:6] for r in plain], [c.run_id[:6] for c in changed])
        self.assertFalse(set(plain) & {c.run_id for c in changed})
        # seed 與 run_id 由網格決定，base 上的值不影響
        self.assertEqual(plain, [c.run_id for c in expand_grid(spec, DreamConfig(seed=99, run_id='x'))])

    def test_default_grid_uses_endpoints(self):
        spec = GridSpec()
        self.assertEqual(spec.size, 256)
        configs = expand_grid(spec)
        self.assertEqual(len(configs), 256)
        self.assertEqual({c.lambda_sm for c in configs}, {0.1, 0.5})
        self.assertTrue(all(c.variant == 'sd' for c in configs))

    def test_singletons(self):
        spec = GridSpec(axes=singleton_spec(), mode='max', target_class=1, seeds=(9,))
        [cfg] = expand_grid(spec, base=DreamConfig(smoothing='none'))
        for name in GRID_AXES:
            self.assertEqual(getattr(cfg, name), DEFAULT_AXES[name][0])
        self.assertEqual((cfg.mode, cfg.target_class, cfg.seed, cfg.smoothing), ('max', 1, 9, 'none'))

    def test_invalid_specs(self):
        with self.assertRaises(GridSpecError):
            GridSpec(axes=singleton_spec(lr=[]))
        with self.assertRaises(GridSpecError):
            GridSpec(axes=singleton_spec(alpha=[2.0]))
        with self.assertRaises(GridSpecError):
            GridSpec(seeds=())
        with self.assertRaises(GridSpecError):
            GridSpec(axes={'momentum': [0.9]})


def record(run_id, loss, distance, mode='center', prediction=1, confidence=0.999, band_max=2.0, status='ok'):
    return {
        'run_id': run_id, 'status': status, 'mode': mode, 'target_class': 1, 'final_loss': loss,
        'prediction': prediction, 'confidence': confidence, 'activation_distance': distance,
        'activation_band_max': band_max, 'error': '',
    }


class RankRunsTests(SimpleTestCase):

    def test_feasibility_then_loss(self):
        records = [
            record('a', 0.5, 1.0),
            record('b', 0.1, 1.0, prediction=0),
            record('c', 0.2, 1.0, confidence=0.98),
            record('d', 0.3, 1.0),
            record('e', None, None, status='failed'),
        ]
        self.assertEqual([r['run_id'] for r in rank_runs(records)], ['d', 'a'])

    def test_center_prefers_small_distance(self):
        records = [record('a', 0.1, 1.5), record('b', 0.1, 0.5), record('c', 0.1, 0.5)]
        self.assertEqual([r['run_id'] for r in rank_runs(records)], ['b', 'c', 'a'])

    def test_max_prefers_smallest_beyond_band(self):
        records = [
            record('a', 0.1, 1.9, mode='max'),
            record('b', 0.1, 3.5, mode='max'),
            record('c', 0.1, 2.5, mode='max'),
            record('d', 0.1, 1.0, mode='max'),
        ]
        self.assertEqual([r['run_id'] for r in rank_runs(records)], ['c', 'b', 'a', 'd'])

    def test_all_infeasible(self):
        self.assertEqual(rank_runs([record('a', 0.1, 1.0, confidence=0.5)]), [])


class RunGridTests(SimpleTestCase):

    def setUp(self):
        self.model = build_resnet(ResNetConfig(num_classes=2, input_length=32, channels=(4, 4, 6)), seed=2)
        rng = np.random.default_rng(3)
        self.train = Dataset.from_arrays(rng.normal(size=(12, 32)), np.arange(12) % 2)
        self.spec = GridSpec(axes=singleton_spec(steps=[2, 3], lr=[0.1, 1.0]), target_class=1, seeds=(4,))

    def test_parallel_matches_serial(self):
        serial = run_grid(self.model, self.train, self.spec, parallelism=1)
        parallel = run_grid(self.model, self.train, self.spec, parallelism=2)
        self.assertEqual(len(serial.records), 4)
        self.assertEqual(serial.records, parallel.records)
        self.assertEqual(serial.ranking, parallel.ranking)

    def test_resume_skips_finished_runs(self):
        with tempfile.TemporaryDirectory() as tmp:
            layout = RunLayout(tmp)
            first = run_grid(self.model, self.train, self.spec, layout=layout)
            self.assertEqual(first.skipped, 0)
            for r in first.records:
                self.assertTrue(os.path.isfile(layout.dream_file(r['run_id'])))
                self.assertTrue(os.path.isfile(layout.eval_file(r['run_id'])))
            with open(layout.ranking, 'rb') as f:
                ranking_bytes = f.read()

            # 模擬中斷：拿掉最後一筆紀錄
            with open(layout.manifest) as f:
                lines = f.readlines()
            self.assertEqual(len(lines), 4)
            with open(layout.manifest, 'w') as f:
                f.writelines(lines[:3])

            second = run_grid(self.model, self.train, self.spec, layout=layout)
            self.assertEqual(second.skipped, 3)
            self.assertEqual(second.records, first.records)
            self.assertEqual(len(RunManifest(layout.manifest).records()), 4)
            with open(layout.ranking, 'rb') as f:
                self.assertEqual(f.read(), ranking_bytes)

            third = run_grid(self.model, self.train, self.spec, layout=layout)
            self.assertEqual(third.skipped, 4)

    def test_changed_base_config_is_not_resumed(self):
        with tempfile.TemporaryDirectory() as tmp:
            layout = RunLayout(tmp)
            first = run_grid(self.model, self.train, self.spec, layout=layout)
            second = run_grid(self.model, self.train, self.spec, layout=layout,
                              base=DreamConfig(target_multiplier=3.0))
            self.assertEqual(second.skipped, 0)
            old_ids = {r['run_id'] for r in first.records}
            new_ids = {r['run_id'] for r in second.records}
            self.assertEqual(len(new_ids), 4)
            self.assertFalse(old_ids & new_ids)
            self.assertEqual(len(RunManifest(layout.manifest).records()), 8)
            for run_id in new_ids:
                self.assertTrue(os.path.isfile(layout.dream_file(run_id)))


class TrainedModelGridTests(SimpleTestCase):
    """在訓練好的合成資料模型上跑端點網格（alpha、beta、sigma 固定）"""

    axes = {'alpha': [6], 'beta': [2], 'sigma': [3]}

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model, _, cls.train, _ = trained_synthetic_model()
        cls.context = EvaluationContext.fit(cls.model, cls.train)
        cls.class_mean = target_logits(cls.model, cls.train, 1, 'center').scalar

    def best_run(self, mode):
        spec = GridSpec(axes=self.axes, mode=mode, target_class=1)
        self.assertEqual(spec.size, 32)
        outcome = run_grid(self.model, self.train, spec, parallelism=2, context=self.context)
        self.assertTrue(outcome.ranking)
        best = outcome.ranking[0]
        self.assertEqual(best['prediction'], 1)
        self.assertGreaterEqual(best['confidence'], 0.99)
        cfg = next(c for c in expand_grid(spec) if c.run_id == best['run_id'])
        return best, cfg

    def test_max_mode_pushes_class_logit_beyond_band(self):
        best, cfg = self.best_run('max')
        self.assertGreater(best['activation_distance'], best['activation_band_max'])
        result = run_dream(self.model, self.train, cfg)
        self.assertEqual(result.final_loss, best['final_loss'])
        self.assertGreaterEqual(logits(self.model, result.series)[1], 2.0 * self.class_mean)

    def test_center_mode_stays_in_band(self):
        best, _ = self.best_run('center')
        self.assertLessEqual(best['activation_distance'], best['activation_band_max'])



def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli_main(list(argv))
    return code, out.getvalue(), err.getvalue()


class CliTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name
        self.config = os.path.join(self.tmp, 'run.yaml')
        with open(self.config, 'w') as f:
            yaml.safe_dump(TINY_CONFIG, f)

    def tearDown(self):
        self._tmp.cleanup()

    def cli(self, out, *argv):
        return run_cli(*argv, '--config', self.config, '--out', out)

    def pipeline(self, name):
        out = os.path.join(self.tmp, name)
        steps = [
            ('synth', '--seed', '7'),
            ('train', '--seed', '7'),
            ('dream', '--seed', '7', '--variant', 'sd', '--mode', 'max', '--class', '1'),
            ('dream', '--seed', '7', '--variant', 'ascent', '--class', '0'),
            ('eval',),
            ('project',),
        ]
        for argv in steps:
            code, _, err = self.cli(out, *argv)
            self.assertEqual(code, EXIT_OK, f'{argv}: {err}')
        return out

    def test_help(self):
        for name in SUBCOMMANDS:
            code, out, _ = run_cli(name, '--help')
            self.assertEqual(code, EXIT_OK, name)
            self.assertIn('--out', out)

    def test_usage_errors(self):
        out = os.path.join(self.tmp, 'usage')
        self.assertEqual(self.cli(out, 'synth')[0], EXIT_USAGE)
        self.assertEqual(self.cli(out, 'synth', '--seed', '1', '--colour', 'red')[0], EXIT_USAGE)

    def test_missing_inputs(self):
        out = os.path.join(self.tmp, 'empty')
        code, _, err = self.cli(out, 'dream', '--seed', '1', '--class', '0')
        self.assertEqual(code, EXIT_MISSING_WEIGHTS)
        self.assertIn('missing_weights', err)
        code, _, _ = run_cli('synth', '--seed', '1', '--config', os.path.join(self.tmp, 'nope.yaml'), '--out', out)
        self.assertEqual(code, EXIT_PATH)

    def test_pipeline_is_reproducible(self):
        first = self.pipeline('first')
        second = self.pipeline('second')
        a, b = RunLayout(first), RunLayout(second)
        self.assertEqual(a.dream_run_ids(), ['ascent-center-c0-s7', 'sd-max-c1-s7'])
        files = [
            a.train_data, a.test_data, a.train_stats, a.weights, a.history,
            a.distribution, a.activations,
        ]
        files += [a.dream_file(r) for r in a.dream_run_ids()] + [a.eval_file(r) for r in a.dream_run_ids()]
        for path in files:
            other = path.replace(first, second)
            with open(path, 'rb') as f1, open(other, 'rb') as f2:
                self.assertEqual(f1.read(), f2.read(), os.path.relpath(path, first))

        with open(a.dream_file('sd-max-c1-s7')) as f:
            body = json.load(f)
        self.assertEqual((body['kind'], body['version']), ('dream', 1))
        self.assertEqual(body['data']['mode'], 'max')
        self.assertEqual(body['data']['steps_used'], 5)
        with open(a.distribution) as f:
            self.assertEqual(len(f.read().splitlines()), 1 + 16 + 2)

    def test_commands_after_training(self):
        out = os.path.join(self.tmp, 'later')
        for argv in (('synth', '--seed', '3'), ('train', '--seed', '3')):
            self.assertEqual(self.cli(out, *argv)[0], EXIT_OK)
        layout = RunLayout(out)

        # 沒有指定類別
        self.assertEqual(self.cli(out, 'dream', '--seed', '3')[0], EXIT_CONFIG)
        self.assertEqual(self.cli(out, 'dream', '--seed', '3', '--class', '1', '--steps', '0')[0], EXIT_CONFIG)

        code, _, err = self.cli(out, 'grid', '--seed', '3', '--parallelism', '1')
        self.assertEqual(code, EXIT_OK, err)
        self.assertEqual(len(RunManifest(layout.manifest).records()), 2)
        with open(layout.ranking) as f:
            ranking = json.load(f)['data']
        self.assertEqual(ranking['total'], 2)
        self.assertEqual(ranking['feasible'], len(ranking['ranking']))

        code, _, err = self.cli(out, 'compare', '--seed', '3', '--class', '0')
        self.assertEqual(code, EXIT_OK, err)
        with open(layout.comparison) as f:
            self.assertEqual(len(f.read().splitlines()), 5)

        with open(layout.weights, 'w') as f:
            f.write('not a weight file\n')
        self.assertEqual(self.cli(out, 'eval')[0], EXIT_BAD_FILE)
