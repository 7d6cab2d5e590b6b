import os
import tempfile
from unittest import mock, skipUnless

import numpy as np
from django.test import SimpleTestCase

from apps.autodiff import ops
from apps.autodiff.tensor import Tensor
from apps.datasets.entities import Dataset
from utils.test import synthetic_datasets, trained_synthetic_model

from .entities import LayerSelector, ResNetConfig, TrainConfig, parameter_shapes
from .exceptions import (
    InputLengthError,
    InvalidConfigError,
    InvalidLayerError,
    TrainingDivergedError,
    WeightFileError,
    WeightShapeError,
    WeightVersionError,
)
from .resnet import build_resnet
from .services import activations, logits, predict
from .training import train
from .weights import load_weights, save_weights


def small_config(**kwargs):
    base = dict(num_classes=2, input_length=32, channels=(4, 4, 6))
    base.update(kwargs)
    return ResNetConfig(**base)


class BuildResNetTests(SimpleTestCase):

    def test_same_seed_same_weights(self):
        a = build_resnet(small_config(), seed=3)
        b = build_resnet(small_config(), seed=3)
        self.assertEqual(list(a.params), list(b.params))
        for name in a.params:
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed_differs(self):
        a = build_resnet(small_config(), seed=3)
        b = build_resnet(small_config(), seed=4)
        self.assertFalse(np.array_equal(a['block0.conv0.weight'], b['block0.conv0.weight']))

    def test_parameter_layout(self):
        names = [n for n, _ in parameter_shapes(small_config())]
        self.assertIn('block0.shortcut.weight', names)
        self.assertNotIn('block1.shortcut.weight', names)
        self.assertIn('block2.shortcut_bn.running_var', names)
        self.assertEqual(names[-2:], ['head.weight', 'head.bias'])

    def test_output_dimension_and_softmax(self):
        model = build_resnet(small_config(num_classes=3), seed=0)
        out = logits(model, np.random.default_rng(0).normal(size=32))
        self.assertEqual(out.shape, (3,))
        self.assertAlmostEqual(float(ops.softmax(out).sum()), 1.0, delta=1e-12)

    def test_default_config(self):
        cfg = ResNetConfig()
        self.assertEqual(cfg.channels, (64, 128, 128))
        self.assertEqual(cfg.kernels, (7, 5, 3))
        self.assertEqual((cfg.blocks, cfg.convs_per_block), (3, 3))

    def test_invalid_config(self):
        with self.assertRaises(InvalidConfigError):
            small_config(kernels=(7, 4, 3))
        with self.assertRaises(InvalidConfigError):
            small_config(channels=(4, 4))
        with self.assertRaises(InvalidConfigError):
            small_config(blocks=0, channels=())


class ForwardTests(SimpleTestCase):

    def setUp(self):
        self.model = build_resnet(small_config(), seed=1)
        self.x = np.random.default_rng(2).normal(size=(3, 32))

    def test_eval_forward_is_pure(self):
        np.testing.assert_array_equal(logits(self.model, self.x[0]), logits(self.model, self.x[0]))

    def test_batch_of_one_matches_single(self):
        batched = logits(self.model, self.x[:1])
        np.testing.assert_allclose(batched[0], logits(self.model, self.x[0]), atol=1e-12)

    def test_activation_shapes(self):
        np.testing.assert_array_equal(activations(self.model, self.x[0], 'logits'), logits(self.model, self.x[0]))
        self.assertEqual(activations(self.model, self.x[0], 'penultimate').shape, (6,))
        self.assertEqual(activations(self.model, self.x[0], 'block:0').shape, (4 * 32,))
        self.assertEqual(activations(self.model, self.x, 'block:0').shape, (3, 4 * 32))

    def test_invalid_selector(self):
        with self.assertRaises(InvalidLayerError):
            activations(self.model, self.x[0], 'block:3')
        with self.assertRaises(InvalidLayerError):
            LayerSelector.parse('softmax')
        with self.assertRaises(InvalidLayerError):
            LayerSelector.parse('block:x')

    def test_length_mismatch(self):
        with self.assertRaises(InputLengthError):
            logits(self.model, np.zeros(31))

    def test_zeroed_block_passes_input_through(self):
        # block1 為 4 -> 4，走 identity skip
        updates = {}
        for j in range(3):
            updates[f'block1.conv{j}.weight'] = np.zeros_like(self.model[f'block1.conv{j}.weight'])
            updates[f'block1.conv{j}.bias'] = np.zeros_like(self.model[f'block1.conv{j}.bias'])
            updates[f'block1.bn{j}.beta'] = np.zeros(4)
            updates[f'block1.bn{j}.running_mean'] = np.zeros(4)
        model = self.model.replace(**updates)
        block0 = activations(model, self.x[0], 'block:0')
        block1 = activations(model, self.x[0], 'block:1')
        np.testing.assert_array_equal(block1, np.maximum(block0, 0.0))


class TrainTests(SimpleTestCase):

    def test_zero_epochs_leaves_weights(self):
        model = build_resnet(small_config(), seed=0)
        ds = Dataset.from_arrays(np.random.default_rng(0).normal(size=(4, 32)), [0, 1, 0, 1])
        trained, history = train(model, ds, TrainConfig(epochs=0, seed=0))
        self.assertEqual(len(history), 0)
        for name in model.params:
            np.testing.assert_array_equal(trained[name], model[name])

    def test_fixed_seed_reproduces_history(self):
        model = build_resnet(small_config(), seed=0)
        rng = np.random.default_rng(1)
        ds = Dataset.from_arrays(rng.normal(size=(10, 32)), np.arange(10) % 2)
        cfg = TrainConfig(epochs=2, lr=1e-2, batch_size=4, seed=5)
        a, history_a = train(model, ds, cfg)
        b, history_b = train(model, ds, cfg)
        self.assertEqual(history_a.losses, history_b.losses)
        np.testing.assert_array_equal(a['head.weight'], b['head.weight'])
        self.assertFalse(np.array_equal(a['head.weight'], model['head.weight']))

    def test_running_stats_updated(self):
        model = build_resnet(small_config(), seed=0)
        ds = Dataset.from_arrays(np.random.default_rng(2).normal(size=(6, 32)) + 3.0, np.arange(6) % 2)
        trained, _ = train(model, ds, TrainConfig(epochs=1, batch_size=6, seed=0))
        self.assertFalse(np.array_equal(trained['block0.bn0.running_mean'], model['block0.bn0.running_mean']))

    def test_non_finite_loss_reports_epoch_and_batch(self):
        model = build_resnet(small_config(), seed=0)
        ds = Dataset.from_arrays(np.random.default_rng(0).normal(size=(8, 32)), np.arange(8) % 2)
        real_loss = ops.softmax_cross_entropy
        calls = []

        def loss_going_nan(logits_, labels):
            calls.append(1)
            out = real_loss(logits_, labels)
            return Tensor(np.nan) if len(calls) == 3 else out

        with mock.patch.object(ops, 'softmax_cross_entropy', loss_going_nan):
            with self.assertRaises(TrainingDivergedError) as ctx:
                train(model, ds, TrainConfig(epochs=2, batch_size=4, seed=0))
        self.assertEqual((ctx.exception.epoch, ctx.exception.batch), (2, 1))

    def test_synthetic_accuracy(self):
        model, history, train_ds, test_ds = trained_synthetic_model()
        self.assertEqual(len(history), 30)
        self.assertGreaterEqual(history.test_accuracy, 0.95)
        pred, confidence = predict(model, train_ds.values)
        self.assertGreater(float(np.max(confidence)), 0.99)


class WeightFileTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self._tmp.name, 'model.sdw')
        self.model = build_resnet(small_config(), seed=9)
        save_weights(self.model, self.path)

    def tearDown(self):
        self._tmp.cleanup()

    def _lines(self):
        with open(self.path, encoding='ascii') as f:
            return f.read().splitlines()

    def _rewrite(self, lines):
        with open(self.path, 'w', encoding='ascii') as f:
            f.write('\n'.join(lines) + '\n')

    def test_round_trip_is_exact(self):
        loaded = load_weights(self.path)
        self.assertEqual(loaded.config, self.model.config)
        for name in self.model.params:
            np.testing.assert_array_equal(loaded[name], self.model[name])
        x = np.random.default_rng(0).normal(size=32)
        np.testing.assert_array_equal(logits(loaded, x), logits(self.model, x))

    def test_truncated_file(self):
        lines = self._lines()
        self._rewrite(lines[:len(lines) // 2])
        with self.assertRaises(WeightFileError):
            load_weights(self.path)

    def test_version_bump(self):
        lines = self._lines()
        lines[0] = 'SEQDREAM-W2'
        self._rewrite(lines)
        with self.assertRaises(WeightVersionError):
            load_weights(self.path)

    def test_not_a_weight_file(self):
        self._rewrite(['hello'])
        with self.assertRaises(WeightFileError):
            load_weights(self.path)

    def test_shape_mismatch_against_config(self):
        lines = self._lines()
        lines[1] = lines[1].replace('"channels": [4, 4, 6]', '"channels": [4, 4, 8]')
        self._rewrite(lines)
        with self.assertRaises(WeightShapeError):
            load_weights(self.path)

    def test_trained_model_round_trip(self):
        model, _, _, test_ds = trained_synthetic_model()
        save_weights(model, self.path)
        np.testing.assert_array_equal(logits(load_weights(self.path), test_ds.values), logits(model, test_ds.values))


class SyntheticDatasetFixtureTests(SimpleTestCase):

    def test_fixture_is_cached(self):
        self.assertIs(synthetic_datasets(), synthetic_datasets())


FORDA_DIR = os.environ.get('SEQDREAM_FORDA_DIR')


@skipUnless(FORDA_DIR, '未設定 SEQDREAM_FORDA_DIR（FordA 資料集不隨附）')
class FordAReferenceTests(SimpleTestCase):
    """使用者自備 FordA_TRAIN.tsv / FordA_TEST.tsv 時才執行"""

    def test_reference_accuracy(self):
        from apps.datasets.services import load_ucr_tsv, z_normalize

        train_ds = z_normalize(load_ucr_tsv(os.path.join(FORDA_DIR, 'FordA_TRAIN.tsv')))
        label_map = {name: i for i, name in enumerate(train_ds.class_names)}
        test_ds = z_normalize(load_ucr_tsv(os.path.join(FORDA_DIR, 'FordA_TEST.tsv'), label_map=label_map))
        model = build_resnet(ResNetConfig(num_classes=2, input_length=train_ds.length), seed=0)
        epochs = int(os.environ.get('SEQDREAM_FORDA_EPOCHS', '500'))
        _, history = train(model, train_ds, TrainConfig(epochs=epochs, seed=0), test_ds)
        self.assertGreaterEqual(history.test_accuracy, 0.93)
