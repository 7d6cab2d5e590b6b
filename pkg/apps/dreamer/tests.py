import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from apps.autodiff.exceptions import ShapeError
from apps.autodiff.gradcheck import grad_check
from apps.classifier.entities import ResNetConfig
from apps.classifier.resnet import build_resnet
from apps.classifier.services import logits
from apps.datasets.entities import Dataset
from utils.renderers import ResultJSONRenderer, read_result, write_result
from utils.test import trained_synthetic_model

from . import regularizers as reg
from .entities import DreamConfig, DreamState, TargetSpec
from .exceptions import DreamConfigError, NoClassSamplesError, ZeroTargetError
from .serializers import DreamResultSerializer, dream_result_from_data
from .services import dream_ascent, dream_loss, dream_target, run_dream, sequence_dream
from .targets import select_seed_input, target_logits


def small_model(seed=0):
    return build_resnet(ResNetConfig(num_classes=2, input_length=32, channels=(4, 4, 6)), seed=seed)


def small_dataset(seed=0, n=12):
    rng = np.random.default_rng(seed)
    return Dataset.from_arrays(rng.normal(size=(n, 32)), np.arange(n) % 2)


def quiet_config(variant, **kwargs):
    """所有正則化都關閉、邊界放寬的設定"""
    base = dict(
        variant=variant,
        lambda_alpha=0.0,
        lambda_beta=0.0,
        lambda_sm=0.0,
        l2_decay=0.0,
        scale_jitter=0.0,
        smoothing='none',
        blur_every=0,
        plateau_eps=0.0,
        clamp_lo=-1e6,
        clamp_hi=1e6,
        reinit_noise_std=0.0,
        overshoot_noise_std=0.0,
    )
    base.update(kwargs)
    return DreamConfig(**base)


class LossTermTests(SimpleTestCase):

    def test_tv(self):
        self.assertEqual(reg.tv([0.0, 1.0, 0.0], 2), 2.0)
        self.assertEqual(reg.tv([3.0, 3.0, 3.0], 1.7), 0.0)
        self.assertAlmostEqual(reg.tv([0.5, 1.5, 1.0], 1.5), 1 + 0.5 ** 1.5, delta=1e-12)

    def test_sm(self):
        self.assertEqual(reg.sm([0.0, 1.0, 0.0]), 1.0)
        self.assertEqual(reg.sm([2.0, 2.0]), 0.0)
        self.assertAlmostEqual(reg.sm([1.0, 4.0, 2.0, 2.0]), 5.0 / 3.0, delta=1e-12)

    def test_alpha_norm(self):
        self.assertEqual(reg.alpha_norm(np.zeros(5), 6), 0.0)
        self.assertEqual(reg.alpha_norm([1.0, 1.0], 6), 1.0)
        self.assertAlmostEqual(reg.alpha_norm([2.0], 6), 64.0, delta=1e-12)

    def test_short_series_rejected(self):
        with self.assertRaises(ShapeError):
            reg.tv([1.0], 2)
        with self.assertRaises(ShapeError):
            reg.sm([1.0])

    def test_time_reversal_and_homogeneity(self):
        ts = np.random.default_rng(0).normal(size=40)
        self.assertAlmostEqual(reg.tv(ts, 1.5), reg.tv(ts[::-1], 1.5), delta=1e-12)
        self.assertAlmostEqual(reg.sm(ts), reg.sm(ts[::-1]), delta=1e-12)
        self.assertAlmostEqual(reg.alpha_norm(ts, 6), reg.alpha_norm(ts[::-1], 6), delta=1e-9)
        self.assertAlmostEqual(reg.sm(-2.5 * ts), 2.5 * reg.sm(ts), delta=1e-12)
        self.assertAlmostEqual(reg.tv(-2.5 * ts, 1.5), 2.5 ** 1.5 * reg.tv(ts, 1.5), delta=1e-9)


class TransformTests(SimpleTestCase):

    def test_clamp(self):
        np.testing.assert_array_equal(reg.clamp_to_bounds([-5.0, 0.2, 7.0], -1, 1), [-1.0, 0.2, 1.0])
        ts = np.random.default_rng(0).normal(size=20) * 3
        once = reg.clamp_to_bounds(ts, -1, 1)
        np.testing.assert_array_equal(reg.clamp_to_bounds(once, -1, 1), once)
        with self.assertRaises(DreamConfigError):
            reg.clamp_to_bounds(ts, 1, 1)

    def test_l2_decay(self):
        np.testing.assert_array_equal(reg.l2_decay([2.0, -4.0], 0.0), [2.0, -4.0])
        np.testing.assert_array_equal(reg.l2_decay([2.0, -4.0], 0.5), [1.0, -2.0])
        ts = np.array([1.0, -3.0])
        for _ in range(4):
            ts = reg.l2_decay(ts, 0.1)
        np.testing.assert_allclose(ts, 0.9 ** 4 * np.array([1.0, -3.0]), rtol=1e-14)

    def test_random_scale(self):
        ts = np.random.default_rng(1).normal(size=10)
        np.testing.assert_array_equal(reg.random_scale(ts, 0.0, np.random.default_rng(0)), ts)
        np.testing.assert_array_equal(reg.random_scale(np.zeros(5), 0.3, np.random.default_rng(0)), np.zeros(5))
        a = reg.random_scale(ts, 0.2, np.random.default_rng(5))
        b = reg.random_scale(ts, 0.2, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        ratio = a / ts
        self.assertTrue(np.all((ratio >= 0.8 - 1e-12) & (ratio <= 1.2 + 1e-12)))

    def test_random_scale_whole_series(self):
        ts = np.random.default_rng(1).normal(size=10)
        out = reg.random_scale(ts, 0.2, np.random.default_rng(5), per_point=False)
        ratio = out / ts
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_moving_average(self):
        ts = np.random.default_rng(2).normal(size=9)
        np.testing.assert_array_equal(reg.moving_average_smooth(ts, 1), ts)
        np.testing.assert_allclose(reg.moving_average_smooth(np.full(6, 4.0), 3), np.full(6, 4.0))
        np.testing.assert_allclose(reg.moving_average_smooth([0.0, 3.0, 0.0], 3), [1.5, 1.0, 1.5])
        with self.assertRaises(DreamConfigError):
            reg.moving_average_smooth(ts, 4)

    def test_moving_average_window_longer_than_series(self):
        ts = np.arange(5.0)
        out = reg.moving_average_smooth(ts, 7)
        self.assertEqual(out.shape, (5,))
        np.testing.assert_allclose(out, [1.5, 2.0, 2.0, 2.0, 2.5])
        for window in (9, 11, 31):
            out = reg.moving_average_smooth(ts, window)
            self.assertEqual(out.shape, (5,))
            np.testing.assert_allclose(out, np.full(5, ts.mean()))

    def test_exponential(self):
        ts = np.random.default_rng(3).normal(size=9)
        np.testing.assert_array_equal(reg.exponential_smooth(ts, 1.0), ts)
        np.testing.assert_allclose(reg.exponential_smooth(np.full(5, -2.0), 0.3), np.full(5, -2.0))
        np.testing.assert_allclose(reg.exponential_smooth([0.0, 2.0], 0.5, zero_phase=False), [0.0, 1.0])
        np.testing.assert_allclose(reg.exponential_smooth([0.0, 2.0], 0.5), [0.5, 1.0])
        with self.assertRaises(DreamConfigError):
            reg.exponential_smooth(ts, 0.0)

    def test_gaussian_blur(self):
        np.testing.assert_allclose(reg.gaussian_blur_1d(np.full(30, 1.7), 3.0), np.full(30, 1.7))
        impulse = np.zeros(21)
        impulse[10] = 1.0
        out = reg.gaussian_blur_1d(impulse, 1.0)
        np.testing.assert_allclose(out, out[::-1], atol=1e-15)
        weights = [math.exp(-0.5 * i * i) for i in range(-3, 4)]
        self.assertAlmostEqual(out[10], 1.0 / sum(weights), delta=1e-12)
        self.assertEqual(reg.gaussian_kernel(1.2).size, 2 * 4 + 1)


class PlateauTests(SimpleTestCase):

    def setUp(self):
        self.cfg = DreamConfig(plateau_window=5, plateau_eps=1e-4, reinit_noise_std=0.1)

    def test_decreasing_trace_untouched(self):
        state = DreamState(series=np.zeros(8), rng=np.random.default_rng(0))
        series, fired = reg.reinit_on_plateau(state, list(np.linspace(5.0, 1.0, 8)), self.cfg)
        self.assertFalse(fired)
        np.testing.assert_array_equal(series, np.zeros(8))
        self.assertEqual(state.reinit_count, 0)

    def test_constant_trace_perturbs(self):
        state = DreamState(series=np.zeros(8), rng=np.random.default_rng(0))
        series, fired = reg.reinit_on_plateau(state, [2.0] * 5, self.cfg)
        self.assertTrue(fired)
        self.assertEqual(state.reinit_count, 1)
        self.assertFalse(np.array_equal(series, np.zeros(8)))

    def test_perturbation_is_seeded(self):
        a = DreamState(series=np.zeros(8), rng=np.random.default_rng(3))
        b = DreamState(series=np.zeros(8), rng=np.random.default_rng(3))
        np.testing.assert_array_equal(
            reg.reinit_on_plateau(a, [1.0] * 6, self.cfg)[0],
            reg.reinit_on_plateau(b, [1.0] * 6, self.cfg)[0],
        )

    def test_short_trace_never_fires(self):
        self.assertFalse(reg.plateau_detected([1.0] * 4, 5, 1e-4))


class DreamConfigTests(SimpleTestCase):

    def test_blur_default_per_variant(self):
        self.assertEqual(DreamConfig(variant='ascent').blur_every, 1)
        self.assertEqual(DreamConfig(variant='sd').blur_every, 5)
        self.assertEqual(DreamConfig(variant='target').blur_every, 0)

    def test_invalid_values_name_key(self):
        with self.assertRaises(DreamConfigError) as ctx:
            DreamConfig(alpha=2.0)
        self.assertIn('dream.alpha', str(ctx.exception))
        with self.assertRaises(DreamConfigError):
            DreamConfig(clamp_lo=1.0, clamp_hi=0.0)
        with self.assertRaises(DreamConfigError):
            DreamConfig(variant='frequency')

    def test_resolved_from_stats(self):
        ds = small_dataset()
        cfg = DreamConfig().resolved(ds.stats)
        self.assertEqual((cfg.clamp_lo, cfg.clamp_hi), (ds.stats.minimum, ds.stats.maximum))
        self.assertAlmostEqual(cfg.reinit_noise_std, 0.05 * ds.stats.std)
        self.assertAlmostEqual(cfg.overshoot_noise_std, 0.02 * ds.stats.std)


class TargetTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model, _, cls.train, _ = trained_synthetic_model()
        cls.acts = logits(cls.model, cls.train.values[cls.train.class_indices(1)])

    def test_center_is_class_mean(self):
        spec = target_logits(self.model, self.train, 1, 'center')
        np.testing.assert_allclose(spec.vector, self.acts.mean(axis=0), atol=1e-12)

    def test_max_mode(self):
        spec = target_logits(self.model, self.train, 1, 'max', k=2.0)
        self.assertAlmostEqual(spec.scalar, 2.0 * self.acts[:, 1].mean(), delta=1e-9)
        self.assertTrue(np.all(spec.vector[0] <= self.acts[:, 0]))
        self.assertEqual(spec.vector[0], self.acts[:, 0].min())

    def test_single_class_sample(self):
        ds = Dataset.from_arrays(self.train.values[:3], [0, 1, 0])
        spec = target_logits(self.model, ds, 1, 'center')
        np.testing.assert_allclose(spec.vector, logits(self.model, ds.values[1]), atol=1e-12)

    def test_no_class_samples(self):
        ds = Dataset.from_arrays(self.train.values[:2], [0, 0], num_classes=2)
        with self.assertRaises(NoClassSamplesError):
            target_logits(self.model, ds, 1)


class SeedSelectionTests(SimpleTestCase):

    def setUp(self):
        self.model = small_model()
        self.train = small_dataset()

    def test_nearest_matches_brute_force(self):
        spec = TargetSpec(0, [0.3, -0.2])
        series, provenance = select_seed_input(self.model, self.train, spec)
        best, best_d = None, np.inf
        for i in self.train.class_indices(0):
            d = np.linalg.norm(logits(self.model, self.train.values[i]) - spec.vector)
            if d < best_d:
                best, best_d = i, d
        np.testing.assert_array_equal(series, self.train.values[best])
        self.assertEqual(provenance, f'train:{best}')

    def test_pool_all_considers_every_class(self):
        spec = TargetSpec(0, logits(self.model, self.train.values[3]))
        series, provenance = select_seed_input(self.model, self.train, spec, pool='all')
        self.assertEqual(provenance, 'train:3')

    def test_one_series_dataset(self):
        ds = Dataset.from_arrays(self.train.values[:1], [1], num_classes=2)
        series, _ = select_seed_input(self.model, ds, TargetSpec(1, [0.0, 1.0]))
        np.testing.assert_array_equal(series, ds.values[0])

    def test_given_series_is_a_copy(self):
        given = np.random.default_rng(0).normal(size=32)
        series, _ = select_seed_input(self.model, self.train, TargetSpec(0, [1.0, 0.0]), 'given-series', given=given)
        np.testing.assert_array_equal(series, given)
        self.assertIsNot(series, given)
        series[0] = 99.0
        self.assertNotEqual(given[0], 99.0)

    def test_random_noise_is_seeded(self):
        spec = TargetSpec(0, [1.0, 0.0])
        a, _ = select_seed_input(self.model, self.train, spec, 'random-noise', np.random.default_rng(4))
        b, _ = select_seed_input(self.model, self.train, spec, 'random-noise', np.random.default_rng(4))
        np.testing.assert_array_equal(a, b)
        self.assertEqual(a.shape, (32,))


class DreamLossGradientTests(SimpleTestCase):

    def test_autodiff_matches_finite_differences(self):
        model = small_model(seed=2)
        spec = TargetSpec(0, [1.5, -0.5])
        cfg = DreamConfig(variant='sd', lambda_alpha=0.01, lambda_beta=0.01, lambda_sm=0.1, beta=1.5)
        rng = np.random.default_rng(20)
        for _ in range(20):
            x = rng.normal(size=32)
            self.assertTrue(np.all(np.diff(x) != 0))
            self.assertLess(grad_check(lambda t: dream_loss(model, t, spec, cfg), x), 1e-4)

    def test_scalar_score_target(self):
        model = small_model(seed=2)
        spec = TargetSpec(1, [0.0, 2.0])
        cfg = DreamConfig(variant='target', score_target='scalar', lambda_alpha=0.01, lambda_beta=0.01)
        x = np.random.default_rng(21).normal(size=32)
        self.assertLess(grad_check(lambda t: dream_loss(model, t, spec, cfg, include_sm=False), x), 1e-4)

    def test_max_mode_gradient(self):
        model = small_model(seed=2)
        cfg = DreamConfig(variant='sd', lambda_alpha=0.01, lambda_beta=0.01, lambda_sm=0.1)
        x = np.random.default_rng(22).normal(size=32)
        # 其他類別的目標遠高於或遠低於目前 logit，兩邊都離開 relu 的轉折點
        for other in (-20.0, 20.0):
            spec = TargetSpec(1, [other, 3.0], mode='max')
            self.assertLess(grad_check(lambda t: dream_loss(model, t, spec, cfg), x), 1e-4)


class DeactivationTargetTests(SimpleTestCase):

    def setUp(self):
        self.model = small_model(seed=3)
        self.x = np.random.default_rng(23).normal(size=32)
        self.out = logits(self.model, self.x)
        self.cfg = quiet_config('sd')

    def loss(self, vector, mode):
        return dream_loss(self.model, self.x, TargetSpec(1, vector, mode=mode), self.cfg).item()

    def test_other_class_below_target_is_free(self):
        vector = [self.out[0] + 1.0, self.out[1] + 2.0]
        expected = (2.0 / vector[1]) ** 2
        self.assertAlmostEqual(self.loss(vector, 'max'), expected, places=12)
        self.assertAlmostEqual(self.loss(vector, 'center'), 5.0 / vector[1] ** 2, places=12)

    def test_other_class_above_target_is_penalised(self):
        vector = [self.out[0] - 1.0, self.out[1] + 2.0]
        self.assertAlmostEqual(self.loss(vector, 'max'), 5.0 / vector[1] ** 2, places=12)


class DreamAscentTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model, _, cls.train, _ = trained_synthetic_model()

    def test_pure_ascent_raises_score(self):
        cfg = quiet_config('ascent', steps=100, lr=1e-3)
        result = dream_ascent(self.model, self.train.values[0], 1, cfg)
        drops = sum(1 for a, b in zip(result.score_trace, result.score_trace[1:]) if b < a)
        self.assertLessEqual(drops, 1)
        self.assertGreater(result.score_trace[-1], result.score_trace[0])
        self.assertEqual(result.steps_used, 100)

    def test_output_within_clamp_bounds(self):
        cfg = DreamConfig(variant='ascent', steps=30, lr=1.0).resolved(self.train.stats)
        result = dream_ascent(self.model, self.train.values[0], 1, cfg)
        self.assertTrue(np.all(result.series >= cfg.clamp_lo))
        self.assertTrue(np.all(result.series <= cfg.clamp_hi))
        self.assertTrue(np.all(np.isfinite(result.series)))

    def test_reproducible(self):
        cfg = DreamConfig(variant='ascent', steps=15, lr=1.0, seed=4).resolved(self.train.stats)
        a = dream_ascent(self.model, self.train.values[0], 1, cfg)
        b = dream_ascent(self.model, self.train.values[0], 1, cfg)
        np.testing.assert_array_equal(a.series, b.series)
        self.assertEqual(a.score_trace, b.score_trace)

    def test_unresolved_config_rejected(self):
        with self.assertRaises(DreamConfigError):
            dream_ascent(self.model, self.train.values[0], 1, DreamConfig(variant='ascent'))


class DreamTargetTests(SimpleTestCase):

    def setUp(self):
        self.model = small_model(seed=5)
        self.seed = np.random.default_rng(6).normal(size=32)

    def test_seed_at_target_is_fixed_point(self):
        spec = TargetSpec(0, logits(self.model, self.seed))
        result = dream_target(self.model, self.seed, spec, quiet_config('target', steps=10, lr=0.1))
        self.assertEqual(result.final_loss, 0.0)
        np.testing.assert_array_equal(result.series, self.seed)

    def test_best_loss_not_above_initial(self):
        spec = TargetSpec(1, [-1.0, 3.0])
        cfg = DreamConfig(variant='target', steps=40, lr=0.05, clamp_lo=-4, clamp_hi=4,
                          reinit_noise_std=0.0, overshoot_noise_std=0.0, weight_decay=1e-3)
        result = dream_target(self.model, self.seed, spec, cfg)
        self.assertLessEqual(result.final_loss, result.loss_trace[0])
        self.assertEqual(result.final_loss, min(result.loss_trace))
        self.assertTrue(np.all(np.abs(result.series) <= 4))

    def test_zero_target_rejected(self):
        with self.assertRaises(ZeroTargetError):
            dream_target(self.model, self.seed, TargetSpec(0, [0.0, 1.0]), quiet_config('target'))


class SequenceDreamTests(SimpleTestCase):

    def setUp(self):
        self.model = small_model(seed=7)
        self.train = small_dataset(seed=8)

    def test_seed_at_target_converges_immediately(self):
        seed = self.train.values[0]
        spec = TargetSpec(0, logits(self.model, seed))
        cfg = quiet_config('sd', steps=5, lr=0.5)
        result = sequence_dream(self.model, self.train, 0, cfg, spec=spec, seed_series=seed)
        self.assertEqual(result.final_loss, 0.0)
        self.assertEqual(result.best_step, 1)
        np.testing.assert_array_equal(result.series, seed)

    def test_plateau_reinitialises_and_window_restarts(self):
        cfg = quiet_config('sd', steps=25, lr=1e-12, plateau_eps=1e-4, plateau_window=10, reinit_noise_std=0.01)
        result = sequence_dream(self.model, self.train, 1, cfg)
        self.assertEqual(result.reinit_count, 2)

    def test_result_within_bounds_and_reproducible(self):
        cfg = DreamConfig(variant='sd', steps=20, lr=0.5, seed=3)
        a = sequence_dream(self.model, self.train, 1, cfg)
        b = sequence_dream(self.model, self.train, 1, cfg)
        np.testing.assert_array_equal(a.series, b.series)
        self.assertEqual(a.loss_trace, b.loss_trace)
        self.assertTrue(np.all(a.series >= self.train.stats.minimum))
        self.assertTrue(np.all(a.series <= self.train.stats.maximum))
        self.assertEqual(a.final_loss, min(a.loss_trace))
        self.assertEqual(len(a.score_trace), a.steps_used)

    def test_wrong_variant_rejected(self):
        with self.assertRaises(DreamConfigError):
            sequence_dream(self.model, self.train, 0, DreamConfig(variant='target'))

    def test_run_dream_dispatch(self):
        for variant in ('ascent', 'target', 'sd'):
            result = run_dream(self.model, self.train, DreamConfig(variant=variant, steps=3, target_class=1))
            self.assertEqual(result.variant, variant)
            self.assertEqual(result.target_class, 1)
            self.assertEqual(result.steps_used, 3)


class SequenceDreamSmoothnessTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model, _, cls.train, _ = trained_synthetic_model()

    def test_smoother_than_ascent_for_most_seeds(self):
        smoother = 0
        for seed in range(5):
            sd = run_dream(self.model, self.train, DreamConfig(variant='sd', target_class=1, seed=seed))
            ascent = run_dream(self.model, self.train, DreamConfig(variant='ascent', target_class=1, seed=seed))
            self.assertEqual(sd.seed_provenance, ascent.seed_provenance)
            smoother += reg.sm(sd.series) <= reg.sm(ascent.series)
        self.assertGreaterEqual(smoother, 4)

    def test_injected_noise_is_smoothed(self):
        # 每一步都重新初始化；視窗涵蓋整條序列的移動平均把候選序列壓成常數
        cfg = DreamConfig(variant='sd', target_class=1, steps=6, lr=1e-12, lambda_alpha=0.0, lambda_beta=0.0,
                          lambda_sm=100.0, smoothing='moving_average', ma_window=255, blur_every=0,
                          plateau_window=1, plateau_eps=1.0, reinit_noise_std=0.5)
        result = sequence_dream(self.model, self.train, 1, cfg)
        self.assertEqual(result.reinit_count, 6)
        self.assertGreater(result.best_step, 1)
        self.assertLess(reg.sm(result.series), 1e-12)



class DreamResultFileTests(SimpleTestCase):

    def test_written_result_reads_back(self):
        model, train = small_model(), small_dataset()
        result = run_dream(model, train, DreamConfig(variant='sd', steps=4, run_id='r1'))
        data = DreamResultSerializer(result).data
        self.assertEqual(data['steps_used'], 4)
        self.assertEqual(list(data)[:3], ['run_id', 'variant', 'mode'])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'r1.json')
            write_result(path, 'dream', data)
            again = dream_result_from_data(read_result(path, 'dream'))
            with open(path, 'rb') as f:
                self.assertEqual(f.read(), ResultJSONRenderer().render_result('dream', data))
        np.testing.assert_array_equal(again.series, result.series)
        self.assertEqual(again.loss_trace, result.loss_trace)
        self.assertEqual(again.config['class'], 0)
