import os
import tempfile
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy import linalg

from apps.classifier.entities import ResNetConfig
from apps.classifier.resnet import build_resnet
from apps.datasets.entities import Dataset
from apps.dreamer.entities import DreamConfig, DreamResult
from apps.dreamer.services import run_dream
from utils.test import trained_synthetic_model

from .exceptions import DimensionMismatchError, StatisticsError
from .serializers import EvalReportSerializer
from .services import (
    COMPARISON_HEADER,
    DISTRIBUTION_HEADER,
    EvaluationContext,
    compare_methods,
    evaluate_dream,
    export_distribution_data,
    write_comparison,
)
from .statistics import distance_band, fit_gaussian_stats, fit_pca, mahalanobis, project


def as_result(series, c, run_id=''):
    return DreamResult(
        series=np.asarray(series, dtype=np.float64), loss_trace=[], score_trace=[], reinit_count=0,
        prediction=c, confidence=1.0, target_class=c, variant='sd', mode='center', final_loss=0.0, run_id=run_id,
    )


class GaussianStatsTests(SimpleTestCase):

    def test_square_corners(self):
        stats = fit_gaussian_stats([(0, 0), (2, 0), (0, 2), (2, 2)])
        np.testing.assert_allclose(stats.mean, [1.0, 1.0])
        np.testing.assert_allclose(stats.covariance, np.eye(2) * 4.0 / 3.0, atol=1e-12)
        self.assertAlmostEqual(stats.eps, 1e-6 * 4.0 / 3.0)
        self.assertEqual(stats.count, 4)
        self.assertFalse(stats.uses_pinv)

    def test_one_dimensional(self):
        stats = fit_gaussian_stats([[0.0], [2.0]])
        self.assertEqual(stats.mean[0], 1.0)
        self.assertAlmostEqual(stats.covariance[0, 0], 2.0, delta=1e-12)

    def test_identical_points_use_eps_floor(self):
        stats = fit_gaussian_stats([(1.0, -1.0, 2.0)] * 4, eps_scale=1e-6)
        np.testing.assert_array_equal(stats.covariance, np.zeros((3, 3)))
        self.assertEqual(stats.eps, 1e-6)
        rng = np.random.default_rng(0)
        ratios = []
        for _ in range(5):
            p = rng.normal(size=3)
            ratios.append(mahalanobis(stats, p) / np.linalg.norm(p - stats.mean))
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-8)
        self.assertAlmostEqual(ratios[0], 1e3, delta=1e-6)

    def test_errors(self):
        with self.assertRaises(StatisticsError):
            fit_gaussian_stats([(1.0, 2.0)])
        with self.assertRaises(StatisticsError):
            fit_gaussian_stats([])
        with self.assertRaises(DimensionMismatchError):
            fit_gaussian_stats([(1.0, 2.0), (1.0, 2.0, 3.0)])
        stats = fit_gaussian_stats([(0, 0), (1, 2), (2, 1)])
        with self.assertRaises(DimensionMismatchError):
            mahalanobis(stats, (1.0, 2.0, 3.0))
        with self.assertRaises(StatisticsError):
            mahalanobis(stats, (np.nan, 0.0))


class MahalanobisTests(SimpleTestCase):

    def test_point_at_mean(self):
        stats = fit_gaussian_stats(np.random.default_rng(1).normal(size=(20, 4)))
        self.assertEqual(mahalanobis(stats, stats.mean), 0.0)

    def test_unit_covariance_is_euclidean(self):
        a = np.sqrt(1.5)
        stats = fit_gaussian_stats([(a, 0), (-a, 0), (0, a), (0, -a)])
        self.assertAlmostEqual(mahalanobis(stats, (3.0, 4.0)), 5.0, delta=1e-5)

    def test_diagonal_covariance(self):
        a, b = np.sqrt(6.0), np.sqrt(1.5)
        stats = fit_gaussian_stats([(a, 0), (-a, 0), (0, b), (0, -b)])
        np.testing.assert_allclose(stats.covariance, np.diag([4.0, 1.0]), atol=1e-12)
        exact = np.sqrt(4.0 / (4.0 + stats.eps) + 1.0 / (1.0 + stats.eps))
        self.assertAlmostEqual(mahalanobis(stats, (2.0, 1.0)), exact, delta=1e-12)
        self.assertAlmostEqual(mahalanobis(stats, (2.0, 1.0)), np.sqrt(2.0), delta=1e-5)

    def test_dense_oracle(self):
        rng = np.random.default_rng(2024)
        points = rng.normal(size=(100, 5)) @ rng.normal(size=(5, 5))
        stats = fit_gaussian_stats(points)
        mu = points.mean(axis=0)
        cov = np.cov(points, rowvar=False)
        a = cov + stats.eps * np.eye(5)
        for p in points:
            expected = np.sqrt((p - mu) @ np.linalg.solve(a, p - mu))
            self.assertAlmostEqual(mahalanobis(stats, p), expected, delta=1e-9)

    def test_coordinate_permutation(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(30, 4))
        query = rng.normal(size=4)
        perm = [2, 0, 3, 1]
        d = mahalanobis(fit_gaussian_stats(points), query)
        d_perm = mahalanobis(fit_gaussian_stats(points[:, perm]), query[perm])
        self.assertAlmostEqual(d, d_perm, delta=1e-9)

    def test_pseudo_inverse_fallback(self):
        points = np.random.default_rng(4).normal(size=(25, 3))
        query = np.array([0.5, -1.0, 2.0])
        expected = mahalanobis(fit_gaussian_stats(points), query)
        with mock.patch.object(linalg, 'cho_factor', side_effect=linalg.LinAlgError('not positive definite')):
            stats = fit_gaussian_stats(points)
        self.assertTrue(stats.uses_pinv)
        self.assertAlmostEqual(mahalanobis(stats, query), expected, delta=1e-9)


class DistanceBandTests(SimpleTestCase):

    def test_single_point_band(self):
        stats = fit_gaussian_stats([(1.0, 2.0), (1.0, 2.0)])
        self.assertEqual(distance_band(stats, [(1.0, 2.0)]), (0.0, 0.0))

    def test_band_ignores_order(self):
        points = np.random.default_rng(5).normal(size=(15, 3))
        stats = fit_gaussian_stats(points)
        self.assertEqual(distance_band(stats, points), distance_band(stats, points[::-1]))

    def test_empty(self):
        stats = fit_gaussian_stats([(0.0,), (1.0,)])
        with self.assertRaises(StatisticsError):
            distance_band(stats, [])


class PCATests(SimpleTestCase):

    def setUp(self):
        self.points = np.random.default_rng(6).normal(size=(40, 5)) * [5.0, 3.0, 2.0, 1.0, 0.5]

    def test_components_orthonormal_and_sorted(self):
        pca = fit_pca(self.points, k=3)
        np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(3), atol=1e-8)
        self.assertTrue(np.all(np.diff(pca.explained_variance) <= 0))
        total = np.trace(np.cov(self.points, rowvar=False))
        self.assertLessEqual(pca.explained_variance.sum(), total + 1e-10)
        for row in pca.components:
            self.assertGreater(row[np.argmax(np.abs(row))], 0)

    def test_collinear_points(self):
        t = np.linspace(-2.0, 3.0, 12)
        pca = fit_pca(np.column_stack([t, 2.0 * t]))
        self.assertLess(pca.explained_variance[1], 1e-10)

    def test_projection(self):
        pca = fit_pca(self.points)
        np.testing.assert_array_equal(project(pca, pca.mean), np.zeros(2))
        a, b = self.points[0], self.points[1]
        np.testing.assert_allclose(project(pca, a) - project(pca, b), pca.components @ (a - b), atol=1e-12)
        coords = project(pca, self.points)
        np.testing.assert_allclose(coords.mean(axis=0), np.zeros(2), atol=1e-10)

    def test_in_span_reconstruction(self):
        rng = np.random.default_rng(7)
        basis = np.linalg.qr(rng.normal(size=(6, 2)))[0].T
        points = rng.normal(size=(30, 2)) @ basis + rng.normal(size=6)
        pca = fit_pca(points, k=2)
        rebuilt = project(pca, points) @ pca.components + pca.mean
        np.testing.assert_allclose(rebuilt, points, atol=1e-10)

    def test_errors(self):
        with self.assertRaises(StatisticsError):
            fit_pca(self.points, k=6)
        with self.assertRaises(StatisticsError):
            fit_pca(self.points[:1], k=1)
        with self.assertRaises(DimensionMismatchError):
            project(fit_pca(self.points), np.zeros(4))


class EvaluateDreamTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model, _, cls.train, _ = trained_synthetic_model()
        cls.context = EvaluationContext.fit(cls.model, cls.train)

    def test_training_sample_is_in_band(self):
        fit = self.context.for_class(1)
        idx = self.train.class_indices(1)
        distances = [mahalanobis(fit.activation_stats, self.context.train_activations[i]) for i in idx]
        middle = int(idx[np.argsort(distances)[len(idx) // 2]])
        report = evaluate_dream(self.model, self.train, as_result(self.train.values[middle], 1), context=self.context)
        self.assertTrue(report.activation_in_band)
        self.assertTrue(report.raw_in_band)
        self.assertEqual(report.layer, 'logits')
        self.assertEqual(report.activation_eps, fit.activation_stats.eps)

    def test_ascent_leaves_raw_distribution(self):
        result = run_dream(self.model, self.train, DreamConfig(variant='ascent', target_class=1, steps=30))
        report = evaluate_dream(self.model, self.train, result, context=self.context)
        self.assertGreater(report.raw_distance, report.raw_band[1])
        self.assertFalse(report.raw_in_band)

    def test_context_is_reused(self):
        result = as_result(self.train.values[0], 0)
        fresh = evaluate_dream(self.model, self.train, result)
        cached = evaluate_dream(self.model, self.train, result, context=self.context)
        self.assertEqual(fresh, cached)

    def test_whole_training_set_statistics(self):
        context = EvaluationContext.fit(self.model, self.train, 'penultimate', per_class=False)
        report = evaluate_dream(self.model, self.train, as_result(self.train.values[3], 1), context=context)
        self.assertEqual(report.layer, 'penultimate')
        self.assertFalse(report.per_class)
        self.assertEqual(len(report.projection), 2)

    def test_length_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            evaluate_dream(self.model, self.train, as_result(np.zeros(10), 0), context=self.context)

    def test_report_representation(self):
        report = evaluate_dream(self.model, self.train, as_result(self.train.values[1], 1), context=self.context)
        data = EvalReportSerializer(report).data
        self.assertEqual(data['activation_in_band'], report.activation_in_band)
        self.assertEqual(data['raw_band'], list(report.raw_band))
        self.assertEqual(list(data)[0], 'run_id')


def small_model_and_data():
    model = build_resnet(ResNetConfig(num_classes=2, input_length=32, channels=(4, 4, 6)), seed=1)
    rng = np.random.default_rng(9)
    return model, Dataset.from_arrays(rng.normal(size=(16, 32)), np.arange(16) % 2)


class ExportDistributionTests(SimpleTestCase):

    def setUp(self):
        self.model, self.train = small_model_and_data()
        rng = np.random.default_rng(10)
        self.generated = [as_result(rng.normal(size=32), c, f'g{c}') for c in (0, 1, 1)]

    def _export(self, tmp, name):
        path = os.path.join(tmp, name)
        rows = export_distribution_data(self.model, self.train, self.generated, 'logits', path,
                                        activations_path=os.path.join(tmp, name + '.act'))
        return path, rows

    def test_rows_and_coordinates(self):
        context = EvaluationContext.fit(self.model, self.train)
        with tempfile.TemporaryDirectory() as tmp:
            path, rows = self._export(tmp, 'a.tsv')
            with open(path, encoding='utf-8') as f:
                lines = f.read().splitlines()
            with open(path + '.act', encoding='utf-8') as f:
                act_lines = f.read().splitlines()
        self.assertEqual(rows, len(self.train) + 3)
        self.assertEqual(lines[0].split('\t'), list(DISTRIBUTION_HEADER))
        self.assertEqual(len(lines), rows + 1)
        self.assertEqual(len(act_lines), rows + 1)
        coords = project(context.pca, context.train_activations)
        for i in range(len(self.train)):
            cols = lines[i + 1].split('\t')
            self.assertEqual(cols[0], f'train:{i}')
            self.assertEqual(int(cols[1]), self.train.labels[i])
            self.assertEqual((float(cols[4]), float(cols[5])), (coords[i, 0], coords[i, 1]))
        self.assertTrue(lines[-1].startswith('dream:g1\t1\t'))

    def test_rerun_is_byte_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            first, _ = self._export(tmp, 'a.tsv')
            second, _ = self._export(tmp, 'b.tsv')
            with open(first, 'rb') as f1, open(second, 'rb') as f2:
                self.assertEqual(f1.read(), f2.read())

    def test_length_mismatch(self):
        bad = [as_result(np.zeros(31), 0)]
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DimensionMismatchError):
                export_distribution_data(self.model, self.train, bad, 'logits', os.path.join(tmp, 'x.tsv'))


class CompareMethodsTests(SimpleTestCase):

    def test_four_methods(self):
        model, train = small_model_and_data()
        rows = compare_methods(model, train, 1, DreamConfig(steps=3), seed=5)
        self.assertEqual([r[0] for r in rows], ['ascent', 'target', 'sd-center', 'sd-max'])
        self.assertEqual([(r[1].variant, r[1].mode) for r in rows],
                         [('ascent', 'center'), ('target', 'center'), ('sd', 'center'), ('sd', 'max')])
        self.assertEqual(rows[0][1].config['blur_every'], 1)
        self.assertTrue(all(report.target_class == 1 for _, _, report in rows))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'comparison.tsv')
            self.assertEqual(write_comparison(rows, path), 4)
            with open(path, encoding='utf-8') as f:
                lines = f.read().splitlines()
        self.assertEqual(lines[0].split('\t'), list(COMPARISON_HEADER))
        self.assertEqual(len(lines), 5)
        self.assertTrue(lines[4].startswith('sd-max\tsd\tmax\t1\t'))
