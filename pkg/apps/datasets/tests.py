import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from .entities import Dataset, LabeledSeries
from .exceptions import (
    DatasetFormatError,
    DatasetPathError,
    EmptyDatasetError,
    SynthConfigError,
    UnknownLabelError,
)
from .services import (
    canonical_label,
    load_ucr_tsv,
    read_stats,
    synth_binary,
    synth_components,
    write_stats,
    write_ucr_tsv,
    z_normalize,
)


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w', encoding='ascii') as f:
            f.write(text)
        return path


class LoadUcrTsvTests(TempDirMixin, SimpleTestCase):

    def test_two_line_file_sorts_raw_labels(self):
        ds = load_ucr_tsv(self.write('a.tsv', '-1\t0.1\t0.2\n1\t0.3\t0.4\n'))
        self.assertEqual(ds.length, 2)
        self.assertEqual(list(ds.labels), [0, 1])
        self.assertEqual(ds.class_names, ('-1', '1'))
        np.testing.assert_array_equal(ds.values, [[0.1, 0.2], [0.3, 0.4]])

    def test_comma_delimiter(self):
        ds = load_ucr_tsv(self.write('a.csv', '2,1.5,2.5\n1,0,1\n'), delimiter='comma')
        self.assertEqual(list(ds.labels), [1, 0])

    def test_scientific_labels_are_canonical(self):
        ds = load_ucr_tsv(self.write('a.tsv', '1.0000000e+00\t1\t2\n-1.0000000e+00\t3\t4\n'))
        self.assertEqual(ds.class_names, ('-1', '1'))
        self.assertEqual(canonical_label('2.000'), '2')

    def test_empty_file_is_an_error(self):
        with self.assertRaises(EmptyDatasetError):
            load_ucr_tsv(self.write('empty.tsv', ''))

    def test_ragged_row_names_line(self):
        path = self.write('bad.tsv', '0\t1\t2\n1\t3\n')
        with self.assertRaises(DatasetFormatError) as ctx:
            load_ucr_tsv(path)
        self.assertIn('第 2 行', str(ctx.exception))

    def test_non_numeric_field(self):
        with self.assertRaises(DatasetFormatError):
            load_ucr_tsv(self.write('bad.tsv', '0\t1\tabc\n'))

    def test_label_map_unknown_label(self):
        path = self.write('a.tsv', '-1\t0.1\n1\t0.3\n2\t0.5\n')
        with self.assertRaises(UnknownLabelError):
            load_ucr_tsv(path, label_map={'-1': 0, '1': 1})

    def test_label_map_applied(self):
        ds = load_ucr_tsv(self.write('a.tsv', '-1\t0.1\n1\t0.3\n'), label_map={1: 0, -1: 1})
        self.assertEqual(list(ds.labels), [1, 0])

    def test_missing_path(self):
        with self.assertRaises(DatasetPathError):
            load_ucr_tsv(os.path.join(self.tmp, 'nope.tsv'))

    def test_stats_populated(self):
        ds = load_ucr_tsv(self.write('a.tsv', '0\t1\t3\n1\t-1\t5\n1\t0\t0\n'))
        self.assertEqual(ds.stats.minimum, -1.0)
        self.assertEqual(ds.stats.maximum, 5.0)
        self.assertAlmostEqual(ds.stats.mean, 8.0 / 6.0)
        self.assertEqual(ds.stats.class_counts, (1, 2))

    def test_write_then_reload_is_bit_identical(self):
        rng = np.random.default_rng(11)
        ds = Dataset.from_arrays(rng.normal(size=(5, 17)) * 1e3, [0, 1, 1, 0, 1], class_names=('-1', '1'))
        path = os.path.join(self.tmp, 'out.tsv')
        write_ucr_tsv(ds, path)
        again = load_ucr_tsv(path)
        np.testing.assert_array_equal(again.values, ds.values)
        self.assertEqual(list(again.labels), list(ds.labels))
        write_ucr_tsv(again, os.path.join(self.tmp, 'out2.tsv'))
        with open(path, 'rb') as a, open(os.path.join(self.tmp, 'out2.tsv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_stats_file(self):
        ds = Dataset.from_arrays([[0.0, 2.0], [1.0, 1.0]], [0, 1])
        path = os.path.join(self.tmp, 'stats.txt')
        write_stats(ds, path)
        stats = read_stats(path)
        self.assertEqual(stats['series'], 2)
        self.assertEqual(stats['max'], 2.0)
        self.assertEqual(stats['class_count.1'], 1)


class DatasetEntityTests(SimpleTestCase):

    def test_label_out_of_range_rejected(self):
        with self.assertRaises(DatasetFormatError):
            Dataset((LabeledSeries([1.0, 2.0], 3),), 2)

    def test_mixed_lengths_rejected(self):
        with self.assertRaises(DatasetFormatError):
            Dataset((LabeledSeries([1.0, 2.0], 0), LabeledSeries([1.0], 1)), 2)

    def test_non_finite_rejected(self):
        with self.assertRaises(DatasetFormatError):
            LabeledSeries([1.0, float('nan')], 0)

    def test_values_are_read_only(self):
        ds = Dataset.from_arrays([[0.0, 1.0], [2.0, 3.0]], [0, 1])
        with self.assertRaises(ValueError):
            ds.values[0, 0] = 5.0


class ZNormalizeTests(SimpleTestCase):

    def test_per_series(self):
        ds = z_normalize(Dataset.from_arrays([[1.0, 2.0, 3.0], [0.0, 0.0, 4.0]], [0, 1]))
        for row in ds.values:
            self.assertAlmostEqual(row.mean(), 0.0, places=12)
            self.assertAlmostEqual(row.std(), 1.0, places=12)
        self.assertEqual(ds.degenerate, ())

    def test_constant_series_unchanged_and_flagged(self):
        ds = z_normalize(Dataset.from_arrays([[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]], [0, 1]))
        np.testing.assert_array_equal(ds.values[0], [5.0, 5.0, 5.0])
        self.assertEqual(ds.degenerate, (0,))

    def test_global_scope(self):
        ds = z_normalize(Dataset.from_arrays([[0.0, 0.0], [2.0, 2.0]], [0, 1]), scope='global')
        np.testing.assert_allclose(ds.values, [[-1.0, -1.0], [1.0, 1.0]])

    def test_labels_untouched(self):
        src = Dataset.from_arrays([[1.0, 3.0], [2.0, 7.0], [0.0, 1.0]], [1, 0, 1])
        self.assertEqual(list(z_normalize(src).labels), [1, 0, 1])


class SynthBinaryTests(SimpleTestCase):

    def test_deterministic(self):
        a_train, a_test = synth_binary(20, 10, 64, seed=3)
        b_train, b_test = synth_binary(20, 10, 64, seed=3)
        np.testing.assert_array_equal(a_train.values, b_train.values)
        np.testing.assert_array_equal(a_test.values, b_test.values)

    def test_balanced(self):
        train, test = synth_binary(200, 100, 128, seed=7)
        self.assertEqual(train.stats.class_counts, (100, 100))
        self.assertEqual(test.stats.class_counts, (50, 50))
        self.assertEqual(train.length, 128)

    def test_seed_changes_data(self):
        a, _ = synth_binary(10, 4, 32, seed=1)
        b, _ = synth_binary(10, 4, 32, seed=2)
        self.assertFalse(np.array_equal(a.values, b.values))

    def test_series_are_z_normalized(self):
        train, _ = synth_binary(10, 4, 64, seed=5)
        np.testing.assert_allclose(train.values.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(train.values.std(axis=1), 1.0, atol=1e-12)

    def test_class_one_is_noise_plus_bump(self):
        m = 128
        train, _ = synth_binary(10, 4, m, seed=9)
        noise, bump, center = synth_components(9, 0, 3, m)
        self.assertEqual(train.labels[3], 1)
        raw = noise + bump
        np.testing.assert_allclose(train.values[3], (raw - raw.mean()) / raw.std(), atol=1e-12)
        self.assertLessEqual(abs(int(np.argmax(np.abs(raw - noise))) - center), 1.0)
        self.assertTrue(m / 4 <= center <= 3 * m / 4)

    def test_too_short_rejected(self):
        with self.assertRaises(SynthConfigError):
            synth_binary(10, 10, 16, seed=0)

    def test_one_nearest_neighbour_baseline(self):
        train, test = synth_binary(200, 100, 128, seed=7)
        x, y = train.values, train.labels
        correct = 0
        for row, label in zip(test.values, test.labels):
            nearest = int(np.argmin(((x - row) ** 2).sum(axis=1)))
            correct += int(y[nearest] == label)
        self.assertGreater(correct / len(test), 0.8)
