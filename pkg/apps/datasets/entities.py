from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DatasetFormatError


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    """單變量時間序列與其類別索引"""
    values: np.ndarray
    label: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DatasetFormatError('序列含有 NaN 或 inf')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'label', int(self.label))

    @property
    def length(self):
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class DatasetStats:
    minimum: float
    maximum: float
    mean: float
    std: float
    class_counts: tuple

    def as_items(self):
        items = [
            ('min', self.minimum),
            ('max', self.maximum),
            ('mean', self.mean),
            ('std', self.std),
        ]
        for c, count in enumerate(self.class_counts):
            items.append((f'class_count.{c}', count))
        return items


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    一組等長的單變量序列。建立後不可變；任何轉換都回傳新的 Dataset，
    stats 在 __post_init__ 重新計算。

    class_names 保存原始標籤（例如 FordA 的 "-1", "1"），寫回檔案時使用；
    degenerate 記錄 z-normalize 時因為標準差為 0 而保持原樣的序列索引。
    """
    series: tuple
    num_classes: int
    class_names: tuple = ()
    degenerate: tuple = ()
    stats: DatasetStats = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        series = tuple(self.series)
        object.__setattr__(self, 'series', series)
        if not series:
            raise DatasetFormatError('資料集沒有任何序列')
        if self.num_classes < 2:
            raise DatasetFormatError(f"num_classes 至少為 2，目前為 {self.num_classes}")
        length = series[0].length
        for i, s in enumerate(series):
            if s.length != length:
                raise DatasetFormatError(f"第 {i} 筆序列長度 {s.length} 與 {length} 不符")
            if not 0 <= s.label < self.num_classes:
                raise DatasetFormatError(f"第 {i} 筆序列的類別 {s.label} 超出 [0, {self.num_classes})")
        if not self.class_names:
            object.__setattr__(self, 'class_names', tuple(str(c) for c in range(self.num_classes)))
        object.__setattr__(self, 'stats', self._compute_stats())

    def _compute_stats(self):
        values = self.values
        counts = np.bincount(self.labels, minlength=self.num_classes)
        return DatasetStats(
            minimum=float(values.min()),
            maximum=float(values.max()),
            mean=float(values.mean()),
            std=float(values.std()),
            class_counts=tuple(int(c) for c in counts),
        )

    def __len__(self):
        return len(self.series)

    @property
    def length(self):
        return self.series[0].length

    @cached_property
    def values(self):
        """(n, m) 唯讀陣列"""
        arr = np.stack([s.values for s in self.series])
        arr.setflags(write=False)
        return arr

    @cached_property
    def labels(self):
        arr = np.array([s.label for s in self.series], dtype=np.int64)
        arr.setflags(write=False)
        return arr

    def class_indices(self, c):
        return np.flatnonzero(self.labels == c)

    def with_values(self, values, degenerate=()):
        """同樣的標籤、新的數值"""
        series = tuple(LabeledSeries(v, s.label) for v, s in zip(values, self.series))
        return Dataset(series, self.num_classes, self.class_names, tuple(degenerate))

    @classmethod
    def from_arrays(cls, values, labels, num_classes=None, class_names=()):
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1
        series = tuple(LabeledSeries(v, int(y)) for v, y in zip(np.asarray(values, dtype=np.float64), labels))
        return cls(series, num_classes, tuple(class_names))
