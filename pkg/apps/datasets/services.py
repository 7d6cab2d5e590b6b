"""
UCR 格式資料集的讀寫、z-normalize 與合成資料集

UCR TSV：一列一條序列，第一欄是原始標籤，其後 m 個十進位浮點數，
預設以 tab 分隔，也接受逗號。
"""
import logging
import math
import os

import numpy as np

from .entities import Dataset, LabeledSeries
from .exceptions import (
    DatasetFormatError,
    DatasetPathError,
    EmptyDatasetError,
    SynthConfigError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

DELIMITERS = {
    'tab': '\t',
    'comma': ',',
}

NORMALIZE_SCOPES = ('per-series', 'global')

# 合成資料集的生成參數
SYNTH_MIN_LENGTH = 32
SYNTH_SMOOTH_WINDOW = 5
SYNTH_BUMP_AMPLITUDE = 2.0

TRAIN_SPLIT = 0
TEST_SPLIT = 1


def resolve_delimiter(delimiter):
    """'tab' / 'comma' 或直接給字元"""
    if delimiter in DELIMITERS:
        return DELIMITERS[delimiter]
    if delimiter in DELIMITERS.values():
        return delimiter
    raise DatasetFormatError(f"不支援的分隔符號: {delimiter!r}（可用 tab 或 comma）")


def canonical_label(raw):
    """
    把原始標籤正規化成字串。整數值的標籤（例如 "1.0000000e+00"）一律寫成 "1"，
    讓舊版 UCR 檔與 label_map 的鍵能互相比對。
    """
    raw = str(raw).strip()
    try:
        value = float(raw)
    except ValueError:
        return raw
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(value)


def _label_sort_key(label):
    try:
        return 0, float(label), label
    except ValueError:
        return 1, 0.0, label


def _parse_rows(lines, sep, path):
    raw_labels, rows = [], []
    width = None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split(sep)
        if len(fields) < 2:
            raise DatasetFormatError(f"{path} 第 {lineno} 行至少要有標籤與一個數值")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DatasetFormatError(
                f"{path} 第 {lineno} 行有 {len(fields)} 個欄位，預期 {width} 個（1 + m）"
            )
        try:
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise DatasetFormatError(f"{path} 第 {lineno} 行含有非數值欄位")
        if not all(math.isfinite(v) for v in values):
            raise DatasetFormatError(f"{path} 第 {lineno} 行含有 NaN 或 inf")
        raw_labels.append(canonical_label(fields[0]))
        rows.append(values)
    return raw_labels, rows


def load_ucr_tsv(path, delimiter='tab', label_map=None):
    """
    讀取 UCR 格式檔案。

    label_map 為 None 時，把所有出現過的原始標籤由小到大排序後依序對應到 0, 1, ...
    （FordA 的 {-1, 1} 變成 {0, 1}）。有給 label_map 時遇到不在表中的標籤會丟
    UnknownLabelError。
    """
    sep = resolve_delimiter(delimiter)
    if not os.path.isfile(path):
        raise DatasetPathError(f"找不到資料檔: {path}")
    try:
        with open(path, 'r', encoding='ascii') as f:
            lines = f.readlines()
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetPathError(f"無法讀取資料檔 {path}: {e}")

    raw_labels, rows = _parse_rows(lines, sep, path)
    if not rows:
        raise EmptyDatasetError(f"{path} 沒有任何資料列")

    if label_map is None:
        names = sorted(set(raw_labels), key=_label_sort_key)
        mapping = {name: i for i, name in enumerate(names)}
    else:
        mapping = {canonical_label(k): int(v) for k, v in label_map.items()}
        names = [None] * (max(mapping.values()) + 1)
        for name, index in mapping.items():
            names[index] = name
        names = [n if n is not None else str(i) for i, n in enumerate(names)]
        unknown = sorted(set(raw_labels) - set(mapping), key=_label_sort_key)
        if unknown:
            raise UnknownLabelError(f"{path} 出現 label_map 沒有定義的標籤: {', '.join(unknown)}")

    num_classes = max(len(names), 2)
    if len(names) < num_classes:
        names = list(names) + [str(i) for i in range(len(names), num_classes)]
    series = tuple(LabeledSeries(v, mapping[y]) for v, y in zip(rows, raw_labels))
    ds = Dataset(series, num_classes, tuple(names))
    logger.info(f"載入 {path}: {len(ds)} 筆、長度 {ds.length}、{num_classes} 類")
    return ds


def write_ucr_tsv(ds, path, delimiter='tab'):
    """寫回 UCR 格式，數值以 17 位有效數字輸出，重新載入後逐位元相同"""
    sep = resolve_delimiter(delimiter)
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        for s in ds.series:
            fields = [ds.class_names[s.label]] + ['%.17g' % v for v in s.values]
            f.write(sep.join(fields) + '\n')


def write_stats(ds, path):
    """資料集統計值，一行一個 key=value"""
    items = [
        ('series', len(ds)),
        ('length', ds.length),
        ('num_classes', ds.num_classes),
    ] + ds.stats.as_items()
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        for key, value in items:
            f.write(f'{key}={value!r}\n')


def read_stats(path):
    stats = {}
    with open(path, 'r', encoding='ascii') as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition('=')
            stats[key] = float(value) if '.' in value or 'e' in value else int(value)
    return stats


def z_normalize(ds, scope='per-series'):
    """
    (x - mean) / std。標準差為 0 的序列（或 global 範圍下整個資料集）保持原樣，
    索引記在回傳資料集的 degenerate 欄位。標準差為母體標準差。
    """
    if scope not in NORMALIZE_SCOPES:
        raise DatasetFormatError(f"不支援的 z-normalize 範圍: {scope!r}")
    values = np.array(ds.values)
    degenerate = []
    if scope == 'per-series':
        mean = values.mean(axis=1, keepdims=True)
        std = values.std(axis=1, keepdims=True)
        for i in range(len(values)):
            if std[i, 0] > 0:
                values[i] = (values[i] - mean[i]) / std[i]
            else:
                degenerate.append(i)
    else:
        std = values.std()
        if std > 0:
            values = (values - values.mean()) / std
        else:
            degenerate = list(range(len(values)))
    if degenerate:
        logger.warning(f"z-normalize: {len(degenerate)} 筆序列標準差為 0，保持原樣")
    return ds.with_values(values, degenerate)


# ---------------------------------------------------------------------------
# 合成資料集
# ---------------------------------------------------------------------------

def _sample_rng(seed, split, index):
    return np.random.default_rng([seed, split, index])


def _smoothed_noise(rng, m, window=SYNTH_SMOOTH_WINDOW):
    """長度 m 的高斯雜訊，經過 window 點移動平均"""
    raw = rng.normal(size=m + window - 1)
    return np.convolve(raw, np.full(window, 1.0 / window), mode='valid')


def _gaussian_bump(m, center, amplitude=SYNTH_BUMP_AMPLITUDE):
    width = m / 16.0
    t = np.arange(m, dtype=np.float64)
    return amplitude * np.exp(-0.5 * ((t - center) / width) ** 2)


def synth_components(seed, split, index, m):
    """
    第 index 筆樣本的兩個成分：(平滑雜訊, 隆起, 隆起中心)。
    兩個類別都抽中心，隨機數序列與類別無關；類別 0 只用雜訊。
    """
    rng = _sample_rng(seed, split, index)
    noise = _smoothed_noise(rng, m)
    center = rng.uniform(m / 4.0, 3.0 * m / 4.0)
    return noise, _gaussian_bump(m, center), center


def _per_series_z(values):
    std = values.std()
    return (values - values.mean()) / std if std > 0 else values


def _synth_split(n, m, seed, split):
    values = np.empty((n, m), dtype=np.float64)
    labels = np.arange(n) % 2
    for i in range(n):
        noise, bump, _ = synth_components(seed, split, i, m)
        raw = noise + bump if labels[i] == 1 else noise
        values[i] = _per_series_z(raw)
    return Dataset.from_arrays(values, labels, num_classes=2)


def synth_binary(n_train, n_test, m, seed):
    """
    可重現的二元分類合成資料集：
      類別 0：移動平均平滑過的高斯雜訊
      類別 1：同樣的雜訊加上一個高斯隆起（振幅 2.0、寬度 m/16，中心均勻落在 [m/4, 3m/4]）
    每條序列最後各自 z-normalize；第 i 筆的類別是 i % 2，兩類數量相同。
    """
    if m < SYNTH_MIN_LENGTH:
        raise SynthConfigError(f"合成序列長度至少為 {SYNTH_MIN_LENGTH}，目前為 {m}")
    if n_train < 2 or n_test < 2:
        raise SynthConfigError(f"n_train / n_test 至少為 2，目前為 {n_train} / {n_test}")
    train = _synth_split(n_train, m, seed, TRAIN_SPLIT)
    test = _synth_split(n_test, m, seed, TEST_SPLIT)
    logger.info(f"合成資料集 seed={seed}: train {n_train}、test {n_test}、長度 {m}")
    return train, test
