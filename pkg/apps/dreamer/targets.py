import logging

import numpy as np

from apps.classifier.services import logits

from .entities import TargetSpec
from .exceptions import DreamConfigError, NoClassSamplesError

logger = logging.getLogger(__name__)


def class_logits(model, train, c):
    """訓練集中類別 c 樣本的 logits，形狀 (n_c, k)"""
    idx = train.class_indices(c)
    if idx.size == 0:
        raise NoClassSamplesError(f"訓練集中沒有類別 {c} 的樣本")
    return logits(model, train.values[idx])


def target_logits(model, train, c, mode='center', k=2.5):
    """
    center：S(T) 為類別 c 訓練樣本 logits 的平均。
    max：第 c 個分量為 k 倍的類別 c 平均 logit，其餘分量取類別 c 樣本在該分量的最小值。
    """
    acts = class_logits(model, train, c)
    mean = acts.mean(axis=0)
    if mode == 'center':
        vector = mean
    elif mode == 'max':
        vector = acts.min(axis=0)
        vector[c] = k * mean[c]
    else:
        raise DreamConfigError(f"dream.mode: 未知的模式 {mode!r}")
    return TargetSpec(c, vector, mode)


def select_seed_input(model, train, spec, strategy='mean-activation-nearest', rng=None, given=None, pool='class'):
    """
    回傳 (起始序列, 來源說明)。

    mean-activation-nearest：pool 內 logits 與 S(T) 歐氏距離最小的訓練序列，同距離取索引小者；
        pool 為 class 時只看類別 c，all 時看整個訓練集。
    random-noise：以訓練資料平均與標準差產生的高斯雜訊。
    given-series：given 的複本。
    """
    if strategy == 'mean-activation-nearest':
        if pool == 'class':
            idx = train.class_indices(spec.target_class)
            if idx.size == 0:
                raise NoClassSamplesError(f"訓練集中沒有類別 {spec.target_class} 的樣本")
        elif pool == 'all':
            idx = np.arange(len(train))
        else:
            raise DreamConfigError(f"dream.seed_pool: 未知的來源 {pool!r}")
        acts = logits(model, train.values[idx])
        distances = np.sqrt(((acts - spec.vector) ** 2).sum(axis=1))
        best = int(idx[int(np.argmin(distances))])
        logger.debug(f"起始序列: 訓練樣本 {best}，距離 {distances.min():.6g}")
        return np.array(train.values[best]), f'train:{best}'

    if strategy == 'random-noise':
        if rng is None:
            raise DreamConfigError('random-noise 需要 rng')
        values = rng.normal(train.stats.mean, train.stats.std, size=train.length)
        return values, 'random-noise'

    if strategy == 'given-series':
        if given is None:
            raise DreamConfigError('given-series 需要指定起始序列')
        values = np.array(given, dtype=np.float64).reshape(-1)
        if values.size != train.length:
            raise DreamConfigError(f"起始序列長度 {values.size} 與資料集長度 {train.length} 不符")
        return values, 'given-series'

    raise DreamConfigError(f"dream.seed_strategy: 未知的策略 {strategy!r}")
