from dataclasses import dataclass

import numpy as np
from scipy import linalg


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianStats:
    """
    以樣本估計的高斯分布。inverse 為 (Σ + εI) 的 Cholesky 分解 (c, lower)；
    分解失敗時改存特徵值下限後的 pseudo-inverse（pinv）。
    """
    mean: np.ndarray
    covariance: np.ndarray
    eps: float
    count: int
    factor: tuple = None
    pinv: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, 'mean', _frozen(self.mean))
        object.__setattr__(self, 'covariance', _frozen(self.covariance))

    @property
    def dimension(self):
        return self.mean.size

    @property
    def uses_pinv(self):
        return self.factor is None

    def solve(self, diff):
        """(Σ + εI)^-1 diff"""
        if self.factor is not None:
            return linalg.cho_solve(self.factor, diff)
        return self.pinv @ diff


@dataclass(frozen=True, eq=False)
class PCAModel:
    """components 每列是一個單位長的主成分，依解釋變異量由大到小排列"""
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        for name in ('mean', 'components', 'explained_variance'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def dimension(self):
        return self.mean.size


@dataclass(frozen=True, eq=False)
class ClassFit:
    """某個類別（或整個訓練集，target_class 為 None）在兩個空間的統計量與距離範圍"""
    target_class: int
    activation_stats: GaussianStats
    activation_band: tuple
    raw_stats: GaussianStats
    raw_band: tuple


def in_band(distance, band):
    return band[0] <= distance <= band[1]


@dataclass(frozen=True)
class EvalReport:
    run_id: str
    variant: str
    mode: str
    target_class: int
    layer: str
    per_class: bool
    prediction: int
    confidence: float
    class_logit: float
    activation_distance: float
    activation_band: tuple
    activation_eps: float
    raw_distance: float
    raw_band: tuple
    raw_eps: float
    projection: tuple

    @property
    def activation_in_band(self):
        return in_band(self.activation_distance, self.activation_band)

    @property
    def raw_in_band(self):
        return in_band(self.raw_distance, self.raw_band)

    @property
    def beyond_band(self):
        """活化距離超過訓練樣本的最大距離（max 模式想要的位置）"""
        return self.activation_distance > self.activation_band[1]
