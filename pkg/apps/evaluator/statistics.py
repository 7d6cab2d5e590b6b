"""
高斯統計量、Mahalanobis 距離與 PCA 投影。

    fit_gaussian_stats   樣本平均、無偏共變異數，對角線加上 eps = eps_scale * trace / d 後做 Cholesky 分解
    mahalanobis          sqrt((p - mu)^T (Σ + εI)^-1 (p - mu))
    distance_band        擬合樣本本身距離的 (min, max)
    fit_pca / project    共變異數特徵分解取前 k 個主成分
"""
import logging

import numpy as np
from scipy import linalg

from .entities import GaussianStats, PCAModel
from .exceptions import DimensionMismatchError, StatisticsError

logger = logging.getLogger(__name__)


def _as_points(points):
    rows = [np.asarray(p, dtype=np.float64).reshape(-1) for p in points]
    if not rows:
        raise StatisticsError('沒有任何樣本')
    d = rows[0].size
    for i, row in enumerate(rows):
        if row.size != d:
            raise DimensionMismatchError(f"第 {i} 個點的維度為 {row.size}，預期 {d}")
    arr = np.vstack(rows)
    if not np.all(np.isfinite(arr)):
        raise StatisticsError('樣本含有非有限數')
    return arr


def _covariance(arr):
    cov = np.atleast_2d(np.cov(arr, rowvar=False, ddof=1))
    return 0.5 * (cov + cov.T)


def fit_gaussian_stats(points, eps_scale=1e-6):
    """
    points 至少要有 2 個。共變異數的 trace 為 0（所有點相同）時 eps 直接取 eps_scale。
    Cholesky 分解失敗時退回以 eps 為特徵值下限的 pseudo-inverse。
    """
    arr = _as_points(points)
    n, d = arr.shape
    if n < 2:
        raise StatisticsError(f"至少需要 2 個樣本，目前只有 {n} 個")
    mean = arr.mean(axis=0)
    cov = _covariance(arr)
    trace = float(np.trace(cov))
    eps = eps_scale * trace / d if trace > 0 else eps_scale
    regularized = cov + eps * np.eye(d)

    try:
        factor = linalg.cho_factor(regularized, lower=True)
        return GaussianStats(mean, cov, eps, n, factor=factor)
    except linalg.LinAlgError:
        logger.warning(f"共變異數矩陣（d={d}）無法做 Cholesky 分解，改用 pseudo-inverse")
    w, v = linalg.eigh(regularized)
    w = np.maximum(w, eps)
    return GaussianStats(mean, cov, eps, n, pinv=(v / w) @ v.T)


def _check_point(stats, point):
    p = np.asarray(point, dtype=np.float64).reshape(-1)
    if p.size != stats.dimension:
        raise DimensionMismatchError(f"點的維度為 {p.size}，統計量的維度為 {stats.dimension}")
    if not np.all(np.isfinite(p)):
        raise StatisticsError('點含有非有限數')
    return p


def mahalanobis(stats, point):
    diff = _check_point(stats, point) - stats.mean
    return float(np.sqrt(max(float(diff @ stats.solve(diff)), 0.0)))


def distance_band(stats, points):
    """(最小距離, 最大距離)；通常 points 就是擬合 stats 的那些點"""
    distances = [mahalanobis(stats, p) for p in points]
    if not distances:
        raise StatisticsError('distance_band 需要至少一個點')
    return min(distances), max(distances)


def fit_pca(points, k=2):
    """
    中心化後對共變異數做特徵分解，取特徵值最大的 k 個特徵向量。
    每個主成分的正負號固定為絕對值最大的分量為正。
    """
    arr = _as_points(points)
    n, d = arr.shape
    if k < 1 or k > d:
        raise StatisticsError(f"k={k} 必須在 [1, {d}]")
    if n < max(k, 2):
        raise StatisticsError(f"PCA 需要至少 {max(k, 2)} 個樣本，目前只有 {n} 個")
    mean = arr.mean(axis=0)
    w, v = np.linalg.eigh(_covariance(arr))
    order = np.argsort(-w, kind='mergesort')[:k]
    components = v[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAModel(mean, components, np.maximum(w[order], 0.0))


def project(pca, point):
    """components · (point - mean)；point 為 (d) 回傳 (k)，(N, d) 回傳 (N, k)"""
    arr = np.asarray(point, dtype=np.float64)
    if arr.shape[-1] != pca.dimension or arr.ndim not in (1, 2):
        raise DimensionMismatchError(f"點的形狀為 {arr.shape}，PCA 的維度為 {pca.dimension}")
    return (arr - pca.mean) @ pca.components.T
