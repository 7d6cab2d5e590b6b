"""
輸入空間的正則化

可微分的損失項（*_term，接受並回傳 Tensor）：
    tv            sum_{i<m} |t_{i+1} - t_i|^beta
    sm            mean_{i<m} |t_{i+1} - t_i|
    alpha_norm    mean_i |t_i|^alpha

不進入損失、每一步直接作用在數值上的轉換：
    clamp_to_bounds / l2_decay / random_scale /
    moving_average_smooth / exponential_smooth / gaussian_blur_1d / reinit_on_plateau
"""
import logging
import math

import numpy as np
from scipy import ndimage, signal

from apps.autodiff import ops
from apps.autodiff.exceptions import ShapeError
from apps.autodiff.tensor import Tensor

from .exceptions import DreamConfigError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 損失項
# ---------------------------------------------------------------------------

def tv_term(x, beta):
    return ops.tensor_sum(ops.power(ops.absolute(ops.diff(x)), beta))


def sm_term(x):
    return ops.mean(ops.absolute(ops.diff(x)))


def alpha_norm_term(x, alpha):
    return ops.mean(ops.power(ops.absolute(x), alpha))


def _series(ts, min_length=1):
    arr = np.asarray(ts, dtype=np.float64).reshape(-1)
    if arr.size < min_length:
        raise ShapeError(f"序列長度至少為 {min_length}，目前為 {arr.size}")
    return arr


def tv(ts, beta):
    if beta < 1:
        raise DreamConfigError(f"beta 至少為 1，目前為 {beta}")
    return tv_term(Tensor(_series(ts, 2)), beta).item()


def sm(ts):
    return sm_term(Tensor(_series(ts, 2))).item()


def alpha_norm(ts, alpha):
    if alpha <= 0:
        raise DreamConfigError(f"alpha 必須大於 0，目前為 {alpha}")
    return alpha_norm_term(Tensor(_series(ts)), alpha).item()


# ---------------------------------------------------------------------------
# 數值轉換
# ---------------------------------------------------------------------------

def clamp_to_bounds(ts, lo, hi):
    if not lo < hi:
        raise DreamConfigError(f"clamp 邊界需滿足 lo < hi（{lo}, {hi}）")
    return np.clip(_series(ts), lo, hi)


def l2_decay(ts, rate):
    if not 0 <= rate < 1:
        raise DreamConfigError(f"l2_decay 必須在 [0, 1)，目前為 {rate}")
    return (1.0 - rate) * _series(ts)


def random_scale(ts, s, rng, per_point=True):
    """每個時間點（per_point=False 時整條序列共用一個）乘上 U[1-s, 1+s]"""
    if not 0 <= s < 1:
        raise DreamConfigError(f"scale_jitter 必須在 [0, 1)，目前為 {s}")
    arr = _series(ts)
    size = arr.size if per_point else 1
    return arr * rng.uniform(1.0 - s, 1.0 + s, size=size)


def moving_average_smooth(ts, window):
    """置中的移動平均，邊界處只平均實際存在的點"""
    if window < 1 or window % 2 == 0:
        raise DreamConfigError(f"移動平均視窗必須為正奇數，目前為 {window}")
    arr = _series(ts)
    kernel = np.ones(window)
    # 視窗比序列長時，超出的部分補 0 且不計入個數
    sums = ndimage.correlate1d(arr, kernel, mode='constant', cval=0.0)
    counts = ndimage.correlate1d(np.ones_like(arr), kernel, mode='constant', cval=0.0)
    return sums / counts


def _exponential_pass(arr, gamma):
    # s_1 = t_1, s_i = gamma * t_i + (1 - gamma) * s_{i-1}
    out, _ = signal.lfilter([gamma], [1.0, gamma - 1.0], arr, zi=[(1.0 - gamma) * arr[0]])
    return out


def exponential_smooth(ts, gamma, zero_phase=True):
    """指數平滑；zero_phase 時先正向再反向各做一次，結果沒有時間延遲"""
    if not 0 < gamma <= 1:
        raise DreamConfigError(f"exp_gamma 必須在 (0, 1]，目前為 {gamma}")
    arr = _series(ts)
    out = _exponential_pass(arr, gamma)
    if zero_phase:
        out = _exponential_pass(out[::-1], gamma)[::-1]
    return np.ascontiguousarray(out)


def gaussian_kernel(sigma):
    """截在半徑 ceil(3 sigma)、總和為 1 的離散高斯核"""
    if not sigma > 0:
        raise DreamConfigError(f"sigma 必須大於 0，目前為 {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur_1d(ts, sigma):
    """高斯模糊，邊界以鏡射延伸；sigma 以時間步為單位"""
    return ndimage.correlate1d(_series(ts), gaussian_kernel(sigma), mode='reflect')


def smooth(ts, cfg):
    if cfg.smoothing == 'exponential':
        return exponential_smooth(ts, cfg.exp_gamma, cfg.zero_phase)
    if cfg.smoothing == 'moving_average':
        return moving_average_smooth(ts, cfg.ma_window)
    return _series(ts)


def plateau_detected(loss_trace, window, eps):
    """
    比較 window 步之前的最佳損失與目前的最佳損失，
    相對改善小於 eps 即視為停滯。
    """
    if len(loss_trace) < window:
        return False
    trace = np.asarray(loss_trace, dtype=np.float64)
    best_then = float(trace[:len(trace) - window + 1].min())
    best_now = float(trace.min())
    change = (best_then - best_now) / max(abs(best_then), 1e-12)
    return change < eps


def reinit_on_plateau(state, loss_trace, cfg):
    """
    loss_trace 為上次重新初始化之後的損失紀錄。停滯時在 state.series 加上
    標準差 reinit_noise_std 的高斯雜訊並累計 reinit_count。
    回傳 (序列, 是否觸發)。
    """
    if not plateau_detected(loss_trace, cfg.plateau_window, cfg.plateau_eps):
        return state.series, False
    noise = state.rng.normal(0.0, cfg.reinit_noise_std, size=state.series.shape)
    state.series = state.series + noise
    state.reinit_count += 1
    logger.debug(f"損失停滯，第 {state.reinit_count} 次重新初始化")
    return state.series, True
