import numpy as np

from .exceptions import NonFiniteError, ShapeError
from .tensor import Tape, Tensor


def _scalar(value):
    if isinstance(value, Tensor):
        if value.data.size != 1:
            raise ShapeError(f"grad_check 的 f 必須回傳純量，目前 shape 為 {value.shape}")
        value = value.item()
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteError(f"f 的值不是有限數: {value}")
    return value


def autodiff_gradient(f, x):
    """以 Tape 反向傳遞計算 df/dx"""
    xt = Tensor(x, requires_grad=True)
    with Tape() as tape:
        y = f(xt)
    _scalar(y)
    tape.backward(y)
    return xt.grad.copy()


def finite_difference_gradient(f, x, step=1e-6):
    """中央差分，逐座標 (f(x+h) - f(x-h)) / 2h"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for i in range(x.size):
        plus = x.copy().reshape(-1)
        minus = x.copy().reshape(-1)
        plus[i] += step
        minus[i] -= step
        f_plus = _scalar(f(Tensor(plus.reshape(x.shape))))
        f_minus = _scalar(f(Tensor(minus.reshape(x.shape))))
        flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def grad_check(f, x, step=1e-6):
    """
    比對 autodiff 與中央差分，回傳
        max_i |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|)

    f 在 x 附近不可有 relu 剛好落在 0 的 kink（差分在那裡沒有意義）。
    """
    g_ad = autodiff_gradient(f, x)
    g_fd = finite_difference_gradient(f, x, step)
    denom = np.maximum(1e-12, np.abs(g_ad) + np.abs(g_fd))
    return float(np.max(np.abs(g_ad - g_fd) / denom)) if g_ad.size else 0.0
