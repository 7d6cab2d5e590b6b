"""
可微分運算。只實作分類器與 dreaming 損失需要的那幾個，不支援一般 broadcasting：
二元運算要嘛形狀相同，要嘛其中一邊是純量。

conv1d / batchnorm1d / global_avg_pool / linear 都接受 (C, L) 單筆，
或前面多一個 batch 維度的 (N, C, L)。
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import BatchNormStatsError, ShapeError
from .tensor import Tensor, as_tensor, record

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


# ---------------------------------------------------------------------------
# 逐元素運算
# ---------------------------------------------------------------------------

def _binary_operands(a, b, name):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"{name}: 形狀 {a.shape} 與 {b.shape} 不符（不支援 broadcasting）")
    return a, b


def _reduce_to(g, shape):
    """純量一側的梯度要加總回純量"""
    if g.shape == shape:
        return g
    return np.full(shape, g.sum())


def add(a, b):
    a, b = _binary_operands(a, b, 'add')
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return _reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)

    return record('add', (a, b), out, backward_fn)


def sub(a, b):
    a, b = _binary_operands(a, b, 'sub')
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return _reduce_to(g, a.data.shape), _reduce_to(-g, b.data.shape)

    return record('sub', (a, b), out, backward_fn)


def mul(a, b):
    a, b = _binary_operands(a, b, 'mul')
    out = Tensor(a.data * b.data)

    def backward_fn(g):
        return _reduce_to(g * b.data, a.data.shape), _reduce_to(g * a.data, b.data.shape)

    return record('mul', (a, b), out, backward_fn)


def div(a, b):
    a, b = _binary_operands(a, b, 'div')
    out = Tensor(a.data / b.data)

    def backward_fn(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _reduce_to(ga, a.data.shape), _reduce_to(gb, b.data.shape)

    return record('div', (a, b), out, backward_fn)


def power(x, exponent):
    """x ** p，p 為固定實數；非整數次方時 x 需為非負"""
    x = as_tensor(x)
    p = float(exponent)
    out = Tensor(np.power(x.data, p))

    def backward_fn(g):
        if p == 0.0:
            return (np.zeros_like(x.data),)
        return (g * p * np.power(x.data, p - 1.0),)

    return record('power', (x,), out, backward_fn)


def absolute(x):
    """|x|，在 0 的 subgradient 取 0"""
    x = as_tensor(x)
    out = Tensor(np.abs(x.data))

    def backward_fn(g):
        return (g * np.sign(x.data),)

    return record('abs', (x,), out, backward_fn)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))

    def backward_fn(g):
        return (g * mask,)

    return record('relu', (x,), out, backward_fn)


def tensor_sum(x):
    x = as_tensor(x)
    out = Tensor(x.data.sum())

    def backward_fn(g):
        return (np.full(x.data.shape, float(g)),)

    return record('sum', (x,), out, backward_fn)


def mean(x):
    x = as_tensor(x)
    n = x.data.size
    out = Tensor(x.data.mean())

    def backward_fn(g):
        return (np.full(x.data.shape, float(g) / n),)

    return record('mean', (x,), out, backward_fn)


def diff(x):
    """一維相鄰差分 x[i+1] - x[i]"""
    x = as_tensor(x)
    if x.data.ndim != 1 or x.data.size < 2:
        raise ShapeError(f"diff 需要長度 >= 2 的一維張量，目前 shape 為 {x.shape}")
    out = Tensor(x.data[1:] - x.data[:-1])

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[1:] += g
        gx[:-1] -= g
        return (gx,)

    return record('diff', (x,), out, backward_fn)


def select(x, index):
    """取單一元素（整數或整數 tuple 索引）"""
    x = as_tensor(x)
    out = Tensor(x.data[index])

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[index] += g
        return (gx,)

    return record('select', (x,), out, backward_fn)


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = Tensor(x.data.reshape(shape))
    except ValueError:
        raise ShapeError(f"無法把 {x.shape} reshape 成 {tuple(shape)}")

    def backward_fn(g):
        return (g.reshape(x.data.shape),)

    return record('reshape', (x,), out, backward_fn)


# ---------------------------------------------------------------------------
# 網路層
# ---------------------------------------------------------------------------

def _as_batched(x, ndim, name):
    """(C, L) -> (1, C, L)，回傳是否原本就帶 batch 維度"""
    if x.data.ndim == ndim:
        return x.data[None, ...], False
    if x.data.ndim == ndim + 1:
        return x.data, True
    raise ShapeError(f"{name}: 不支援的輸入形狀 {x.shape}")


def conv1d(x, weight, bias):
    """
    Cross-correlation（不翻轉 kernel），兩側各補 (K-1)/2 個 0，輸出長度不變：
        out[o][i] = bias[o] + sum_c sum_k weight[o][c][k] * padded[c][i+k]
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.data.ndim != 3:
        raise ShapeError(f"conv1d: weight 需為 (Cout, Cin, K)，目前為 {weight.shape}")
    c_out, c_in, k = weight.data.shape
    if k % 2 != 1:
        raise ShapeError(f"conv1d: kernel 長度需為奇數，目前 weight 為 {weight.shape}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d: bias {bias.shape} 與 weight {weight.shape} 不符")
    xb, batched = _as_batched(x, 2, 'conv1d')
    n, xc, length = xb.shape
    if xc != c_in:
        raise ShapeError(f"conv1d: input {x.shape} 的通道數與 weight {weight.shape} 不符")

    pad = (k - 1) // 2
    padded = np.pad(xb, ((0, 0), (0, 0), (pad, pad)))
    # (N, Cin, L, K) -> (N*L, Cin*K)
    cols = sliding_window_view(padded, k, axis=2).transpose(0, 2, 1, 3).reshape(n * length, c_in * k)
    w2 = weight.data.reshape(c_out, c_in * k)
    out_data = (cols @ w2.T).reshape(n, length, c_out).transpose(0, 2, 1) + bias.data[None, :, None]
    out = Tensor(out_data if batched else out_data[0])

    def backward_fn(g):
        gb3 = g if batched else g[None, ...]
        g2 = gb3.transpose(0, 2, 1).reshape(n * length, c_out)
        g_weight = (g2.T @ cols).reshape(c_out, c_in, k)
        g_bias = gb3.sum(axis=(0, 2))
        g_cols = (g2 @ w2).reshape(n, length, c_in, k)
        g_padded = np.zeros_like(padded)
        for j in range(k):
            g_padded[:, :, j:j + length] += g_cols[:, :, :, j].transpose(0, 2, 1)
        g_x = g_padded[:, :, pad:pad + length]
        return (g_x if batched else g_x[0]), g_weight, g_bias

    return record('conv1d', (x, weight, bias), out, backward_fn)


class BatchNormStats:
    """每個通道的 running mean / variance；eval 模式只用這兩個值"""

    def __init__(self, running_mean=None, running_var=None, momentum=BN_MOMENTUM):
        self.running_mean = running_mean
        self.running_var = running_var
        self.momentum = momentum

    @classmethod
    def initial(cls, channels, momentum=BN_MOMENTUM):
        return cls(Tensor(np.zeros(channels)), Tensor(np.ones(channels)), momentum)

    @property
    def populated(self):
        return self.running_mean is not None and self.running_var is not None


def batchnorm1d(x, gamma, beta, stats, mode='eval'):
    """
    train: 以 batch 統計量正規化，並以 momentum 更新 running stats（variance 用不偏估計）
    eval:  (x - mu) / sqrt(var + eps) * gamma + beta，只用 running stats
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xb, batched = _as_batched(x, 2, 'batchnorm1d')
    n, c, length = xb.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm1d: gamma {gamma.shape} / beta {beta.shape} 與輸入 {x.shape} 不符")

    if mode == 'train':
        count = n * length
        mu = xb.mean(axis=(0, 2))
        var = xb.var(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        x_hat = (xb - mu[None, :, None]) * inv_std[None, :, None]
        if stats is not None and stats.populated:
            unbiased = var * count / max(count - 1, 1)
            m = stats.momentum
            stats.running_mean.data[...] = (1 - m) * stats.running_mean.data + m * mu
            stats.running_var.data[...] = (1 - m) * stats.running_var.data + m * unbiased
    elif mode == 'eval':
        if stats is None or not stats.populated:
            raise BatchNormStatsError('eval 模式需要已建立的 running stats')
        count = None
        inv_std = 1.0 / np.sqrt(stats.running_var.data + BN_EPS)
        x_hat = (xb - stats.running_mean.data[None, :, None]) * inv_std[None, :, None]
    else:
        raise ValueError(f"未知的 batchnorm 模式: {mode}")

    out_data = x_hat * gamma.data[None, :, None] + beta.data[None, :, None]
    out = Tensor(out_data if batched else out_data[0])

    def backward_fn(g):
        gb3 = g if batched else g[None, ...]
        g_gamma = (gb3 * x_hat).sum(axis=(0, 2))
        g_beta = gb3.sum(axis=(0, 2))
        g_xhat = gb3 * gamma.data[None, :, None]
        if mode == 'train':
            sum_g = g_xhat.sum(axis=(0, 2))[None, :, None]
            sum_gx = (g_xhat * x_hat).sum(axis=(0, 2))[None, :, None]
            g_x = inv_std[None, :, None] / count * (count * g_xhat - sum_g - x_hat * sum_gx)
        else:
            g_x = g_xhat * inv_std[None, :, None]
        return (g_x if batched else g_x[0]), g_gamma, g_beta

    return record('batchnorm1d', (x, gamma, beta), out, backward_fn)


def global_avg_pool(x):
    """(C, L) -> (C)；(N, C, L) -> (N, C)"""
    x = as_tensor(x)
    if x.data.ndim not in (2, 3) or x.data.shape[-1] < 1:
        raise ShapeError(f"global_avg_pool: 不支援的輸入形狀 {x.shape}")
    length = x.data.shape[-1]
    out = Tensor(x.data.mean(axis=-1))

    def backward_fn(g):
        return (np.repeat(g[..., None] / length, length, axis=-1),)

    return record('global_avg_pool', (x,), out, backward_fn)


def linear(x, weight, bias):
    """Wx + b；x 為 (n) 或 (N, n)"""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.data.ndim != 2 or bias.shape != (weight.data.shape[0],):
        raise ShapeError(f"linear: weight {weight.shape} 與 bias {bias.shape} 不符")
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != weight.data.shape[1]:
        raise ShapeError(f"linear: input {x.shape} 與 weight {weight.shape} 不符")
    out = Tensor(x.data @ weight.data.T + bias.data)

    def backward_fn(g):
        g_x = g @ weight.data
        if x.data.ndim == 1:
            g_w = np.outer(g, x.data)
            g_b = g.copy()
        else:
            g_w = g.T @ x.data
            g_b = g.sum(axis=0)
        return g_x, g_w, g_b

    return record('linear', (x, weight, bias), out, backward_fn)


def softmax(logits):
    """數值穩定版 softmax（不記錄梯度），接受 (k) 或 (N, k)"""
    z = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """
    -log softmax(logits)[label]，先減去最大值再取 log-sum-exp。
    (N, k) 配整數陣列 label 時回傳 batch 平均。
    梯度為 softmax - onehot。
    """
    logits = as_tensor(logits)
    z = logits.data
    if z.ndim not in (1, 2):
        raise ShapeError(f"softmax_cross_entropy: 不支援的 logits 形狀 {logits.shape}")
    zb = z[None, :] if z.ndim == 1 else z
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    n, k = zb.shape
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: label 數量 {labels.shape} 與 logits {logits.shape} 不符")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label 超出範圍 [0, {k})")

    shifted = zb - zb.max(axis=1, keepdims=True)
    log_sum = np.log(np.exp(shifted).sum(axis=1))
    losses = log_sum - shifted[np.arange(n), labels]
    out = Tensor(losses.mean())

    def backward_fn(g):
        probs = softmax(zb)
        probs[np.arange(n), labels] -= 1.0
        gz = probs * (float(g) / n)
        return (gz[0] if z.ndim == 1 else gz,)

    return record('softmax_cross_entropy', (logits,), out, backward_fn)
