import numpy as np

from apps.autodiff import ops

from .entities import LayerSelector

# eval 模式一次送進網路的序列數
EVAL_BATCH = 256


def _batched(values):
    arr = np.asarray(values, dtype=np.float64)
    return arr, arr.ndim == 1


def _forward_layer(model, values, selector):
    net = model.network
    capture = {}
    out = net.forward(values, mode='eval', capture=capture)
    if selector.kind == 'logits':
        return out.data
    data = capture[selector.key].data
    return data.reshape(data.shape[0], -1) if data.ndim == 3 else data


def activations(model, series, layer='logits'):
    """
    eval 模式前向傳遞，回傳所選層攤平後的輸出。
    series 為 (m) 時回傳一維向量，(N, m) 時回傳 (N, d)。
    """
    selector = LayerSelector.parse(layer)
    selector.check(model.config)
    arr, single = _batched(series)
    if single:
        out = _forward_layer(model, arr, selector)
        return out.reshape(-1)
    chunks = [_forward_layer(model, arr[i:i + EVAL_BATCH], selector) for i in range(0, len(arr), EVAL_BATCH)]
    return np.concatenate(chunks, axis=0)


def logits(model, series):
    """S(ts)：softmax 之前的分類器輸出，第 c 個分量就是 S_c(ts)"""
    return activations(model, series, 'logits')


def predict(model, series):
    """回傳 (預測類別, softmax 信心)"""
    probs = ops.softmax(logits(model, series))
    if probs.ndim == 1:
        c = int(np.argmax(probs))
        return c, float(probs[c])
    pred = probs.argmax(axis=1)
    return pred, probs[np.arange(len(pred)), pred]


def accuracy(model, ds):
    pred, _ = predict(model, ds.values)
    return float(np.mean(pred == ds.labels))
