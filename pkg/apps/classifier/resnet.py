"""
1D ResNet：blocks 個殘差 block，每個 block 有 convs_per_block 個 conv1d -> batchnorm -> relu，
最後一個 conv 之後先加上 skip（通道數不同時改用 1x1 conv + batchnorm 投影）再 relu。
head 為 global average pooling -> linear。
"""
from collections import OrderedDict

import numpy as np

from apps.autodiff import ops
from apps.autodiff.tensor import Tensor, as_tensor

from .entities import ModelWeights, is_running_stat, parameter_shapes
from .exceptions import InputLengthError


def build_resnet(config, seed):
    """
    依 config 建立初始權重。conv 與 head 的權重用 fan-in 縮放的高斯（He 初始化），
    bias / beta 為 0，gamma 為 1，running stats 為 (0, 1)。同樣的 seed 得到同樣的權重。
    """
    config.validate()
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in parameter_shapes(config):
        field = name.rsplit('.', 1)[1]
        if field == 'weight':
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif field in ('gamma', 'running_var'):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return ModelWeights(config, params)


class ResNet:
    """
    把 ModelWeights 包成一組 Tensor 並提供前向傳遞。

    trainable=True 時除了 running stats 以外的參數都 requires_grad，
    train 模式的 batchnorm 會直接更新這裡的 running stats；
    to_weights() 取回新的 ModelWeights。
    """

    def __init__(self, weights, trainable=False):
        self.config = weights.config
        self.tensors = OrderedDict(
            (name, Tensor(value, requires_grad=trainable and not is_running_stat(name)))
            for name, value in weights.params.items()
        )
        self.bn_stats = {}
        for name in self.tensors:
            if name.endswith('.running_mean'):
                prefix = name[:-len('.running_mean')]
                self.bn_stats[prefix] = ops.BatchNormStats(
                    self.tensors[f'{prefix}.running_mean'],
                    self.tensors[f'{prefix}.running_var'],
                )

    def parameters(self):
        return [t for t in self.tensors.values() if t.requires_grad]

    def to_weights(self):
        return ModelWeights(self.config, OrderedDict((n, t.data.copy()) for n, t in self.tensors.items()))

    def _conv_bn(self, h, conv, bn, mode):
        h = ops.conv1d(h, self.tensors[f'{conv}.weight'], self.tensors[f'{conv}.bias'])
        return ops.batchnorm1d(h, self.tensors[f'{bn}.gamma'], self.tensors[f'{bn}.beta'], self.bn_stats[bn], mode)

    def block(self, b, x, mode):
        c_in, c_out = self.config.block_channels(b)
        h = x
        last = self.config.convs_per_block - 1
        for j in range(self.config.convs_per_block):
            h = self._conv_bn(h, f'block{b}.conv{j}', f'block{b}.bn{j}', mode)
            if j < last:
                h = ops.relu(h)
        if c_in != c_out:
            skip = self._conv_bn(x, f'block{b}.shortcut', f'block{b}.shortcut_bn', mode)
        else:
            skip = x
        return ops.relu(h + skip)

    def _as_input(self, x):
        x = as_tensor(x)
        m = self.config.input_length
        if x.data.ndim == 1 and x.data.shape[0] == m:
            return ops.reshape(x, (1, m))
        if x.data.ndim == 2 and x.data.shape[1] == m:
            return ops.reshape(x, (x.data.shape[0], 1, m))
        raise InputLengthError(f"輸入形狀 {x.shape} 與模型輸入長度 {m} 不符")

    def forward(self, x, mode='eval', capture=None):
        """
        x: (m) 或 (N, m)，回傳 logits Tensor，形狀 (k) 或 (N, k)。
        capture 為 dict 時依序放入 'block:i' 與 'penultimate' 的 Tensor。
        """
        h = self._as_input(x)
        for b in range(self.config.blocks):
            h = self.block(b, h, mode)
            if capture is not None:
                capture[f'block:{b}'] = h
        pooled = ops.global_avg_pool(h)
        if capture is not None:
            capture['penultimate'] = pooled
        return ops.linear(pooled, self.tensors['head.weight'], self.tensors['head.bias'])

    __call__ = forward
