from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from functools import cached_property

import numpy as np

from .exceptions import InvalidConfigError, InvalidLayerError

WEIGHT_FORMAT_VERSION = 'SEQDREAM-W1'


@dataclass(frozen=True)
class ResNetConfig:
    """
    1D ResNet 架構。channels 每個 block 一個值；kernels 每個 conv 一個值，
    每個 block 重複使用同一組。
    """
    num_classes: int = 2
    input_length: int = 128
    blocks: int = 3
    convs_per_block: int = 3
    channels: tuple = (64, 128, 128)
    kernels: tuple = (7, 5, 3)

    def __post_init__(self):
        object.__setattr__(self, 'channels', tuple(int(c) for c in self.channels))
        object.__setattr__(self, 'kernels', tuple(int(k) for k in self.kernels))
        self.validate()

    def validate(self):
        if self.blocks < 1:
            raise InvalidConfigError(f"model.blocks 至少為 1，目前為 {self.blocks}")
        if self.convs_per_block < 1:
            raise InvalidConfigError(f"model.convs_per_block 至少為 1，目前為 {self.convs_per_block}")
        if not self.channels or not self.kernels:
            raise InvalidConfigError('model.channels 與 model.kernels 不可為空')
        if len(self.channels) != self.blocks:
            raise InvalidConfigError(
                f"model.channels 需要 {self.blocks} 個值（每個 block 一個），目前為 {list(self.channels)}"
            )
        if len(self.kernels) != self.convs_per_block:
            raise InvalidConfigError(
                f"model.kernels 需要 {self.convs_per_block} 個值（每個 conv 一個），目前為 {list(self.kernels)}"
            )
        if any(c < 1 for c in self.channels):
            raise InvalidConfigError(f"model.channels 必須為正整數: {list(self.channels)}")
        if any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise InvalidConfigError(f"model.kernels 必須為正奇數: {list(self.kernels)}")
        if self.num_classes < 2:
            raise InvalidConfigError(f"num_classes 至少為 2，目前為 {self.num_classes}")
        if self.input_length < 1:
            raise InvalidConfigError(f"input_length 必須為正整數，目前為 {self.input_length}")

    def block_channels(self, b):
        """第 b 個 block 的 (輸入通道, 輸出通道)"""
        c_in = 1 if b == 0 else self.channels[b - 1]
        return c_in, self.channels[b]

    def as_dict(self):
        data = asdict(self)
        data['channels'] = list(self.channels)
        data['kernels'] = list(self.kernels)
        return data

    @classmethod
    def from_dict(cls, data):
        known = {'num_classes', 'input_length', 'blocks', 'convs_per_block', 'channels', 'kernels'}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"未知的模型設定欄位: {', '.join(sorted(unknown))}")
        return cls(**data)


def _bn_shapes(prefix, channels):
    return [
        (f'{prefix}.gamma', (channels,)),
        (f'{prefix}.beta', (channels,)),
        (f'{prefix}.running_mean', (channels,)),
        (f'{prefix}.running_var', (channels,)),
    ]


def parameter_shapes(config):
    """依固定順序列出 (參數名稱, shape)，權重檔與初始化都照這個順序"""
    shapes = []
    for b in range(config.blocks):
        c_in, c_out = config.block_channels(b)
        prev = c_in
        for j, k in enumerate(config.kernels):
            shapes.append((f'block{b}.conv{j}.weight', (c_out, prev, k)))
            shapes.append((f'block{b}.conv{j}.bias', (c_out,)))
            shapes.extend(_bn_shapes(f'block{b}.bn{j}', c_out))
            prev = c_out
        if c_in != c_out:
            shapes.append((f'block{b}.shortcut.weight', (c_out, c_in, 1)))
            shapes.append((f'block{b}.shortcut.bias', (c_out,)))
            shapes.extend(_bn_shapes(f'block{b}.shortcut_bn', c_out))
    shapes.append(('head.weight', (config.num_classes, config.channels[-1])))
    shapes.append(('head.bias', (config.num_classes,)))
    return shapes


def is_running_stat(name):
    return name.endswith('.running_mean') or name.endswith('.running_var')


@dataclass(frozen=True, eq=False)
class ModelWeights:
    """
    訓練好的模型 M：有序的具名參數與架構設定。
    陣列在建立時複製並設為唯讀，可安全地給多個 dreaming 同時讀取。
    """
    config: ResNetConfig
    params: OrderedDict
    format_version: str = WEIGHT_FORMAT_VERSION

    def __post_init__(self):
        frozen = OrderedDict()
        for name, value in self.params.items():
            arr = np.array(value, dtype=np.float64)
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, 'params', frozen)

    @cached_property
    def network(self):
        """eval 模式、參數不需梯度的網路，供 logits / activations / dreaming 共用"""
        from .resnet import ResNet
        return ResNet(self, trainable=False)

    def __getitem__(self, name):
        return self.params[name]

    def replace(self, **updates):
        """回傳替換部分參數後的新 ModelWeights"""
        params = OrderedDict(self.params)
        for name, value in updates.items():
            if name not in params:
                raise KeyError(name)
            params[name] = value
        return ModelWeights(self.config, params, self.format_version)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 64
    beta_1: float = 0.9
    beta_2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidConfigError(f"train.epochs 不可為負，目前為 {self.epochs}")
        if not self.lr > 0:
            raise InvalidConfigError(f"train.lr 必須大於 0，目前為 {self.lr}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"train.batch_size 至少為 1，目前為 {self.batch_size}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainingHistory:
    epochs: list = field(default_factory=list)
    train_accuracy: float = None
    test_accuracy: float = None

    def __len__(self):
        return len(self.epochs)

    @property
    def losses(self):
        return [r.loss for r in self.epochs]


@dataclass(frozen=True)
class LayerSelector:
    """logits（預設）、penultimate（GAP 後的特徵）或 block:i 的輸出"""
    kind: str = 'logits'
    index: int = None

    KINDS = ('logits', 'penultimate', 'block')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidLayerError(f"未知的層選擇: {self.kind!r}")
        if self.kind == 'block' and (self.index is None or self.index < 0):
            raise InvalidLayerError('block 選擇需要非負的索引，例如 block:0')

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        text = str(text).strip()
        if text.startswith('block:'):
            try:
                return cls('block', int(text.split(':', 1)[1]))
            except ValueError:
                raise InvalidLayerError(f"無法解析的層選擇: {text!r}")
        return cls(text)

    @property
    def key(self):
        return f'block:{self.index}' if self.kind == 'block' else self.kind

    def __str__(self):
        return self.key

    def check(self, config):
        if self.kind == 'block' and self.index >= config.blocks:
            raise InvalidLayerError(f"block 索引 {self.index} 超出範圍 [0, {config.blocks})")
