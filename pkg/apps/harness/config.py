"""
執行設定檔（YAML）

    data:   train_path, test_path, delimiter, normalize, synth {n_train, n_test, length}
    model:  blocks, convs_per_block, channels, kernels
    train:  epochs, lr, batch_size, beta1, beta2, eps
    dream:  variant, mode, class, steps, lr, alpha, beta, sigma, lambda_*, ...
    grid:   steps, lr, alpha, beta, sigma, lambda_alpha, lambda_beta, lambda_sm（串列）,
            mode, variant, class, seeds, parallelism
    eval:   layer, eps_scale, per_class

優先順序：指令列參數 > 環境變數（輸出目錄、平行數）> 設定檔 > 內建預設值。
"""
import logging
import os
from dataclasses import dataclass, field

import yaml
from django.conf import settings
from rest_framework.settings import api_settings

from apps.classifier.entities import ResNetConfig, TrainConfig
from apps.dreamer.entities import DreamConfig

from .exceptions import ConfigError, MissingPathError
from .serializers import (
    DataSectionSerializer,
    DreamSectionSerializer,
    EvalSectionSerializer,
    GridSectionSerializer,
    ModelSectionSerializer,
    TrainSectionSerializer,
)

logger = logging.getLogger(__name__)

SECTIONS = {
    'data': DataSectionSerializer,
    'model': ModelSectionSerializer,
    'train': TrainSectionSerializer,
    'dream': DreamSectionSerializer,
    'grid': GridSectionSerializer,
    'eval': EvalSectionSerializer,
}

SYNTH_DEFAULTS = {'n_train': 200, 'n_test': 100, 'length': 128}
EVAL_DEFAULTS = {'layer': 'logits', 'eps_scale': 1e-6, 'per_class': True}


@dataclass(frozen=True)
class RunConfig:
    data: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    dream: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    source: str = None

    @property
    def synth(self):
        return {**SYNTH_DEFAULTS, **self.data.get('synth', {})}

    @property
    def evaluation(self):
        return {**EVAL_DEFAULTS, **self.eval}


def _flatten_errors(prefix, errors):
    """DRF 的巢狀錯誤 -> ['dream.class: ...', ...]"""
    if isinstance(errors, dict):
        messages = []
        for key, value in errors.items():
            name = prefix if key == api_settings.NON_FIELD_ERRORS_KEY else f'{prefix}.{key}'
            messages.extend(_flatten_errors(name, value))
        return messages
    if isinstance(errors, list) and errors and all(isinstance(e, str) for e in errors):
        return [f"{prefix}: {' '.join(str(e) for e in errors)}"]
    if isinstance(errors, list):
        messages = []
        for i, value in enumerate(errors):
            if value:
                messages.extend(_flatten_errors(f'{prefix}[{i}]', value))
        return messages
    return [f'{prefix}: {errors}']


def _to_plain(value):
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_to_plain(v) for v in value]
    return value


def parse_config(raw, source=None):
    """驗證已讀入的設定內容（dict），回傳 RunConfig"""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"設定檔 {source} 的最外層必須是鍵值對應表")
    unknown = sorted(str(k) for k in set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: 未知的設定區段")

    sections = {}
    for name, serializer_class in SECTIONS.items():
        serializer = serializer_class(data=raw.get(name) or {})
        if not serializer.is_valid():
            raise ConfigError('; '.join(_flatten_errors(name, serializer.errors)))
        sections[name] = _to_plain(dict(serializer.validated_data))
    return RunConfig(source=source, **sections)


def load_config(path=None):
    """讀取 YAML 設定檔；path 為 None 時回傳全部使用預設值的 RunConfig"""
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise MissingPathError(f"找不到設定檔: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"無法解析設定檔 {path}: {e}")
    except OSError as e:
        raise MissingPathError(f"無法讀取設定檔 {path}: {e}")
    logger.debug(f"載入設定檔 {path}")
    return parse_config(raw, path)


def _pick(*values):
    for value in values:
        if value is not None:
            return value
    return None


def output_dir(flag=None):
    conf = settings.SEQDREAM
    return _pick(flag, conf.get('OUTPUT_DIR'), conf['DEFAULT_OUTPUT_DIR'])


def parallelism(cfg, flag=None):
    conf = settings.SEQDREAM
    value = _pick(flag, conf.get('PARALLELISM'), cfg.grid.get('parallelism'), conf['DEFAULT_PARALLELISM'])
    if int(value) < 1:
        raise ConfigError(f"grid.parallelism: 至少為 1，目前為 {value}")
    return int(value)


def _without_none(overrides):
    return {k: v for k, v in (overrides or {}).items() if v is not None}


def resnet_config(cfg, num_classes, input_length):
    values = dict(cfg.model)
    for key in ('channels', 'kernels'):
        if key in values:
            values[key] = tuple(values[key])
    return ResNetConfig(num_classes=num_classes, input_length=input_length, **values)


def train_config(cfg, seed, **overrides):
    return TrainConfig(seed=seed, **{**cfg.train, **_without_none(overrides)})


def dream_config(cfg, seed, require_class=False, **overrides):
    """dream 區段加上指令列覆寫後的 DreamConfig；require_class 時沒有類別會丟 ConfigError"""
    values = {**cfg.dream, **_without_none(overrides)}
    if require_class and 'target_class' not in values:
        raise ConfigError('dream.class: 必須指定要 dreaming 的類別（設定檔或 --class）')
    return DreamConfig(seed=seed, **values)
