"""
SEQDREAM-W1 權重檔（純文字、ASCII）

    SEQDREAM-W1
    config {"num_classes": 2, "input_length": 128, ...}
    param block0.conv0.weight 64,1,7
    <以空白分隔、17 位有效數字的 row-major 數值>
    param block0.conv0.bias 64
    ...
    end

參數依 parameter_shapes(config) 的順序排列，每個參數兩行。
讀取時 shape 必須與內嵌設定推得的 shape 完全一致。
"""
import json
import logging
from collections import OrderedDict

import numpy as np

from .entities import WEIGHT_FORMAT_VERSION, ModelWeights, ResNetConfig, parameter_shapes
from .exceptions import InvalidConfigError, WeightFileError, WeightShapeError, WeightVersionError

logger = logging.getLogger(__name__)

MAGIC_PREFIX = 'SEQDREAM-W'


def _format_shape(shape):
    return ','.join(str(d) for d in shape)


def save_weights(model, path):
    lines = [WEIGHT_FORMAT_VERSION, 'config ' + json.dumps(model.config.as_dict(), sort_keys=True)]
    for name, value in model.params.items():
        lines.append(f'param {name} {_format_shape(value.shape)}')
        lines.append(' '.join('%.17g' % v for v in value.reshape(-1)))
    lines.append('end')
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    logger.info(f"已寫入權重檔 {path}（{len(model.params)} 個參數）")


def _next(lines, pos, path, what):
    if pos >= len(lines):
        raise WeightFileError(f"{path} 被截斷：缺少{what}")
    return lines[pos]


def load_weights(path):
    try:
        with open(path, 'r', encoding='ascii') as f:
            lines = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise WeightFileError(f"無法讀取權重檔 {path}: {e}")

    magic = _next(lines, 0, path, '檔頭').strip()
    if magic != WEIGHT_FORMAT_VERSION:
        if magic.startswith(MAGIC_PREFIX):
            raise WeightVersionError(f"{path} 的格式版本為 {magic}，目前只支援 {WEIGHT_FORMAT_VERSION}")
        raise WeightFileError(f"{path} 不是 SEQDREAM 權重檔")

    header = _next(lines, 1, path, ' config 行')
    if not header.startswith('config '):
        raise WeightFileError(f"{path} 第 2 行應為 config")
    try:
        config = ResNetConfig.from_dict(json.loads(header[len('config '):]))
    except (ValueError, TypeError, InvalidConfigError) as e:
        raise WeightFileError(f"{path} 的內嵌設定無法解析: {e}")

    params = OrderedDict()
    pos = 2
    for name, shape in parameter_shapes(config):
        line = _next(lines, pos, path, f'參數 {name}')
        parts = line.split(' ')
        if len(parts) != 3 or parts[0] != 'param':
            raise WeightFileError(f"{path} 第 {pos + 1} 行格式錯誤")
        if parts[1] != name:
            raise WeightShapeError(f"{path} 第 {pos + 1} 行為 {parts[1]}，依設定應為 {name}")
        try:
            declared = tuple(int(d) for d in parts[2].split(','))
        except ValueError:
            raise WeightFileError(f"{path} 第 {pos + 1} 行的 shape 無法解析")
        if declared != shape:
            raise WeightShapeError(f"{name} 的 shape 為 {declared}，依設定應為 {shape}")
        raw = _next(lines, pos + 1, path, f' {name} 的數值')
        try:
            values = np.array([float(v) for v in raw.split()], dtype=np.float64)
        except ValueError:
            raise WeightFileError(f"{path} 第 {pos + 2} 行含有非數值")
        if values.size != int(np.prod(shape)):
            raise WeightFileError(f"{name} 有 {values.size} 個數值，預期 {int(np.prod(shape))} 個")
        if not np.all(np.isfinite(values)):
            raise WeightFileError(f"{name} 含有 NaN 或 inf")
        params[name] = values.reshape(shape)
        pos += 2

    if _next(lines, pos, path, ' end 行').strip() != 'end':
        raise WeightFileError(f"{path} 第 {pos + 1} 行應為 end")
    return ModelWeights(config, params)
