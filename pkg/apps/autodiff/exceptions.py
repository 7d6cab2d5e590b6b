# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_NUMERIC, EXIT_RUNTIME


class ShapeError(SeqDreamException, ValueError):
    """張量形狀不符"""
    default_detail = '張量形狀不符'
    default_code = 'shape_mismatch'
    exit_code = EXIT_RUNTIME


class TapeError(SeqDreamException, RuntimeError):
    """反向傳遞前置條件不成立"""
    default_detail = '計算紀錄（Tape）狀態錯誤'
    default_code = 'tape_error'
    exit_code = EXIT_RUNTIME


class NonFiniteError(SeqDreamException, ArithmeticError):
    """出現 NaN 或 inf"""
    default_detail = '數值出現 NaN 或 inf'
    default_code = 'non_finite'
    exit_code = EXIT_NUMERIC


class BatchNormStatsError(SeqDreamException, ValueError):
    """eval 模式下 running stats 尚未建立"""
    default_detail = 'BatchNorm running stats 尚未建立'
    default_code = 'batchnorm_stats_missing'
    exit_code = EXIT_RUNTIME
