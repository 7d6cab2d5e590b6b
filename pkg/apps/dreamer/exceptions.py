# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RUNTIME


class DreamConfigError(SeqDreamException, ValueError):
    """DreamConfig 欄位不合法"""
    default_detail = 'dreaming 設定不合法'
    default_code = 'invalid_dream_config'
    exit_code = EXIT_CONFIG


class ZeroTargetError(SeqDreamException, ArithmeticError):
    """目標分數 S_c(T) 為 0，無法當作分母"""
    default_detail = '目標分數為 0'
    default_code = 'zero_target'
    exit_code = EXIT_NUMERIC


class DreamDivergedError(SeqDreamException, ArithmeticError):
    """分數或損失出現 NaN / inf"""
    default_detail = 'dreaming 發散'
    default_code = 'dream_diverged'
    exit_code = EXIT_NUMERIC

    def __init__(self, step, detail=None):
        self.step = step
        if detail is None:
            detail = f"第 {step} 步的分數或損失變成非有限值"
        super().__init__(detail)


class NoClassSamplesError(SeqDreamException, ValueError):
    """訓練集中沒有目標類別的樣本"""
    default_detail = '訓練集中沒有目標類別的樣本'
    default_code = 'no_class_samples'
    exit_code = EXIT_RUNTIME
