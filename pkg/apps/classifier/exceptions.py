# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_BAD_FILE, EXIT_CONFIG, EXIT_NUMERIC


class InvalidConfigError(SeqDreamException, ValueError):
    """ResNetConfig / TrainConfig 欄位不合法"""
    default_detail = '模型或訓練設定不合法'
    default_code = 'invalid_model_config'
    exit_code = EXIT_CONFIG


class InvalidLayerError(SeqDreamException, ValueError):
    """無法辨識的層選擇"""
    default_detail = '無法辨識的層選擇'
    default_code = 'invalid_layer'
    exit_code = EXIT_CONFIG


class InputLengthError(SeqDreamException, ValueError):
    """輸入序列長度與模型不符"""
    default_detail = '輸入序列長度與模型不符'
    default_code = 'input_length'
    exit_code = EXIT_BAD_FILE


class TrainingDivergedError(SeqDreamException, ArithmeticError):
    """訓練損失出現 NaN 或 inf"""
    default_detail = '訓練發散'
    default_code = 'training_diverged'
    exit_code = EXIT_NUMERIC

    def __init__(self, epoch, batch, detail=None):
        self.epoch = epoch
        self.batch = batch
        if detail is None:
            detail = f"訓練損失在第 {epoch} 個 epoch、第 {batch} 個 batch 變成非有限值"
        super().__init__(detail)


class WeightFileError(SeqDreamException, ValueError):
    """權重檔毀損或被截斷"""
    default_detail = '權重檔毀損'
    default_code = 'weight_file_corrupt'
    exit_code = EXIT_BAD_FILE


class WeightVersionError(WeightFileError):
    """權重檔格式版本不符"""
    default_detail = '權重檔格式版本不符'
    default_code = 'weight_version'


class WeightShapeError(WeightFileError):
    """參數 shape 與內嵌的 ResNetConfig 不符"""
    default_detail = '權重 shape 與模型設定不符'
    default_code = 'weight_shape'
