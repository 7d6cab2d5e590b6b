# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_BAD_FILE, EXIT_CONFIG, EXIT_PATH


class DatasetFormatError(SeqDreamException, ValueError):
    """資料檔格式錯誤（欄位數不一致、非數值欄位等）"""
    default_detail = '資料檔格式錯誤'
    default_code = 'dataset_format'
    exit_code = EXIT_BAD_FILE


class EmptyDatasetError(DatasetFormatError):
    """資料檔沒有任何資料列"""
    default_detail = '資料檔是空的'
    default_code = 'dataset_empty'


class UnknownLabelError(DatasetFormatError):
    """指定 label_map 時遇到未知的原始標籤"""
    default_detail = '未知的原始標籤'
    default_code = 'unknown_label'


class DatasetPathError(SeqDreamException, ValueError):
    """資料檔不存在或無法讀取"""
    default_detail = '資料檔不存在或無法讀取'
    default_code = 'dataset_path'
    exit_code = EXIT_PATH


class SynthConfigError(SeqDreamException, ValueError):
    """合成資料集參數不合法"""
    default_detail = '合成資料集參數不合法'
    default_code = 'synth_config'
    exit_code = EXIT_CONFIG
