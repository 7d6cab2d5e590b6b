# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_BAD_FILE, EXIT_CONFIG, EXIT_MISSING_WEIGHTS, EXIT_PATH


class ConfigError(SeqDreamException, ValueError):
    """設定檔格式錯誤、缺少必要鍵或值不合法，訊息帶有點分隔的鍵名"""
    default_detail = '設定不合法'
    default_code = 'invalid_config'
    exit_code = EXIT_CONFIG


class GridSpecError(ConfigError):
    default_detail = '網格設定不合法'
    default_code = 'invalid_grid'


class MissingPathError(SeqDreamException, OSError):
    """指定的檔案或目錄不存在或無法讀取"""
    default_detail = '找不到路徑'
    default_code = 'missing_path'
    exit_code = EXIT_PATH


class MissingWeightsError(SeqDreamException, OSError):
    """需要模型的指令找不到權重檔"""
    default_detail = '找不到權重檔，請先執行 train'
    default_code = 'missing_weights'
    exit_code = EXIT_MISSING_WEIGHTS


class ResultFileError(SeqDreamException, ValueError):
    """結果檔不是本工具寫出的格式"""
    default_detail = '結果檔格式錯誤'
    default_code = 'invalid_result_file'
    exit_code = EXIT_BAD_FILE
