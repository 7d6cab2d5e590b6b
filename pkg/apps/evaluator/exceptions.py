# exceptions.py
from utils.exceptions import SeqDreamException, EXIT_BAD_FILE, EXIT_RUNTIME


class StatisticsError(SeqDreamException, ValueError):
    """樣本數不足或數值不是有限數，無法估計統計量"""
    default_detail = '無法估計統計量'
    default_code = 'statistics_error'
    exit_code = EXIT_RUNTIME


class DimensionMismatchError(SeqDreamException, ValueError):
    """點的維度與統計量不符"""
    default_detail = '維度不符'
    default_code = 'dimension_mismatch'
    exit_code = EXIT_BAD_FILE
