"""
共用例外基底

仿照 rest_framework 的 APIException：每個子類別宣告 default_detail / default_code，
另外帶一個 exit_code，讓指令列可以直接轉成對應的結束碼。
"""

# 結束碼分類
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PATH = 4
EXIT_MISSING_WEIGHTS = 5
EXIT_NUMERIC = 6
EXIT_BAD_FILE = 7


class SeqDreamException(Exception):
    """所有可預期錯誤的基底"""
    default_detail = '執行時發生錯誤'
    default_code = 'error'
    exit_code = EXIT_RUNTIME

    def __init__(self, detail=None, code=None):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        super().__init__(self.detail)

    def __str__(self):
        return str(self.detail)
