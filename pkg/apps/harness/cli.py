import logging
import os
import sys

from utils.exceptions import EXIT_OK, EXIT_RUNTIME

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('synth', 'train', 'dream', 'grid', 'eval', 'project', 'compare')


def cli_main(argv=None):
    """
    指令列進入點，argv 不含程式名稱。回傳結束碼：
    0 成功、2 參數錯誤、3 設定錯誤、4 找不到路徑、5 缺少權重檔、
    6 數值發散、7 檔案格式錯誤、1 其他未預期的錯誤。
    """
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'server.settings')
    from django.core.management import ManagementUtility

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ManagementUtility(['manage.py'] + argv).execute()
    except SystemExit as e:
        if e.code is None:
            return EXIT_OK
        return e.code if isinstance(e.code, int) else EXIT_RUNTIME
    except Exception:
        logger.exception(f"執行 {' '.join(argv)} 時發生未預期的錯誤")
        return EXIT_RUNTIME
    return EXIT_OK
