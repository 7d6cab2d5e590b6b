# conf_e.py
import os
from dotenv import load_dotenv
import psutil

# 強制重新加載
load_dotenv(override=True)


def _flag(name, default='0'):
    return os.environ.get(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


def _int_or_none(name):
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else None


DEBUG = _flag('SEQDREAM_DEBUG')  # 是否在終端機輸出 DEBUG 日誌

# 執行目錄與平行數：未設定時為 None，交給設定檔或預設值決定
OUTPUT_DIR = os.environ.get('SEQDREAM_OUTPUT_DIR') or None
PARALLELISM = _int_or_none('SEQDREAM_PARALLELISM')

DEFAULT_OUTPUT_DIR = os.path.join('.', 'runs', 'default')
DEFAULT_PARALLELISM = max(1, psutil.cpu_count(logical=False) or 1)  # 實體核心數

LOG_DIR = os.environ.get('SEQDREAM_LOG_DIR') or None
