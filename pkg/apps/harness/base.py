import logging
import os

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from apps.classifier.weights import load_weights
from apps.datasets.services import load_ucr_tsv, z_normalize
from apps.dreamer.serializers import dream_result_from_data
from apps.evaluator.services import EvaluationContext
from utils.exceptions import SeqDreamException
from utils.renderers import read_result

from . import config as run_config
from .exceptions import MissingPathError, MissingWeightsError, ResultFileError
from .layout import RunLayout

logger = logging.getLogger(__name__)


class HarnessCommand(BaseCommand):
    """
    所有子指令共用的參數（--config、--out）與錯誤處理：
    SeqDreamException 轉成帶結束碼的 CommandError，訊息印到 stderr。
    stochastic 為 True 的指令必須帶 --seed。
    """
    requires_system_checks = []
    stochastic = False

    def add_arguments(self, parser):
        parser.add_argument('--config', help='YAML 設定檔路徑')
        parser.add_argument('--out', help='執行目錄（預設取 SEQDREAM_OUTPUT_DIR）')
        if self.stochastic:
            parser.add_argument('--seed', type=int, required=True, help='亂數種子（必填）')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            self.cfg = run_config.load_config(options.get('config'))
            self.layout = RunLayout(run_config.output_dir(options.get('out')))
            return self.run(**options)
        except SeqDreamException as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise CommandError(f"[{e.code}] {e}", returncode=e.exit_code)

    def run(self, **options):
        raise NotImplementedError

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    # -----------------------------------------------------------------------
    # 共用的載入
    # -----------------------------------------------------------------------

    def _normalize(self, ds):
        scope = self.cfg.data.get('normalize', 'none')
        return ds if scope == 'none' else z_normalize(ds, scope)

    def load_train(self, path=None):
        path = path or self.cfg.data.get('train_path') or self.layout.train_data
        return self._normalize(load_ucr_tsv(path, self.cfg.data.get('delimiter', 'tab')))

    def load_test(self, train, path=None):
        """測試集沿用訓練集的標籤對應；沒有測試檔時回傳 None"""
        path = path or self.cfg.data.get('test_path') or self.layout.test_data
        if not os.path.isfile(path):
            logger.info(f"沒有測試集 {path}，只回報訓練準確率")
            return None
        label_map = {name: i for i, name in enumerate(train.class_names)}
        return self._normalize(load_ucr_tsv(path, self.cfg.data.get('delimiter', 'tab'), label_map))

    def load_model(self, path=None):
        path = path or self.layout.weights
        if not os.path.isfile(path):
            raise MissingWeightsError(f"找不到權重檔 {path}，請先執行 train")
        return load_weights(path)

    def require_dir(self, path):
        if not os.path.isdir(path):
            raise MissingPathError(f"找不到目錄: {path}")
        return path

    def load_dream_results(self, run_ids=None):
        """讀回 dreams/ 底下的結果檔；run_ids 為空時讀全部（依 run id 排序）"""
        run_ids = run_ids or self.layout.dream_run_ids()
        results = []
        for run_id in run_ids:
            path = self.layout.dream_file(run_id)
            if not os.path.isfile(path):
                raise MissingPathError(f"找不到 dreaming 結果檔: {path}")
            try:
                results.append(dream_result_from_data(read_result(path, 'dream')))
            except (ValueError, KeyError, ValidationError) as e:
                raise ResultFileError(f"{path} 不是有效的 dreaming 結果檔: {e}")
        return results

    def evaluation_context(self, model, train, layer=None):
        settings = self.cfg.evaluation
        return EvaluationContext.fit(
            model, train,
            layer=layer or settings['layer'],
            per_class=settings['per_class'],
            eps_scale=settings['eps_scale'],
        )
