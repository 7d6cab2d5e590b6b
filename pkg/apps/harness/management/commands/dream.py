from apps.dreamer.entities import MODES, VARIANTS
from apps.dreamer.serializers import DreamResultSerializer
from apps.dreamer.services import run_dream
from apps.harness import config as run_config
from apps.harness.base import HarnessCommand
from utils.renderers import write_result


class Command(HarnessCommand):
    help = '對訓練好的模型執行一次 dreaming，寫出 dreams/<run_id>.json'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--variant', choices=VARIANTS)
        parser.add_argument('--mode', choices=MODES)
        parser.add_argument('--class', dest='target_class', type=int, help='目標類別（必填，可寫在設定檔 dream.class）')
        parser.add_argument('--steps', type=int)
        parser.add_argument('--lr', type=float)
        parser.add_argument('--run-id', help='結果檔名稱（預設 <variant>-<mode>-c<class>-s<seed>）')
        parser.add_argument('--weights', help='權重檔路徑（預設 weights/model.sdw）')

    def run(self, **options):
        seed = options['seed']
        model = self.load_model(options.get('weights'))
        train_ds = self.load_train()
        cfg = run_config.dream_config(
            self.cfg, seed, require_class=True,
            variant=options.get('variant'),
            mode=options.get('mode'),
            target_class=options.get('target_class'),
            steps=options.get('steps'),
            lr=options.get('lr'),
        )
        run_id = options.get('run_id') or f'{cfg.variant}-{cfg.mode}-c{cfg.target_class}-s{seed}'
        result = run_dream(model, train_ds, cfg.with_values(run_id=run_id))

        self.layout.ensure(self.layout.dreams_dir)
        write_result(self.layout.dream_file(run_id), 'dream', DreamResultSerializer(result).data)
        self.success(
            f"{run_id}: 預測類別 {result.prediction}（信心 {result.confidence:.4f}），"
            f"最終損失 {result.final_loss:.6g}，重新初始化 {result.reinit_count} 次"
        )
