from apps.dreamer.entities import MODES
from apps.harness import config as run_config
from apps.harness.base import HarnessCommand
from apps.harness.grid import GridSpec, run_grid


class Command(HarnessCommand):
    help = '對 sequence dreaming 的超參數做網格搜尋，寫出 manifest.jsonl 與 grid/ranking.json'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--class', dest='target_class', type=int)
        parser.add_argument('--mode', choices=MODES)
        parser.add_argument('--seeds', type=int, help='每組設定跑幾個 seed（--seed, --seed+1, ...），預設 1')
        parser.add_argument('--parallelism', type=int, help='同時執行的行程數')
        parser.add_argument('--weights')

    def run(self, **options):
        seed = options['seed']
        model = self.load_model(options.get('weights'))
        train_ds = self.load_train()
        section = dict(self.cfg.grid)
        if options.get('seeds') is not None or 'seeds' not in section:
            section['seeds'] = [seed + i for i in range(options.get('seeds') or 1)]
        if 'target_class' not in section:
            section['target_class'] = self.cfg.dream.get('target_class', 0)
        spec = GridSpec.from_section(section, target_class=options.get('target_class'), mode=options.get('mode'))

        outcome = run_grid(
            model, train_ds, spec,
            parallelism=run_config.parallelism(self.cfg, options.get('parallelism')),
            layout=self.layout,
            base=run_config.dream_config(self.cfg, seed),
            context=self.evaluation_context(model, train_ds),
        )
        if outcome.ranking:
            best = outcome.ranking[0]
            self.success(
                f"{len(outcome.records)} 組中 {len(outcome.ranking)} 組可行，最佳 {best['run_id']}"
                f"（損失 {best['final_loss']:.6g}，信心 {best['confidence']:.4f}）"
            )
        else:
            self.stdout.write(self.style.WARNING(
                f"{len(outcome.records)} 組中沒有可行的設定（失敗 {outcome.failed} 組），排名為空"
            ))
