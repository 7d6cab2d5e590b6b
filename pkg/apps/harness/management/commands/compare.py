from apps.dreamer.serializers import DreamResultSerializer
from apps.evaluator.services import compare_methods, write_comparison
from apps.harness import config as run_config
from apps.harness.base import HarnessCommand
from utils.renderers import write_result


class Command(HarnessCommand):
    help = '以 ascent、target、SD center、SD max 四種方法對同一類別 dreaming 並比較，寫出 eval/comparison.tsv'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--class', dest='target_class', type=int)
        parser.add_argument('--weights')

    def run(self, **options):
        seed = options['seed']
        model = self.load_model(options.get('weights'))
        train_ds = self.load_train()
        base = run_config.dream_config(self.cfg, seed, require_class=True, target_class=options.get('target_class'))
        rows = compare_methods(
            model, train_ds, base.target_class, base, seed, context=self.evaluation_context(model, train_ds),
        )

        self.layout.ensure(self.layout.dreams_dir, self.layout.eval_dir)
        for method, result, report in rows:
            write_result(self.layout.dream_file(result.run_id), 'dream', DreamResultSerializer(result).data)
            self.stdout.write(
                f"{method}: 活化距離 {report.activation_distance:.4g} "
                f"[{report.activation_band[0]:.4g}, {report.activation_band[1]:.4g}]，"
                f"原始序列距離 {report.raw_distance:.4g}"
            )
        write_comparison(rows, self.layout.comparison)
        self.success(f"已寫入 {self.layout.comparison}")
