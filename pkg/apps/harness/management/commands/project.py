from apps.evaluator.services import export_distribution_data
from apps.harness.base import HarnessCommand


class Command(HarnessCommand):
    help = '輸出繪圖用的分布資料（eval/distribution.tsv、eval/activations.tsv）'

    def add_command_arguments(self, parser):
        parser.add_argument('--layer', help='logits、penultimate 或 block:i')
        parser.add_argument('--weights')

    def run(self, **options):
        model = self.load_model(options.get('weights'))
        train_ds = self.load_train()
        generated = self.load_dream_results()
        context = self.evaluation_context(model, train_ds, options.get('layer'))

        self.layout.ensure(self.layout.eval_dir)
        rows = export_distribution_data(
            model, train_ds, generated, context.layer, self.layout.distribution,
            activations_path=self.layout.activations, context=context,
        )
        self.success(f"已寫入 {self.layout.distribution}（{rows} 列，其中 {len(generated)} 條生成序列）")
