from apps.evaluator.serializers import EvalReportSerializer
from apps.evaluator.services import evaluate_dream
from apps.harness.base import HarnessCommand
from apps.harness.exceptions import MissingPathError
from utils.renderers import write_result


class Command(HarnessCommand):
    help = '評估 dreams/ 底下的結果（Mahalanobis 距離、距離範圍、PCA 座標），寫出 eval/<run_id>.json'

    def add_command_arguments(self, parser):
        parser.add_argument('--run-id', nargs='*', dest='run_ids', help='只評估這些 run id（預設全部）')
        parser.add_argument('--layer', help='logits、penultimate 或 block:i')
        parser.add_argument('--weights')

    def run(self, **options):
        model = self.load_model(options.get('weights'))
        train_ds = self.load_train()
        results = self.load_dream_results(options.get('run_ids'))
        if not results:
            raise MissingPathError(f"{self.layout.dreams_dir} 底下沒有任何 dreaming 結果")
        context = self.evaluation_context(model, train_ds, options.get('layer'))

        self.layout.ensure(self.layout.eval_dir)
        for result in results:
            report = evaluate_dream(model, train_ds, result, context=context)
            write_result(self.layout.eval_file(result.run_id), 'eval', EvalReportSerializer(report).data)
            verdict = '範圍內' if report.activation_in_band else '範圍外'
            self.stdout.write(
                f"{result.run_id}: 活化距離 {report.activation_distance:.4g}（{verdict}），"
                f"原始序列距離 {report.raw_distance:.4g}"
            )
        self.success(f"已評估 {len(results)} 個結果")
