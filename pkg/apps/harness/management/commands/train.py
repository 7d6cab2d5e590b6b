from dataclasses import asdict

from apps.classifier.resnet import build_resnet
from apps.classifier.serializers import TrainingHistorySerializer
from apps.classifier.training import train
from apps.classifier.weights import save_weights
from apps.harness import config as run_config
from apps.harness.base import HarnessCommand
from utils.renderers import write_result


class Command(HarnessCommand):
    help = '訓練 1D ResNet 分類器，寫出 weights/model.sdw 與 weights/history.json'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--train', dest='train_path', help='訓練集路徑（預設 data/train.tsv）')
        parser.add_argument('--test', dest='test_path', help='測試集路徑（預設 data/test.tsv）')
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--lr', type=float)
        parser.add_argument('--batch-size', type=int)

    def run(self, **options):
        seed = options['seed']
        train_ds = self.load_train(options.get('train_path'))
        test_ds = self.load_test(train_ds, options.get('test_path'))
        model_config = run_config.resnet_config(self.cfg, train_ds.num_classes, train_ds.length)
        train_config = run_config.train_config(
            self.cfg, seed, epochs=options.get('epochs'), lr=options.get('lr'), batch_size=options.get('batch_size'),
        )

        model, history = train(build_resnet(model_config, seed), train_ds, train_config, test_ds)

        self.layout.ensure(self.layout.weights_dir)
        save_weights(model, self.layout.weights)
        data = TrainingHistorySerializer({
            'epochs': history.epochs,
            'train_accuracy': history.train_accuracy,
            'test_accuracy': history.test_accuracy,
            'config': {'model': model_config.as_dict(), 'train': asdict(train_config)},
        }).data
        write_result(self.layout.history, 'history', data)

        message = f"訓練完成：{len(history.epochs)} 個 epoch"
        if history.train_accuracy is not None:
            message += f"，訓練準確率 {history.train_accuracy:.4f}"
        if history.test_accuracy is not None:
            message += f"，測試準確率 {history.test_accuracy:.4f}"
        self.success(message)
