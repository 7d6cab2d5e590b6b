from apps.datasets.services import synth_binary, write_stats, write_ucr_tsv
from apps.harness.base import HarnessCommand


class Command(HarnessCommand):
    help = '產生合成的二元分類資料集，寫成 UCR 格式的 data/train.tsv、data/test.tsv'
    stochastic = True

    def add_command_arguments(self, parser):
        parser.add_argument('--n-train', type=int, help='訓練集筆數（預設 200）')
        parser.add_argument('--n-test', type=int, help='測試集筆數（預設 100）')
        parser.add_argument('--length', type=int, help='序列長度（預設 128）')

    def run(self, **options):
        synth = dict(self.cfg.synth)
        for key in ('n_train', 'n_test', 'length'):
            if options.get(key) is not None:
                synth[key] = options[key]
        train, test = synth_binary(synth['n_train'], synth['n_test'], synth['length'], options['seed'])

        self.layout.ensure(self.layout.data_dir)
        write_ucr_tsv(train, self.layout.train_data)
        write_ucr_tsv(test, self.layout.test_data)
        write_stats(train, self.layout.train_stats)
        self.success(f"已寫入 {self.layout.data_dir}（訓練 {len(train)} 筆、測試 {len(test)} 筆、長度 {train.length}）")
