import os


class RunLayout(object):
    """
    一個執行目錄底下固定的檔案配置：

        data/train.tsv, data/test.tsv, data/train.stats
        weights/model.sdw, weights/history.json
        dreams/<run_id>.json
        eval/<run_id>.json, eval/distribution.tsv, eval/activations.tsv, eval/comparison.tsv
        grid/ranking.json
        manifest.jsonl
    """

    def __init__(self, root):
        self.root = os.path.abspath(root)

    def _path(self, *parts):
        return os.path.join(self.root, *parts)

    @property
    def data_dir(self):
        return self._path('data')

    @property
    def weights_dir(self):
        return self._path('weights')

    @property
    def dreams_dir(self):
        return self._path('dreams')

    @property
    def eval_dir(self):
        return self._path('eval')

    @property
    def grid_dir(self):
        return self._path('grid')

    @property
    def train_data(self):
        return self._path('data', 'train.tsv')

    @property
    def test_data(self):
        return self._path('data', 'test.tsv')

    @property
    def train_stats(self):
        return self._path('data', 'train.stats')

    @property
    def weights(self):
        return self._path('weights', 'model.sdw')

    @property
    def history(self):
        return self._path('weights', 'history.json')

    @property
    def distribution(self):
        return self._path('eval', 'distribution.tsv')

    @property
    def activations(self):
        return self._path('eval', 'activations.tsv')

    @property
    def comparison(self):
        return self._path('eval', 'comparison.tsv')

    @property
    def ranking(self):
        return self._path('grid', 'ranking.json')

    @property
    def manifest(self):
        return self._path('manifest.jsonl')

    def dream_file(self, run_id):
        return self._path('dreams', f'{run_id}.json')

    def eval_file(self, run_id):
        return self._path('eval', f'{run_id}.json')

    def dream_run_ids(self):
        """dreams/ 底下所有結果檔的 run id，依名稱排序"""
        if not os.path.isdir(self.dreams_dir):
            return []
        return sorted(name[:-len('.json')] for name in os.listdir(self.dreams_dir) if name.endswith('.json'))

    def ensure(self, *dirs):
        for d in dirs or (self.data_dir, self.weights_dir, self.dreams_dir, self.eval_dir, self.grid_dir):
            os.makedirs(d, exist_ok=True)
