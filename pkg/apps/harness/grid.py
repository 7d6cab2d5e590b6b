"""
超參數網格搜尋

    expand_grid   各軸數值的笛卡兒積，依軸順序與數值大小排列，每組設定帶有穩定的 run id
    run_grid      逐一（或以 billiard.Pool 平行）執行 dreaming 與評估，寫出結果檔與 manifest，
                  已完成的 run id 直接跳過
    rank_runs     可行（預測為目標類別且信心 >= 0.99）的執行依最終損失排序，
                  同分再看與模式相符的活化距離，最後以 run id 決定
"""
import hashlib
import itertools
import json
import logging
import os
from dataclasses import dataclass, field

import billiard
from django.utils import timezone

from apps.dreamer.entities import DreamConfig
from apps.dreamer.serializers import DreamResultSerializer
from apps.dreamer.services import run_dream
from apps.evaluator.serializers import EvalReportSerializer
from apps.evaluator.services import EvaluationContext, evaluate_dream
from utils.renderers import write_result

from .exceptions import GridSpecError
from .serializers import GridRankingSerializer, GridRecordSerializer

logger = logging.getLogger(__name__)

GRID_AXES = ('steps', 'lr', 'alpha', 'beta', 'sigma', 'lambda_alpha', 'lambda_beta', 'lambda_sm')

# 各軸的合理範圍 (下限, 上限, 是否含下限)
AXIS_BOUNDS = {
    'steps': (1, 100000, True),
    'lr': (0.0, 1e3, False),
    'alpha': (2.0, 64.0, False),
    'beta': (1.0, 8.0, True),
    'sigma': (0.0, 100.0, False),
    'lambda_alpha': (0.0, 10.0, True),
    'lambda_beta': (0.0, 10.0, True),
    'lambda_sm': (0.0, 10.0, True),
}

# 每個軸取搜尋範圍的兩個端點
DEFAULT_AXES = {
    'steps': (5, 100),
    'lr': (1e-2, 1e1),
    'alpha': (4.0, 6.0),
    'beta': (1.0, 2.0),
    'sigma': (3.0, 6.0),
    'lambda_alpha': (1e-5, 1e-1),
    'lambda_beta': (1e-5, 1e-1),
    'lambda_sm': (1e-1, 5e-1),
}

MIN_CONFIDENCE = 0.99


@dataclass(frozen=True)
class GridSpec:
    axes: dict = field(default_factory=lambda: dict(DEFAULT_AXES))
    mode: str = 'center'
    variant: str = 'sd'
    target_class: int = 0
    seeds: tuple = (0,)

    def __post_init__(self):
        axes = {}
        for name in GRID_AXES:
            values = self.axes.get(name, DEFAULT_AXES[name])
            if len(values) == 0:
                raise GridSpecError(f"grid.{name}: 數值串列不可為空")
            lo, hi, inclusive = AXIS_BOUNDS[name]
            for v in values:
                if not ((lo <= v) if inclusive else (lo < v)) or v > hi:
                    raise GridSpecError(f"grid.{name}: {v} 超出合理範圍 {'[' if inclusive else '('}{lo}, {hi}]")
            cast = int if name == 'steps' else float
            axes[name] = tuple(sorted(set(cast(v) for v in values)))
        unknown = set(self.axes) - set(GRID_AXES)
        if unknown:
            raise GridSpecError(f"grid.{sorted(unknown)[0]}: 不是可搜尋的超參數")
        if len(self.seeds) == 0:
            raise GridSpecError('grid.seeds: 至少需要一個 seed')
        object.__setattr__(self, 'axes', axes)
        object.__setattr__(self, 'seeds', tuple(sorted(set(int(s) for s in self.seeds))))

    @property
    def size(self):
        n = len(self.seeds)
        for name in GRID_AXES:
            n *= len(self.axes[name])
        return n

    @classmethod
    def from_section(cls, section, **overrides):
        """由設定檔的 grid 區段與指令列覆寫建立"""
        values = {k: v for k, v in {**section, **overrides}.items() if v is not None}
        fixed = {k: values.pop(k) for k in ('mode', 'variant', 'target_class', 'seeds') if k in values}
        values.pop('parallelism', None)
        return cls(axes=values, **fixed)


def _run_id(index, values):
    digest = hashlib.sha1(json.dumps(values, sort_keys=True).encode('ascii')).hexdigest()
    return f'g{index:04d}-{digest[:8]}'


def expand_grid(spec, base=None):
    """
    回傳 DreamConfig 串列。seed 在最外層，其餘依 GRID_AXES 的順序展開，
    數值由小到大；base 提供網格以外的超參數。
    """
    base = base or DreamConfig()
    # base 的超參數也算進 run id，改了設定檔再執行不會沿用舊結果
    fixed = {k: v for k, v in base.as_dict().items() if k not in ('run_id', 'seed')}
    configs = []
    combos = itertools.product(spec.seeds, *(spec.axes[name] for name in GRID_AXES))
    for index, (seed, *point) in enumerate(combos):
        values = dict(zip(GRID_AXES, point))
        stamp = {**fixed, **values, 'seed': seed, 'mode': spec.mode, 'variant': spec.variant, 'class': spec.target_class}
        configs.append(base.with_values(
            variant=spec.variant,
            mode=spec.mode,
            target_class=spec.target_class,
            seed=seed,
            run_id=_run_id(index, stamp),
            **values,
        ))
    return configs


class RunManifest(object):
    """manifest.jsonl：每完成（或失敗）一次執行就附加一列，不改寫舊資料"""

    def __init__(self, path):
        self.path = path

    def records(self):
        if not os.path.isfile(self.path):
            return []
        records = []
        with open(self.path, 'r', encoding='utf-8') as f:
            for n, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    logger.warning(f"manifest 第 {n} 行無法解析，略過（可能是中斷時寫到一半）")
        return records

    def completed(self):
        """run_id -> 最後一筆狀態為 ok 的紀錄"""
        return {r['run_id']: r for r in self.records() if r.get('status') == 'ok'}

    def append(self, record):
        data = GridRecordSerializer(record).data
        data['finished_at'] = timezone.now().isoformat()
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(data, sort_keys=True) + '\n')
            f.flush()


# ---------------------------------------------------------------------------
# worker
# ---------------------------------------------------------------------------

_worker_state = {}


def _init_worker(model, train, context):
    _worker_state.update(model=model, train=train, context=context)


def _run_one(cfg):
    """在 worker 內執行一組設定，回傳 (紀錄, dream 結果 data, 評估 data)"""
    model, train, context = _worker_state['model'], _worker_state['train'], _worker_state['context']
    record = {
        'run_id': cfg.run_id, 'status': 'failed', 'mode': cfg.mode, 'target_class': cfg.target_class,
        'final_loss': None, 'prediction': None, 'confidence': None,
        'activation_distance': None, 'activation_band_max': None, 'error': '',
    }
    try:
        result = run_dream(model, train, cfg)
        report = evaluate_dream(model, train, result, context=context)
    except Exception as e:
        logger.exception(f"網格執行 {cfg.run_id} 失敗")
        record['error'] = f'{type(e).__name__}: {e}'
        return record, None, None
    record.update(
        status='ok',
        final_loss=result.final_loss,
        prediction=report.prediction,
        confidence=report.confidence,
        activation_distance=report.activation_distance,
        activation_band_max=report.activation_band[1],
    )
    return record, dict(DreamResultSerializer(result).data), dict(EvalReportSerializer(report).data)


def _distance_key(record):
    d, band_max = record['activation_distance'], record['activation_band_max']
    if record['mode'] == 'max':
        return (0, d) if d > band_max else (1, -d)
    return (0, d)


def is_feasible(record, min_confidence=MIN_CONFIDENCE):
    return (
        record.get('status') == 'ok'
        and record['prediction'] == record['target_class']
        and record['confidence'] >= min_confidence
    )


def rank_runs(records, min_confidence=MIN_CONFIDENCE):
    feasible = [r for r in records if is_feasible(r, min_confidence)]
    return sorted(feasible, key=lambda r: (r['final_loss'], _distance_key(r), r['run_id']))


@dataclass
class GridOutcome:
    records: list
    ranking: list
    skipped: int = 0

    @property
    def failed(self):
        return sum(1 for r in self.records if r['status'] != 'ok')

    def as_data(self):
        return GridRankingSerializer({
            'total': len(self.records),
            'failed': self.failed,
            'feasible': len(self.ranking),
            'min_confidence': MIN_CONFIDENCE,
            'best': self.ranking[0]['run_id'] if self.ranking else None,
            'ranking': self.ranking,
        }).data


def _execute(configs, model, train, context, parallelism):
    if parallelism <= 1 or len(configs) <= 1:
        _init_worker(model, train, context)
        for cfg in configs:
            yield _run_one(cfg)
        return
    # 只傳參數，不帶已建立的網路
    shipped = type(model)(model.config, model.params, model.format_version)
    with billiard.Pool(processes=parallelism, initializer=_init_worker, initargs=(shipped, train, context)) as pool:
        for item in pool.imap(_run_one, configs):
            yield item


def run_grid(model, train, spec, parallelism=1, layout=None, base=None, context=None, layer='logits'):
    """
    執行整個網格並排名。layout 為 RunLayout 時把每次執行寫到 dreams/、eval/，
    狀態附加到 manifest.jsonl，排名寫到 grid/ranking.json；
    manifest 中已成功的 run id 不會重跑。
    """
    configs = expand_grid(spec, base)
    if context is None:
        context = EvaluationContext.fit(model, train, layer)

    manifest = None
    done = {}
    if layout is not None:
        layout.ensure(layout.dreams_dir, layout.eval_dir, layout.grid_dir)
        manifest = RunManifest(layout.manifest)
        done = manifest.completed()
    pending = [cfg for cfg in configs if cfg.run_id not in done]
    logger.info(f"網格共 {len(configs)} 組，已完成 {len(configs) - len(pending)} 組，平行數 {parallelism}")

    fresh = {}
    for record, dream_data, eval_data in _execute(pending, model, train, context, parallelism):
        fresh[record['run_id']] = record
        if layout is not None:
            if dream_data is not None:
                write_result(layout.dream_file(record['run_id']), 'dream', dream_data)
                write_result(layout.eval_file(record['run_id']), 'eval', eval_data)
            manifest.append(record)
        logger.info(f"{record['run_id']}: {record['status']}")

    records = []
    for cfg in configs:
        record = fresh.get(cfg.run_id) or done.get(cfg.run_id)
        records.append({k: v for k, v in record.items() if k != 'finished_at'})
    ranking = rank_runs(records)
    outcome = GridOutcome(records, ranking, skipped=len(configs) - len(pending))
    if not ranking:
        logger.warning(f"{len(records)} 組設定中沒有任何一組達到預測正確且信心 >= {MIN_CONFIDENCE}")
    if layout is not None:
        write_result(layout.ranking, 'grid', outcome.as_data())
    return outcome
