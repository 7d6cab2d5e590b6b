import logging
import os

import numpy as np

from apps.classifier.entities import LayerSelector
from apps.classifier.services import activations, logits, predict
from apps.dreamer import regularizers as reg
from apps.dreamer.entities import DEFAULT_BLUR_EVERY
from apps.dreamer.services import run_dream

from .entities import ClassFit, EvalReport
from .exceptions import DimensionMismatchError, StatisticsError
from .statistics import distance_band, fit_gaussian_stats, fit_pca, mahalanobis, project

logger = logging.getLogger(__name__)

DISTRIBUTION_HEADER = ('source', 'class', 'class_logit', 'activation_ref', 'pc1', 'pc2')
ACTIVATION_HEADER_PREFIX = 'activation_ref'
COMPARISON_HEADER = (
    'method', 'variant', 'mode', 'class', 'prediction', 'confidence', 'class_logit',
    'activation_distance', 'activation_band_min', 'activation_band_max',
    'raw_distance', 'raw_band_min', 'raw_band_max', 'sm', 'final_loss',
)
# (方法名稱, variant, mode)
COMPARE_METHODS = (
    ('ascent', 'ascent', 'center'),
    ('target', 'target', 'center'),
    ('sd-center', 'sd', 'center'),
    ('sd-max', 'sd', 'max'),
)


def _fmt(value):
    return '%.17g' % value


class EvaluationContext:
    """
    對一個模型、一個層擬合一次的訓練集統計量：
    每個類別（per_class=False 時為整個訓練集）在活化空間與原始序列空間的
    GaussianStats 與距離範圍，以及整個訓練集活化值的 PCA。擬合後唯讀。
    """

    def __init__(self, layer, per_class, eps_scale, train_activations, train_logits, labels, fits, pca):
        self.layer = layer
        self.per_class = per_class
        self.eps_scale = eps_scale
        self.train_activations = train_activations
        self.train_logits = train_logits
        self.labels = labels
        self.fits = fits
        self.pca = pca

    @classmethod
    def fit(cls, model, train, layer='logits', per_class=True, eps_scale=1e-6, k=2):
        selector = LayerSelector.parse(layer)
        acts = activations(model, train.values, selector)
        train_logits = acts if selector.kind == 'logits' else logits(model, train.values)
        groups = {c: train.class_indices(c) for c in range(train.num_classes)} if per_class \
            else {None: np.arange(len(train))}

        fits = {}
        for c, idx in groups.items():
            if idx.size < 2:
                logger.warning(f"類別 {c} 的訓練樣本少於 2 個，無法估計統計量")
                continue
            act_stats = fit_gaussian_stats(acts[idx], eps_scale)
            raw_stats = fit_gaussian_stats(train.values[idx], eps_scale)
            fits[c] = ClassFit(
                target_class=c,
                activation_stats=act_stats,
                activation_band=distance_band(act_stats, acts[idx]),
                raw_stats=raw_stats,
                raw_band=distance_band(raw_stats, train.values[idx]),
            )
        pca = fit_pca(acts, min(k, acts.shape[1]))
        logger.info(f"評估統計量擬合完成: layer={selector}, per_class={per_class}, 維度 {acts.shape[1]}")
        return cls(str(selector), per_class, eps_scale, acts, train_logits, train.labels, fits, pca)

    def for_class(self, c):
        key = c if self.per_class else None
        if key not in self.fits:
            raise StatisticsError(f"類別 {c} 沒有可用的訓練統計量")
        return self.fits[key]


def evaluate_dream(model, train, result, layer='logits', per_class=True, context=None, eps_scale=1e-6):
    """
    計算生成序列在活化空間（所選的層）與原始序列空間的 Mahalanobis 距離、
    訓練樣本的距離範圍、預測類別與信心、PCA 座標。
    """
    if context is None:
        context = EvaluationContext.fit(model, train, layer, per_class, eps_scale)
    fit = context.for_class(result.target_class)
    series = np.asarray(result.series, dtype=np.float64)
    if series.size != train.length:
        raise DimensionMismatchError(f"序列長度 {series.size} 與訓練資料長度 {train.length} 不符")

    act = activations(model, series, context.layer)
    prediction, confidence = predict(model, series)
    report = EvalReport(
        run_id=result.run_id,
        variant=result.variant,
        mode=result.mode,
        target_class=result.target_class,
        layer=context.layer,
        per_class=context.per_class,
        prediction=prediction,
        confidence=confidence,
        class_logit=float(logits(model, series)[result.target_class]),
        activation_distance=mahalanobis(fit.activation_stats, act),
        activation_band=fit.activation_band,
        activation_eps=fit.activation_stats.eps,
        raw_distance=mahalanobis(fit.raw_stats, series),
        raw_band=fit.raw_band,
        raw_eps=fit.raw_stats.eps,
        projection=tuple(float(v) for v in project(context.pca, act)),
    )
    logger.debug(
        f"評估 {result.run_id or result.variant}: 活化距離 {report.activation_distance:.6g} "
        f"範圍 [{report.activation_band[0]:.6g}, {report.activation_band[1]:.6g}]"
    )
    return report


def _pc(coords, j):
    return _fmt(coords[j]) if j < len(coords) else ''


def export_distribution_data(model, train, generated, layer='logits', path='distribution.tsv',
                             activations_path=None, context=None):
    """
    寫出繪圖用的 tab 分隔表格，每個訓練樣本與每條生成序列各一列：
        source  class  class_logit  activation_ref  pc1  pc2
    class_logit 是該列類別的 logit；activation_ref 指向 activations_path
    （預設與 path 同目錄的 activations.tsv）裡完整活化向量的列。回傳資料列數。
    """
    if context is None or context.layer != str(LayerSelector.parse(layer)):
        context = EvaluationContext.fit(model, train, layer)
    if activations_path is None:
        activations_path = os.path.join(os.path.dirname(path), 'activations.tsv')

    sources, classes, class_logits, acts = [], [], [], []
    for i, label in enumerate(context.labels):
        sources.append(f'train:{i}')
        classes.append(int(label))
        class_logits.append(context.train_logits[i, label])
        acts.append(context.train_activations[i])
    for i, result in enumerate(generated):
        series = np.asarray(result.series, dtype=np.float64)
        if series.size != train.length:
            raise DimensionMismatchError(f"生成序列 {i} 的長度 {series.size} 與訓練資料長度 {train.length} 不符")
        sources.append(f'dream:{result.run_id or i}')
        classes.append(int(result.target_class))
        class_logits.append(logits(model, series)[result.target_class])
        acts.append(activations(model, series, context.layer))

    train_coords = project(context.pca, context.train_activations)
    dream_coords = [project(context.pca, a) for a in acts[len(context.labels):]]
    coords = list(train_coords) + dream_coords

    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\t'.join(DISTRIBUTION_HEADER) + '\n')
        for ref, (source, c, value, xy) in enumerate(zip(sources, classes, class_logits, coords)):
            f.write('\t'.join((source, str(c), _fmt(value), str(ref), _pc(xy, 0), _pc(xy, 1))) + '\n')

    d = context.train_activations.shape[1]
    with open(activations_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\t'.join([ACTIVATION_HEADER_PREFIX] + [f'a{j}' for j in range(d)]) + '\n')
        for ref, vector in enumerate(acts):
            f.write('\t'.join([str(ref)] + [_fmt(v) for v in vector]) + '\n')

    logger.info(f"分布資料已寫入 {path}（{len(sources)} 列）")
    return len(sources)


def compare_methods(model, train, c, base_cfg, seed, layer='logits', context=None):
    """
    以同一組超參數對類別 c 跑 ascent、target、SD center、SD max，
    逐一評估並回傳 [(方法名稱, DreamResult, EvalReport), ...]。
    每個方法使用該 variant 預設的 blur_every。
    """
    if context is None:
        context = EvaluationContext.fit(model, train, layer)
    rows = []
    for method, variant, mode in COMPARE_METHODS:
        cfg = base_cfg.with_values(
            variant=variant,
            mode=mode,
            target_class=c,
            seed=seed,
            blur_every=DEFAULT_BLUR_EVERY[variant],
            run_id=f'compare-{method}-c{c}',
        )
        logger.info(f"比較方法 {method}（class={c}, seed={seed}）")
        result = run_dream(model, train, cfg)
        rows.append((method, result, evaluate_dream(model, train, result, context=context)))
    return rows


def write_comparison(rows, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\t'.join(COMPARISON_HEADER) + '\n')
        for method, result, report in rows:
            values = (
                method, result.variant, result.mode, str(report.target_class), str(report.prediction),
                _fmt(report.confidence), _fmt(report.class_logit),
                _fmt(report.activation_distance), _fmt(report.activation_band[0]), _fmt(report.activation_band[1]),
                _fmt(report.raw_distance), _fmt(report.raw_band[0]), _fmt(report.raw_band[1]),
                _fmt(reg.sm(result.series)), _fmt(result.final_loss),
            )
            f.write('\t'.join(values) + '\n')
    return len(rows)
