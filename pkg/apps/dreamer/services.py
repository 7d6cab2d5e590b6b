"""
三種 dreaming：

    dream_ascent     直接對 S_c 做梯度上升，每步套用固定順序的正則化
    dream_target     以 Adam 最小化 |S(ts) - S(T)|^2 / S_c(T)^2 + lambda_alpha * alpha_norm + lambda_beta * tv
    sequence_dream   上式再加 lambda_sm * sm，以無 momentum 的梯度下降最佳化，
                     搭配週期性模糊、clamp、過衝雜訊與停滯重新初始化

同樣的設定與 seed 得到逐位元相同的結果。
"""
import logging

import numpy as np

from apps.autodiff import ops
from apps.autodiff.optim import Adam
from apps.autodiff.tensor import Tape, Tensor
from apps.classifier.services import logits, predict

from . import regularizers as reg
from .entities import DreamResult, DreamState
from .exceptions import DreamConfigError, DreamDivergedError, ZeroTargetError
from .targets import select_seed_input, target_logits

logger = logging.getLogger(__name__)


def _deactivation_residual(d, c):
    # max 模式中其他類別的目標是上限，低於訓練集的最小值不算誤差
    own = np.zeros(d.data.shape)
    own[c] = 1.0
    return d * Tensor(own) + ops.relu(d) * Tensor(1.0 - own)


def _objective(model, x, spec, cfg, include_sm):
    out = model.network.forward(x)
    denom = spec.scalar ** 2
    if cfg.score_target == 'vector':
        d = out - Tensor(spec.vector)
        if spec.mode == 'max':
            d = _deactivation_residual(d, spec.target_class)
        score = ops.tensor_sum(d * d) / denom
    else:
        d = ops.select(out, spec.target_class) - spec.scalar
        score = d * d / denom
    loss = score
    if cfg.lambda_alpha:
        loss = loss + cfg.lambda_alpha * reg.alpha_norm_term(x, cfg.alpha)
    if cfg.lambda_beta:
        loss = loss + cfg.lambda_beta * reg.tv_term(x, cfg.beta)
    if include_sm and cfg.lambda_sm:
        loss = loss + cfg.lambda_sm * reg.sm_term(x)
    return loss, out


def dream_loss(model, x, spec, cfg, include_sm=True):
    """
    目標比對損失（Tensor）。include_sm=False 時即 dream_target 的損失，
    True 時為 sequence_dream 多加 SM 項的版本。
    """
    _check_target(spec)
    loss, _ = _objective(model, x, spec, cfg, include_sm)
    return loss


def _check_target(spec):
    if spec.scalar == 0.0:
        raise ZeroTargetError(f"類別 {spec.target_class} 的目標分數為 0，無法作為分母")


def _check_variant(cfg, variant):
    if cfg.variant != variant:
        raise DreamConfigError(f"dream.variant: 預期 {variant}，目前為 {cfg.variant}")
    if not cfg.is_resolved:
        raise DreamConfigError('clamp 邊界與雜訊強度尚未決定，請先呼叫 DreamConfig.resolved(train.stats)')


def _check_class(model, c):
    if not 0 <= c < model.config.num_classes:
        raise DreamConfigError(f"dream.class: {c} 超出 [0, {model.config.num_classes})")


def _for_class(cfg, c):
    return cfg if cfg.target_class == c else cfg.with_values(target_class=c)


def _finite(step, *values):
    if not all(np.all(np.isfinite(v)) for v in values):
        raise DreamDivergedError(step)


def _clamp(series, cfg):
    return reg.clamp_to_bounds(series, cfg.clamp_lo, cfg.clamp_hi)


def _blur_due(cfg, step):
    return cfg.blur_every > 0 and step % cfg.blur_every == 0


def _result(model, cfg, series, loss_trace, score_trace, state, final_loss, spec=None, provenance=''):
    series = np.array(series, dtype=np.float64)
    prediction, confidence = predict(model, series)
    return DreamResult(
        series=series,
        loss_trace=loss_trace,
        score_trace=score_trace,
        reinit_count=state.reinit_count,
        prediction=prediction,
        confidence=confidence,
        target_class=cfg.target_class,
        variant=cfg.variant,
        mode=cfg.mode,
        final_loss=float(final_loss),
        best_step=state.best_step,
        target=[float(v) for v in spec.vector] if spec is not None else None,
        seed_provenance=provenance,
        config=cfg.as_dict(),
        run_id=cfg.run_id,
    )


def _reinit_if_stalled(state, loss_trace, cfg):
    _, fired = reg.reinit_on_plateau(state, loss_trace[state.window_start:], cfg)
    if fired:
        state.window_start = len(loss_trace)
    return fired


def _plateau_step(state, loss_trace, cfg):
    if _reinit_if_stalled(state, loss_trace, cfg):
        state.series = _clamp(state.series, cfg)


def dream_ascent(model, seed_series, c, cfg, provenance='given-series'):
    """
    每步：S_c 對輸入的梯度上升，接著依序 l2_decay、random_scale、平滑、
    （每 blur_every 步）高斯模糊、clamp、停滯重新初始化。回傳最後一步的序列。
    """
    cfg = _for_class(cfg, c)
    _check_variant(cfg, 'ascent')
    _check_class(model, c)
    net = model.network
    state = DreamState(series=_clamp(seed_series, cfg), rng=np.random.default_rng(cfg.seed))
    loss_trace, score_trace = [], []
    logger.info(f"dream_ascent 開始: class={c}, steps={cfg.steps}, lr={cfg.lr}")

    for step in range(1, cfg.steps + 1):
        x = Tensor(state.series, requires_grad=True)
        with Tape() as tape:
            score = ops.select(net.forward(x), c)
        value = score.item()
        _finite(step, value)
        tape.backward(score)
        loss_trace.append(-value)
        score_trace.append(value)

        series = state.series + cfg.lr * x.grad
        series = reg.l2_decay(series, cfg.l2_decay)
        series = reg.random_scale(series, cfg.scale_jitter, state.rng, cfg.scale_per_point)
        series = reg.smooth(series, cfg)
        if _blur_due(cfg, step):
            series = reg.gaussian_blur_1d(series, cfg.sigma)
        state.series = _clamp(series, cfg)
        _finite(step, state.series)
        _plateau_step(state, loss_trace, cfg)

    state.best_step = cfg.steps
    final_score = float(logits(model, state.series)[c])
    logger.info(f"dream_ascent 結束: S_c={final_score:.6g}, 重新初始化 {state.reinit_count} 次")
    return _result(model, cfg, state.series, loss_trace, score_trace, state, -final_score, provenance=provenance)


def dream_target(model, seed_series, spec, cfg, provenance='given-series'):
    """
    以 Adam 最小化目標比對損失（權重凍結，只更新輸入），每步之後 clamp。
    weight_decay > 0 時在輸入梯度上加 L2 項。回傳過程中損失最小的序列。
    """
    cfg = _for_class(cfg, spec.target_class)
    _check_variant(cfg, 'target')
    _check_class(model, spec.target_class)
    _check_target(spec)
    x = Tensor(_clamp(seed_series, cfg), requires_grad=True)
    state = DreamState(series=x.data, rng=np.random.default_rng(cfg.seed))
    optimizer = Adam([x], lr=cfg.lr, weight_decay=cfg.weight_decay)
    loss_trace, score_trace = [], []
    logger.info(f"dream_target 開始: class={spec.target_class}, S_c(T)={spec.scalar:.6g}, steps={cfg.steps}")

    for step in range(1, cfg.steps + 1):
        optimizer.zero_grad()
        with Tape() as tape:
            loss, out = _objective(model, x, spec, cfg, include_sm=False)
        value, score = loss.item(), float(out.data[spec.target_class])
        _finite(step, value, score)
        loss_trace.append(value)
        score_trace.append(score)
        state.offer(step, value, x.data)

        tape.backward(loss)
        optimizer.step()
        if _blur_due(cfg, step):
            x.data = reg.gaussian_blur_1d(x.data, cfg.sigma)
        x.data = _clamp(x.data, cfg)

    logger.info(f"dream_target 結束: 最佳損失 {state.best_loss:.6g}（第 {state.best_step} 步）")
    return _result(model, cfg, state.best_series, loss_trace, score_trace, state, state.best_loss, spec, provenance)


def sequence_dream(model, train, c, cfg, spec=None, seed_series=None):
    """
    依 cfg.mode 建立目標、挑選起始序列，再以純梯度下降最小化含 SM 項的損失。
    每步：下降 -> 若該步開始時的 S_c 已超過 S_c(T) 就加入過衝雜訊 -> 停滯重新初始化
          -> 平滑（與 dream_ascent 相同設定）-> （每 blur_every 步）高斯模糊 -> clamp。
    回傳過程中損失最小的序列。
    """
    cfg = _for_class(cfg.resolved(train.stats), c)
    _check_variant(cfg, 'sd')
    _check_class(model, c)
    if spec is None:
        spec = target_logits(model, train, c, cfg.mode, cfg.target_multiplier)
    _check_target(spec)
    rng = np.random.default_rng(cfg.seed)
    if seed_series is None:
        seed_series, provenance = select_seed_input(model, train, spec, cfg.seed_strategy, rng, pool=cfg.seed_pool)
    else:
        provenance = 'given-series'

    state = DreamState(series=_clamp(seed_series, cfg), rng=rng)
    loss_trace, score_trace = [], []
    logger.info(f"sequence_dream 開始: class={c}, mode={cfg.mode}, steps={cfg.steps}, seed={provenance}")

    for step in range(1, cfg.steps + 1):
        x = Tensor(state.series, requires_grad=True)
        with Tape() as tape:
            loss, out = _objective(model, x, spec, cfg, include_sm=True)
        value, score = loss.item(), float(out.data[c])
        _finite(step, value, score)
        loss_trace.append(value)
        score_trace.append(score)
        state.offer(step, value, state.series)

        tape.backward(loss)
        state.series = state.series - cfg.lr * x.grad
        # 雜訊在平滑之前加入，候選序列不會帶著未平滑的雜訊
        if score > spec.scalar and cfg.overshoot_noise_std > 0:
            state.series = state.series + state.rng.normal(0.0, cfg.overshoot_noise_std, size=state.series.shape)
        _reinit_if_stalled(state, loss_trace, cfg)
        series = reg.smooth(state.series, cfg)
        if _blur_due(cfg, step):
            series = reg.gaussian_blur_1d(series, cfg.sigma)
        state.series = _clamp(series, cfg)
        _finite(step, state.series)

    logger.info(
        f"sequence_dream 結束: 最佳損失 {state.best_loss:.6g}（第 {state.best_step} 步），"
        f"重新初始化 {state.reinit_count} 次"
    )
    return _result(model, cfg, state.best_series, loss_trace, score_trace, state, state.best_loss, spec, provenance)


def run_dream(model, train, cfg, seed_series=None, spec=None):
    """依 cfg.variant 執行對應的 dreaming，補齊目標與起始序列"""
    cfg = cfg.resolved(train.stats)
    c = cfg.target_class
    _check_class(model, c)
    if cfg.variant == 'sd':
        return sequence_dream(model, train, c, cfg, spec=spec, seed_series=seed_series)

    if spec is None:
        mode = cfg.mode if cfg.variant == 'target' else 'center'
        spec = target_logits(model, train, c, mode, cfg.target_multiplier)
    if seed_series is None:
        rng = np.random.default_rng([cfg.seed, 1])
        seed_series, provenance = select_seed_input(model, train, spec, cfg.seed_strategy, rng, pool=cfg.seed_pool)
    else:
        provenance = 'given-series'
    if cfg.variant == 'ascent':
        return dream_ascent(model, seed_series, c, cfg, provenance)
    return dream_target(model, seed_series, spec, cfg, provenance)
