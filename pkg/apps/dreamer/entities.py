from dataclasses import dataclass, field, fields, replace

import numpy as np

from .exceptions import DreamConfigError

VARIANTS = ('ascent', 'target', 'sd')
MODES = ('center', 'max')
SEED_STRATEGIES = ('mean-activation-nearest', 'random-noise', 'given-series')
SEED_POOLS = ('class', 'all')
SMOOTHING = ('exponential', 'moving_average', 'none')
SCORE_TARGETS = ('vector', 'scalar')

# 未指定 blur_every 時依 variant 決定（0 表示不做）
DEFAULT_BLUR_EVERY = {
    'ascent': 1,
    'target': 0,
    'sd': 5,
}


@dataclass(frozen=True)
class DreamConfig:
    """
    一次 dreaming 的所有超參數。

    clamp_lo / clamp_hi、reinit_noise_std、overshoot_noise_std 為 None 時，
    由 resolved() 依訓練資料統計值補上：邊界取全域 min / max，
    兩種雜訊標準差分別是 reinit_noise_scale、overshoot_noise_scale 乘上訓練資料標準差。
    """
    variant: str = 'sd'
    mode: str = 'center'
    target_class: int = 0
    steps: int = 100
    lr: float = 1.0
    alpha: float = 6.0
    beta: float = 2.0
    sigma: float = 3.0
    lambda_alpha: float = 1e-3
    lambda_beta: float = 1e-3
    lambda_sm: float = 0.1
    target_multiplier: float = 2.5
    blur_every: int = None
    l2_decay: float = 0.01
    scale_jitter: float = 0.01
    scale_per_point: bool = True
    smoothing: str = 'exponential'
    zero_phase: bool = True
    ma_window: int = 3
    exp_gamma: float = 0.6
    plateau_eps: float = 1e-4
    plateau_window: int = 10
    reinit_noise_scale: float = 0.05
    overshoot_noise_scale: float = 0.02
    reinit_noise_std: float = None
    overshoot_noise_std: float = None
    clamp_lo: float = None
    clamp_hi: float = None
    seed: int = 0
    seed_strategy: str = 'mean-activation-nearest'
    seed_pool: str = 'class'
    score_target: str = 'vector'
    weight_decay: float = 0.0
    run_id: str = ''

    def __post_init__(self):
        if self.blur_every is None:
            object.__setattr__(self, 'blur_every', DEFAULT_BLUR_EVERY.get(self.variant, 0))
        self.validate()

    def _require(self, ok, key, message):
        if not ok:
            raise DreamConfigError(f"dream.{key}: {message}")

    def validate(self):
        self._require(self.variant in VARIANTS, 'variant', f"必須是 {'/'.join(VARIANTS)}，目前為 {self.variant!r}")
        self._require(self.mode in MODES, 'mode', f"必須是 {'/'.join(MODES)}，目前為 {self.mode!r}")
        self._require(self.target_class >= 0, 'class', f"不可為負，目前為 {self.target_class}")
        self._require(self.steps >= 1, 'steps', f"至少為 1，目前為 {self.steps}")
        self._require(self.lr > 0, 'lr', f"必須大於 0，目前為 {self.lr}")
        self._require(self.alpha > 2, 'alpha', f"必須大於 2，目前為 {self.alpha}")
        self._require(self.beta >= 1, 'beta', f"至少為 1，目前為 {self.beta}")
        self._require(self.sigma > 0, 'sigma', f"必須大於 0，目前為 {self.sigma}")
        for key in ('lambda_alpha', 'lambda_beta', 'lambda_sm', 'weight_decay', 'plateau_eps',
                    'reinit_noise_scale', 'overshoot_noise_scale'):
            self._require(getattr(self, key) >= 0, key, f"不可為負，目前為 {getattr(self, key)}")
        self._require(self.target_multiplier > 0, 'target_multiplier', f"必須大於 0，目前為 {self.target_multiplier}")
        self._require(self.blur_every >= 0, 'blur_every', f"不可為負，目前為 {self.blur_every}")
        self._require(0 <= self.l2_decay < 1, 'l2_decay', f"必須在 [0, 1)，目前為 {self.l2_decay}")
        self._require(0 <= self.scale_jitter < 1, 'scale_jitter', f"必須在 [0, 1)，目前為 {self.scale_jitter}")
        self._require(self.smoothing in SMOOTHING, 'smoothing', f"必須是 {'/'.join(SMOOTHING)}")
        self._require(self.ma_window >= 1 and self.ma_window % 2 == 1, 'ma_window', f"必須為正奇數，目前為 {self.ma_window}")
        self._require(0 < self.exp_gamma <= 1, 'exp_gamma', f"必須在 (0, 1]，目前為 {self.exp_gamma}")
        self._require(self.plateau_window >= 1, 'plateau_window', f"至少為 1，目前為 {self.plateau_window}")
        self._require(self.seed_strategy in SEED_STRATEGIES, 'seed_strategy', f"必須是 {'/'.join(SEED_STRATEGIES)}")
        self._require(self.seed_pool in SEED_POOLS, 'seed_pool', f"必須是 {'/'.join(SEED_POOLS)}")
        self._require(self.score_target in SCORE_TARGETS, 'score_target', f"必須是 {'/'.join(SCORE_TARGETS)}")
        for key in ('reinit_noise_std', 'overshoot_noise_std'):
            value = getattr(self, key)
            self._require(value is None or value >= 0, key, f"不可為負，目前為 {value}")
        if self.clamp_lo is not None and self.clamp_hi is not None:
            self._require(self.clamp_lo < self.clamp_hi, 'clamp_lo', f"必須小於 clamp_hi（{self.clamp_lo} >= {self.clamp_hi}）")

    @property
    def is_resolved(self):
        return None not in (self.clamp_lo, self.clamp_hi, self.reinit_noise_std, self.overshoot_noise_std)

    def resolved(self, stats):
        """以訓練資料統計值（DatasetStats）補上未指定的邊界與雜訊強度"""
        updates = {}
        if self.clamp_lo is None:
            updates['clamp_lo'] = stats.minimum
        if self.clamp_hi is None:
            updates['clamp_hi'] = stats.maximum
        if self.reinit_noise_std is None:
            updates['reinit_noise_std'] = self.reinit_noise_scale * stats.std
        if self.overshoot_noise_std is None:
            updates['overshoot_noise_std'] = self.overshoot_noise_scale * stats.std
        return replace(self, **updates) if updates else self

    def with_values(self, **updates):
        return replace(self, **updates)

    def as_dict(self):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['class'] = data.pop('target_class')
        return data


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """
    目標 logit 向量 S(T)。scalar 為第 c 個分量 S_c(T)。
    """
    target_class: int
    vector: np.ndarray
    mode: str = 'center'

    def __post_init__(self):
        vector = np.array(self.vector, dtype=np.float64).reshape(-1)
        vector.setflags(write=False)
        object.__setattr__(self, 'vector', vector)
        if not 0 <= self.target_class < vector.size:
            raise DreamConfigError(f"dream.class: {self.target_class} 超出 [0, {vector.size})")

    @property
    def scalar(self):
        return float(self.vector[self.target_class])


@dataclass
class DreamState:
    """單次 dreaming 的可變狀態，由該次執行獨占"""
    series: np.ndarray
    rng: np.random.Generator
    reinit_count: int = 0
    window_start: int = 0
    best_loss: float = np.inf
    best_series: np.ndarray = None
    best_step: int = 0

    def offer(self, step, loss, series):
        """記錄目前最好的序列，回傳是否更新"""
        if loss < self.best_loss:
            self.best_loss = float(loss)
            self.best_series = np.array(series, dtype=np.float64)
            self.best_step = step
            return True
        return False


@dataclass
class DreamResult:
    series: np.ndarray
    loss_trace: list
    score_trace: list
    reinit_count: int
    prediction: int
    confidence: float
    target_class: int
    variant: str
    mode: str
    final_loss: float
    best_step: int = 0
    target: list = None
    seed_provenance: str = ''
    config: dict = field(default_factory=dict)
    run_id: str = ''

    @property
    def steps_used(self):
        return len(self.loss_trace)
