# -*- coding: utf-8 -*-
"""
測試共用的小型模型與資料集。第一次呼叫時訓練，之後同一個行程內重複使用。
"""
from functools import lru_cache

# 與驗收門檻相同的合成資料集
SYNTH_ARGS = dict(n_train=200, n_test=100, m=128, seed=7)

# 縮小通道數，讓測試在單核心上也跑得完
SMALL_CHANNELS = (8, 16, 16)
SMALL_EPOCHS = 30


@lru_cache(maxsize=None)
def synthetic_datasets():
    from apps.datasets.services import synth_binary
    return synth_binary(**SYNTH_ARGS)


@lru_cache(maxsize=None)
def trained_synthetic_model():
    """回傳 (ModelWeights, TrainingHistory, train, test)"""
    from apps.classifier.entities import ResNetConfig, TrainConfig
    from apps.classifier.resnet import build_resnet
    from apps.classifier.training import train

    train_ds, test_ds = synthetic_datasets()
    config = ResNetConfig(num_classes=2, input_length=train_ds.length, channels=SMALL_CHANNELS)
    model = build_resnet(config, seed=7)
    cfg = TrainConfig(epochs=SMALL_EPOCHS, lr=1e-2, batch_size=32, seed=7)
    trained, history = train(model, train_ds, cfg, test_ds)
    return trained, history, train_ds, test_ds
