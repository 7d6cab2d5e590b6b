import logging

import numpy as np

from apps.autodiff import ops
from apps.autodiff.optim import Adam
from apps.autodiff.tensor import Tape, Tensor

from .entities import EpochRecord, TrainingHistory
from .exceptions import InputLengthError, TrainingDivergedError
from .resnet import ResNet
from .services import accuracy

logger = logging.getLogger(__name__)


def train(model, train_ds, cfg, test_ds=None):
    """
    以 Adam 最小化 softmax cross-entropy。

    每個 epoch 由 cfg.seed 的 rng 重新排列 batch 順序，同樣的 seed 得到逐位元相同的 history。
    回傳 (新的 ModelWeights, TrainingHistory)；model 本身不會被修改。
    epochs=0 時直接回傳原權重與空的 history。
    """
    if train_ds.length != model.config.input_length:
        raise InputLengthError(
            f"資料集長度 {train_ds.length} 與模型輸入長度 {model.config.input_length} 不符"
        )
    history = TrainingHistory()
    if cfg.epochs == 0:
        return model, history

    net = ResNet(model, trainable=True)
    optimizer = Adam(
        net.parameters(),
        lr=cfg.lr,
        beta_1=cfg.beta_1,
        beta_2=cfg.beta_2,
        epsilon=cfg.epsilon,
    )
    rng = np.random.default_rng(cfg.seed)
    x_all = train_ds.values
    y_all = train_ds.labels
    n = len(train_ds)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for batch, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            with Tape() as tape:
                logits = net.forward(Tensor(x_all[idx]), mode='train')
                loss = ops.softmax_cross_entropy(logits, y_all[idx])
            value = loss.item()
            if not np.isfinite(value):
                logger.error(f"訓練發散: epoch {epoch}, batch {batch}")
                raise TrainingDivergedError(epoch, batch)
            tape.backward(loss)
            optimizer.step()
            loss_sum += value * len(idx)
            correct += int((logits.data.argmax(axis=1) == y_all[idx]).sum())

        record = EpochRecord(epoch=epoch, loss=loss_sum / n, accuracy=correct / n)
        history.epochs.append(record)
        logger.info(f"epoch {epoch}/{cfg.epochs} loss={record.loss:.6f} acc={record.accuracy:.4f}")

    trained = net.to_weights()
    history.train_accuracy = accuracy(trained, train_ds)
    if test_ds is not None:
        history.test_accuracy = accuracy(trained, test_ds)
    logger.info(f"訓練完成: train acc={history.train_accuracy}, test acc={history.test_accuracy}")
    return trained, history
