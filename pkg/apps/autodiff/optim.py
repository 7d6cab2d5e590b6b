import numpy as np


class Adam:
    """
    Adam，直接更新 Tensor.data。
    weight_decay > 0 時把 weight_decay * theta 加到梯度上（L2 耦合式）。
    """

    def __init__(self, params, lr=1e-3, beta_1=0.9, beta_2=0.999, epsilon=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta_1 = beta_1
        self.beta_2 = beta_2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g_t = p.grad
            if self.weight_decay:
                g_t = g_t + self.weight_decay * p.data

            # 一階、二階動量
            self.m[i] = self.beta_1 * self.m[i] + (1. - self.beta_1) * g_t
            self.v[i] = self.beta_2 * self.v[i] + (1. - self.beta_2) * g_t ** 2

            # 偏差修正
            m_hat = self.m[i] / (1. - self.beta_1 ** self.t)
            v_hat = self.v[i] / (1. - self.beta_2 ** self.t)

            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class GradientDescent:
    """沒有 momentum、沒有自適應步長的梯度下降"""

    def __init__(self, params, lr=1e-2):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None
