"""
Reverse-mode autodiff 的核心型別：Tensor 與 Tape。

Tensor 的 _backward 規則參考 micrograd 風格，但不做拓撲排序：
每個運算執行時都記錄到目前作用中的 Tape，反向傳遞直接照記錄的
相反順序重播，累加順序因此固定，同樣的輸入得到逐位元相同的梯度。
"""
import contextvars
import itertools
import logging

import numpy as np

from .exceptions import ShapeError, TapeError

logger = logging.getLogger(__name__)

_active_tape = contextvars.ContextVar('seqdream_active_tape', default=None)
_tape_ids = itertools.count(1)


class Tensor:
    """64-bit dense array，可選擇記錄梯度"""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        if self.data.ndim == 0:
            self.data = self.data.reshape(())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._is_leaf = True

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def size(self):
        return int(self.data.size)

    @property
    def tape_id(self):
        return self._tape.id if self._tape is not None else None

    @property
    def is_leaf(self):
        return self._is_leaf

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() 只適用於純量，目前 shape 為 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # 運算子轉交給 ops，避免循環 import
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.div(self, other)
        return ops.mul(self, 1.0 / float(other))

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __abs__(self):
        from . import ops
        return ops.absolute(self)

    def __getitem__(self, index):
        from . import ops
        return ops.select(self, index)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class _Node:
    __slots__ = ('name', 'inputs', 'output', 'backward_fn')

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """
    運算紀錄。一次最佳化（或一個 training batch）擁有自己的 Tape，
    不跨執行緒共用。

        with Tape() as tape:
            loss = f(x)
        tape.backward(loss)
    """

    def __init__(self):
        self.id = next(_tape_ids)
        self.nodes = []
        self._token = None

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, name, inputs, output, backward_fn):
        output._tape = self
        output._is_leaf = False
        output.requires_grad = True
        for t in inputs:
            if t.requires_grad and t.is_leaf:
                t._tape = self
        self.nodes.append(_Node(name, inputs, output, backward_fn))
        return output

    def tensors(self):
        """Tape 上所有 requires_grad 的張量（葉節點在前，依出現順序）"""
        seen = {}
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad:
                    seen.setdefault(id(t), t)
            seen.setdefault(id(node.output), node.output)
        return list(seen.values())

    def zero_grad(self):
        for t in self.tensors():
            t.grad = None

    def backward(self, root):
        if root._tape is not self:
            raise TapeError('root 不在這個 Tape 上')
        if root.data.size != 1:
            raise ShapeError(f"backward 需要純量 root，目前 shape 為 {root.shape}")

        # 中間節點的梯度只在這次傳遞內有效；葉節點則累加到 .grad
        grads = {id(root): np.ones_like(root.data)}
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            node.output.grad = g_out.copy()
            input_grads = node.backward_fn(g_out)
            for t, g in zip(node.inputs, input_grads):
                if g is None or not t.requires_grad:
                    continue
                if g.shape != t.data.shape:
                    raise ShapeError(f"{node.name} 的梯度 shape {g.shape} 與輸入 {t.shape} 不符")
                if t.is_leaf:
                    t.grad = g.copy() if t.grad is None else t.grad + g
                else:
                    key = id(t)
                    grads[key] = g if key not in grads else grads[key] + g

        for t in self.tensors():
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)


def active_tape():
    return _active_tape.get()


def record(name, inputs, output, backward_fn):
    """有作用中的 Tape 且任一輸入需要梯度時才記錄"""
    tape = _active_tape.get()
    if tape is None or not any(t.requires_grad for t in inputs):
        return output
    return tape.record(name, inputs, output, backward_fn)


def backward(root):
    """
    從純量 root 反向傳遞。葉節點的 .grad 會累加（重複呼叫就會疊加），
    需要時先呼叫 Tape.zero_grad() 或 Tensor.zero_grad()。
    """
    if not isinstance(root, Tensor) or root._tape is None:
        raise TapeError('root 不在任何 Tape 上，請在 with Tape() 區塊內建立計算')
    root._tape.backward(root)
