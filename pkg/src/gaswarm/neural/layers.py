"""Parameter stores and the building blocks shared by both networks."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ParameterStore:
    """Named trainable tensors. Gradients live on the tensors themselves."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def set_trainable(self, flag: bool) -> None:
        for t in self._params.values():
            t.requires_grad = flag

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, t in self._params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.shape:
                raise T.ShapeMismatch(f"{k}: stored {a.shape}, expected {t.shape}")
            t.data = a.copy()

    def count(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv:
    """1-D convolution with bias."""

    def __init__(self, store: ParameterStore, name: str, cin: int, cout: int, kernel: int,
                 rng: np.random.Generator):
        self.w = store.add(f"{name}.w", _fan_in_uniform(rng, (cout, cin, kernel), cin * kernel))
        self.b = store.add(f"{name}.b", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.w, self.b, "same")


class Merge:
    """Joins two equally shaped streams with a kernel spanning both."""

    def __init__(self, store: ParameterStore, name: str, channels: int, kernel: int,
                 rng: np.random.Generator):
        self.w = store.add(f"{name}.w", _fan_in_uniform(rng, (channels, channels, 2, kernel),
                                                        2 * channels * kernel))
        self.b = store.add(f"{name}.b", np.zeros(channels))

    def __call__(self, a: Tensor, c: Tensor) -> Tensor:
        return T.conv2x(a, c, self.w, self.b, "same")


class Dense:
    def __init__(self, store: ParameterStore, name: str, cin: int, cout: int,
                 rng: np.random.Generator):
        self.w = store.add(f"{name}.w", _fan_in_uniform(rng, (cout, cin), cin))
        self.b = store.add(f"{name}.b", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.w) + self.b


class InceptionBlock:
    """Pre-activation residual block with parallel 1-D convolution branches.

    Branches see relu(x): a 1-wide conv, a 1-wide conv followed by one k-wide
    conv and, unless ``small``, a 1-wide conv followed by two k-wide convs. The
    concatenated branches are projected back to the input width and added to x.
    """

    def __init__(self, store: ParameterStore, name: str, channels: int, kernel: int,
                 rng: np.random.Generator, small: bool = False):
        w = max(1, channels // (4 if small else 2))
        self.branches = [[Conv(store, f"{name}.b0.c0", channels, w, 1, rng)],
                         [Conv(store, f"{name}.b1.c0", channels, w, 1, rng),
                          Conv(store, f"{name}.b1.c1", w, w, kernel, rng)]]
        if not small:
            self.branches.append([Conv(store, f"{name}.b2.c0", channels, w, 1, rng),
                                  Conv(store, f"{name}.b2.c1", w, w, kernel, rng),
                                  Conv(store, f"{name}.b2.c2", w, w, kernel, rng)])
        self.proj = Conv(store, f"{name}.proj", w * len(self.branches), channels, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(x)
        outs = []
        for convs in self.branches:
            y = convs[0](h)
            for c in convs[1:]:
                y = c(T.relu(y))
            outs.append(y)
        return x + self.proj(T.concat(outs, axis=1))
