"""Named parameters with Adam state, and the Adam update."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParameterStore:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            src = np.asarray(arrays[name])
            if src.shape != t.shape:
                raise ValueError(f"{name}: checkpoint shape {src.shape} != {t.shape}")
            t.data = src.astype(self.dtype)


def adam_step(store: ParameterStore, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> ParameterStore:
    """One bias-corrected Adam update over every parameter; clears gradients.

    Parameters without a gradient are treated as having a zero gradient.
    """
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(store.dtype)
        p.grad = None
    return store
