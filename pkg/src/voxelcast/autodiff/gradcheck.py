"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .ops import sum_all
from .tensor import Tensor


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn, inputs: dict[str, np.ndarray], h: float = 1e-5, seed: int = 0) -> dict[str, float]:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps a dict of float64 Tensors to a Tensor. Non-scalar outputs are
    contracted with a fixed random weighting first. Returns the norm-wise
    relative error per input.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    rng = np.random.default_rng(seed)
    weights = {}

    def scalar(arrays, track):
        tensors = {k: Tensor(v, requires_grad=track) for k, v in arrays.items()}
        out = fn(tensors)
        if out.data.size != 1:
            if "w" not in weights:
                weights["w"] = rng.standard_normal(out.shape)
            out = sum_all(_weighted(out, weights["w"]))
        return out, tensors

    out, tensors = scalar(inputs, True)
    out.backward()
    errors = {}
    for name, base in inputs.items():
        analytic = tensors[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        numeric = np.zeros_like(base)
        flat = numeric.reshape(-1)
        for idx in range(base.size):
            plus = {k: v.copy() for k, v in inputs.items()}
            minus = {k: v.copy() for k, v in inputs.items()}
            plus[name].reshape(-1)[idx] += h
            minus[name].reshape(-1)[idx] -= h
            fp = scalar(plus, False)[0].item()
            fm = scalar(minus, False)[0].item()
            flat[idx] = (fp - fm) / (2 * h)
        errors[name] = relative_error(analytic, numeric)
    return errors


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    def backward(g):
        out.accumulate(g * w)

    return Tensor(out.data * w, parents=(out,), backward=backward)
