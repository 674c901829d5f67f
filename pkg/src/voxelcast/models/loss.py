"""Training objective: L1 image term plus weighted feature-space terms.

The feature extractor is a frozen two-stage conv stack (3->16, 16->32; each
conv, relu, 2x average pool) with weights drawn once from a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    Tensor,
    add,
    avgpool2d,
    conv2d,
    l1_loss,
    l2_feature_loss,
    relu,
    scale,
)
from ..autodiff.tensor import DimensionError

FEATURE_SEED = 20200415


@dataclass(frozen=True)
class LossWeights:
    beta: float = 1.0
    layer_weights: tuple[float, ...] = (1.0, 0.1)

    def __post_init__(self):
        if self.beta < 0 or any(w < 0 for w in self.layer_weights):
            raise ValueError("loss weights must be non-negative")


class FeatureExtractor:
    def __init__(self, channels=(16, 32), seed: int = FEATURE_SEED, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.weights = []
        cin = 3
        for cout in channels:
            w = rng.standard_normal((3, 3, cin, cout)) * np.sqrt(2.0 / (9 * cin))
            self.weights.append(w.astype(dtype))
            cin = cout

    def __call__(self, image) -> list[Tensor]:
        x = image if isinstance(image, Tensor) else Tensor(image)
        feats = []
        for w in self.weights:
            x = avgpool2d(relu(conv2d(x, Tensor(w.astype(x.dtype)), padding=1)), 2)
            feats.append(x)
        return feats


_DEFAULT_EXTRACTOR: FeatureExtractor | None = None


def default_extractor() -> FeatureExtractor:
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        _DEFAULT_EXTRACTOR = FeatureExtractor()
    return _DEFAULT_EXTRACTOR


def render_loss(prediction, target, weights: LossWeights | None = None,
                extractor: FeatureExtractor | None = None) -> tuple[Tensor, dict[str, float]]:
    """L1(I, T) + beta * sum_i w_i * ||v_i(I) - v_i(T)||.

    ``prediction`` may be a Tensor (gradients flow) or an array; ``target`` is
    treated as a constant. Returns the scalar loss and its components.
    """
    weights = weights or LossWeights()
    extractor = extractor or default_extractor()
    pred = prediction if isinstance(prediction, Tensor) else Tensor(prediction)
    tgt = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if pred.shape != tgt.shape:
        raise DimensionError(f"prediction {pred.shape} and target {tgt.shape} differ")
    l1 = l1_loss(pred, Tensor(tgt))
    parts = {"l1": float(l1.data)}
    total = l1
    if weights.beta > 0:
        fp = extractor(pred)
        ft = extractor(Tensor(tgt))
        perceptual = None
        for i, (a, b, w) in enumerate(zip(fp, ft, weights.layer_weights)):
            term = l2_feature_loss(a, Tensor(b.data))
            parts[f"feat{i + 1}"] = float(term.data)
            weighted = scale(term, w)
            perceptual = weighted if perceptual is None else add(perceptual, weighted)
        parts["perceptual"] = float(perceptual.data)
        total = add(l1, scale(perceptual, weights.beta))
    else:
        parts["perceptual"] = 0.0
    parts["total"] = float(total.data)
    return total, parts


def perceptual_distance(a: np.ndarray, b: np.ndarray, layer_weights=(1.0, 0.1),
                        extractor: FeatureExtractor | None = None) -> float:
    """Weighted feature-space distance between two images (no gradients)."""
    extractor = extractor or default_extractor()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        a, b = a[None], b[None]
    fa, fb = extractor(Tensor(a)), extractor(Tensor(b))
    total = 0.0
    for x, y, w in zip(fa, fb, layer_weights):
        total += w * float(l2_feature_loss(x, y).data)
    return total
