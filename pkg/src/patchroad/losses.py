"""Joint training objective evaluated as plain values (no gradients).

``loss_p`` is a sum over all patches, while ``loss_s`` and ``loss_l``
average over the road patches only; the mixed normalization is deliberate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import PslTensors

__all__ = ["EPS", "LossWeights", "LossBreakdown", "road_patches",
           "loss_p", "loss_l", "loss_s", "loss_seg", "loss_joint", "combine"]

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    l_p: float
    l_s: float
    l_l: float
    l_seg: float
    l_graph: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _bce(gt, pred):
    pred = np.clip(pred, EPS, 1.0 - EPS)
    return -(gt * np.log(pred) + (1.0 - gt) * np.log(1.0 - pred))


def road_patches(p_gt) -> np.ndarray:
    """Indices of ground-truth road patches."""
    return np.flatnonzero(np.asarray(p_gt) == 1)


def loss_p(p_gt, p_pre) -> float:
    gt, pred = _same_shape(p_gt, p_pre)
    return float(_bce(gt, pred).sum())


def loss_l(l_gt, l_pre, omega_p) -> float:
    gt, pred = _same_shape(l_gt, l_pre)
    omega = np.asarray(omega_p, dtype=np.int64)
    if omega.size == 0:
        return 0.0
    return float(_bce(gt[omega], pred[omega]).sum() / omega.size)


def loss_s(s_gt, s_pre, omega_p) -> float:
    gt, pred = _same_shape(s_gt, s_pre)
    omega = np.asarray(omega_p, dtype=np.int64)
    if omega.size == 0:
        return 0.0
    return float(np.abs(gt[omega] - pred[omega]).sum() / omega.size)


def loss_seg(m_gt, m_pre) -> float:
    """Mean pixel BCE plus soft dice loss."""
    gt, pred = _same_shape(m_gt, m_pre)
    bce = float(_bce(gt, pred).mean()) if gt.size else 0.0
    inter = float((gt * pred).sum())
    dice = (2.0 * inter + EPS) / (float(gt.sum()) + float(pred.sum()) + EPS)
    return bce + (1.0 - dice)


def loss_joint(gt: PslTensors, pred: PslTensors, m_gt=None, m_pre=None,
               w: LossWeights = LossWeights()) -> LossBreakdown:
    """All loss components for one prediction.

    The segmentation term is 0 when no masks are given.
    """
    if gt.grid != pred.grid:
        raise ValueError("ground truth and prediction use different patch grids")
    omega = road_patches(gt.p)
    lp = loss_p(gt.p, pred.p)
    ls = loss_s(gt.s, pred.s, omega)
    ll = loss_l(gt.l, pred.l, omega)
    lseg = 0.0 if m_gt is None else loss_seg(m_gt, m_pre)
    return combine(lp, ls, ll, lseg, w)


def combine(lp, ls, ll, lseg, w: LossWeights = LossWeights()) -> LossBreakdown:
    graph = w.alpha * lp + w.beta * ls + w.gamma * ll
    return LossBreakdown(lp, ls, ll, lseg, graph, lseg + graph)
