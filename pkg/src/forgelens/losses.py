"""Training objectives: answer cross-entropy, pixel focal+dice, box L1+GIoU.

The pixel losses consume the segmentation map in log-probability form.
The patch (box) losses apply only to image-manipulated samples; the
caller masks accordingly and :func:`combine_losses` averages what it is
given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, exp, log, reduce_mean, reduce_sum, reshape
from .autodiff.ops import log_softmax, take_per_row
from .autodiff.tensor import absval, clip, maximum, minimum, mul, narrow
from .errors import DimensionError, InputError, UsageError


def cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under softmax(logits).

    ``logits`` is (n, vocab) with one row per supervised position, or a
    single (vocab,) row.
    """
    targets = np.asarray(list(targets), dtype=np.int64)
    if targets.size == 0:
        raise UsageError("cross_entropy needs at least one target position")
    if logits.ndim == 1:
        logits = reshape(logits, (1, logits.shape[0]))
    if logits.shape[0] != targets.size:
        raise DimensionError(f"{logits.shape[0]} logit rows for {targets.size} targets")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise InputError(f"target id outside vocabulary of size {logits.shape[1]}")
    return -reduce_mean(take_per_row(log_softmax(logits, axis=-1), targets))


def _true_class_logprob(m_s: Tensor, mask: np.ndarray) -> Tensor:
    if m_s.shape[:2] != mask.shape:
        raise DimensionError(f"map {m_s.shape} vs mask {mask.shape}")
    h, w = mask.shape
    maskf = mask.astype(m_s.dtype)
    nat = reshape(narrow(m_s, (slice(None), slice(None), slice(0, 1))), (h, w))
    man = reshape(narrow(m_s, (slice(None), slice(None), slice(1, 2))), (h, w))
    return mul(nat, Tensor(1.0 - maskf)) + mul(man, Tensor(maskf))


def focal_loss(m_s: Tensor, mask: np.ndarray, gamma: float = 2.0) -> Tensor:
    """-mean((1-p)^gamma * log p) over all pixels, p = true-class probability."""
    logp = _true_class_logprob(m_s, mask)
    if gamma == 0:
        return -reduce_mean(logp)
    one_minus_p = 1.0 - exp(logp)
    if float(gamma).is_integer():
        weight = one_minus_p
        for _ in range(int(gamma) - 1):
            weight = mul(weight, one_minus_p)
    else:
        weight = exp(gamma * log(clip(one_minus_p, 1e-12, 1.0)))
    return -reduce_mean(mul(weight, logp))


def dice_loss(m_s: Tensor, mask: np.ndarray, smooth: float = 1.0) -> Tensor:
    """1 - (2*overlap + smooth) / (|y|^2 + |yhat|^2 + smooth).

    ``smooth`` keeps empty-mask samples finite; it preserves the exact
    zero on a perfect binary match.
    """
    if m_s.shape[:2] != mask.shape:
        raise DimensionError(f"map {m_s.shape} vs mask {mask.shape}")
    h, w = mask.shape
    yhat = exp(reshape(narrow(m_s, (slice(None), slice(None), slice(1, 2))), (h, w)))
    y = Tensor(mask.astype(m_s.dtype))
    overlap = reduce_sum(mul(y, yhat))
    denom = reduce_sum(mul(y, y)) + reduce_sum(mul(yhat, yhat))
    return 1.0 - (2.0 * overlap + smooth) / (denom + smooth)


def _validate_box(b: np.ndarray, name: str):
    if b.shape != (4,):
        raise InputError(f"{name} must have 4 coordinates, got shape {b.shape}")
    x1, y1, x2, y2 = (float(v) for v in b)
    if not (0.0 <= x1 <= x2 <= 1.0 and 0.0 <= y1 <= y2 <= 1.0):
        raise InputError(f"{name} is not a valid normalized box: {(x1, y1, x2, y2)}")


def _as_box_tensor(b) -> Tensor:
    t = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=np.float32))
    _validate_box(t.data, "box")
    return t


def l1_box(pred, target) -> Tensor:
    """Mean absolute coordinate difference."""
    p = _as_box_tensor(pred)
    t = _as_box_tensor(target)
    return reduce_mean(absval(p - t))


def _coord(b: Tensor, i: int) -> Tensor:
    return narrow(b, (slice(i, i + 1),))


def giou_loss(pred, target) -> Tensor:
    """1 - GIoU; zero iff the boxes coincide, at most 2 for distant boxes."""
    p = _as_box_tensor(pred)
    t = _as_box_tensor(target)
    px1, py1, px2, py2 = (_coord(p, i) for i in range(4))
    tx1, ty1, tx2, ty2 = (_coord(t, i) for i in range(4))

    inter_w = maximum(minimum(px2, tx2) - maximum(px1, tx1), 0.0)
    inter_h = maximum(minimum(py2, ty2) - maximum(py1, ty1), 0.0)
    inter = mul(inter_w, inter_h)
    area_p = mul(px2 - px1, py2 - py1)
    area_t = mul(tx2 - tx1, ty2 - ty1)
    union = area_p + area_t - inter
    iou = inter / union

    enc_w = maximum(px2, tx2) - minimum(px1, tx1)
    enc_h = maximum(py2, ty2) - minimum(py1, ty1)
    enclosing = mul(enc_w, enc_h)
    giou = iou - (enclosing - union) / enclosing
    return reshape(1.0 - giou, ())


@dataclass
class LossBreakdown:
    l_ce: float
    l_focal: Optional[float] = None
    l_dice: Optional[float] = None
    l_l1: Optional[float] = None
    l_giou: Optional[float] = None

    @property
    def l_pixel(self) -> Optional[float]:
        if self.l_focal is None:
            return None
        return self.l_focal + self.l_dice

    @property
    def l_patch(self) -> Optional[float]:
        if self.l_l1 is None:
            return None
        return self.l_l1 + self.l_giou

    @property
    def total(self) -> float:
        return self.l_ce + (self.l_pixel or 0.0) + (self.l_patch or 0.0)

    def to_dict(self) -> dict:
        out = {"l_ce": self.l_ce}
        if self.l_focal is not None:
            out.update(l_focal=self.l_focal, l_dice=self.l_dice, l_pixel=self.l_pixel)
        if self.l_l1 is not None:
            out.update(l_l1=self.l_l1, l_giou=self.l_giou, l_patch=self.l_patch)
        out["total"] = self.total
        return out


def _mean_terms(terms: List[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / float(len(terms))


def combine_losses(
    ce_terms: List[Tensor],
    focal_terms: Optional[List[Tensor]] = None,
    dice_terms: Optional[List[Tensor]] = None,
    l1_terms: Optional[List[Tensor]] = None,
    giou_terms: Optional[List[Tensor]] = None,
    patch_enabled: bool = False,
) -> Tuple[Tensor, LossBreakdown]:
    """Batch means per component, summed into the optimized total.

    ``focal/dice`` terms cover every sample; ``l1/giou`` terms exist only
    for image-manipulated samples, so an enabled-but-empty patch group
    contributes an exact zero.
    """
    if not ce_terms:
        raise UsageError("combine_losses needs at least one cross-entropy term")
    total = _mean_terms(ce_terms)
    breakdown = LossBreakdown(l_ce=total.item())
    if focal_terms:
        focal = _mean_terms(focal_terms)
        dice = _mean_terms(dice_terms)
        breakdown.l_focal = focal.item()
        breakdown.l_dice = dice.item()
        total = total + focal + dice
    if patch_enabled:
        if l1_terms:
            l1 = _mean_terms(l1_terms)
            gi = _mean_terms(giou_terms)
            breakdown.l_l1 = l1.item()
            breakdown.l_giou = gi.item()
            total = total + l1 + gi
        else:
            breakdown.l_l1 = 0.0
            breakdown.l_giou = 0.0
    return total, breakdown
