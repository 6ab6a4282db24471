"""Dual-branch visual-artifact localization.

Upper branch: patch rows are deconvolved to pixel resolution and scored
against two encoded class prompts ("natural"/"unnatural") to form a
per-pixel log-probability map.  Lower branch: a learnable query token
attends over the patch rows to aggregate artifact evidence for bounding
box regression.  Both branch outputs are projected into the language
model's embedding space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .autodiff import (
    Tensor,
    attention,
    clip,
    concat,
    conv2d,
    conv_transpose2d,
    gelu,
    l2_normalize,
    linear,
    log_softmax,
    matmul,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    transpose,
)
from .autodiff.tensor import mul, narrow
from .errors import ConfigError, InputError
from .nn import LayerNorm, Linear, Module, uniform_param


@dataclass
class BBox:
    """Normalized corner box; construction enforces validity."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        ok = 0.0 <= self.x1 <= self.x2 <= 1.0 and 0.0 <= self.y1 <= self.y2 <= 1.0
        if not ok:
            raise InputError(f"invalid normalized box {(self.x1, self.y1, self.x2, self.y2)}")

    def as_array(self) -> np.ndarray:
        return np.asarray([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


class ArtifactLocalizer(Module):
    def __init__(self, rng: np.random.Generator, patch_dim: int = 64, text_dim: int = 64,
                 shared_dim: int = 64, lm_dim: int = 64, heads: int = 4,
                 log_map: bool = True, map_channels: Tuple[int, int] = (8, 16),
                 seg_grid: int = 16):
        super().__init__()
        self.patch_dim = patch_dim
        self.heads = heads
        self.log_map = log_map
        self.seg_grid = seg_grid

        # pixel decoder: two stride-2 deconvs, 4x spatial upsample, channels kept
        self.deconv1_w = uniform_param(rng, (2, 2, patch_dim, patch_dim), patch_dim * 4)
        self.deconv1_b = uniform_param(rng, (patch_dim,), patch_dim * 4)
        self.deconv2_w = uniform_param(rng, (2, 2, patch_dim, patch_dim), patch_dim * 4)
        self.deconv2_b = uniform_param(rng, (patch_dim,), patch_dim * 4)

        self.proj_pixels = Linear(rng, patch_dim, shared_dim)
        self.proj_prompts = Linear(rng, text_dim, shared_dim)

        self.q_tok = Tensor(rng.uniform(-1.0, 1.0, size=(1, patch_dim)).astype(np.float32),
                            requires_grad=True)
        self.agg_norm = LayerNorm(patch_dim)
        self.agg_out = Linear(rng, patch_dim + 2 * heads, patch_dim)
        self.saliency_gain = Tensor(np.asarray([4.0], dtype=np.float32), requires_grad=True)
        self.novelty_gain = Tensor(np.asarray([2.0], dtype=np.float32), requires_grad=True)

        self.bbox_fc1 = Linear(rng, patch_dim, patch_dim)
        self.bbox_fc2 = Linear(rng, patch_dim, 4)

        c1, c2 = map_channels
        self.map_conv1_w = uniform_param(rng, (2, 2, 2, c1), 2 * 4)
        self.map_conv1_b = uniform_param(rng, (c1,), 2 * 4)
        self.map_conv2_w = uniform_param(rng, (2, 2, c1, c2), c1 * 4)
        self.map_conv2_b = uniform_param(rng, (c2,), c1 * 4)
        flat = (seg_grid // 4) * (seg_grid // 4) * c2
        self.map_proj = Linear(rng, flat, lm_dim)
        self.token_proj = Linear(rng, patch_dim, lm_dim)

    # -- upper branch ---------------------------------------------------------

    def pixel_decode(self, u_v_pat: Tensor) -> Tensor:
        """(hw, C) patch rows -> (4*sqrt(hw), 4*sqrt(hw), C) pixel features."""
        hw = u_v_pat.shape[0]
        grid = int(math.isqrt(hw))
        if grid * grid != hw:
            raise ConfigError(f"patch count {hw} is not a perfect square")
        x = reshape(u_v_pat, (grid, grid, self.patch_dim))
        x = gelu(conv_transpose2d(x, self.deconv1_w, self.deconv1_b, stride=2))
        return conv_transpose2d(x, self.deconv2_w, self.deconv2_b, stride=2)

    def similarity_scores(self, f_h: Tensor, f_p: Tensor) -> Tensor:
        """Cosine scores between projected pixel features and class features."""
        h, w, _ = f_h.shape
        ph = l2_normalize(self.proj_pixels(reshape(f_h, (h * w, self.patch_dim))))
        pp = l2_normalize(self.proj_prompts(f_p))
        return reshape(matmul(ph, transpose(pp)), (h, w, 2))

    def segmentation_map(self, scores: Tensor) -> Tensor:
        """Per-pixel (log-)softmax over the two class channels."""
        if self.log_map:
            return log_softmax(scores, axis=-1)
        return softmax(scores, axis=-1)

    # -- lower branch -----------------------------------------------------------

    def patch_saliency(self, scores: Tensor) -> Tensor:
        """Per-patch artifact evidence: block-mean of (unnatural - natural)."""
        h = scores.shape[0]
        grid = self.seg_grid // 4
        diff = narrow(scores, (slice(None), slice(None), slice(1, 2))) - narrow(
            scores, (slice(None), slice(None), slice(0, 1))
        )
        blocks = reshape(diff, (grid, h // grid, grid, h // grid))
        per_patch = blocks.mean(axis=3).mean(axis=1)
        return reshape(per_patch, (1, grid * grid))

    def _patch_coords(self, count: int, dtype) -> Tensor:
        grid = int(math.isqrt(count))
        ys, xs = np.mgrid[0:grid, 0:grid]
        cx = ((xs.ravel() + 0.5) / grid).astype(dtype)
        cy = ((ys.ravel() + 0.5) / grid).astype(dtype)
        return Tensor(np.stack([cx, cy], axis=1))

    def aggregate_artifact_token(self, u_v_pat: Tensor,
                                 saliency: Optional[Tensor] = None) -> Tensor:
        """Learnable-query attention over normalized patch rows.

        Values carry the patch center coordinates, and the logits can be
        biased by the upper branch's per-patch saliency: both keep the
        box-regression path trainable at this scale, where a bare content
        query starves during the attention bootstrap.
        """
        if u_v_pat.shape[0] == 0:
            raise InputError("cannot aggregate over an empty patch set")
        kv = self.agg_norm(u_v_pat)
        count = u_v_pat.shape[0]
        coords = self._patch_coords(count, kv.dtype)
        # Row novelty (distance from the per-sample mean row) flags edited
        # patches before any projector has trained, avoiding the flat-logit
        # phase where a purely learned bias gets no gradient.  Standardized
        # across the rows so the gain acts on z-scores, not raw magnitudes.
        centered = kv - kv.mean(axis=0, keepdims=True)
        novelty = reshape(mul(centered, centered).mean(axis=1), (1, count))
        if count > 1:
            nc = novelty - novelty.mean(axis=1, keepdims=True)
            scale = sqrt(mul(nc, nc).mean(axis=1, keepdims=True) + 1e-8)
            novelty = nc / scale
        bias = mul(novelty, self.novelty_gain)
        if saliency is not None:
            bias = bias + mul(saliency, self.saliency_gain)
        hd = self.patch_dim // self.heads
        pooled = []
        for h in range(self.heads):
            sl = (slice(None), slice(h * hd, (h + 1) * hd))
            head_vals = concat([narrow(kv, sl), coords], axis=1)
            pooled.append(attention(narrow(self.q_tok, sl), narrow(kv, sl), head_vals, mask=bias))
        return linear(concat(pooled, axis=1), self.agg_out.w, self.agg_out.b)

    def predict_bbox(self, u_agg: Tensor) -> Tensor:
        """Two-layer MLP -> sigmoid center/size -> clipped corner box (4,)."""
        raw = sigmoid(self.bbox_fc2(gelu(self.bbox_fc1(u_agg))))
        cx = narrow(raw, (slice(None), slice(0, 1)))
        cy = narrow(raw, (slice(None), slice(1, 2)))
        bw = narrow(raw, (slice(None), slice(2, 3)))
        bh = narrow(raw, (slice(None), slice(3, 4)))
        half_w = bw * 0.5
        half_h = bh * 0.5
        corners = concat([cx - half_w, cy - half_h, cx + half_w, cy + half_h], axis=1)
        return reshape(clip(corners, 0.0, 1.0), (4,))

    # -- projectors ---------------------------------------------------------------

    def artifact_embeddings(self, m_s: Tensor, u_agg: Tensor) -> Tuple[Tensor, Tensor]:
        # The localization branches are supervised by their grounding losses;
        # the language loss trains only the projectors, so both inputs are
        # detached here to keep the two objectives from fighting.
        x = gelu(conv2d(m_s.detach(), self.map_conv1_w, self.map_conv1_b, stride=2))
        x = gelu(conv2d(x, self.map_conv2_w, self.map_conv2_b, stride=2))
        map_emb = self.map_proj(reshape(x, (1, x.shape[0] * x.shape[1] * x.shape[2])))
        tok_emb = self.token_proj(u_agg.detach())
        return map_emb, tok_emb

    # -- convenience -----------------------------------------------------------------

    def run(self, u_v_pat: Tensor, class_feats: Tensor):
        """Full branch pass: (M_s, u_agg, bbox, map/token embeddings)."""
        f_h = self.pixel_decode(u_v_pat)
        scores = self.similarity_scores(f_h, class_feats)
        m_s = self.segmentation_map(scores)
        u_agg = self.aggregate_artifact_token(u_v_pat, saliency=self.patch_saliency(scores))
        bbox = self.predict_bbox(u_agg)
        map_emb, tok_emb = self.artifact_embeddings(m_s, u_agg)
        return m_s, u_agg, bbox, map_emb, tok_emb


def save_map_pgm(path, m_s: Tensor):
    """Dump the unnatural-channel probability of a map as an 8-bit pgm."""
    from .data import write_pgm

    prob = np.exp(m_s.data[..., 1]) if m_s.data.min() < 0 else m_s.data[..., 1]
    write_pgm(path, np.round(np.clip(prob, 0.0, 1.0) * 255.0))
