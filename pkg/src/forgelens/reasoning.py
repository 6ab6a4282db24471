"""Dual-branch cross-attention between image and text features.

Each modality serves once as queries against the other as keys/values;
the two attended [CLS] rows are concatenated and projected into the
language model's embedding space as the semantic-correlation signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, attention, concat, multi_head_attention
from .autodiff.tensor import narrow
from .errors import InputError
from .nn import LayerNorm, Linear, Module


@dataclass
class CrossModalOutput:
    u_v_cls: Tensor  # (1, dim)
    u_v_pat: Tensor  # (num_patches, dim)
    u_t_cls: Tensor  # (1, dim)
    u_t_pat: Tensor  # (n_tokens, dim)


class BranchAdapters(Module):
    """Query and key/value adapters (linear + layer norm) for one branch."""

    def __init__(self, rng, q_in: int, kv_in: int, dim: int):
        super().__init__()
        self.q_lin = Linear(rng, q_in, dim)
        self.q_ln = LayerNorm(dim)
        self.kv_lin = Linear(rng, kv_in, dim)
        self.kv_ln = LayerNorm(dim)

    def query(self, x: Tensor) -> Tensor:
        return self.q_ln(self.q_lin(x))

    def key_value(self, x: Tensor) -> Tensor:
        return self.kv_ln(self.kv_lin(x))


class CrossModalReasoner(Module):
    """Image-queries-text and text-queries-image attention; no shared weights.

    ``residual`` adds the adapted query back onto the attended output so
    patch rows keep their own content (needed when the artifact branch
    must localize from these rows); the plain form is the default.
    """

    def __init__(self, rng: np.random.Generator, image_dim: int, text_dim: int,
                 dim: int = 64, lm_dim: int = 64, heads: int = 1, residual: bool = False):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.residual = residual
        self.v_branch = BranchAdapters(rng, image_dim, text_dim, dim)
        self.t_branch = BranchAdapters(rng, text_dim, image_dim, dim)
        if heads > 1:
            self.v_out = Linear(rng, dim, dim)
            self.t_out = Linear(rng, dim, dim)
        self.projector = Linear(rng, 2 * dim, lm_dim)

    def _attend(self, q: Tensor, kv: Tensor, out_proj) -> Tensor:
        if self.heads == 1:
            return attention(q, kv, kv)
        return multi_head_attention(q, kv, kv, self.heads, out_proj.w, out_proj.b)

    def __call__(self, f_v: Tensor, f_t: Tensor) -> CrossModalOutput:
        """``f_v``: fused [CLS]+patch rows; ``f_t``: [CLS]+token rows."""
        if f_t.shape[0] < 2:
            raise InputError("dual cross-attention needs at least one text token besides [CLS]")
        qv = self.v_branch.query(f_v)
        kv_t = self.v_branch.key_value(f_t)
        u_v = self._attend(qv, kv_t, getattr(self, "v_out", None))
        qt = self.t_branch.query(f_t)
        kv_v = self.t_branch.key_value(f_v)
        u_t = self._attend(qt, kv_v, getattr(self, "t_out", None))
        if self.residual:
            u_v = u_v + qv
            u_t = u_t + qt
        return CrossModalOutput(
            u_v_cls=narrow(u_v, (slice(0, 1), slice(None))),
            u_v_pat=narrow(u_v, (slice(1, None), slice(None))),
            u_t_cls=narrow(u_t, (slice(0, 1), slice(None))),
            u_t_pat=narrow(u_t, (slice(1, None), slice(None))),
        )

    def semantic_project(self, u_v_cls: Tensor, u_t_cls: Tensor) -> Tensor:
        """Concatenated [CLS] pair -> one vector in LM embedding space."""
        return self.projector(concat([u_v_cls, u_t_cls], axis=1))
