"""Small transformer image/text encoders standing in for frozen pretrained ones.

The image encoder exposes per-layer [CLS] and patch features plus their
sum over a configurable set of tapped layers; the text encoder prepends a
[CLS] token to the caption.  Both are warm-started self-supervised (patch
mean reconstruction / next-token with a causal mask) and then frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat, reduce_mean
from .autodiff.ops import log_softmax, take_per_row
from .autodiff.tensor import DEFAULT_DTYPE, mul, narrow
from .errors import ConfigError, DimensionError, InputError
from .nn import Linear, Module, ModuleList, TransformerBlock, causal_mask, uniform_param


@dataclass(frozen=True)
class ImageEncoderConfig:
    image_size: int = 32
    patch_size: int = 8
    layers: int = 4
    dim: int = 64
    heads: int = 4
    tap_layers: Tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        for tap in self.tap_layers:
            if not 1 <= tap <= self.layers:
                raise ConfigError(f"tap layer {tap} outside [1, {self.layers}]")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab: int
    max_len: int = 24
    layers: int = 2
    dim: int = 64
    heads: int = 4


# Paper-scale preset retained for documentation; not used by the desk runs.
PAPER_IMAGE_PRESET = ImageEncoderConfig(
    image_size=224, patch_size=14, layers=32, dim=1280, heads=16, tap_layers=(8, 16, 24, 32)
)


@dataclass
class EncodedImage:
    cls_per_layer: List[Tensor]
    patch_per_layer: List[Tensor]
    fused_cls: Tensor  # (1, dim)
    fused_patches: Tensor  # (num_patches, dim)


@dataclass
class EncodedText:
    cls: Tensor  # (1, dim)
    tokens: Tensor  # (n, dim); empty captions leave only the cls row

    @property
    def sequence(self) -> Tensor:
        if self.tokens.shape[0] == 0:
            return self.cls
        return concat([self.cls, self.tokens], axis=0)


class ImageEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: ImageEncoderConfig):
        super().__init__()
        self.cfg = cfg
        patch_dim = cfg.patch_size * cfg.patch_size * 3
        self.patch_embed = Linear(rng, patch_dim, cfg.dim)
        self.cls_token = uniform_param(rng, (1, cfg.dim), cfg.dim)
        self.positions = uniform_param(rng, (cfg.num_patches + 1, cfg.dim), cfg.dim)
        self.blocks = ModuleList(TransformerBlock(rng, cfg.dim, cfg.heads) for _ in range(cfg.layers))

    def patchify(self, pixels: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if pixels.shape != (cfg.image_size, cfg.image_size, 3):
            raise DimensionError(
                f"expected image of shape {(cfg.image_size, cfg.image_size, 3)}, got {pixels.shape}"
            )
        p = cfg.patch_size
        g = cfg.grid
        patches = pixels.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * 3)
        return patches.astype(DEFAULT_DTYPE)

    def __call__(self, pixels: np.ndarray) -> EncodedImage:
        cfg = self.cfg
        patches = Tensor(self.patchify(pixels))
        x = concat([self.cls_token, self.patch_embed(patches)], axis=0) + self.positions
        cls_per_layer, patch_per_layer = [], []
        for block in self.blocks:
            x = block(x)
            cls_per_layer.append(narrow(x, (slice(0, 1), slice(None))))
            patch_per_layer.append(narrow(x, (slice(1, None), slice(None))))
        fused_cls = cls_per_layer[cfg.tap_layers[0] - 1]
        fused_patches = patch_per_layer[cfg.tap_layers[0] - 1]
        for tap in cfg.tap_layers[1:]:
            fused_cls = fused_cls + cls_per_layer[tap - 1]
            fused_patches = fused_patches + patch_per_layer[tap - 1]
        return EncodedImage(cls_per_layer, patch_per_layer, fused_cls, fused_patches)


class TextEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: TextEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embed = uniform_param(rng, (cfg.vocab, cfg.dim), cfg.dim)
        self.cls_token = uniform_param(rng, (1, cfg.dim), cfg.dim)
        self.positions = uniform_param(rng, (cfg.max_len + 1, cfg.dim), cfg.dim)
        self.blocks = ModuleList(TransformerBlock(rng, cfg.dim, cfg.heads) for _ in range(cfg.layers))

    def __call__(self, token_ids: Sequence[int], causal: bool = False) -> EncodedText:
        from .autodiff import embedding

        ids = np.asarray(list(token_ids), dtype=np.int64)
        if ids.size > self.cfg.max_len:
            raise InputError(f"caption length {ids.size} exceeds max {self.cfg.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab):
            raise InputError(f"token id outside vocabulary of size {self.cfg.vocab}")
        if ids.size:
            tok = embedding(self.token_embed, ids)
            x = concat([self.cls_token, tok], axis=0)
        else:
            x = self.cls_token
        x = x + narrow(self.positions, (slice(0, ids.size + 1), slice(None)))
        mask = causal_mask(ids.size + 1) if causal else None
        for block in self.blocks:
            x = block(x, mask=mask)
        return EncodedText(
            cls=narrow(x, (slice(0, 1), slice(None))),
            tokens=narrow(x, (slice(1, None), slice(None))),
        )


def encode_class_prompts(encoder: TextEncoder, prompt_sets: Sequence[Sequence[Sequence[int]]]) -> Tensor:
    """Mean [CLS] feature per prompt ensemble; rows follow prompt_sets order."""
    rows = []
    for prompts in prompt_sets:
        if not prompts:
            raise ConfigError("class prompt ensemble must not be empty")
        feats = [encoder(ids).cls for ids in prompts]
        total = feats[0]
        for f in feats[1:]:
            total = total + f
        rows.append(total / float(len(feats)))
    return concat(rows, axis=0)


# -- self-supervised warm starts ------------------------------------------------


def warm_start_image_encoder(encoder: ImageEncoder, images: Sequence[np.ndarray],
                             rng: np.random.Generator, epochs: int = 1, lr: float = 1e-3):
    """Train briefly to regress each patch's mean RGB from its token, then freeze."""
    from .optim import AdamW

    head = Linear(rng, encoder.cfg.dim, 3)
    params = dict(encoder.named_parameters())
    params.update({f"head.{k}": v for k, v in head.named_parameters()})
    opt = AdamW(params, lr=lr)
    p = encoder.cfg.patch_size
    for _ in range(epochs):
        for img in images:
            target = Tensor(
                img.reshape(encoder.cfg.grid, p, encoder.cfg.grid, p, 3)
                .mean(axis=(1, 3))
                .reshape(encoder.cfg.num_patches, 3)
                .astype(DEFAULT_DTYPE)
            )
            enc = encoder(img)
            pred = head(enc.fused_patches)
            diff = pred - target
            loss = reduce_mean(mul(diff, diff))
            opt.zero_grad()
            loss.backward()
            opt.step()
    encoder.freeze()


def warm_start_text_encoder(encoder: TextEncoder, captions: Sequence[Sequence[int]],
                            rng: np.random.Generator, epochs: int = 1, lr: float = 1e-3):
    """Brief causal next-token warm start on synthetic captions, then freeze."""
    from .optim import AdamW

    head = Linear(rng, encoder.cfg.dim, encoder.cfg.vocab)
    params = dict(encoder.named_parameters())
    params.update({f"head.{k}": v for k, v in head.named_parameters()})
    opt = AdamW(params, lr=lr)
    for _ in range(epochs):
        for caption in captions:
            if len(caption) < 2:
                continue
            enc = encoder(caption, causal=True)
            logp = log_softmax(head(narrow(enc.tokens, (slice(0, len(caption) - 1), slice(None)))), axis=-1)
            loss = -reduce_mean(take_per_row(logp, np.asarray(caption[1:], dtype=np.int64)))
            opt.zero_grad()
            loss.backward()
            opt.step()
    encoder.freeze()
