"""Full detector: frozen encoder/LM stack plus the trainable knowledge path.

Frozen after their warm starts: both encoders, the vision bridge that
feeds image tokens to the LM, and the LM itself.  Trainable: the
cross-modal reasoner (adapters, attention, semantic projector), the
artifact localizer (decoder, similarity projectors, aggregator, bbox
head, map/token projectors), and the soft prompt vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, concat
from .config import TrainConfig
from .data import VOCAB, Vocab
from .encoders import (
    EncodedImage,
    EncodedText,
    ImageEncoder,
    ImageEncoderConfig,
    TextEncoder,
    TextEncoderConfig,
    encode_class_prompts,
)
from .errors import ConfigError
from .lm import AnswerOptions, LMConfig, PromptAssembler, PromptAssembly, ToyLM
from .localization import ArtifactLocalizer
from .nn import Linear, Module, uniform_param
from .reasoning import CrossModalReasoner

NATURAL_PROMPTS = (
    ("a", "photo", "of", "a", "pristine", "scene"),
    ("a", "photo", "of", "the", "flawless", "scene"),
)
UNNATURAL_PROMPTS = (
    ("a", "photo", "of", "a", "tampered", "scene"),
    ("a", "photo", "of", "the", "corrupted", "scene"),
)


@dataclass
class ForwardOutput:
    answer_logits: Tensor  # (vocab,) logits at the answer position
    assembly: PromptAssembly
    m_s: Optional[Tensor] = None  # (H, W, 2) segmentation map
    bbox: Optional[Tensor] = None  # (4,) predicted corner box
    m_s_log: Optional[Tensor] = None  # always log-probabilities (for losses)


class ForgeryDetector(Module):
    def __init__(self, cfg: TrainConfig, rng: np.random.Generator, vocab: Vocab = VOCAB):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        m = cfg.model

        self.image_encoder = ImageEncoder(rng, ImageEncoderConfig(
            image_size=m.image_size, patch_size=m.patch_size, layers=m.image_layers,
            dim=m.dim, heads=m.image_heads,
            tap_layers=tuple(range(1, m.image_layers + 1)),
        ))
        self.text_encoder = TextEncoder(rng, TextEncoderConfig(
            vocab=len(vocab), max_len=m.text_max_len, layers=m.text_layers,
            dim=m.dim, heads=m.text_heads,
        ))
        self.vision_bridge = Linear(rng, m.dim, m.dim)
        self.lm = ToyLM(rng, LMConfig(
            vocab=len(vocab), dim=m.dim, layers=m.lm_layers,
            heads=m.lm_heads, max_len=m.lm_max_len,
        ))
        self.assembler = PromptAssembler(
            vocab, self.lm, AnswerOptions(), answer_heuristics=cfg.modules.answer_heuristics
        )

        if cfg.modules.cross_modal:
            self.reasoner = CrossModalReasoner(
                rng, image_dim=m.dim, text_dim=m.dim, dim=m.dim, lm_dim=m.dim,
                heads=m.cross_modal_heads, residual=m.cross_modal_residual,
            )
        if cfg.modules.artifact:
            seg_grid = 4 * (m.image_size // m.patch_size)
            self.localizer = ArtifactLocalizer(
                rng, patch_dim=m.dim, text_dim=m.dim, shared_dim=m.dim, lm_dim=m.dim,
                heads=m.agg_heads, log_map=m.log_map, seg_grid=seg_grid,
            )
        if cfg.modules.soft_prompt and m.soft_prompts > 0:
            self.soft_prompts = uniform_param(rng, (m.soft_prompts, m.dim), m.dim)

        self._class_feats: Optional[Tensor] = None
        self.class_prompt_ids = (
            [vocab.encode(p) for p in NATURAL_PROMPTS],
            [vocab.encode(p) for p in UNNATURAL_PROMPTS],
        )

    # -- frozen-stack management -------------------------------------------------

    def frozen_stack(self) -> List[Module]:
        return [self.image_encoder, self.text_encoder, self.vision_bridge, self.lm]

    def class_features(self) -> Tensor:
        """Encoded class-prompt features; cached once the encoder is frozen."""
        feats_trainable = any(p.requires_grad for p in self.text_encoder.parameters())
        if self._class_feats is None or feats_trainable:
            feats = encode_class_prompts(self.text_encoder, self.class_prompt_ids)
            if feats_trainable:
                return feats
            self._class_feats = feats
        return self._class_feats

    def invalidate_caches(self):
        self._class_feats = None

    def trainable_parameters(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        if self.cfg.modules.cross_modal:
            out.update({f"reasoner.{n}": p for n, p in self.reasoner.named_parameters()})
        if self.cfg.modules.artifact:
            out.update({f"localizer.{n}": p for n, p in self.localizer.named_parameters()})
        if getattr(self, "soft_prompts", None) is not None:
            out["soft_prompts"] = self.soft_prompts
        return out

    def frozen_parameters(self) -> Dict[str, Tensor]:
        trainable = set(self.trainable_parameters())
        return {n: p for n, p in self.named_parameters() if n not in trainable}

    # -- forward -------------------------------------------------------------

    def forward(self, image: np.ndarray, caption: List[int],
                target_label: Optional[int] = None) -> ForwardOutput:
        enc_img: EncodedImage = self.image_encoder(image)
        enc_txt: EncodedText = self.text_encoder(caption)

        image_feats = self.vision_bridge(enc_img.fused_patches)
        knowledge: List[Tuple[str, Optional[Tensor]]] = []
        m_s = bbox = m_s_log = None

        patch_stream = enc_img.fused_patches
        if self.cfg.modules.cross_modal:
            f_v = concat([enc_img.fused_cls, enc_img.fused_patches], axis=0)
            cm = self.reasoner(f_v, enc_txt.sequence)
            semantic = self.reasoner.semantic_project(cm.u_v_cls, cm.u_t_cls)
            knowledge.append(("semantic", semantic))
            patch_stream = cm.u_v_pat

        if self.cfg.modules.artifact:
            m_s, _, bbox, map_emb, tok_emb = self.localizer.run(patch_stream, self.class_features())
            knowledge.append(("map", map_emb))
            knowledge.append(("token", tok_emb))
            if self.cfg.model.log_map:
                m_s_log = m_s
            else:
                from .autodiff import clip, log

                m_s_log = log(clip(m_s, 1e-12, 1.0))

        soft = getattr(self, "soft_prompts", None)
        assembly = self.assembler.assemble(image_feats, knowledge, soft, target_label)
        logits = self.lm.forward_embeddings(assembly.embeds)
        from .autodiff.tensor import narrow, reshape

        row = reshape(
            narrow(logits, (slice(assembly.answer_position, assembly.answer_position + 1), slice(None))),
            (logits.shape[1],),
        )
        return ForwardOutput(answer_logits=row, assembly=assembly, m_s=m_s, bbox=bbox, m_s_log=m_s_log)

    __call__ = forward


def build_detector(cfg: TrainConfig, seed_stream: int = 0xD) -> ForgeryDetector:
    """Construct a detector with parameters drawn from the config seed."""
    rng = np.random.default_rng([cfg.seed, seed_stream])
    return ForgeryDetector(cfg, rng)
