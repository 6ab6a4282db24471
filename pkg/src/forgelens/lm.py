"""Frozen toy causal language model, prompt assembly, and answer scoring.

The prompt layout is fixed:

    [prefix][image features][mid][knowledge embeddings][soft prompts]
    [question (+ options)][assistant marker]

with the knowledge block ordered semantic, map, token.  The model reads
the embedding sequence directly; logits at the final position score the
next token, which is the answer symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, concat
from .autodiff.ops import embedding, take_per_row, log_softmax
from .autodiff.tensor import narrow, reduce_mean
from .data import Vocab
from .errors import AssemblyError, ConfigError, InputError
from .nn import LayerNorm, Linear, Module, ModuleList, TransformerBlock, causal_mask, uniform_param


@dataclass(frozen=True)
class LMConfig:
    vocab: int
    dim: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 96


class ToyLM(Module):
    def __init__(self, rng: np.random.Generator, cfg: LMConfig):
        super().__init__()
        self.cfg = cfg
        self.token_embed = uniform_param(rng, (cfg.vocab, cfg.dim), cfg.dim)
        self.positions = uniform_param(rng, (cfg.max_len, cfg.dim), cfg.dim)
        self.blocks = ModuleList(TransformerBlock(rng, cfg.dim, cfg.heads) for _ in range(cfg.layers))
        self.ln_f = LayerNorm(cfg.dim)
        self.head = Linear(rng, cfg.dim, cfg.vocab)

    def embed_tokens(self, ids: Sequence[int]) -> Tensor:
        ids = np.asarray(list(ids), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab):
            raise InputError(f"token id outside vocabulary of size {self.cfg.vocab}")
        return embedding(self.token_embed, ids)

    def forward_embeddings(self, seq: Tensor) -> Tensor:
        """Causal transformer over an embedding sequence; (n, vocab) logits."""
        n = seq.shape[0]
        if n > self.cfg.max_len:
            raise InputError(f"sequence length {n} exceeds max {self.cfg.max_len}")
        x = seq + narrow(self.positions, (slice(0, n), slice(None)))
        mask = causal_mask(n)
        for block in self.blocks:
            x = block(x, mask=mask)
        return self.head(self.ln_f(x))


def pretrain_lm(lm: ToyLM, streams: Sequence[Sequence[int]], epochs: int = 2, lr: float = 1e-3):
    """Brief next-token pretraining on token streams, then freeze.

    Streams are captions plus instruction-format lines whose answer
    symbols are balanced and uncorrelated with any input, so the frozen
    model knows the response format without knowing any answer.
    """
    from .optim import AdamW

    opt = AdamW(dict(lm.named_parameters()), lr=lr)
    for _ in range(epochs):
        for stream in streams:
            if len(stream) < 2:
                continue
            seq = lm.embed_tokens(stream[:-1])
            logp = log_softmax(lm.forward_embeddings(seq), axis=-1)
            loss = -reduce_mean(take_per_row(logp, np.asarray(stream[1:], dtype=np.int64)))
            opt.zero_grad()
            loss.backward()
            opt.step()
    lm.freeze()


def format_streams(assembler: "PromptAssembler", captions: Sequence[Sequence[int]],
                   bos_id: int) -> list:
    """Instruction-format pretraining lines built around real captions.

    Each line is [bos] + filler captions + template + question + assistant
    marker + an alternating answer symbol, so answer positions land over
    the same range the assembled prompts use.
    """
    streams = []
    symbols = [assembler.vocab.index[s] for s in assembler.scoring_options.symbols]
    n = len(captions)
    for i, caption in enumerate(captions):
        fillers: List[int] = []
        for j in range(i % 4):
            fillers.extend(captions[(i + j + 1) % n])
        streams.append(
            [bos_id] + fillers + assembler.prefix_ids + assembler.mid_ids
            + assembler.question_ids + assembler.assist_ids + [symbols[i % 2]]
        )
    return streams


# -- answers -------------------------------------------------------------------


@dataclass(frozen=True)
class AnswerOptions:
    """Option symbols in presentation order with their label mapping."""

    symbols: Tuple[str, str] = ("A", "B")
    labels: Tuple[int, int] = (0, 1)  # real, fake

    def token_ids(self, vocab: Vocab) -> Tuple[int, int]:
        if self.symbols[0] == self.symbols[1]:
            raise ConfigError("answer option symbols must be distinct")
        for sym in self.symbols:
            if sym not in vocab.index:
                raise ConfigError(f"option symbol {sym!r} is not a vocabulary token")
        return vocab.index[self.symbols[0]], vocab.index[self.symbols[1]]

    def symbol_for_label(self, label: int) -> str:
        return self.symbols[self.labels.index(label)]


def predict_answer(logits: np.ndarray, options: AnswerOptions, vocab: Vocab) -> Tuple[int, float]:
    """Restricted softmax over the option symbols.

    Returns (label, fake_probability); exact ties go to the first option.
    """
    ids = options.token_ids(vocab)
    pair = np.asarray([float(logits[ids[0]]), float(logits[ids[1]])])
    shifted = pair - pair.max()
    probs = np.exp(shifted)
    probs /= probs.sum()
    fake_slot = options.labels.index(1)
    score_fake = float(probs[fake_slot])
    best = int(np.argmax(pair))  # argmax returns the first index on ties
    return options.labels[best], score_fake


# -- prompt assembly -------------------------------------------------------------


@dataclass
class PromptAssembly:
    embeds: Tensor  # (n, dim)
    slots: List[Tuple[str, int, int]]  # (name, start, length), in order
    answer_position: int  # logits here score the answer token
    target_token: Optional[int]

    def slot(self, name: str) -> Tuple[int, int]:
        for slot_name, start, length in self.slots:
            if slot_name == name:
                return start, length
        raise KeyError(name)


QUESTION = ("does", "the", "image", "match", "the", "text", "?")
OPTION_TAIL = ("options", "(", "{a}", ")", "real", "news", "(", "{b}", ")", "fake", "news")


class PromptAssembler:
    """Builds the fixed instruction layout around the injected embeddings."""

    def __init__(self, vocab: Vocab, lm: ToyLM, options: AnswerOptions = AnswerOptions(),
                 answer_heuristics: bool = True):
        self.vocab = vocab
        self.lm = lm
        self.options = options
        self.answer_heuristics = answer_heuristics
        self.prefix_ids = vocab.encode(["###Human:", "<Img>"])
        self.mid_ids = vocab.encode(["</Img>"])
        self.assist_ids = vocab.encode(["###Assistant:"])
        question = list(QUESTION)
        if answer_heuristics:
            tail = [t.format(a=options.symbols[0], b=options.symbols[1]) for t in OPTION_TAIL]
            question.extend(tail)
        self.question_ids = vocab.encode(question)
        if answer_heuristics:
            options.token_ids(vocab)  # validate symbols early
            self.scoring_options = options
        else:
            # Without presented candidates, the model is scored on the
            # label words themselves.
            self.scoring_options = AnswerOptions(symbols=("real", "fake"), labels=(0, 1))
            self.scoring_options.token_ids(vocab)

    def answer_token(self, label: int) -> int:
        sym = self.scoring_options.symbol_for_label(label)
        return self.vocab.index[sym]

    def assemble(
        self,
        image_feats: Tensor,
        knowledge: Sequence[Tuple[str, Optional[Tensor]]],
        soft_prompts: Optional[Tensor],
        target_label: Optional[int] = None,
    ) -> PromptAssembly:
        """Layout the full embedding sequence.

        ``knowledge`` lists (name, rows) pairs in injection order; a None
        entry means the component was promised but not produced.
        """
        if image_feats is None:
            raise AssemblyError("image features are required")
        parts: List[Tuple[str, Tensor]] = [
            ("prefix", self.lm.embed_tokens(self.prefix_ids)),
            ("image", image_feats),
            ("mid", self.lm.embed_tokens(self.mid_ids)),
        ]
        for name, rows in knowledge:
            if rows is None:
                raise AssemblyError(f"knowledge component {name!r} is missing")
            parts.append((name, rows))
        if soft_prompts is not None:
            parts.append(("soft", soft_prompts))
        parts.append(("question", self.lm.embed_tokens(self.question_ids)))
        parts.append(("assistant", self.lm.embed_tokens(self.assist_ids)))

        slots = []
        cursor = 0
        for name, rows in parts:
            slots.append((name, cursor, rows.shape[0]))
            cursor += rows.shape[0]
        embeds = concat([rows for _, rows in parts], axis=0)
        target = None if target_label is None else self.answer_token(target_label)
        return PromptAssembly(embeds=embeds, slots=slots,
                              answer_position=cursor - 1, target_token=target)
