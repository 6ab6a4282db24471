"""Parameter containers and the small layer zoo used by every model part.

Parameters are initialized uniformly in +-1/sqrt(fan_in) from an explicit
numpy Generator, so a fixed seed plus a fixed construction order gives
bit-identical models.
"""

from __future__ import annotations

from typing import Iterator, Optional, Tuple

import numpy as np

from .autodiff import Tensor, gelu, layer_norm, linear, multi_head_attention
from .autodiff.tensor import DEFAULT_DTYPE


def uniform_param(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> Tensor:
    bound = 1.0 / np.sqrt(max(1, fan_in))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


class Module:
    """Minimal parameter registry with ordered, dotted names."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._modules: dict[str, "Module"] = {}

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self.__dict__.setdefault("_params", {})[name] = value
        elif isinstance(value, Module):
            self.__dict__.setdefault("_modules", {})[name] = value
        object.__setattr__(self, name, value)

    def register_module(self, name: str, module: "Module"):
        self._modules[name] = module
        object.__setattr__(self, name, module)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, m in enumerate(self._items):
            self.register_module(str(i), m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    def __init__(self, rng, in_dim: int, out_dim: int, bias: bool = True):
        super().__init__()
        self.w = uniform_param(rng, (in_dim, out_dim), in_dim)
        self.b = uniform_param(rng, (out_dim,), in_dim) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gain = Tensor(np.ones(dim, dtype=DEFAULT_DTYPE), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=DEFAULT_DTYPE), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, rng, vocab: int, dim: int):
        super().__init__()
        self.table = uniform_param(rng, (vocab, dim), dim)

    def __call__(self, ids) -> Tensor:
        from .autodiff import embedding

        return embedding(self.table, ids)


class SelfAttention(Module):
    """Standard projected multi-head self-attention."""

    def __init__(self, rng, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)

    def __call__(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        return multi_head_attention(
            self.wq(x), self.wk(x), self.wv(x), self.heads, self.out.w, self.out.b, mask=mask
        )


class TransformerBlock(Module):
    """Pre-norm block: attention and a GELU MLP, both with residuals."""

    def __init__(self, rng, dim: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(rng, dim, heads)
        self.ln2 = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, dim * mlp_ratio)
        self.fc2 = Linear(rng, dim * mlp_ratio, dim)

    def __call__(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        x = x + self.attn(self.ln1(x), mask=mask)
        return x + self.fc2(gelu(self.fc1(self.ln2(x))))


def causal_mask(n: int, dtype=DEFAULT_DTYPE) -> Tensor:
    """Additive mask that blanks out future positions (large negative)."""
    m = np.triu(np.full((n, n), -1e30, dtype=dtype), k=1)
    return Tensor(m)
