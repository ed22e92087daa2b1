"""Minimal parameter-container base class and initializers."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, get_default_dtype


def uniform_init(rng: np.random.Generator, shape, scale: float) -> Tensor:
    data = rng.uniform(-scale, scale, size=shape).astype(get_default_dtype())
    return Tensor(data, requires_grad=True)


def zeros_init(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_default_dtype()),
                  requires_grad=True)


class Module:
    """Anything holding parameters. Children are discovered by attribute walk;
    lists of Modules are supported (stacked layers)."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{key}{i}"] = item
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 bias: bool = True):
        scale = 1.0 / np.sqrt(d_in)
        self.W = uniform_init(rng, (d_in, d_out), scale)
        self.b = zeros_init(d_out) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        # flatten leading dims so BLAS sees one large dense gemm instead of a
        # batched loop (and the weight grad skips a per-batch intermediate)
        lead = x.shape[:-1]
        if len(lead) > 1:
            x = T.reshape(x, (-1, x.shape[-1]))
        y = x @ self.W
        if self.b is not None:
            y = y + self.b
        if len(lead) > 1:
            y = T.reshape(y, lead + (y.shape[-1],))
        return y
