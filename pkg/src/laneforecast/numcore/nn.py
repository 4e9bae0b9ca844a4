"""Parameters, a minimal module tree and the dense layers shared by the model."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .functional import layer_norm
from .tensor import Tensor, matmul, relu


class Parameter(Tensor):
    """A learnable leaf tensor; ``name`` is its dotted path inside a model."""

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        seen: set[int] = set()
        for name, p in self._walk(prefix):
            if id(p) in seen:
                continue
            seen.add(id(p))
            yield name, p

    def _walk(self, prefix: str):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item
            elif isinstance(value, dict):
                for k, item in value.items():
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{k}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{k}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={missing} unexpected={unexpected}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()


class Linear(Module):
    """``y = x W + b`` with ``W`` stored as ``n_in x n_out``."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(kaiming_uniform(rng, (n_in, n_out), n_in))
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, features: int):
        self.gain = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor, axis: int = -1) -> Tensor:
        return layer_norm(x, self.gain, self.bias, axis=axis)


class LinearNormReLU(Module):
    """Linear layer followed by layer norm and ReLU."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.linear = Linear(n_in, n_out, rng, bias=bias)
        self.norm = LayerNorm(n_out)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.norm(self.linear(x)))


class LinearRes(Module):
    """Two linear layers with norms and a shortcut, ReLU after the sum.

    The shortcut is the identity when widths match and a normalized
    projection otherwise.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.first = LinearNormReLU(n_in, n_out, rng, bias=False)
        self.second = Linear(n_out, n_out, rng, bias=False)
        self.norm = LayerNorm(n_out)
        if n_in != n_out:
            self.proj = Linear(n_in, n_out, rng, bias=False)
            self.proj_norm = LayerNorm(n_out)
        else:
            self.proj = None

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm(self.second(self.first(x)))
        shortcut = x if self.proj is None else self.proj_norm(self.proj(x))
        return relu(h + shortcut)
