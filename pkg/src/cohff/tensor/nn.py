"""Parameters, modules and seeded initialization."""

from __future__ import annotations

import numpy as np

from .core import Tensor


class Parameter(Tensor):
    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, op="param")
        self.name = name
        self.momentum = None  # optimizer state, allocated on first step

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class Module:
    """Container that discovers Parameters and sub-Modules among its attributes."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Parameter):
                        yield f"{path}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
            elif isinstance(val, dict):
                for k in sorted(val):
                    item = val[k]
                    if isinstance(item, Parameter):
                        yield f"{path}.{k}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{k}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ValueError(f"duplicate parameter name {name!r}")
            seen.add(name)
            p.name = name

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
        for n, p in params.items():
            v = np.asarray(state[n], dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"parameter {n}: checkpoint shape {v.shape} != {p.shape}")
            p.data[...] = v


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int | None = None, fan_out: int | None = None):
    if fan_in is None:
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
    if fan_out is None:
        fan_out = shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, zero: bool = False, bias: bool = True):
        w = np.zeros((n_in, n_out)) if zero else xavier_uniform(rng, (n_in, n_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x):
        from .ops import linear
        return linear(x, self.weight, self.bias)
