"""Small building blocks shared by the reward model and the SAC-lite networks."""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor


def init_linear(rng: np.random.Generator, n_in: int, n_out: int, scale: float | None = None) -> np.ndarray:
    std = scale if scale is not None else 1.0 / np.sqrt(n_in)
    return rng.normal(0.0, std, size=(n_in, n_out))


class Parameterized:
    """Owns named parameter tensors in declaration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add_param(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def adopt(self, prefix: str, child: Parameterized) -> None:
        for name, t in child.named_parameters():
            self._params[f"{prefix}.{name}"] = t

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def n_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self._params.values()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_parameters():
            raise ValueError(f"expected {self.n_parameters()} values, got {vec.size}")
        i = 0
        for p in self._params.values():
            p.data = vec[i:i + p.size].reshape(p.shape).copy()
            i += p.size

    def copy_from(self, other: Parameterized, tau: float = 1.0) -> None:
        """Polyak blend ``self <- (1 - tau) * self + tau * other``."""
        for (_, mine), (_, theirs) in zip(self.named_parameters(), other.named_parameters()):
            mine.data = (1.0 - tau) * mine.data + tau * theirs.data


class Linear(Parameterized):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, bias: bool = True,
                 scale: float | None = None):
        super().__init__()
        self.weight = self.add_param("weight", init_linear(rng, n_in, n_out, scale))
        self.bias = self.add_param("bias", np.zeros(n_out)) if bias else None

    def __call__(self, x) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class MLP(Parameterized):
    """ReLU perceptron; no activation on the output layer."""

    def __init__(self, rng: np.random.Generator, sizes: list[int], out_scale: float | None = None):
        super().__init__()
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            layer = Linear(rng, a, b, scale=out_scale if last else None)
            self.adopt(f"l{i}", layer)
            self.layers.append(layer)

    def __call__(self, x) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.relu(x)
        return x
