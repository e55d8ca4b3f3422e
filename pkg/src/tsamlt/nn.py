"""Trainable layers built on the tensor primitives.

Modules are plain objects holding parameter Tensors (requires_grad=True)
and non-trainable buffers (plain arrays, e.g. batch-norm running stats).
``named_parameters``/``named_buffers`` walk attributes in insertion order,
so parameter enumeration — and therefore checkpoints and seeded
initialisation — is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "Module",
    "Linear",
    "LayerNorm",
    "BatchNorm1d",
    "Conv1dSame",
    "ParamStore",
]


class Module:
    """Minimal parameter container with deterministic traversal."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item

    def named_buffers(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, np.ndarray):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_buffers(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{path}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    """Affine map of the last axis: rows @ W + b."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        zero_init: bool = False,
        bias_init=None,
        bias: bool = True,
    ):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, out_dim))
        self.weight = Tensor(w, requires_grad=True)
        self.bias = None
        if bias:
            b = np.zeros(out_dim) if bias_init is None else np.asarray(bias_init, float)
            self.bias = Tensor(b, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 2:
            out = T.matmul(x, self.weight)
        else:
            lead = x.shape[:-1]
            out = T.matmul(x.reshape(-1, x.shape[-1]), self.weight)
            out = out.reshape(lead + (self.weight.shape[1],))
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out


class LayerNorm(Module):
    """Row normalisation with learnable gain (init 1) and shift (init 0)."""

    def __init__(self, dim: int, eps: float = 1e-5):
        if dim < 2:
            raise ValueError("LayerNorm needs dim >= 2")
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.shift = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.mul(T.row_normalize(x, self.eps), self.gain), self.shift)


class BatchNorm1d(Module):
    """1-D batch norm over the batch axis with running eval statistics."""

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.shift = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            norm, mean, var = T.batch_norm_train(x, self.eps)
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mean
            self.running_var = m * self.running_var + (1 - m) * var
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            shift = Tensor(-self.running_mean * inv)
            norm = T.add(T.mul(x, Tensor(inv)), shift)
        return T.add(T.mul(norm, self.gain), self.shift)


class Conv1dSame(Module):
    """Temporal convolution over (time, channels) rows, zero-padded so the
    time extent is preserved.  Accepts one sequence (M, C) or a stacked
    batch (V, M, C).  Composed from pad/slice/matmul, so the tape needs no
    dedicated convolution adjoint."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, kernel: int = 3):
        if kernel % 2 != 1:
            raise ValueError("kernel must be odd for same-padding")
        self.kernel = kernel
        std = 1.0 / np.sqrt(in_ch * kernel)
        self.taps = [
            Tensor(rng.normal(0.0, std, size=(in_ch, out_ch)), requires_grad=True)
            for _ in range(kernel)
        ]
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        batched = x.ndim == 3
        m, in_ch = x.shape[-2], x.shape[-1]
        half = self.kernel // 2
        if batched:
            pad = Tensor(np.zeros((x.shape[0], half, in_ch)))
            padded = T.concat([pad, x, pad], axis=1)
            windows = [padded[:, k : k + m, :] for k in range(self.kernel)]
        else:
            pad = Tensor(np.zeros((half, in_ch)))
            padded = T.concat([pad, x, pad], axis=0)
            windows = [padded[k : k + m] for k in range(self.kernel)]
        out = None
        for win, tap in zip(windows, self.taps):
            if batched:
                term = T.matmul(win.reshape(-1, in_ch), tap)
                term = term.reshape(x.shape[0], m, tap.shape[1])
            else:
                term = T.matmul(win, tap)
            out = term if out is None else T.add(out, term)
        return T.add(out, self.bias)


class ParamStore:
    """All trainable parameters of a model, by stable name.

    Wraps the name -> Tensor mapping a model's modules expose; each Tensor
    carries its own gradient slot.  Snapshots are plain array dicts that
    evaluation workers can read concurrently.
    """

    def __init__(self, named: dict[str, Tensor]):
        self._params = dict(named)

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            missing = set(self._params) ^ set(values)
            raise KeyError(f"parameter name mismatch: {sorted(missing)}")
        for k, v in values.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != self._params[k].shape:
                raise ValueError(f"shape mismatch for {k}")
            self._params[k].data = np.ascontiguousarray(arr)

    def sgd_step(self, lr: float, grad_scale: float = 1.0) -> None:
        """Plain SGD (no momentum): p -= lr * grad_scale * p.grad."""
        for name, p in self._params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise T.NonFiniteError(f"non-finite gradient for {name}")
            p.data = p.data - lr * grad_scale * p.grad
