"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable step of the pipeline is composed from the primitives
here: broadcast-aware elementwise arithmetic, 2-D matmul, numerically
stable softmax/logsumexp, row normalisation, 1-D batch norm, gather,
concatenation, and pairwise Euclidean distances.  Ops record themselves on
the innermost active :class:`Tape`; with no tape active they run as plain
forward evaluations, which is what evaluation workers use.

Every op validates that its output is finite, so a NaN or Inf surfaces at
the op that produced it instead of three modules later.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "TapeError",
    "Tensor",
    "Tape",
    "active_tape",
    "register_op",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose2d",
    "exp",
    "log",
    "sqrt",
    "relu",
    "leaky_relu",
    "tsum",
    "tmean",
    "softmax",
    "logsumexp",
    "row_normalize",
    "batch_norm_train",
    "concat",
    "take_rows",
    "getitem",
    "reshape",
    "batch_matmul_left",
    "pairwise_dist",
]


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class TapeError(RuntimeError):
    """Gradient-tape misuse, e.g. backward called twice without reset."""


def _as_array(data) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d to 1-d; asarray keeps scalars.
    return np.asarray(data, dtype=np.float64, order="C")


class Tensor:
    """A C-contiguous float64 array plus an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor initialised with non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar; all arithmetic goes through the taped ops below --

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("tensor division only supports scalars")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose2d(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# Tape


_TAPES: list["Tape"] = []

# One record per executed op: (output, parents, backward).  backward maps the
# output gradient to one gradient (or None) per parent, already parent-shaped.
_Record = tuple["Tensor", tuple["Tensor", ...], Callable[[np.ndarray], tuple]]


class Tape:
    """Ordered record of executed ops, replayed in exact reverse order.

    A tape and the tensors flowing through it belong to one logical
    execution context; use one tape per episode forward/backward.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if not _TAPES or _TAPES[-1] is not self:
            raise TapeError("tape context stack corrupted")
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into every recorded tensor's grad."""
        if self._spent:
            raise TapeError("backward called twice without reset")
        if loss.data.size != 1:
            raise ValueError("backward root must be a scalar")
        self._spent = True
        loss.grad = np.ones_like(loss.data)
        for out, parents, backward in reversed(self._records):
            g = out.grad
            if g is None:
                continue
            for parent, gp in zip(parents, backward(g)):
                if gp is None or not parent.requires_grad:
                    continue
                # Never mutate in place: grads may alias op buffers.
                parent.grad = gp if parent.grad is None else parent.grad + gp

    def reset(self) -> None:
        self._records.clear()
        self._spent = False


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def register_op(out_data, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op result and, if a tape is active, record its backward.

    Extension point for modules that need a primitive with a custom adjoint
    (the temporal warp uses it).  ``backward(grad_out)`` must return one
    gradient array (or None) per parent, shaped like that parent.
    """
    arr = np.asarray(out_data, dtype=np.float64, order="C")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("op produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape._records.append((out, tuple(parents), backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and linear-algebra primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return register_op(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return register_op(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return register_op(out, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        return (g * s,)

    with np.errstate(over="ignore"):
        out = a.data * s
    return register_op(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return register_op(out, (a, b), backward)


def transpose2d(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ValueError("transpose2d expects a matrix")

    def backward(g):
        return (g.T,)

    return register_op(a.data.T, (a,), backward)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return register_op(out, (a,), backward)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return register_op(out, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g):
        # Subgradient 0 at the origin; keeps exact-zero distances safe.
        d = np.divide(0.5, out, out=np.zeros_like(out), where=out > 0)
        return (g * d,)

    return register_op(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0),)

    return register_op(out, (a,), backward)


def leaky_relu(a: Tensor, alpha: float = 0.01) -> Tensor:
    out = np.where(a.data > 0, a.data, alpha * a.data)

    def backward(g):
        return (g * np.where(a.data > 0, 1.0, alpha),)

    return register_op(out, (a,), backward)


def _expand_reduced(g: np.ndarray, axis, keepdims: bool, shape) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        return (_expand_reduced(g, axis, keepdims, a.data.shape),)

    return register_op(out, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // max(out.size, 1)

    def backward(g):
        return (_expand_reduced(g, axis, keepdims, a.data.shape) / count,)

    return register_op(out, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along ``axis``; rows land on the probability simplex."""
    if a.data.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return register_op(out, (a,), backward)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Stable log-sum-exp along ``axis``; adjoint is the softmax."""
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    s = np.exp(x - m).sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = np.exp(x - m) / s
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (soft * gg,)

    return register_op(out, (a,), backward)


def row_normalize(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean, unit-variance normalisation of the last axis.

    This is layer norm without the learnable gain/shift; those live in
    :class:`tsamlt.nn.LayerNorm` on top of this primitive.
    """
    d = a.data.shape[-1]
    if d < 2:
        raise ValueError("row_normalize needs at least 2 features per row")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def backward(g):
        gy = (g * out).mean(axis=-1, keepdims=True)
        return ((g - g.mean(axis=-1, keepdims=True) - out * gy) * inv,)

    return register_op(out, (a,), backward)


def batch_norm_train(a: Tensor, eps: float = 1e-5):
    """Per-feature batch normalisation of a (batch, features) matrix.

    Returns ``(normalized, batch_mean, batch_var)``; the statistics are
    plain arrays for the caller's running-average update.  Population
    variance is used both here and for the running estimate.
    """
    if a.ndim != 2:
        raise ValueError("batch_norm_train expects a (batch, features) matrix")
    if a.shape[0] < 2:
        raise ValueError("batch_norm train mode needs batch size >= 2")
    x = a.data
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def backward(g):
        gy = (g * out).mean(axis=0, keepdims=True)
        return ((g - g.mean(axis=0, keepdims=True) - out * gy) * inv,)

    norm = register_op(out, (a,), backward)
    return norm, mu.reshape(-1).copy(), var.reshape(-1).copy()


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(tensors)
    if not parts:
        raise ValueError("concat of no tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, offsets, axis=axis))

    return register_op(out, tuple(parts), backward)


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows along axis 0; the adjoint scatter-adds them back."""
    index = np.asarray(idx, dtype=np.intp)
    out = a.data[index]

    def backward(g):
        z = np.zeros_like(a.data)
        np.add.at(z, index, g)
        return (z,)

    return register_op(out, (a,), backward)


def getitem(a: Tensor, key) -> Tensor:
    # Basic slicing only: each input element appears at most once.
    out = a.data[key]

    def backward(g):
        z = np.zeros_like(a.data)
        z[key] = g
        return (z,)

    return register_op(out, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return register_op(out, (a,), backward)


def batch_matmul_left(w: Tensor, x: Tensor) -> Tensor:
    """Apply one (r, t) matrix to every (t, d) slice of a (B, t, d) stack."""
    if w.ndim != 2 or x.ndim != 3 or w.shape[1] != x.shape[1]:
        raise ValueError(f"batch_matmul_left shape mismatch: {w.shape} x {x.shape}")
    out = np.einsum("rt,btd->brd", w.data, x.data)

    def backward(g):
        return (
            np.einsum("brd,btd->rt", g, x.data),
            np.einsum("rt,brd->btd", w.data, g),
        )

    return register_op(out, (w, x), backward)


def pairwise_dist(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise Euclidean distances between row sets.

    ``a`` has shape (..., n, d) and ``b`` (..., m, d) with matching leading
    dims; the result is (..., n, m).  Exactly-equal rows give exactly zero,
    and the adjoint assigns subgradient 0 there.
    """
    if a.shape[-1] != b.shape[-1] or a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"pairwise_dist shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data[..., :, None, :] - b.data[..., None, :, :]
    out = np.sqrt((diff * diff).sum(axis=-1))

    def backward(g):
        denom = np.where(out > 0, out, 1.0)
        c = (g / denom)[..., None] * diff
        return c.sum(axis=-2), -c.sum(axis=-3)

    return register_op(out, (a, b), backward)
