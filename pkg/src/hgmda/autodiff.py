"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape`. Outside a
tape nothing is recorded, which doubles as a cheap inference mode::

    with Tape() as tape:
        loss = (x * x).sum()
    grads = tape.backward(loss)

Gradients are accumulated in reverse tape order, so results do not depend on
Python object ids or set iteration order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class EmptyReductionError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


_TAPES: list["Tape"] = []


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.isfinite(values).all():
        bad = int(values.size - np.isfinite(values).sum())
        raise NonFiniteError(f"{op} produced {bad} non-finite value(s)")


class Tensor:
    """A dense array that may take part in differentiation.

    Parameters
    ----------
    data : array_like
        Values; copied into a contiguous float array of ``dtype``.
    requires_grad : bool
        Whether :meth:`Tape.backward` should report a gradient for this tensor.
    dtype : numpy dtype, optional
        Defaults to the dtype of ``data`` when it is floating, else float64.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float64
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return gather_rows(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class Record:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    A tape is consumed by one :meth:`backward`; call :meth:`reset` to reuse it.
    """

    records: list[Record] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def reset(self) -> None:
        for rec in self.records:
            rec.output.tape_id = None
        self.records.clear()
        self.consumed = False

    def record(self, inputs, output, backward) -> None:
        if self.consumed:
            raise TapeError("tape already consumed by backward(); call reset() first")
        output.tape_id = len(self.records)
        self.records.append(Record(tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Populate ``.grad`` on every reachable ``requires_grad`` tensor.

        Returns a mapping from tensor to gradient for those tensors.
        """
        if loss.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise TapeError("tape already consumed by backward(); call reset() first")
        if loss.tape_id is None or loss.tape_id >= len(self.records) or self.records[loss.tape_id].output is not loss:
            raise TapeError("loss is detached: it was not produced on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for rec in reversed(self.records[: loss.tape_id + 1]):
            g_out = grads.pop(id(rec.output), None)
            if g_out is None:
                continue
            for inp, g in zip(rec.inputs, rec.backward(g_out)):
                if g is None or not _tracks(inp):
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if inp.tape_id is None:
                    leaves[key] = inp

        out: dict[Tensor, np.ndarray] = {}
        for key, t in leaves.items():
            if t.requires_grad:
                t.grad = grads[key].astype(t.dtype, copy=False)
                out[t] = t.grad
        return out


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or t.tape_id is not None


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _emit(op: str, value: np.ndarray, inputs: Iterable[Tensor], backward) -> Tensor:
    _check_finite(value, op)
    out = Tensor(value, dtype=value.dtype)
    inputs = tuple(inputs)
    if _TAPES and any(_tracks(t) for t in inputs):
        _TAPES[-1].record(inputs, out, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "add")
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "sub")
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "mul")
    return _emit("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape) if _tracks(a) else None,
                            _unbroadcast(g * a.data, b.shape) if _tracks(b) else None))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    q = a.data / b.data
    return _emit("div", q, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * q / b.data, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    """Raise to a constant scalar exponent."""
    if isinstance(exponent, Tensor):
        raise TypeError("power: exponent must be a constant scalar")
    p = float(exponent)
    if not p.is_integer() and np.any(a.data < 0):
        raise DomainError("power: fractional exponent of negative value")
    out = a.data ** p
    return _emit("power", out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: non-positive input")
    return _emit("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1 + np.tanh(0.5 * a.data))
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit("relu", a.data * mask, (a,), lambda g: (g * mask,))


def clip_min(a: Tensor, floor: float) -> Tensor:
    """``max(a, floor)``; the gradient is zero where the floor is active."""
    mask = a.data > floor
    return _emit("clip_min", np.where(mask, a.data, floor).astype(a.dtype), (a,), lambda g: (g * mask,))


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "linear": identity,
}


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    b = _as_tensor(b)
    return _as_tensor(a, b), b


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _emit("matmul", a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T if _tracks(a) else None,
                            a.data.T @ g if _tracks(b) else None))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _emit("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise EmptyReductionError("concat: no inputs")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def segment_sum(values: np.ndarray, index: np.ndarray, n_rows: int, ufunc=np.add, fill=0.0) -> np.ndarray:
    """Sum rows of ``values`` sharing ``index`` into ``n_rows`` buckets.

    Rows are stably sorted by bucket and reduced contiguously, so the
    floating-point summation order depends only on the inputs. Empty
    buckets hold ``fill``; pass ``ufunc=np.maximum`` for a segment max.
    """
    out = np.full((n_rows,) + values.shape[1:], fill, dtype=values.dtype)
    if len(index) == 0:
        return out
    order = np.argsort(index, kind="stable")
    sorted_idx = index[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    out[sorted_idx[starts]] = ufunc.reduceat(values[order], starts, axis=0)
    return out


def gather_rows(a: Tensor, index) -> Tensor:
    """Select rows ``a[index]``; repeated indices accumulate in backward."""
    idx = np.asarray(index)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    idx = idx.astype(np.int64, copy=False)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {a.shape[0]} rows")

    def backward(g):
        return (segment_sum(g, idx % max(a.shape[0], 1), a.shape[0]),)

    return _emit("gather_rows", a.data[idx], (a,), backward)


def scatter_add_rows(src: Tensor, index, n_rows: int) -> Tensor:
    """Sum rows of ``src`` into ``n_rows`` buckets given by ``index``.

    Summation order is fixed by :func:`segment_sum`.
    """
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape[0] != src.shape[0]:
        raise ShapeError(f"scatter_add_rows: index length {idx.shape[0]} vs rows {src.shape[0]}")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise IndexError(f"scatter_add_rows: index out of range for {n_rows} rows")
    out = segment_sum(src.data, idx, n_rows)
    return _emit("scatter_add_rows", out, (src,), lambda g: (g[idx],))


# ---------------------------------------------------------------------------
# reductions and normalisation


def _check_axis(a: Tensor, axis, op: str):
    axes = range(a.data.ndim) if axis is None else (axis if isinstance(axis, tuple) else (axis,))
    for ax in axes:
        if ax >= a.data.ndim or ax < -a.data.ndim:
            raise ShapeError(f"{op}: axis {ax} invalid for shape {a.shape}")
        if a.shape[ax] == 0:
            raise EmptyReductionError(f"{op}: empty reduction axis {ax} in shape {a.shape}")


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_axis(a, axis, "sum")
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", np.asarray(out), (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_axis(a, axis, "mean")
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _emit("mean", np.asarray(out), (a,), backward)


def row_softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    _check_finite(x.data, "row_softmax input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit("row_softmax", out, (x,), backward)


def segment_softmax(scores: Tensor, segment, n_segments: int) -> Tensor:
    """Softmax of ``scores`` rows within groups sharing ``segment`` id.

    Normalisation is per column, so a ``(E, H)`` score matrix gives one
    distribution per (segment, head).
    """
    seg = np.asarray(segment, dtype=np.int64)
    s = scores.data
    seg_max = segment_sum(s, seg, n_segments, ufunc=np.maximum, fill=-np.inf)
    e = np.exp(s - seg_max[seg])
    denom = segment_sum(e, seg, n_segments)
    out = e / denom[seg]

    def backward(g):
        dot = segment_sum(g * out, seg, n_segments)
        return (out * (g - dot[seg]),)

    return _emit("segment_softmax", out, (scores,), backward)


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamW:
    """AdamW with decoupled weight decay.

    Moments are keyed by parameter name so the optimiser state can be
    checkpointed alongside the parameters.
    """

    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.step_count
        c2 = 1 - b2 ** self.step_count
        for name in sorted(params):
            p = params[name]
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.shape:
                raise ShapeError(f"adamw: grad {g.shape} vs param {name} {p.shape}")
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data *= 1 - self.lr * self.weight_decay
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            _check_finite(p.data, f"adamw update of {name}")


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamW) -> AdamW:
    state.step(params, grads)
    return state


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"HGMC"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, np.ndarray | Tensor], dtype=np.float32) -> None:
    """Write ``params`` as a flat little-endian container.

    Layout: magic, u32 version, u32 bytes-per-float, u32 entry count, then per
    entry: u32 name length, UTF-8 name, u32 ndim, u64 dims, raw values.
    """
    dtype = np.dtype(dtype).newbyteorder("<")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, dtype.itemsize, len(params)))
        for name in sorted(params):
            value = params[name]
            arr = np.asarray(value.data if isinstance(value, Tensor) else value, dtype=dtype)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, width, count = struct.unpack_from("<III", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    dtype = {4: np.dtype("<f4"), 8: np.dtype("<f8")}.get(width)
    if dtype is None:
        raise ValueError(f"{path}: unsupported float width {width}")
    pos = 16
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        nbytes = int(np.prod(shape, dtype=np.int64)) * width
        out[name] = np.frombuffer(blob, dtype=dtype, count=nbytes // width, offset=pos).reshape(shape).astype(dtype.newbyteorder("="))
        pos += nbytes
    return out
