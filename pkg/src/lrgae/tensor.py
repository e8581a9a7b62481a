"""Two-dimensional float64 tensors with tape-based reverse-mode differentiation.

Every value is a ``rows x cols`` matrix; scalars are ``1 x 1``. Operations on
tensors that require gradients record a backward rule on the output, and
:func:`backward` linearises those records into a :class:`Tape` and replays it
in reverse. The tape is rebuilt from the loss on every call, so there is no
persistent graph to manage between training steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError, DomainError

__all__ = [
    "Tensor",
    "SparseMatrix",
    "Tape",
    "tensor",
    "matmul",
    "spmm",
    "elementwise",
    "add",
    "sub",
    "mul",
    "relu",
    "leaky_relu",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "power",
    "scale",
    "shift",
    "dropout",
    "reduce",
    "gather_rows",
    "scatter_rows",
    "segment_softmax",
    "replace_rows",
    "add_bias",
    "scale_rows",
    "concat_cols",
    "transpose",
    "normalize_rows",
    "rowwise_cosine",
    "rowwise_dot",
    "logsumexp_rows",
    "backward",
    "numerical_grad",
    "gradcheck",
]


class Tensor:
    """A 2-D float64 matrix that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got array of shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> Tensor:
        return reduce(self, "sum", "all")

    def mean(self) -> Tensor:
        return reduce(self, "mean", "all")

    @property
    def T(self) -> Tensor:
        return transpose(self)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(shape, float(x)))


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --------------------------------------------------------------------------- sparse


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix with sorted, unique column indices per row."""

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols_idx = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if offsets.shape != (self.rows + 1,) or offsets[0] != 0 or offsets[-1] != len(cols_idx):
            raise ContractError("row_offsets must have length rows+1, start at 0 and end at nnz")
        if np.any(np.diff(offsets) < 0):
            raise ContractError("row_offsets must be nondecreasing")
        if len(vals) != len(cols_idx):
            raise ContractError("values and col_indices differ in length")
        if len(cols_idx) and (cols_idx.min() < 0 or cols_idx.max() >= self.cols):
            raise ContractError("column index out of range")
        if len(cols_idx) > 1:
            step = np.diff(cols_idx)
            row_start = np.zeros(len(cols_idx), dtype=bool)
            row_start[offsets[:-1][np.diff(offsets) > 0]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise ContractError("column indices must be strictly increasing within a row")
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols_idx)
        object.__setattr__(self, "values", vals)
        csr = sp.csr_matrix((vals, cols_idx, offsets), shape=(self.rows, self.cols))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_coo(cls, row, col, values, shape: tuple[int, int]) -> SparseMatrix:
        """Build from coordinates; duplicate coordinates are summed."""
        coo = sp.coo_matrix(
            (np.asarray(values, dtype=np.float64), (np.asarray(row), np.asarray(col))),
            shape=shape,
        )
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(shape[0], shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def identity(cls, n: int) -> SparseMatrix:
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr


# --------------------------------------------------------------------------- products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _result(a.data @ b.data, (a, b), back)


def spmm(s: SparseMatrix, x: Tensor) -> Tensor:
    if s.cols != x.rows:
        raise DimensionError(f"spmm: cannot multiply sparse {s.shape} by {x.shape}")
    csr = s.to_scipy()

    def back(g):
        return (np.asarray(csr.T @ g),)

    return _result(np.asarray(csr @ x.data), (x,), back)


# --------------------------------------------------------------------------- pointwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form: no overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(a)), evaluated without overflow."""
    return _result(np.logaddexp(0.0, a.data), (a,), lambda g: (g * _sigmoid(a.data),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _result(e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: input has nonpositive entries")
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def power(a: Tensor, exponent: float) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("power: input has negative entries")
    out = a.data**exponent

    def back(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _result(out, (a,), back)


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    return _result(a.data + c, (a,), lambda g: (g,))


def dropout(a: Tensor, keep_prob: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout. Identity when ``training`` is false or ``keep_prob == 1``."""
    if not 0.0 < keep_prob <= 1.0:
        raise DomainError(f"dropout: keep_prob must lie in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs an explicit RNG stream")
    mask = (rng.random(a.shape) < keep_prob) / keep_prob
    return _result(a.data * mask, (a,), lambda g: (g * mask,))


_UNARY = {
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "softplus": softplus,
}


def elementwise(kind: str, a: Tensor, b: Tensor | None = None, **kwargs) -> Tensor:
    """Dispatch a pointwise operation by name."""
    if kind in ("add", "sub", "mul"):
        if b is None:
            raise ContractError(f"{kind} needs two operands")
        return {"add": add, "sub": sub, "mul": mul}[kind](a, b)
    if kind in _UNARY:
        return _UNARY[kind](a)
    if kind == "scale":
        return scale(a, kwargs["factor"])
    if kind == "dropout":
        return dropout(a, kwargs["keep_prob"], kwargs.get("rng"), kwargs.get("training", True))
    raise ContractError(f"unknown elementwise kind {kind!r}")


# --------------------------------------------------------------------------- reductions


def reduce(a: Tensor, kind: str = "sum", axis: str = "all") -> Tensor:
    """Sum or mean over all entries (1x1 result) or over each row (column vector)."""
    if a.data.size == 0:
        raise DomainError("reduce: empty tensor")
    if kind not in ("sum", "mean") or axis not in ("all", "rows"):
        raise ContractError(f"reduce: unsupported kind/axis {kind!r}/{axis!r}")
    if axis == "all":
        count = a.data.size if kind == "mean" else 1
        out = np.array([[a.data.sum() / count]])

        def back(g):
            return (np.full(a.shape, g[0, 0] / count),)

    else:
        count = a.cols if kind == "mean" else 1
        out = a.data.sum(axis=1, keepdims=True) / count

        def back(g):
            return (np.repeat(g / count, a.cols, axis=1),)

    return _result(out, (a,), back)


def logsumexp_rows(a: Tensor) -> Tensor:
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)

    def back(g):
        return (g * e / s,)

    return _result(out, (a,), back)


# --------------------------------------------------------------------------- indexing


def _scatter(values: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    m = len(idx)
    if m == 0:
        return np.zeros((n, values.shape[1]))
    sel = sp.csr_matrix((np.ones(m), (idx, np.arange(m))), shape=(n, m))
    return np.asarray(sel @ values)


def _check_index(idx, n: int, op: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"{op}: index out of range for {n} rows")
    return idx


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows; the backward pass scatter-adds, so repeated indices accumulate."""
    idx = _check_index(idx, a.rows, "gather_rows")
    n = a.rows
    return _result(a.data[idx], (a,), lambda g: (_scatter(g, idx, n),))


def scatter_rows(a: Tensor, idx, n: int) -> Tensor:
    """Sum row ``i`` of ``a`` into output row ``idx[i]`` of an ``n``-row result."""
    idx = _check_index(idx, n, "scatter_rows")
    if len(idx) != a.rows:
        raise DimensionError(f"scatter_rows: {len(idx)} targets for {a.rows} rows")
    return _result(_scatter(a.data, idx, n), (a,), lambda g: (g[idx],))


def segment_softmax(a: Tensor, segments, n: int) -> Tensor:
    """Softmax of a column vector taken separately within each segment id."""
    seg = _check_index(segments, n, "segment_softmax")
    if a.cols != 1 or a.rows != len(seg):
        raise DimensionError(f"segment_softmax expects a {len(seg)}x1 column, got {a.shape}")
    x = a.data[:, 0]
    peak = np.full(n, -np.inf)
    np.maximum.at(peak, seg, x)
    e = np.exp(x - peak[seg])
    total = np.bincount(seg, weights=e, minlength=n)
    y = (e / total[seg])[:, None]

    def back(grad):
        gy = grad[:, 0] * y[:, 0]
        seg_sum = np.bincount(seg, weights=gy, minlength=n)
        return ((gy - y[:, 0] * seg_sum[seg])[:, None],)

    return _result(y, (a,), back)


def replace_rows(a: Tensor, idx, row: Tensor) -> Tensor:
    """Copy of ``a`` with the rows in ``idx`` replaced by the ``1 x cols`` tensor ``row``."""
    idx = _check_index(idx, a.rows, "replace_rows")
    if row.shape != (1, a.cols):
        raise DimensionError(f"replace_rows: row has shape {row.shape}, expected (1, {a.cols})")
    out = a.data.copy()
    out[idx] = row.data
    keep = np.ones((a.rows, 1))
    keep[idx] = 0.0

    def back(g):
        return g * keep, g[idx].sum(axis=0, keepdims=True)

    return _result(out, (a, row), back)


# --------------------------------------------------------------------------- broadcasting helpers


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    if b.shape != (1, a.cols):
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {a.shape}")
    return _result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale_rows(a: Tensor, s: Tensor) -> Tensor:
    """Multiply row ``i`` of ``a`` by the scalar ``s[i, 0]``."""
    if s.shape != (a.rows, 1):
        raise DimensionError(f"scale_rows: scales {s.shape} do not fit {a.shape}")

    def back(g):
        return g * s.data, (g * a.data).sum(axis=1, keepdims=True)

    return _result(a.data * s.data, (a, s), back)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ContractError("concat_cols: nothing to concatenate")
    rows = {p.rows for p in parts}
    if len(rows) != 1:
        raise DimensionError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def back(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1), parts, back)


def transpose(a: Tensor) -> Tensor:
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


# --------------------------------------------------------------------------- similarities


def normalize_rows(a: Tensor) -> Tensor:
    """Unit-normalise each row. Zero rows stay zero and pass no gradient."""
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    u = np.where(norms > 0, a.data / safe, 0.0)

    def back(g):
        proj = (g * u).sum(axis=1, keepdims=True)
        return (np.where(norms > 0, (g - u * proj) / safe, 0.0),)

    return _result(u, (a,), back)


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "rowwise_dot")
    out = (a.data * b.data).sum(axis=1, keepdims=True)
    return _result(out, (a, b), lambda g: (g * b.data, g * a.data))


def rowwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity per row pair; a row with zero norm scores 0."""
    _same_shape(a, b, "rowwise_cosine")
    na = np.linalg.norm(a.data, axis=1, keepdims=True)
    nb = np.linalg.norm(b.data, axis=1, keepdims=True)
    ok = (na > 0) & (nb > 0)
    denom = np.where(ok, na * nb, 1.0)
    c = np.where(ok, (a.data * b.data).sum(axis=1, keepdims=True) / denom, 0.0)

    def back(g):
        sa = np.where(ok, na, 1.0)
        sb = np.where(ok, nb, 1.0)
        ga = np.where(ok, g * (b.data / denom - c * a.data / sa**2), 0.0)
        gb = np.where(ok, g * (a.data / denom - c * b.data / sb**2), 0.0)
        return ga, gb

    return _result(c, (a, b), back)


# --------------------------------------------------------------------------- backward


class Tape:
    """Operations reachable from a root, in topological order (inputs first)."""

    def __init__(self, ops: list[Tensor], leaves: list[Tensor]):
        self.ops = ops
        self.leaves = leaves

    @classmethod
    def record(cls, root: Tensor) -> Tape:
        ops: list[Tensor] = []
        leaves: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                ops.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            if node._backward is None:
                leaves.append(node)
                continue
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(ops, leaves)

    def __len__(self) -> int:
        return len(self.ops)


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse-mode pass from a scalar loss.

    Sets ``.grad`` on every reachable leaf that requires grad and returns the
    gradient map. Tensors passed in ``params`` always appear in the map; the
    unreachable ones get zeros.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
    tape = Tape.record(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.ops):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    out: dict[Tensor, np.ndarray] = {}
    for leaf in tape.leaves:
        g = grads.get(id(leaf))
        leaf.grad = np.zeros(leaf.shape) if g is None else np.asarray(g, dtype=np.float64).reshape(leaf.shape)
        out[leaf] = leaf.grad
    if loss.requires_grad and loss._backward is None:
        loss.grad = np.ones((1, 1))
        out[loss] = loss.grad
    for p in params or ():
        if p not in out:
            p.grad = np.zeros(p.shape)
            out[p] = p.grad
    return out


# --------------------------------------------------------------------------- finite differences


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the scalar ``fn()`` w.r.t. ``x.data``."""
    grad = np.zeros(x.shape)
    base = x.data
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            bumped = base.copy()
            bumped[i, j] += h
            x.data = bumped
            hi = fn().item()
            bumped = base.copy()
            bumped[i, j] -= h
            x.data = bumped
            lo = fn().item()
            grad[i, j] = (hi - lo) / (2 * h)
    x.data = base
    return grad


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Largest relative error between reverse-mode and finite-difference gradients.

    The error per input is ``||analytic - numeric|| / max(||analytic||, ||numeric||, floor)``.
    Central differences carry rounding noise of about ``eps * |f| / h`` per
    entry, so an exactly zero gradient would otherwise compare noise with
    noise. ``floor`` is 1e6 of those noise units, which means a vanishing
    gradient must agree to within 100 noise units, the finest resolution the
    numerical side offers. ``fn`` must be deterministic and read its inputs
    from ``inputs``.
    """
    for x in inputs:
        x.requires_grad = True
    out = fn()
    analytic = backward(out, inputs)
    noise = np.finfo(np.float64).eps * max(1.0, abs(out.item())) / h
    worst = 0.0
    for x in inputs:
        a = analytic[x]
        n = numerical_grad(fn, x, h)
        floor = 1e6 * noise * np.sqrt(a.size)
        scale_ = max(np.linalg.norm(a), np.linalg.norm(n), floor)
        worst = max(worst, float(np.linalg.norm(a - n) / scale_))
    return worst
