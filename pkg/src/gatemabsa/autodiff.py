"""Dense float64 tensors with taped reverse-mode differentiation.

Every tensor is a 2-d, C-ordered float64 array. Vectors are represented as
1 x d rows (pooled embeddings, biases) or n x 1 columns (per-step gates),
which keeps broadcasting rules small and every backward rule explicit.

The tape is rebuilt on every forward pass: each operation records its
parents and a closure that scatters the output gradient back to them.
``Tensor.backward()`` topologically sorts the graph and visits each node
exactly once, accumulating into ``grad`` on every node that requires it.
No higher-order derivatives are supported.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class EmptyPoolError(ValueError):
    """Raised when a pooling mask selects no rows."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-d; got array of shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """A 2-d float64 array plus an optional gradient buffer.

    ``requires_grad`` marks leaves that should collect gradients; derived
    nodes require a gradient whenever any parent does. ``op`` is a short
    tag naming the operation that produced the node (leaves use "leaf").
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_grad_fns")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), grad_fns: tuple = ()):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = parents
        self._grad_fns = grad_fns

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every tracked node.

        ``self`` must hold a single value. Each graph node is visited once,
        in reverse topological order; repeated calls after ``zero_grad``
        reproduce identical gradients because the walk order is fixed.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, shape is {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += 1.0
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, fn in zip(node._parents, node._grad_fns):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += fn(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _lift(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _node(data, parents: tuple, grad_fns: tuple, op: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=parents, grad_fns=grad_fns)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


# -- elementwise arithmetic (numpy broadcasting between 2-d operands) -------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(g, b.data.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(-g, b.data.shape)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g * b.data, a.data.shape),
                  lambda g: _unbroadcast(g * a.data, b.data.shape)), "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g / b.data, a.data.shape),
                  lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
                 "div")


def scale(a: Tensor, s: float) -> Tensor:
    return mul(a, _lift(float(s)))


# -- structural ops ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}")
    out = a.data @ b.data
    return _node(out, (a, b),
                 (lambda g: g @ b.data.T,
                  lambda g: a.data.T @ g), "matmul")


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T.copy(), (a,), (lambda g: g.T,), "transpose")


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    out = a.data.reshape(rows, cols)
    return _node(out, (a,), (lambda g: g.reshape(a.data.shape),), "reshape")


def concat(parts: list[Tensor], axis: int) -> Tensor:
    if axis not in (0, 1):
        raise ShapeError(f"concat axis must be 0 or 1, got {axis}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + [p.data.shape[axis] for p in parts])

    def fn(i):
        lo, hi = offsets[i], offsets[i + 1]
        if axis == 0:
            return lambda g: g[lo:hi, :]
        return lambda g: g[:, lo:hi]

    return _node(out, tuple(parts), tuple(fn(i) for i in range(len(parts))), "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; gradient scatters back into place."""
    if axis == 0:
        out = a.data[start:start + length, :].copy()
    elif axis == 1:
        out = a.data[:, start:start + length].copy()
    else:
        raise ShapeError(f"narrow axis must be 0 or 1, got {axis}")

    def back(g):
        full = np.zeros_like(a.data)
        if axis == 0:
            full[start:start + length, :] = g
        else:
            full[:, start:start + length] = g
        return full

    return _node(out, (a,), (back,), "narrow")


def repeat_rows(row: Tensor, n: int) -> Tensor:
    """Broadcast a 1 x d row vector to n identical rows."""
    if row.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows expects a 1 x d row, got {row.shape}")
    out = np.tile(row.data, (n, 1))
    return _node(out, (row,), (lambda g: g.sum(axis=0, keepdims=True),), "repeat_rows")


# -- reductions --------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    out = np.array([[a.data.sum()]])
    return _node(out, (a,), (lambda g: np.full_like(a.data, g[0, 0]),), "sum_all")


def sum_rows(a: Tensor) -> Tensor:
    """Row sums, shape (n, 1)."""
    out = a.data.sum(axis=1, keepdims=True)
    return _node(out, (a,), (lambda g: np.broadcast_to(g, a.data.shape).copy(),),
                 "sum_rows")


def sum_cols(a: Tensor) -> Tensor:
    """Column sums, shape (1, d)."""
    out = a.data.sum(axis=0, keepdims=True)
    return _node(out, (a,), (lambda g: np.broadcast_to(g, a.data.shape).copy(),),
                 "sum_cols")


def cumsum_rows(a: Tensor) -> Tensor:
    """Cumulative sum down axis 0 (per column)."""
    out = np.cumsum(a.data, axis=0)
    return _node(out, (a,),
                 (lambda g: np.flip(np.cumsum(np.flip(g, axis=0), axis=0), axis=0),),
                 "cumsum_rows")


def row_max_finite(a: Tensor) -> Tensor:
    """Per-row maximum over finite entries, shape (n, 1).

    Rows with no finite entry yield 0 and receive no gradient; on ties the
    gradient routes to the first maximal entry.
    """
    data = a.data
    finite = np.isfinite(data)
    has_finite = finite.any(axis=1)
    masked = np.where(finite, data, -np.inf)
    out = np.zeros((data.shape[0], 1))
    out[has_finite, 0] = masked[has_finite].max(axis=1)
    argmax = masked.argmax(axis=1)

    def back(g):
        full = np.zeros_like(data)
        rows = np.nonzero(has_finite)[0]
        full[rows, argmax[rows]] = g[rows, 0]
        return full

    return _node(out, (a,), (back,), "row_max_finite")


# -- nonlinearities ----------------------------------------------------------

def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), (lambda g: g * out,), "exp")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), (lambda g: g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _node(out, (a,), (lambda g: g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(a: Tensor) -> Tensor:
    """Numerically stable log of the sigmoid: -softplus(-x).

    Finite for all finite inputs; approaches x as x -> -inf and 0 as
    x -> +inf. The derivative is sigmoid(-x).
    """
    x = a.data
    out = -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))
    return _node(out, (a,), (lambda g: g * _sigmoid(-x),), "log_sigmoid")


# -- masking and guarded norms ------------------------------------------------

def masked_fill(a: Tensor, keep: np.ndarray, fill: float) -> Tensor:
    """Replace entries where ``keep`` is False by ``fill`` (a constant).

    Gradient flows only through kept entries, so a -inf fill never produces
    NaN upstream.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != a.data.shape:
        raise ShapeError(f"mask shape {keep.shape} does not match {a.data.shape}")
    out = np.where(keep, a.data, fill)
    return _node(out, (a,), (lambda g: np.where(keep, g, 0.0),), "masked_fill")


def safe_row_norms(a: Tensor, floor: float = 1e-8) -> Tensor:
    """Per-row Euclidean norms clamped below at ``floor``, shape (n, 1).

    Rows shorter than the floor get a constant norm and zero gradient,
    which keeps cosine similarities of near-zero vectors well defined.
    """
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    out = np.maximum(norms, floor)
    live = norms > floor

    def back(g):
        safe = np.where(live, norms, 1.0)
        return np.where(live, g * a.data / safe, 0.0)

    return _node(out, (a,), (back,), "safe_row_norms")


def cosine_sim(u: Tensor, v: Tensor, floor: float = 1e-8) -> Tensor:
    """Cosine similarity of two 1 x d rows, shape (1, 1).

    Norms are clamped below at ``floor``, so a zero vector yields 0.
    """
    num = matmul(u, transpose(v))
    return div(num, mul(safe_row_norms(u, floor), safe_row_norms(v, floor)))


def rowwise_cosine(q: Tensor, row: Tensor, floor: float = 1e-8) -> Tensor:
    """Cosine similarity of every row of ``q`` (n x d) against one 1 x d row.

    Returns an (n, 1) column. Zero rows on either side yield 0.
    """
    num = matmul(q, transpose(row))
    return div(num, mul(safe_row_norms(q, floor), safe_row_norms(row, floor)))


def masked_mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the rows of ``x`` selected by a 0/1 mask, shape (1, d)."""
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    if mask.shape[0] != x.data.shape[0]:
        raise ShapeError(f"mask length {mask.shape[0]} does not match {x.shape}")
    count = mask.sum()
    if count == 0:
        raise EmptyPoolError("mean pool over an all-zero mask")
    weights = Tensor((mask / count).reshape(1, -1))
    return matmul(weights, x)


# -- model-facing primitives ---------------------------------------------------

def dyt(x: Tensor, alpha: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Dynamic-tanh normalization: gamma * tanh(alpha * x) + beta per feature.

    ``alpha`` is a 1 x 1 scalar; ``gamma`` and ``beta`` are 1 x d rows
    broadcast over the rows of ``x``.
    """
    return add(mul(gamma, tanh(mul(x, alpha))), beta)


def dropout(x: Tensor, p_drop: float, rng: np.random.Generator | None,
            train: bool) -> Tensor:
    """Inverted dropout: Bernoulli keep mask scaled by 1/keep_p in train mode.

    Eval mode is the exact identity. The mask is drawn once at call time,
    so a fixed generator state reproduces it bit for bit.
    """
    if not train or p_drop == 0.0:
        return x
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p_drop}")
    if rng is None:
        raise ValueError("train-mode dropout needs a random generator")
    keep_p = 1.0 - p_drop
    mask = (rng.random(x.data.shape) < keep_p) / keep_p
    out = x.data * mask
    return _node(out, (x,), (lambda g: g * mask,), "dropout")


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Cross-entropy of a 1 x c logit row against an integer class label.

    Computed with max subtraction; the gradient is softmax(logits) minus
    the one-hot label.
    """
    z = logits.data.reshape(-1)
    c = z.shape[0]
    if not 0 <= label < c:
        raise IndexError(f"label {label} out of range for {c} classes")
    shifted = z - z.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    out = np.array([[-log_probs[label]]])
    probs = np.exp(log_probs)

    def back(g):
        grad = probs.copy()
        grad[label] -= 1.0
        return g[0, 0] * grad.reshape(logits.data.shape)

    return _node(out, (logits,), (back,), "softmax_cross_entropy")


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain softmax on a flat logit vector (no gradient tracking)."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()
