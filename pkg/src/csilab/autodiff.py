"""Reverse-mode automatic differentiation on a flat tape.

Tensors hold float64 numpy arrays. Every tensor is created by exactly one
Tape, and operations are methods on that tape; mixing tensors across tapes
is a programming error and raises immediately. backward() walks the
recorded operations once in reverse, accumulating gradients into every
tensor with requires_grad set.

Every operation validates operand shapes (ShapeMismatch) and checks its
output for NaN/inf (NonFiniteValue), so numerical failures surface at the
op that produced them rather than downstream.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch


class Tensor:
    """A node in the tape graph; values are always float64 arrays."""

    __slots__ = ("values", "grad", "requires_grad", "tape")

    def __init__(self, values: np.ndarray, requires_grad: bool, tape: "Tape"):
        self.values = values
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Stable sigmoid via the positive/negative split form.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Tape:
    """Records operations so backward() can replay them in reverse."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, object]] = []

    # -- tensor creation -------------------------------------------------

    def tensor(self, values, requires_grad: bool = False) -> Tensor:
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("tensor created from non-finite values")
        return Tensor(arr, requires_grad, self)

    def constant(self, values) -> Tensor:
        return self.tensor(values, requires_grad=False)

    # -- plumbing ---------------------------------------------------------

    def _own(self, t: Tensor) -> Tensor:
        if not isinstance(t, Tensor):
            raise TypeError(f"expected Tensor, got {type(t).__name__}")
        if t.tape is not self:
            raise ValueError("tensor belongs to a different tape")
        return t

    def _out(self, values: np.ndarray, requires_grad: bool, op: str,
             backward) -> Tensor:
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"{op} produced non-finite values")
        out = Tensor(values, requires_grad, self)
        if requires_grad:
            self._nodes.append((out, backward))
        return out

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and accumulate gradients tape-wide."""
        self._own(loss)
        if loss.values.size != 1:
            raise ShapeMismatch(f"backward needs a scalar, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.values)
        for out, bw in reversed(self._nodes):
            if out.grad is not None:
                bw(out.grad)

    # -- arithmetic -------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise add; also (n, m) + (1, m) bias broadcast."""
        a, b = self._own(a), self._own(b)
        bias = (a.values.ndim == 2 and b.values.ndim == 2
                and b.shape == (1, a.shape[1]) and a.shape[0] != 1)
        if a.shape != b.shape and not bias:
            raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")

        def bw(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g.sum(axis=0, keepdims=True) if bias else g)
        return self._out(a.values + b.values, a.requires_grad or b.requires_grad,
                         "add", bw)

    def multiply(self, a: Tensor, b: Tensor) -> Tensor:
        a, b = self._own(a), self._own(b)
        if a.shape != b.shape:
            raise ShapeMismatch(f"multiply: {a.shape} vs {b.shape}")

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * b.values)
            if b.requires_grad:
                b._accumulate(g * a.values)
        return self._out(a.values * b.values, a.requires_grad or b.requires_grad,
                         "multiply", bw)

    def scalar_multiply(self, a: Tensor, c: float) -> Tensor:
        a = self._own(a)
        c = float(c)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * c)
        return self._out(a.values * c, a.requires_grad, "scalar_multiply", bw)

    def divide(self, a: Tensor, b) -> Tensor:
        """a / b with b a same-shape tensor or a plain float."""
        a = self._own(a)
        if isinstance(b, Tensor):
            b = self._own(b)
            if a.shape != b.shape:
                raise ShapeMismatch(f"divide: {a.shape} vs {b.shape}")

            def bw(g):
                if a.requires_grad:
                    a._accumulate(g / b.values)
                if b.requires_grad:
                    b._accumulate(-g * a.values / (b.values * b.values))
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = a.values / b.values
            return self._out(vals, a.requires_grad or b.requires_grad,
                             "divide", bw)
        c = float(b)

        def bw_s(g):
            if a.requires_grad:
                a._accumulate(g / c)
        return self._out(a.values / c, a.requires_grad, "divide", bw_s)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        a, b = self._own(a), self._own(b)
        if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

        def bw(g):
            if a.requires_grad:
                a._accumulate(g @ b.values.T)
            if b.requires_grad:
                b._accumulate(a.values.T @ g)
        return self._out(a.values @ b.values, a.requires_grad or b.requires_grad,
                         "matmul", bw)

    def transpose(self, a: Tensor) -> Tensor:
        a = self._own(a)
        if a.values.ndim != 2:
            raise ShapeMismatch(f"transpose needs a matrix, got {a.shape}")

        def bw(g):
            if a.requires_grad:
                a._accumulate(g.T)
        return self._out(a.values.T.copy(), a.requires_grad, "transpose", bw)

    def concat(self, parts: list[Tensor], axis: int = 0) -> Tensor:
        parts = [self._own(p) for p in parts]
        if not parts:
            raise ShapeMismatch("concat of zero tensors")
        nd = parts[0].values.ndim
        if any(p.values.ndim != nd for p in parts) or axis >= nd:
            raise ShapeMismatch("concat: mismatched ranks")
        other = [p.shape[:axis] + p.shape[axis + 1:] for p in parts]
        if any(o != other[0] for o in other):
            raise ShapeMismatch(f"concat: incompatible shapes {[p.shape for p in parts]}")
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def bw(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    sl = [slice(None)] * nd
                    sl[axis] = slice(lo, hi)
                    p._accumulate(g[tuple(sl)])
        return self._out(np.concatenate([p.values for p in parts], axis=axis),
                         any(p.requires_grad for p in parts), "concat", bw)

    def reduce_sum(self, a: Tensor, axis: int | None = None,
                   keepdims: bool = False) -> Tensor:
        a = self._own(a)

        def bw(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(ge, a.shape).copy())
        return self._out(a.values.sum(axis=axis, keepdims=keepdims),
                         a.requires_grad, "reduce_sum", bw)

    # -- nonlinearities ---------------------------------------------------

    def relu(self, a: Tensor) -> Tensor:
        a = self._own(a)
        mask = a.values > 0

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * mask)
        return self._out(np.where(mask, a.values, 0.0), a.requires_grad,
                         "relu", bw)

    def exp(self, a: Tensor) -> Tensor:
        a = self._own(a)
        with np.errstate(over="ignore"):
            out_vals = np.exp(a.values)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * out_vals)
        return self._out(out_vals, a.requires_grad, "exp", bw)

    def log(self, a: Tensor) -> Tensor:
        a = self._own(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            out_vals = np.log(a.values)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g / a.values)
        return self._out(out_vals, a.requires_grad, "log", bw)

    def softplus(self, a: Tensor) -> Tensor:
        """log(1 + exp(x)) computed without overflow."""
        a = self._own(a)

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * _sigmoid(a.values))
        return self._out(np.logaddexp(0.0, a.values), a.requires_grad,
                         "softplus", bw)

    def softmax(self, a: Tensor) -> Tensor:
        """Softmax along the last axis, shift-stabilized."""
        a = self._own(a)
        shifted = a.values - a.values.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        s = e / e.sum(axis=-1, keepdims=True)

        def bw(g):
            if a.requires_grad:
                inner = (g * s).sum(axis=-1, keepdims=True)
                a._accumulate(s * (g - inner))
        return self._out(s, a.requires_grad, "softmax", bw)

    # -- reductions over vectors -------------------------------------------

    def dot(self, a: Tensor, b: Tensor) -> Tensor:
        a, b = self._own(a), self._own(b)
        if a.values.ndim != 1 or a.shape != b.shape:
            raise ShapeMismatch(f"dot: {a.shape} vs {b.shape}")

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * b.values)
            if b.requires_grad:
                b._accumulate(g * a.values)
        return self._out(np.asarray(a.values @ b.values), a.requires_grad or
                         b.requires_grad, "dot", bw)

    def l2_norm(self, a: Tensor, axis: int | None = None,
                keepdims: bool = False) -> Tensor:
        """Euclidean norm over all entries, or along one axis."""
        a = self._own(a)
        n = np.sqrt(np.sum(a.values * a.values, axis=axis, keepdims=keepdims))

        def bw(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape) * a.values / n)
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                ne = n if keepdims else np.expand_dims(n, axis)
                a._accumulate(ge * a.values / ne)
        return self._out(np.asarray(n), a.requires_grad, "l2_norm", bw)

    # -- structured ops -----------------------------------------------------

    def embedding_lookup(self, table: Tensor, indices) -> Tensor:
        """Gather rows of ``table`` by integer index; scatter-add on backward."""
        table = self._own(table)
        idx = np.asarray(indices, dtype=np.int64)
        if table.values.ndim != 2 or idx.ndim != 1:
            raise ShapeMismatch(
                f"embedding_lookup: table {table.shape}, indices {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
            raise ShapeMismatch("embedding_lookup: index out of range")

        def bw(g):
            if table.requires_grad:
                dt = np.zeros_like(table.values)
                np.add.at(dt, idx, g)
                table._accumulate(dt)
        return self._out(table.values[idx], table.requires_grad,
                         "embedding_lookup", bw)

    def neighbor_aggregate(self, h: Tensor, adj_norm: np.ndarray) -> Tensor:
        """Multiply node features by a fixed normalized adjacency matrix."""
        h = self._own(h)
        adj_norm = np.asarray(adj_norm, dtype=np.float64)
        if (h.values.ndim != 2 or adj_norm.ndim != 2
                or adj_norm.shape[0] != adj_norm.shape[1]
                or adj_norm.shape[1] != h.shape[0]):
            raise ShapeMismatch(
                f"neighbor_aggregate: adj {adj_norm.shape}, h {h.shape}")

        def bw(g):
            if h.requires_grad:
                h._accumulate(adj_norm.T @ g)
        return self._out(adj_norm @ h.values, h.requires_grad,
                         "neighbor_aggregate", bw)

    def conv1d(self, x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
        """Valid 1-D convolution: x (L, Cin), w (width, Cin, Cout) -> (T, Cout)."""
        x, w = self._own(x), self._own(w)
        if x.values.ndim != 2 or w.values.ndim != 3 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"conv1d: x {x.shape}, w {w.shape}")
        if stride < 1:
            raise ShapeMismatch(f"conv1d: stride {stride} < 1")
        length, c_in = x.shape
        width, _, c_out = w.shape
        if length < width:
            raise ShapeMismatch(f"conv1d: input length {length} < width {width}")
        t = (length - width) // stride + 1
        idx = np.arange(t)[:, None] * stride + np.arange(width)[None, :]
        cols = x.values[idx].reshape(t, width * c_in)
        w2 = w.values.reshape(width * c_in, c_out)

        def bw(g):
            if w.requires_grad:
                w._accumulate((cols.T @ g).reshape(width, c_in, c_out))
            if x.requires_grad:
                dcols = (g @ w2.T).reshape(t, width, c_in)
                dx = np.zeros_like(x.values)
                np.add.at(dx, idx.reshape(-1), dcols.reshape(-1, c_in))
                x._accumulate(dx)
        return self._out(cols @ w2, x.requires_grad or w.requires_grad,
                         "conv1d", bw)

    def maxpool1d(self, x: Tensor, width: int, stride: int | None = None) -> Tensor:
        """Per-channel max over sliding windows; ties keep the first position."""
        x = self._own(x)
        if x.values.ndim != 2:
            raise ShapeMismatch(f"maxpool1d: expected matrix, got {x.shape}")
        stride = width if stride is None else stride
        if width < 1 or stride < 1 or x.shape[0] < width:
            raise ShapeMismatch(
                f"maxpool1d: length {x.shape[0]}, width {width}, stride {stride}")
        length, channels = x.shape
        t = (length - width) // stride + 1
        idx = np.arange(t)[:, None] * stride + np.arange(width)[None, :]
        windows = x.values[idx]                       # (t, width, channels)
        arg = windows.argmax(axis=1)                  # first max per (t, c)
        out_vals = np.take_along_axis(windows, arg[:, None, :], axis=1)[:, 0, :]

        def bw(g):
            if x.requires_grad:
                dx = np.zeros_like(x.values)
                rows = idx[np.arange(t)[:, None], arg]       # (t, channels)
                cols_ = np.broadcast_to(np.arange(channels), (t, channels))
                np.add.at(dx, (rows.reshape(-1), cols_.reshape(-1)), g.reshape(-1))
                x._accumulate(dx)
        return self._out(out_vals, x.requires_grad, "maxpool1d", bw)

    def global_max_pool(self, x: Tensor) -> Tensor:
        """Column-wise max over all rows -> (1, channels); first row wins ties."""
        x = self._own(x)
        if x.values.ndim != 2 or x.shape[0] < 1:
            raise ShapeMismatch(f"global_max_pool: got {x.shape}")
        arg = x.values.argmax(axis=0)
        out_vals = x.values[arg, np.arange(x.shape[1])][None, :]

        def bw(g):
            if x.requires_grad:
                dx = np.zeros_like(x.values)
                dx[arg, np.arange(x.shape[1])] = g[0]
                x._accumulate(dx)
        return self._out(out_vals, x.requires_grad, "global_max_pool", bw)


def normalized_adjacency(n_atoms: int, edges: list[tuple[int, int]]) -> np.ndarray:
    """Symmetric-normalized adjacency with self loops added first."""
    a = np.eye(n_atoms, dtype=np.float64)
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def grad_check(f, point: list[np.ndarray], eps: float = 1e-5) -> float:
    """Compare tape gradients of f against central differences.

    ``f(tape, *tensors)`` must return a scalar Tensor built on the given
    tape. ``point`` is one float64 array per input. Returns the maximum
    relative error max |analytic - numeric| / max(1, |numeric|) over every
    input coordinate.
    """
    point = [np.asarray(p, dtype=np.float64) for p in point]

    tape = Tape()
    tensors = [tape.tensor(p, requires_grad=True) for p in point]
    out = f(tape, *tensors)
    tape.backward(out)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.values)
                for t in tensors]

    def value_at(arrays: list[np.ndarray]) -> float:
        t2 = Tape()
        vals = [t2.tensor(a) for a in arrays]
        return float(f(t2, *vals).values)

    worst = 0.0
    for k, base in enumerate(point):
        flat = base.reshape(-1)
        for i in range(flat.size):
            bumped = [p.copy() for p in point]
            bumped[k].reshape(-1)[i] = flat[i] + eps
            up = value_at(bumped)
            bumped[k].reshape(-1)[i] = flat[i] - eps
            down = value_at(bumped)
            numeric = (up - down) / (2.0 * eps)
            got = analytic[k].reshape(-1)[i]
            err = abs(got - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
