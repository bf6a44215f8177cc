"""Small reverse-mode autodiff over float64 numpy arrays (rank <= 2).

Every op builds a child Tensor holding a closure that pushes gradients back
to its parents; backward() topologically sorts the graph and runs closures
in reverse. The design goal that shapes everything here is reproducibility:
segment_sum accumulates in a value-canonical order (sorted by a monotone
byte encoding of the float64 bits), so forward results are bitwise identical
under any relabeling of the rows feeding a segment. Plain index-order
accumulation cannot offer that, because float addition is not associative.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes for the requested op."""


class BackwardOnNonScalar(RuntimeError):
    """backward() called on a tensor that is not a single scalar."""


def _as_2d(x: np.ndarray) -> np.ndarray:
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, -1)
    return x


class Tensor:
    """Node in the autodiff graph; data is always a float64 2-d array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeMismatch(f"rank {arr.ndim} tensor; only rank <= 2 supported")
        # parameters own their buffer; op outputs are always fresh arrays
        self.data = _as_2d(arr).copy() if (requires_grad and arr is data) else _as_2d(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() on shape {self.shape}")
        return float(self.data.reshape(()))

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        if self.data.shape != (1, 1):
            raise BackwardOnNonScalar(f"backward on shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        # the closures that carry gradients also close over their output
        # node, so every op output sits on a reference cycle; detach the
        # spent tape here so buffers free immediately instead of waiting
        # for a full gc pass. A second backward needs a fresh loss graph.
        for node in topo:
            node._backward = None
            node._parents = ()

    # ---- ops ----

    def matmul(self, other: "Tensor") -> "Tensor":
        a, b = self, other
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        out = Tensor(a.data @ b.data, parents=(a, b))

        def back():
            a._accum(out.grad @ b.data.T)
            b._accum(a.data.T @ out.grad)

        out._backward = back
        return out

    def add(self, other: "Tensor") -> "Tensor":
        a, b = self, other
        if a.shape == b.shape:
            broadcast = False
        elif b.shape == (1, a.shape[1]):
            broadcast = True
        else:
            raise ShapeMismatch(f"add {a.shape} + {b.shape}")
        out = Tensor(a.data + b.data, parents=(a, b))

        def back():
            a._accum(out.grad)
            if broadcast:
                b._accum(out.grad.sum(axis=0, keepdims=True))
            else:
                b._accum(out.grad)

        out._backward = back
        return out

    def scale(self, c: float) -> "Tensor":
        c = float(c)
        out = Tensor(self.data * c, parents=(self,))

        def back():
            self._accum(out.grad * c)

        out._backward = back
        return out

    def relu(self) -> "Tensor":
        keep = self.data > 0.0
        out = Tensor(np.where(keep, self.data, 0.0), parents=(self,))

        def back():
            self._accum(np.where(keep, out.grad, 0.0))

        out._backward = back
        return out


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def concat_cols(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat_cols of nothing")
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeMismatch(f"concat_cols rows differ: {[p.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1), parents=tuple(parts))
    splits = np.cumsum([p.shape[1] for p in parts])[:-1]

    def back():
        for p, g in zip(parts, np.split(out.grad, splits, axis=1)):
            p._accum(g)

    out._backward = back
    return out


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ShapeMismatch("gather_rows index must be 1-d")
    if len(index) and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeMismatch(f"gather_rows index out of range for {x.shape[0]} rows")
    out = Tensor(x.data[index], parents=(x,))

    def back():
        g = np.zeros_like(x.data)
        np.add.at(g, index, out.grad)
        x._accum(g)

    out._backward = back
    return out


def _canonical_order(values: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Sort key for value-canonical accumulation: by segment, then by a
    monotone big-endian byte encoding of the row's float64 bits."""
    v = values + 0.0  # normalizes -0.0 to +0.0
    u = v.view(np.uint64)
    neg = v < 0.0
    cu = np.where(neg, ~u, u | np.uint64(1 << 63))
    be = cu.astype(">u8")  # big-endian bytes compare like the values
    key = np.ascontiguousarray(be).view(f"S{8 * max(values.shape[1], 1)}").reshape(-1)
    return np.lexsort((key, segments))


def segment_sum(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Per-segment sums of rows, accumulated in value-canonical order so the
    result is bitwise independent of row order within each segment."""
    segments = np.asarray(segments, dtype=np.int64)
    if segments.ndim != 1 or len(segments) != x.shape[0]:
        raise ShapeMismatch(f"segments shape {segments.shape} vs {x.shape[0]} rows")
    if len(segments) and (segments.min() < 0 or segments.max() >= n_segments):
        raise ShapeMismatch(f"segment id out of range [0, {n_segments})")
    d = x.shape[1]
    out_data = np.zeros((n_segments, d))
    if len(segments) and d:
        order = _canonical_order(x.data, segments)
        seg_sorted = segments[order]
        rows_sorted = x.data[order]
        starts = np.flatnonzero(np.r_[True, seg_sorted[1:] != seg_sorted[:-1]])
        counts = np.diff(np.r_[starts, len(seg_sorted)])
        rank = np.arange(len(seg_sorted)) - np.repeat(starts, counts)
        rank_order = np.argsort(rank, kind="stable")
        ranks = rank[rank_order]
        blocks = np.flatnonzero(np.r_[True, ranks[1:] != ranks[:-1]])
        ends = np.r_[blocks[1:], len(ranks)]
        for b0, b1 in zip(blocks, ends):
            sel = rank_order[b0:b1]
            out_data[seg_sorted[sel]] += rows_sorted[sel]
    out = Tensor(out_data, parents=(x,))

    def back():
        x._accum(out.grad[segments])

    out._backward = back
    return out


def mean_rows(x: Tensor) -> Tensor:
    n = x.shape[0]
    if n == 0:
        raise ShapeMismatch("mean_rows of zero rows")
    out = Tensor(x.data.mean(axis=0, keepdims=True), parents=(x,))

    def back():
        x._accum(np.broadcast_to(out.grad / n, x.data.shape))

    out._backward = back
    return out


def scale_rows(x: Tensor, factors: np.ndarray) -> Tensor:
    """Scale each row by a constant (non-differentiated) factor."""
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (x.shape[0],):
        raise ShapeMismatch(f"factors shape {factors.shape} vs {x.shape[0]} rows")
    col = factors[:, None]
    out = Tensor(x.data * col, parents=(x,))

    def back():
        x._accum(out.grad * col)

    out._backward = back
    return out


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = _as_2d(np.asarray(target, dtype=np.float64))
    if target.shape != pred.shape:
        raise ShapeMismatch(f"mse target {target.shape} vs pred {pred.shape}")
    n = pred.data.size
    if n == 0:
        raise ShapeMismatch("mse over zero elements")
    diff = pred.data - target
    out = Tensor(np.array([[float((diff * diff).sum() / n)]]), parents=(pred,))

    def back():
        pred._accum(out.grad * (2.0 / n) * diff)

    out._backward = back
    return out


def softmax_xent_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of row-softmax against integer class labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"labels shape {labels.shape} vs {n} rows")
    if n == 0:
        raise ShapeMismatch("cross-entropy over zero rows")
    if len(labels) and (labels.min() < 0 or labels.max() >= k):
        raise ShapeMismatch(f"label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    nll = -(z[np.arange(n), labels] - np.log(ez.sum(axis=1)))
    out = Tensor(np.array([[float(nll.mean())]]), parents=(logits,))

    def back():
        g = p.copy()
        g[np.arange(n), labels] -= 1.0
        logits._accum(out.grad * g / n)

    out._backward = back
    return out
