"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Every forward op appends a backward closure to the tape; ``Tape.backward``
replays the closures in exact reverse execution order and returns gradients
for the registered trainable leaves. All buffers are row-major float64, and
every op output is checked for NaN/Inf.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class RngSource:
    """Counter-split random streams derived from one master seed.

    Each call to ``stream()`` returns a fresh generator seeded by
    (master_seed, call_counter), so draws depend only on op order, never on
    thread scheduling.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._counter = 0

    def stream(self) -> np.random.Generator:
        g = np.random.default_rng([self.seed, self._counter])
        self._counter += 1
        return g


def _as_f64(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


def _check_finite(arr: np.ndarray, op: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A dense float64 array, optionally bound to a tape node."""

    __slots__ = ("data", "tape", "nid")

    def __init__(self, data, tape=None, nid=None):
        self.data = _as_f64(data)
        self.tape = tape
        self.nid = nid

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        kind = "leaf/op" if self.tape is not None else "const"
        return f"Tensor(shape={self.data.shape}, {kind})"


def constant(data) -> Tensor:
    return Tensor(data)


class Tape:
    """Wengert list: op records in execution order plus a trainable registry."""

    def __init__(self):
        self._ops = []  # (output node id, backward closure)
        self._next_nid = 0
        self._trainable = {}  # name -> leaf Tensor

    def _alloc(self) -> int:
        nid = self._next_nid
        self._next_nid += 1
        return nid

    def leaf(self, name: str | None, data, trainable=True) -> Tensor:
        t = Tensor(data, self, self._alloc())
        if trainable:
            if name is None:
                raise ValueError("trainable leaf requires a name")
            if name in self._trainable:
                raise ValueError(f"duplicate trainable leaf {name!r}")
            self._trainable[name] = t
        return t

    def leaves(self, arrays: dict) -> dict:
        """Register every named array as a trainable leaf; returns name -> Tensor."""
        return {name: self.leaf(name, arr) for name, arr in arrays.items()}

    def _record(self, out: Tensor, backward):
        self._ops.append((out.nid, backward))

    def backward(self, loss: Tensor) -> dict:
        """Reverse sweep from a scalar loss; returns {leaf name: gradient array}."""
        if loss.tape is not self:
            raise ValueError("loss was not produced on this tape")
        if loss.data.shape != ():
            raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")

        # slot = [array, owned]; borrowed arrays are never written in place
        grads = {loss.nid: [np.ones((), dtype=np.float64), True]}

        def accum(t: Tensor, g, owned=False):
            if t.tape is None:
                return
            slot = grads.get(t.nid)
            if slot is None:
                grads[t.nid] = [g, owned]
            elif slot[1]:
                slot[0] += g
            else:
                grads[t.nid] = [slot[0] + g, True]

        for out_nid, bw in reversed(self._ops):
            slot = grads.pop(out_nid, None)
            if slot is None:
                continue  # node does not influence the loss
            bw(slot[0], accum)

        out = {}
        for name, t in self._trainable.items():
            slot = grads.get(t.nid)
            out[name] = np.zeros_like(t.data) if slot is None else slot[0]
        return out


def _bind(inputs) -> tuple:
    """Common tape of the inputs (all on-tape inputs must share one)."""
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError("inputs live on different tapes")
    return tape


def _emit(data, inputs, backward, op: str) -> Tensor:
    _check_finite(data, op)
    tape = _bind(inputs)
    if tape is None:
        return Tensor(data)
    out = Tensor(data, tape, tape._alloc())
    tape._record(out, backward)
    return out


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bw(g, accum):
        accum(a, g @ b.data.T, owned=True)
        accum(b, a.data.T @ g, owned=True)

    return _emit(out, (a, b), bw, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias broadcast over the rows of a."""
    if a.shape == b.shape:
        def bw(g, accum):
            accum(a, g)
            accum(b, g)
        return _emit(a.data + b.data, (a, b), bw, "add")
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def bw(g, accum):
            accum(a, g)
            accum(b, g.sum(axis=0), owned=True)
        return _emit(a.data + b.data, (a, b), bw, "add")
    raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} - {b.shape}")

    def bw(g, accum):
        accum(a, g)
        accum(b, -g, owned=True)

    return _emit(a.data - b.data, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}")

    def bw(g, accum):
        accum(a, g * b.data, owned=True)
        accum(b, g * a.data, owned=True)

    return _emit(a.data * b.data, (a, b), bw, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g, accum):
        accum(a, g * c, owned=True)

    return _emit(a.data * c, (a,), bw, "scale")


def scale_rows(a: Tensor, factors) -> Tensor:
    """Multiply row i of a 2-D tensor by the constant scalar factors[i]."""
    v = _as_f64(factors)
    if a.data.ndim != 2 or v.shape != (a.shape[0],):
        raise ValueError(f"scale_rows shape mismatch: {a.shape} rows vs {v.shape}")
    col = v[:, None]

    def bw(g, accum):
        accum(a, g * col, owned=True)

    return _emit(a.data * col, (a,), bw, "scale_rows")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g, accum):
        accum(a, g * (out > 0.0), owned=True)

    return _emit(out, (a,), bw, "relu")


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data)

    def bw(g, accum):
        accum(a, g * (out * (1.0 - out)), owned=True)

    return _emit(out, (a,), bw, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g, accum):
        accum(a, g * (1.0 - out * out), owned=True)

    return _emit(out, (a,), bw, "tanh")


def concat(parts, axis: int) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat of nothing")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g, accum):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            accum(p, g[tuple(idx)])

    return _emit(out, parts, bw, "concat")


def slice_rows(a: Tensor, i0: int, i1: int) -> Tensor:
    """Contiguous row block a[i0:i1] as a fresh tensor."""
    if a.data.ndim != 2 or not (0 <= i0 <= i1 <= a.shape[0]):
        raise ValueError(f"slice_rows [{i0}:{i1}] out of range for {a.shape}")
    out = a.data[i0:i1].copy()

    def bw(g, accum):
        full = np.zeros_like(a.data)
        full[i0:i1] = g
        accum(a, full, owned=True)

    return _emit(out, (a,), bw, "slice_rows")


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    """Contiguous column block a[:, j0:j1] as a fresh tensor."""
    if a.data.ndim != 2 or not (0 <= j0 <= j1 <= a.shape[1]):
        raise ValueError(f"slice_cols [{j0}:{j1}] out of range for {a.shape}")
    out = a.data[:, j0:j1].copy()

    def bw(g, accum):
        full = np.zeros_like(a.data)
        full[:, j0:j1] = g
        accum(a, full, owned=True)

    return _emit(out, (a,), bw, "slice_cols")


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows a[idx]; gradient scatter-adds back into the same rows."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise ValueError("gather_rows needs a 2-D tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError("gather_rows index out of range")
    out = a.data[idx]

    def bw(g, accum):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        accum(a, full, owned=True)

    return _emit(out, (a,), bw, "gather_rows")


def row_dot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise inner product of two [n x d] tensors, returned as [n x 1]."""
    if a.shape != b.shape or a.data.ndim != 2:
        raise ValueError(f"row_dot shape mismatch: {a.shape} . {b.shape}")
    out = np.sum(a.data * b.data, axis=1, keepdims=True)

    def bw(g, accum):
        accum(a, g * b.data, owned=True)
        accum(b, g * a.data, owned=True)

    return _emit(out, (a, b), bw, "row_dot")


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def bw(g, accum):
        accum(a, np.full_like(a.data, float(g)), owned=True)

    return _emit(out, (a,), bw, "sum_all")


class EdgeSum:
    """Frozen weighted neighbor aggregation: out[i] = sum_j w_ij * feats[j].

    The (dst, src, weight) triples are fixed at construction; only the feature
    matrix is differentiable. Forward and backward are sparse matrix products.
    """

    def __init__(self, n_out: int, n_in: int, dst, src, weights):
        dst = np.asarray(dst, dtype=np.int64)
        src = np.asarray(src, dtype=np.int64)
        w = _as_f64(weights)
        if not (dst.shape == src.shape == w.shape):
            raise ValueError("dst, src, weights must have identical length")
        if dst.size:
            if dst.min() < 0 or dst.max() >= n_out:
                raise IndexError("destination index out of range")
            if src.min() < 0 or src.max() >= n_in:
                raise IndexError("source index out of range")
        self.n_out = int(n_out)
        self.n_in = int(n_in)
        self._fwd = sp.csr_matrix((w, (dst, src)), shape=(n_out, n_in))
        self._bwd = self._fwd.T.tocsr()


def gather_accumulate(es: EdgeSum, feats: Tensor) -> Tensor:
    if feats.data.ndim != 2 or feats.shape[0] != es.n_in:
        raise ValueError(f"gather_accumulate expects [{es.n_in} x d], got {feats.shape}")
    out = es._fwd @ feats.data

    def bw(g, accum):
        accum(feats, es._bwd @ g, owned=True)

    return _emit(out, (feats,), bw, "gather_accumulate")


def dropout(x: Tensor, p: float, training: bool, rng: RngSource) -> Tensor:
    """Inverted dropout: zero units with probability p, scale survivors by 1/(1-p).

    Eval mode is the exact identity (the input tensor is returned untouched).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.stream().random(x.data.shape) >= p) / (1.0 - p)

    def bw(g, accum):
        accum(x, g * keep, owned=True)

    return _emit(x.data * keep, (x,), bw, "dropout")


def softmax_cross_entropy(logits: Tensor, targets):
    """Mean negative log softmax likelihood; returns (scalar loss, probabilities).

    The cached probability rows are plain arrays outside the tape.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ValueError("logits must be [n x levels]")
    n, k = logits.shape
    if targets.shape != (n,):
        raise ValueError(f"targets shape {targets.shape} does not match {n} rows")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise IndexError("target level index out of range")
    _check_finite(logits.data, "softmax_cross_entropy")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    denom = ex.sum(axis=1, keepdims=True)
    probs = ex / denom
    log_probs = shifted - np.log(denom)
    loss = -log_probs[np.arange(n), targets].mean()

    def bw(g, accum):
        d = probs.copy()
        d[np.arange(n), targets] -= 1.0
        accum(logits, d * (float(g) / n), owned=True)

    return _emit(np.asarray(loss), (logits,), bw, "softmax_cross_entropy"), probs
