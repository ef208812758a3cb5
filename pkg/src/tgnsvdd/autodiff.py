"""Reverse-mode automatic differentiation on numpy arrays.

A deliberately small tape: each op builds a :class:`Tensor` holding the
forward value plus a closure that routes the output gradient to its parents.
``backward`` topologically sorts the implicit graph from the loss and applies
the chain rule.  Everything is float64; the op set is exactly what the
temporal-graph encoder and the one-class head need (2-D matmul, broadcasting
add/mul, concat/slice/reshape/transpose, row gather/scatter, pointwise
nonlinearities, softmax, reductions) plus a fused GRU cell backed by the
kernel backend.

Also here: AdamW-style optimizer (decoupled weight decay, applied only to
parameters flagged ``decay=True``), a central-difference gradient checker,
and a JSON parameter checkpoint container.
"""

from __future__ import annotations

import json
from contextlib import contextmanager

import numpy as np

from .kernels import get_kernels


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested op."""


class GradError(ValueError):
    """Backward-pass misuse (non-scalar loss, missing gradients, ...)."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference/replay paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False, parents=(), bwd=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        track = _GRAD_ENABLED and (requires_grad or any(p.requires_grad for p in parents))
        self.requires_grad = track
        self._parents = tuple(parents) if track else ()
        self._bwd = bwd if track else None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, params=None):
        backward(self, params)

    # operator sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not part of the op set")
        return mul(self, _wrap(1.0 / other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return slice_(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor; ``decay`` marks it for weight decay."""

    __slots__ = ("name", "decay")

    def __init__(self, data, name: str, decay: bool = True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.decay = decay

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x) -> Tensor:
    """A non-trainable tensor (tape input that never needs a gradient)."""
    return Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor, params=None):
    """Populate ``grad`` on every tensor the scalar ``loss`` depends on.

    ``params`` (optional) is a list of parameters that should end up with a
    gradient even if the loss does not reach them (they get zeros) -- the
    optimizer treats a missing gradient as an error.
    """
    if loss.data.size != 1:
        raise GradError(f"loss must be scalar, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# op library
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast")

    def bwd(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out, parents=(a, b), bwd=bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        a._accumulate(-g)

    return Tensor(-a.data, parents=(a,), bwd=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"multiply: shapes {a.data.shape} and {b.data.shape} do not broadcast")

    def bwd(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out, parents=(a, b), bwd=bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} incompatible")

    def bwd(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return Tensor(a.data @ b.data, parents=(a, b), bwd=bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: shapes {[t.data.shape for t in tensors]} incompatible on axis {axis}"
        )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return Tensor(out, parents=tuple(tensors), bwd=bwd)


def slice_(a: Tensor, key) -> Tensor:
    out = a.data[key]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[key] = g
        a._accumulate(full)

    return Tensor(out, parents=(a,), bwd=bwd)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(g):
        a._accumulate(g.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), bwd=bwd)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        a._accumulate(g.transpose(inv))

    return Tensor(a.data.transpose(axes), parents=(a,), bwd=bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Rows ``a[idx]`` of a 2-D tensor; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows: expected 2-D tensor, got shape {a.data.shape}")

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return Tensor(a.data[idx], parents=(a,), bwd=bwd)


def scatter_rows(base: Tensor, idx, rows: Tensor) -> Tensor:
    """Copy of ``base`` with ``out[idx] = rows``; ``idx`` must be unique."""
    idx = np.asarray(idx, dtype=np.int64)
    if base.data.ndim != 2 or rows.data.shape != (len(idx), base.data.shape[1]):
        raise ShapeError(
            f"scatter_rows: base {base.data.shape}, rows {rows.data.shape}, idx {idx.shape}"
        )
    out = base.data.copy()
    out[idx] = rows.data

    def bwd(g):
        g_base = g.copy()
        g_base[idx] = 0.0
        base._accumulate(g_base)
        rows._accumulate(g[idx])

    return Tensor(out, parents=(base, rows), bwd=bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        a._accumulate(g * (1.0 - out * out))

    return Tensor(out, parents=(a,), bwd=bwd)


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)  # numerically stable logistic

    def bwd(g):
        a._accumulate(g * out * (1.0 - out))

    return Tensor(out, parents=(a,), bwd=bwd)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bwd(g):
        a._accumulate(g * (a.data > 0.0))

    return Tensor(out, parents=(a,), bwd=bwd)


def cos(a: Tensor) -> Tensor:
    def bwd(g):
        a._accumulate(-g * np.sin(a.data))

    return Tensor(np.cos(a.data), parents=(a,), bwd=bwd)


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)) computed stably; used by the cross-entropy decoder."""
    out = -np.logaddexp(0.0, -a.data)

    def bwd(g):
        a._accumulate(g * (0.5 * (np.tanh(-0.5 * a.data) + 1.0)))  # sigmoid(-x)

    return Tensor(out, parents=(a,), bwd=bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        a._accumulate(out * (g - dot))

    return Tensor(out, parents=(a,), bwd=bwd)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return Tensor(out, parents=(a,), bwd=bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if a.data.size == 0:
        raise ShapeError("mean: empty tensor")
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), _wrap(1.0 / count))


def squared_l2_norm(a: Tensor) -> Tensor:
    """Sum of squared entries, as a scalar tensor."""
    def bwd(g):
        a._accumulate(2.0 * g * a.data)

    return Tensor(np.sum(a.data * a.data), parents=(a,), bwd=bwd)


def gru_cell(x: Tensor, h: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor) -> Tensor:
    """Fused GRU cell (gates ordered reset, update, candidate).

    Forward and backward run in the selected kernel backend; both operands
    and all four weight tensors receive gradients.
    """
    K = get_kernels()
    if x.data.ndim != 2 or h.data.ndim != 2:
        raise ShapeError(f"gru_cell: x {x.data.shape} and h {h.data.shape} must be 2-D")
    if w_ih.data.shape != (3 * h.data.shape[1], x.data.shape[1]):
        raise ShapeError(
            f"gru_cell: w_ih {w_ih.data.shape} incompatible with x {x.data.shape}, h {h.data.shape}"
        )
    h_new, cache = K.gru_forward(x.data, h.data, w_ih.data, w_hh.data, b_ih.data, b_hh.data)

    def bwd(g):
        dx, dh, dw_ih, dw_hh, db_ih, db_hh = K.gru_backward(
            cache, w_ih.data, w_hh.data, np.ascontiguousarray(g)
        )
        x._accumulate(dx)
        h._accumulate(dh)
        w_ih._accumulate(dw_ih)
        w_hh._accumulate(dw_hh)
        b_ih._accumulate(db_ih)
        b_hh._accumulate(db_hh)

    return Tensor(h_new, parents=(x, h, w_ih, w_hh, b_ih, b_hh), bwd=bwd)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class Adam:
    """Adam with decoupled weight decay.

    Decay is applied multiplicatively before the moment update and only to
    parameters with ``decay=True``, so the hypersphere center can be excluded
    from the regularizer while sharing one optimizer.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                name = getattr(p, "name", "<unnamed>")
                raise GradError(f"parameter {name} has no gradient; run backward first")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            if self.weight_decay and getattr(p, "decay", True):
                p.data *= 1.0 - self.lr * self.weight_decay
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self):
        zero_grads(self.params)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def grad_check(f, params, eps: float = 1e-5) -> float:
    """Max discrepancy between analytic and central-difference gradients.

    ``f`` rebuilds the scalar loss from the current parameter values on each
    call.  Per element the error is |analytic - numeric| / max(|analytic|,
    |numeric|, 1), so tiny gradients are compared absolutely.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    params = list(params)
    zero_grads(params)
    loss = f()
    backward(loss, params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def params_to_payload(params) -> dict:
    """JSON-ready mapping name -> {shape, row-major values}."""
    payload = {}
    for p in params:
        payload[p.name] = {
            "shape": list(p.data.shape),
            "values": [float(v) for v in p.data.reshape(-1)],
        }
    return payload


def params_from_payload(payload: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, entry in payload.items():
        arr = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        out[name] = arr
    return out


def save_checkpoint(path, params, extra: dict | None = None):
    doc = {"version": CHECKPOINT_VERSION, "params": params_to_payload(params)}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "version" not in doc:
        raise ValueError(f"checkpoint {path} has no version field")
    arrays = params_from_payload(doc["params"])
    extra = {k: v for k, v in doc.items() if k not in ("version", "params")}
    return arrays, extra
