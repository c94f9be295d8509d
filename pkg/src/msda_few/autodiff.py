"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
local backward rule. Calling :func:`backward` on a scalar tensor walks the
graph in reverse topological order and accumulates ``.grad`` on every tensor
that requires it.

Broadcasting is deliberately narrow: equal shapes, a scalar against anything,
or a length-``n`` vector against the rows of an ``m x n`` matrix.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import ContractError, DimensionError, NumericError, ParameterError

LOG_CLAMP = 1e-7


class Tensor:
    """A node in the computation graph.

    Leaves created directly by the user carry no parents; parameters are
    leaves with ``requires_grad=True``.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        value = np.asarray(value, dtype=np.float64)
        if not np.isfinite(value).all():
            raise NumericError(f"non-finite value entering graph at {name or 'node'}")
        self.value = value
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents: Sequence[Tensor], backward_fn: Callable, name: str) -> Tensor:
    # backward_fn(g) returns one gradient (or None) per parent
    if not any(p.requires_grad for p in parents):
        return Tensor(value, name=name)
    return Tensor(value, name=name, _parents=tuple(parents), _backward=backward_fn)


# ----------------------------------------------------------------------------
# arithmetic
# ----------------------------------------------------------------------------

def _broadcast_kind(a: np.ndarray, b: np.ndarray, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if a.ndim == 0 or a.size == 1 and a.ndim <= 1:
        return "scalar_a"
    if b.ndim == 0 or b.size == 1 and b.ndim <= 1:
        return "scalar_b"
    if a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]:
        return "row_b"
    if b.ndim == 2 and a.ndim == 1 and a.shape[0] == b.shape[1]:
        return "row_a"
    raise DimensionError(f"cannot {op} shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, kind: str, side: str, shape) -> np.ndarray:
    if kind == "same":
        return g
    if kind == f"scalar_{side}":
        return np.asarray(g.sum()).reshape(shape)
    if kind == f"row_{side}":
        return g.sum(axis=0)
    return g


def elementwise(a, b, op: str) -> Tensor:
    """Element-wise ``add``, ``sub`` or ``mul`` with vector-over-rows broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    kind = _broadcast_kind(av, bv, op)
    if op == "add":
        out = av + bv

        def back(g):
            return _reduce_to(g, kind, "a", av.shape), _reduce_to(g, kind, "b", bv.shape)
    elif op == "sub":
        out = av - bv

        def back(g):
            return _reduce_to(g, kind, "a", av.shape), _reduce_to(-g, kind, "b", bv.shape)
    elif op == "mul":
        out = av * bv

        def back(g):
            return (_reduce_to(g * bv, kind, "a", av.shape),
                    _reduce_to(g * av, kind, "b", bv.shape))
    else:
        raise ParameterError(f"unknown element-wise op {op!r}")
    return _node(out, (a, b), back, op)


def add(a, b) -> Tensor:
    return elementwise(a, b, "add")


def sub(a, b) -> Tensor:
    return elementwise(a, b, "sub")


def mul(a, b) -> Tensor:
    return elementwise(a, b, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")

    def back(g):
        return g @ bv.T, av.T @ g

    return _node(av @ bv, (a, b), back, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.value.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _node(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    # split by sign so exp never overflows
    ex = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; gradient passes only where the input was inside."""
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _node(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise NumericError("log of non-positive value; clamp first")
    x = a.value
    return _node(np.log(x), (a,), lambda g: (g / x,), "log")


def clamped_log(a) -> Tensor:
    return log(clamp(a, LOG_CLAMP, 1.0 - LOG_CLAMP))


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs a matrix, got shape {x.shape}")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _node(s, (a,), back, "softmax")


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.value.shape
    return _node(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    if n == 0:
        raise ContractError("mean of empty tensor")
    shape = a.value.shape
    return _node(a.value.mean(), (a,), lambda g: (np.full(shape, g / n),), "mean")


def pick(a, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather ``a[rows[i], cols[i]]`` into a vector."""
    a = as_tensor(a)
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _node(a.value[rows, cols], (a,), back, "pick")


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return _node(a.value[start:stop], (a,), back, "slice")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = {p.value.shape[1:] for p in parts}
    if len(widths) != 1:
        raise DimensionError(f"concat_rows width mismatch: {[p.shape for p in parts]}")
    splits = np.cumsum([p.value.shape[0] for p in parts])[:-1]
    return _node(np.concatenate([p.value for p in parts], axis=0), parts,
                 lambda g: tuple(np.split(g, splits, axis=0)), "concat")


def row_outer(f, p) -> Tensor:
    """Per-row outer product flattened feature-major: entry ``k*c + i = f_k p_i``."""
    f, p = as_tensor(f), as_tensor(p)
    fv, pv = f.value, p.value
    if fv.ndim != 2 or pv.ndim != 2 or fv.shape[0] != pv.shape[0]:
        raise DimensionError(f"row_outer row mismatch: {fv.shape} vs {pv.shape}")
    m, lf = fv.shape
    c = pv.shape[1]
    out = (fv[:, :, None] * pv[:, None, :]).reshape(m, lf * c)

    def back(g):
        g3 = g.reshape(m, lf, c)
        return (g3 * pv[:, None, :]).sum(axis=2), (g3 * fv[:, :, None]).sum(axis=1)

    return _node(out, (f, p), back, "outer")


def dropout(a, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    a = as_tensor(a)
    if rng is None or rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    mask = (rng.random(a.value.shape) >= rate) / (1.0 - rate)
    return _node(a.value * mask, (a,), lambda g: (g * mask,), "dropout")


def grad_reverse(a, scale: float = 1.0) -> Tensor:
    """Identity forward; backward multiplies the upstream gradient by ``-scale``."""
    if scale < 0:
        raise ParameterError(f"gradient reversal scale must be >= 0, got {scale}")
    a = as_tensor(a)
    return _node(a.value.copy(), (a,), lambda g: (-scale * g,), "grad_reverse")


# ----------------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every node requiring grad."""
    if root.value.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


class GradCheckReport(dict):
    """``max_rel_error`` plus the location of the worst entry."""

    @property
    def max_rel_error(self) -> float:
        return self["max_rel_error"]


def check_gradients(loss_builder: Callable[[], Tensor | dict[str, Tensor]],
                    parameters: Sequence[Tensor], epsilon: float = 1e-5, floor: float = 1e-6
                    ) -> GradCheckReport | dict[str, GradCheckReport]:
    """Compare analytic gradients with central differences.

    ``loss_builder`` must rebuild the loss from the current parameter values
    every call; it may return one scalar or a dict of named scalars, which are
    then checked together and reported per name. The relative error of one
    entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    structurally-zero entries from dividing by zero.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    single = not isinstance(loss_builder(), dict)

    def evaluate():
        out = loss_builder()
        return {"loss": out} if single else out

    first = {k: v.value.copy() for k, v in evaluate().items()}
    second = evaluate()
    if any(not np.array_equal(first[k], second[k].value) for k in second):
        raise ContractError("loss_builder is not deterministic (two forward passes differ)")

    analytic: dict[str, list[np.ndarray]] = {}
    for key, loss in second.items():
        zero_grads(parameters)
        if isinstance(loss, Tensor) and loss.requires_grad:
            backward(loss)
        analytic[key] = [np.zeros_like(p.value) if p.grad is None else p.grad.copy()
                         for p in parameters]
    zero_grads(parameters)

    def scalar(t) -> float:
        return t.item() if isinstance(t, Tensor) else float(t)

    worst = {k: 0.0 for k in second}
    where: dict[str, tuple | None] = {k: None for k in second}
    for idx, p in enumerate(parameters):
        if not p.value.flags.c_contiguous:
            p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up = {k: scalar(v) for k, v in evaluate().items()}
            flat[j] = orig - epsilon
            down = {k: scalar(v) for k, v in evaluate().items()}
            flat[j] = orig
            for key in second:
                numeric = (up[key] - down[key]) / (2.0 * epsilon)
                a = analytic[key][idx].reshape(-1)[j]
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                if err > worst[key]:
                    worst[key] = err
                    where[key] = (p.name or f"param{idx}", j, float(a), numeric)
    n = int(sum(p.value.size for p in parameters))
    reports = {k: GradCheckReport(max_rel_error=worst[k], worst_entry=where[k], n_entries=n)
               for k in second}
    return reports["loss"] if single else reports
