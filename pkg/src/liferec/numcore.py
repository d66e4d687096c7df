"""Dense float64 linear algebra, a reverse-mode tape, Adam and SVD diagnostics.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Every
differentiable primitive exists twice with identical arithmetic: as a method
on :class:`Eager` (plain arrays in, plain arrays out) and as a method on
:class:`Tape` (nodes in, nodes out, recorded for :func:`backward`). Model code
is written once against either object, so taped and untaped forward passes
are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

ELEMENTWISE_KINDS = ("add", "sub", "mul", "sigmoid", "tanh")


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return _check_finite(a, "input")


def _check_finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(value).all():
        raise FloatingPointError(f"non-finite value produced by {op}")
    return value


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free and gives exactly 0.5 at 0
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul operands must be 2-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul")


def elementwise(kind: str, a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = None if b is None else np.asarray(b, dtype=np.float64)
    if kind in ("add", "sub", "mul"):
        if b is None:
            raise ContractError(f"{kind} needs two operands")
        if a.shape != b.shape:
            raise ShapeError(f"{kind}: {a.shape} vs {b.shape}")
        out = a + b if kind == "add" else a - b if kind == "sub" else a * b
    elif kind == "sigmoid":
        out = sigmoid(a)
    elif kind == "tanh":
        out = np.tanh(a)
    else:
        raise ContractError(f"unknown elementwise kind {kind!r}")
    return _check_finite(out, kind)


# -- fused losses -----------------------------------------------------------

def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean sigmoid cross-entropy over all entries."""
    x = logits
    per = np.maximum(x, 0.0) - x * targets + np.log1p(np.exp(-np.abs(x)))
    return float(per.mean())


def softmax_xent(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean softmax cross-entropy over rows; targets are one-hot rows."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    per = lse - (z * targets).sum(axis=1)
    return float(per.mean())


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


class Eager:
    """Untaped counterparts of the :class:`Tape` methods."""

    @staticmethod
    def param(value, name=None):
        return value

    @staticmethod
    def const(value):
        return value

    @staticmethod
    def value(x):
        return x

    matmul = staticmethod(matmul)

    @staticmethod
    def add(a, b):
        return elementwise("add", a, b)

    @staticmethod
    def sub(a, b):
        return elementwise("sub", a, b)

    @staticmethod
    def mul(a, b):
        return elementwise("mul", a, b)

    @staticmethod
    def sigmoid(a):
        return elementwise("sigmoid", a)

    @staticmethod
    def tanh(a):
        return elementwise("tanh", a)

    @staticmethod
    def add_row(a, row):
        if row.shape != (1, a.shape[1]):
            raise ShapeError(f"add_row: {a.shape} + {row.shape}")
        return a + row

    @staticmethod
    def transpose(a):
        return a.T.copy()

    @staticmethod
    def cols(a, start, stop):
        return a[:, start:stop]

    @staticmethod
    def concat_rows(parts):
        return np.concatenate(parts, axis=0)

    @staticmethod
    def sum(a):
        return np.array([[a.sum()]])

    @staticmethod
    def scale(a, s):
        return a * s

    @staticmethod
    def bce_with_logits(logits, targets):
        return np.array([[bce_with_logits(logits, targets)]])

    @staticmethod
    def softmax_xent(logits, targets):
        return np.array([[softmax_xent(logits, targets)]])


@dataclass
class Node:
    index: int
    op: str
    inputs: tuple
    value: np.ndarray
    requires_grad: bool
    name: Optional[str] = None
    cache: object = None


class Tape:
    """Records primitive ops in execution order for one forward/backward pass."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: Dict[str, int] = {}

    def _push(self, op, inputs, value, cache=None, name=None, requires_grad=None):
        if requires_grad is None:
            requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        node = Node(len(self.nodes), op, tuple(inputs), value, requires_grad, name, cache)
        self.nodes.append(node)
        return node

    def param(self, value, name: str) -> Node:
        if name in self.params:
            raise ContractError(f"parameter {name!r} already on tape")
        node = self._push("param", (), as_matrix(value), name=name, requires_grad=True)
        self.params[name] = node.index
        return node

    def const(self, value) -> Node:
        return self._push("const", (), as_matrix(value), requires_grad=False)

    @staticmethod
    def value(node: Node) -> np.ndarray:
        return node.value

    def matmul(self, a: Node, b: Node) -> Node:
        return self._push("matmul", (a.index, b.index), matmul(a.value, b.value))

    def add(self, a, b):
        return self._push("add", (a.index, b.index), elementwise("add", a.value, b.value))

    def sub(self, a, b):
        return self._push("sub", (a.index, b.index), elementwise("sub", a.value, b.value))

    def mul(self, a, b):
        return self._push("mul", (a.index, b.index), elementwise("mul", a.value, b.value))

    def sigmoid(self, a):
        return self._push("sigmoid", (a.index,), elementwise("sigmoid", a.value))

    def tanh(self, a):
        return self._push("tanh", (a.index,), elementwise("tanh", a.value))

    def add_row(self, a, row):
        return self._push("add_row", (a.index, row.index), Eager.add_row(a.value, row.value))

    def transpose(self, a):
        return self._push("transpose", (a.index,), Eager.transpose(a.value))

    def cols(self, a, start, stop):
        return self._push("cols", (a.index,), Eager.cols(a.value, start, stop), cache=(start, stop))

    def concat_rows(self, parts):
        sizes = [p.value.shape[0] for p in parts]
        value = Eager.concat_rows([p.value for p in parts])
        return self._push("concat_rows", [p.index for p in parts], value, cache=sizes)

    def sum(self, a):
        return self._push("sum", (a.index,), Eager.sum(a.value))

    def scale(self, a, s: float):
        return self._push("scale", (a.index,), Eager.scale(a.value, s), cache=float(s))

    def bce_with_logits(self, logits, targets: np.ndarray):
        value = _check_finite(Eager.bce_with_logits(logits.value, targets), "bce")
        return self._push("bce", (logits.index,), value, cache=targets)

    def softmax_xent(self, logits, targets: np.ndarray):
        value = _check_finite(Eager.softmax_xent(logits.value, targets), "softmax_xent")
        return self._push("softmax_xent", (logits.index,), value, cache=targets)


def _vjp(tape: Tape, node: Node, g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
    vals = [tape.nodes[i].value for i in node.inputs]
    op = node.op
    if op == "matmul":
        a, b = vals
        return g @ b.T, a.T @ g
    if op == "add":
        return g, g
    if op == "sub":
        return g, -g
    if op == "mul":
        a, b = vals
        return g * b, g * a
    if op == "sigmoid":
        y = node.value
        return (g * y * (1.0 - y),)
    if op == "tanh":
        y = node.value
        return (g * (1.0 - y * y),)
    if op == "add_row":
        return g, g.sum(axis=0, keepdims=True)
    if op == "transpose":
        return (g.T,)
    if op == "cols":
        start, stop = node.cache
        full = np.zeros_like(vals[0])
        full[:, start:stop] = g
        return (full,)
    if op == "concat_rows":
        bounds = np.cumsum(node.cache)[:-1]
        return tuple(np.split(g, bounds, axis=0))
    if op == "sum":
        return (np.full_like(vals[0], g[0, 0]),)
    if op == "scale":
        return (g * node.cache,)
    if op == "bce":
        x, t = vals[0], node.cache
        return (g[0, 0] * (sigmoid(x) - t) / x.size,)
    if op == "softmax_xent":
        x, t = vals[0], node.cache
        return (g[0, 0] * (_softmax(x) - t) / x.shape[0],)
    raise ContractError(f"no gradient rule for op {op!r}")


def backward(tape: Tape, loss: Node) -> Dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` node w.r.t. every parameter on ``tape``."""
    if loss.value.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.value.shape}")
    grads: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    grads[loss.index] = np.ones((1, 1))
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = grads[node.index]
        if g is None or not node.requires_grad or not node.inputs:
            continue
        for i, gi in zip(node.inputs, _vjp(tape, node, g)):
            if not tape.nodes[i].requires_grad:
                continue
            grads[i] = gi if grads[i] is None else grads[i] + gi
    out = {}
    for name, idx in tape.params.items():
        g = grads[idx]
        out[name] = np.zeros_like(tape.nodes[idx].value) if g is None else _check_finite(g, "backward")
    return out


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads)
    s = max_norm / norm
    return {k: g * s for k, g in grads.items()}


# -- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def reset(self):
        """Drop moments and the step count (used after a width change)."""
        self.step = 0
        self.m.clear()
        self.v.clear()


def adam_step(params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """Bias-corrected Adam update, in place. Returns ``(params, state)``."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam: grad {name} {g.shape} vs param {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeError(f"adam: moment {name} {state.m[name].shape} vs param {p.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in params:
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# -- SVD / conditioning -----------------------------------------------------

def _round_robin(n: int):
    """Disjoint column pairings covering every pair once per sweep."""
    idx = list(range(n)) + ([-1] if n % 2 else [])
    size = len(idx)
    rounds = []
    for _ in range(size - 1):
        pairs = [(idx[i], idx[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def singular_values(a, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Singular values (descending) by one-sided Jacobi rotations."""
    u = as_matrix(a)
    if u.size == 0:
        raise ContractError("empty matrix")
    if u.shape[0] < u.shape[1]:
        u = u.T
    if u.shape[0] > 2 * u.shape[1]:
        # same singular values, far fewer rows to rotate
        u = np.linalg.qr(u, mode="r")
    u = u.copy()
    n = u.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(u[:, 0])])
    rounds = _round_robin(n)
    # columns shrunk to rounding level carry no direction worth orthogonalizing
    negligible = (np.finfo(np.float64).eps * np.linalg.norm(u)) ** 2
    for _ in range(max_sweeps):
        worst = 0.0
        for p, q in rounds:
            up, uq = u[:, p], u[:, q]
            alpha = np.einsum("ij,ij->j", up, up)
            beta = np.einsum("ij,ij->j", uq, uq)
            gamma = np.einsum("ij,ij->j", up, uq)
            denom = np.sqrt(alpha * beta)
            live = (alpha > negligible) & (beta > negligible)
            with np.errstate(divide="ignore", invalid="ignore"):
                off = np.where(live, np.abs(gamma) / denom, 0.0)
            worst = max(worst, float(off.max()))
            act = off > tol
            if not act.any():
                continue
            p, q = p[act], q[act]
            up, uq = up[:, act], uq[:, act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            u[:, p] = c * up - s * uq
            u[:, q] = s * up + c * uq
        if worst <= tol:
            break
    return np.sort(np.linalg.norm(u, axis=0))[::-1]


def condition_number(a, rank_rtol: Optional[float] = None) -> float:
    """Ratio of extreme singular values; ``inf`` for (numerically) singular input.

    A matrix is treated as singular when its smallest singular value is below
    1e-300 or below ``rank_rtol * sigma_max`` (default ``max(m, n) * eps``).
    """
    a = as_matrix(a)
    sv = singular_values(a)
    smax, smin = sv[0], sv[-1]
    if rank_rtol is None:
        rank_rtol = max(a.shape) * np.finfo(np.float64).eps
    if smin < 1e-300 or smin <= rank_rtol * smax:
        return float("inf")
    return float(smax / smin)


def finite_difference_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place, restored)."""
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        out[i] = (np.asarray(fp).item() - np.asarray(fm).item()) / (2.0 * h)
    return out
