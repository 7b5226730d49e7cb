"""Define-by-run reverse-mode differentiation with respect to network parameters.

Only parameter gradients are exposed.  Inputs to the network enter the tape as
constants, so nothing here can be used to form derivatives in space.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import re

import numpy as np


class ParamVector:
    """Flat float64 parameter store with a named segment layout.

    ``layout`` is a list of ``(name, shape)`` pairs; each segment is a view into
    ``values`` so that optimizers can update the flat array in place.
    """

    def __init__(self, layout, values=None):
        self.layout = [(name, tuple(int(s) for s in shape)) for name, shape in layout]
        self._offsets = {}
        offset = 0
        for name, shape in self.layout:
            size = int(np.prod(shape, dtype=np.int64))
            self._offsets[name] = (offset, size, shape)
            offset += size
        if values is None:
            values = np.zeros(offset)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (offset,):
            raise ValueError(f"expected {offset} parameters, got shape {values.shape}")
        self.values = values

    def __len__(self):
        return self.values.size

    def __getitem__(self, name):
        offset, size, shape = self._offsets[name]
        return self.values[offset:offset + size].reshape(shape)

    def segment(self, name):
        return self._offsets[name]

    def names(self):
        return [name for name, _ in self.layout]

    def copy(self):
        return ParamVector(self.layout, self.values.copy())

    def zeros_like(self):
        return ParamVector(self.layout)

    def same_layout(self, other):
        return self.layout == other.layout


@dataclass(frozen=True)
class Activation:
    """Elementwise activation; ``param`` is alpha for LReLU and beta for SWISH."""

    kind: str
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lrelu", "elu", "tanh", "swish", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "lrelu" and self.param <= 0:
            raise ValueError("LReLU slope must be positive")

    @classmethod
    def parse(cls, text):
        """Parse ``"tanh"``, ``"swish"``, ``"lrelu(0.1)"`` or ``"swish(2)"``."""
        if isinstance(text, Activation):
            return text
        return _parse_activation(cls, text)

    @staticmethod
    def _from_text(cls, text):
        m = re.fullmatch(r"\s*([a-zA-Z]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse activation {text!r}")
        kind = m.group(1).lower()
        if m.group(2) is not None:
            return cls(kind, float(m.group(2)))
        return cls(kind, {"lrelu": 0.01, "swish": 1.0}.get(kind, 0.0))

    def __str__(self):
        if self.kind in ("lrelu", "swish"):
            return f"{self.kind}({self.param:g})"
        return self.kind

    def __call__(self, z):
        return self.value_and_slope(z, need_slope=False)[0]

    def apply_(self, z):
        """Value only, overwriting the scratch array ``z`` where possible."""
        k = self.kind
        if k == "swish":
            t = np.multiply(z, -self.param)
            with np.errstate(over="ignore"):
                np.exp(t, out=t)
            t += 1.0
            return np.divide(z, t, out=t)
        if k == "tanh":
            return np.tanh(z, out=z)
        if k == "lrelu":
            return np.maximum(z, self.param * z, out=z) if self.param <= 1 else \
                np.minimum(z, self.param * z, out=z)
        if k == "elu":
            neg = np.minimum(z, 0.0)
            np.expm1(neg, out=neg)
            return np.where(z > 0, z, neg)
        return z

    def value_and_slope(self, z, need_slope=True):
        k = self.kind
        if k == "tanh":
            t = np.tanh(z)
            return t, (1.0 - t * t if need_slope else None)
        if k == "swish":
            with np.errstate(over="ignore"):
                s = 1.0 / (1.0 + np.exp(-self.param * z))
            y = z * s
            return y, (s + self.param * y * (1.0 - s) if need_slope else None)
        if k == "lrelu":
            pos = z > 0
            y = np.where(pos, z, self.param * z)
            return y, (np.where(pos, 1.0, self.param) if need_slope else None)
        if k == "elu":
            # ELU with unit scale
            e = np.expm1(np.minimum(z, 0.0))
            y = np.where(z > 0, z, e)
            return y, (np.where(z > 0, 1.0, e + 1.0) if need_slope else None)
        return z, (np.ones_like(z) if need_slope else None)


@lru_cache(maxsize=None)
def _parse_activation(cls, text):
    return cls._from_text(cls, text)


class Node:
    __slots__ = ("value", "parents", "op", "aux", "index")

    def __init__(self, value, parents=(), op=None, aux=None, index=-1):
        self.value = value
        self.parents = parents
        self.op = op
        self.aux = aux
        self.index = index

    @property
    def shape(self):
        return np.shape(self.value)


# op name -> (forward(aux, *inputs) -> (value, saved), backward(g, saved, aux, *inputs))
def _affine_fwd(aux, w, b, x):
    return x @ w.T + b, None


def _affine_bwd(g, saved, aux, w, b, x):
    g2 = g.reshape(-1, w.shape[0])
    x2 = x.reshape(-1, w.shape[1])
    return g2.T @ x2, g2.sum(axis=0), g @ w


def _act_fwd(act, x):
    return act.value_and_slope(x)


def _act_bwd(g, slope, act, x):
    return (g * slope,)


def _mul_bwd(g, saved, aux, a, b):
    return _unbroadcast(g * b, np.shape(a)), _unbroadcast(g * a, np.shape(b))


_OPS = {
    "affine": (_affine_fwd, _affine_bwd),
    "activation": (_act_fwd, _act_bwd),
    "add": (lambda aux, a, b: (a + b, None),
            lambda g, s, aux, a, b: (_unbroadcast(g, np.shape(a)), _unbroadcast(g, np.shape(b)))),
    "sub": (lambda aux, a, b: (a - b, None),
            lambda g, s, aux, a, b: (_unbroadcast(g, np.shape(a)), -_unbroadcast(g, np.shape(b)))),
    "mul": (lambda aux, a, b: (a * b, None), _mul_bwd),
    "scale": (lambda c, a: (a * c, None), lambda g, s, c, a: (g * c,)),
    "square": (lambda aux, a: (a * a, None), lambda g, s, aux, a: (2.0 * a * g,)),
    "column": (lambda aux, a: (a[:, 0], None), lambda g, s, aux, a: (g[:, None],)),
    "sum": (lambda aux, a: (np.sum(a), None), lambda g, s, aux, a: (np.full(np.shape(a), g),)),
    "mean": (lambda aux, a: (np.sum(a) / np.size(a), None),
             lambda g, s, aux, a: (np.full(np.shape(a), g / np.size(a)),)),
}


class Tape:
    """Append-only operation record bound to one ParamVector.

    Nodes are stored in creation order, which is a topological order, so the
    backward sweep is a reversed walk over ``nodes``.
    """

    def __init__(self, params: ParamVector):
        self.params = params
        self.nodes = []
        self._saved = []
        self._param_nodes = {}

    def _leaf(self, value, source=None):
        node = Node(value, (), None, source, len(self.nodes))
        self.nodes.append(node)
        self._saved.append(None)
        return node

    def _record(self, op, parents, aux=None):
        value, saved = _OPS[op][0](aux, *(p.value for p in parents))
        node = Node(value, tuple(parents), op, aux, len(self.nodes))
        self.nodes.append(node)
        self._saved.append(saved)
        return node

    def param(self, name):
        """Leaf node for a parameter segment (cached per tape)."""
        node = self._param_nodes.get(name)
        if node is None:
            node = self._leaf(self.params[name], source=name)
            self._param_nodes[name] = node
        return node

    def constant(self, value):
        return self._leaf(np.asarray(value, dtype=np.float64))

    def stop_gradient(self, x):
        """Constant copy of ``x``: the value passes, no adjoint reaches its producers."""
        value = x.value if isinstance(x, Node) else x
        return self.constant(np.array(value, dtype=np.float64, copy=True))

    def affine(self, W, b, x):
        """Row-batched ``x @ W.T + b``; ``x`` may be a single vector or (batch, n)."""
        w, bv, xv = W.value, b.value, x.value
        if w.ndim != 2 or bv.shape != (w.shape[0],) or xv.shape[-1] != w.shape[1]:
            raise ValueError(
                f"affine shape mismatch: W{w.shape}, b{bv.shape}, x{xv.shape}")
        return self._record("affine", (W, b, x))

    def activation(self, act, x):
        return self._record("activation", (x,), Activation.parse(act))

    def add(self, a, b):
        return self._record("add", (a, b))

    def sub(self, a, b):
        return self._record("sub", (a, b))

    def mul(self, a, b):
        return self._record("mul", (a, b))

    def scale(self, a, c):
        return self._record("scale", (a,), float(c))

    def square(self, a):
        return self._record("square", (a,))

    def column(self, a):
        """First column of an (n, k) node as an (n,) node."""
        return self._record("column", (a,))

    def sum(self, a):
        return self._record("sum", (a,))

    def mean(self, a):
        return self._record("mean", (a,))

    def replay(self):
        """Re-run every recorded op from the leaves; returns the last node's value.

        Parameter leaves are re-read from the bound ParamVector, so replaying
        after an in-place parameter change evaluates the same expression at
        the new parameters.
        """
        for i, node in enumerate(self.nodes):
            if node.op is None:
                if node.aux is not None:
                    node.value = self.params[node.aux]
                continue
            node.value, self._saved[i] = _OPS[node.op][0](
                node.aux, *(p.value for p in node.parents))
        return self.nodes[-1].value if self.nodes else None

    def backward(self, loss):
        """Gradient of a recorded scalar with respect to the tape's parameters."""
        if (not isinstance(loss, Node) or not 0 <= loss.index < len(self.nodes)
                or self.nodes[loss.index] is not loss):
            raise ValueError("loss is not a node of this tape")
        if np.ndim(loss.value) != 0:
            raise ValueError(f"loss must be a scalar, got shape {np.shape(loss.value)}")
        adj = [None] * len(self.nodes)
        adj[loss.index] = np.float64(1.0)
        for i in range(loss.index, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or node.op is None:
                continue
            grads = _OPS[node.op][1](g, self._saved[i], node.aux, *(p.value for p in node.parents))
            for parent, pg in zip(node.parents, grads):
                j = parent.index
                adj[j] = pg if adj[j] is None else adj[j] + pg
        grad = self.params.zeros_like()
        for name, node in self._param_nodes.items():
            if adj[node.index] is not None:
                grad[name][...] = adj[node.index]
        return grad


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(tape: Tape, loss: Node) -> ParamVector:
    return tape.backward(loss)


def stop_gradient(tape: Tape, x):
    return tape.stop_gradient(x)
