"""Single AND/OR concept nodes under product fuzzy logic.

An AND node with signed weights ``A`` and bias ``a`` computes

    a * prod_j (1 - pos(A_j) (1 - c_j)) (1 - neg(A_j) c_j)

and an OR node with weights ``O`` and bias ``o`` computes

    1 - (1 - o) * prod_j (1 - pos(O_j) c_j) (1 - neg(O_j) (1 - c_j))

where ``pos(w) = max(w, 0)`` and ``neg(w) = max(-w, 0)``. A positive weight
selects the input itself, a negative one its negation. The batched layer
versions live in :mod:`nln.kernels`; this module is the readable scalar form.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, PreconditionError

CLAMP_WIDTH = 1e-12


def _clamp(v):
    if v < -CLAMP_WIDTH or v > 1.0 + CLAMP_WIDTH:
        raise DomainError(f"node output {v!r} left [0, 1] by more than rounding error")
    return min(max(v, 0.0), 1.0)


def _check_unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {v!r}")


@dataclass
class AndNode:
    weights: np.ndarray
    bias: float = 1.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        _check_unit("AND bias", self.bias)
        if np.any(np.abs(self.weights) > 1.0):
            raise DomainError("AND weights must lie in [-1, 1]")


@dataclass
class OrNode:
    weights: np.ndarray
    bias: float = 0.0
    allow_negation: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        _check_unit("OR bias", self.bias)
        if np.any(np.abs(self.weights) > 1.0):
            raise DomainError("OR weights must lie in [-1, 1]")
        if not self.allow_negation and np.any(self.weights < 0):
            raise DomainError("negative weight on an OR node without negation")


@dataclass
class NodeGradients:
    d_weights: np.ndarray
    d_bias: float
    d_inputs: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _inputs(node, inputs):
    c = np.asarray(inputs, dtype=np.float64).reshape(-1)
    if c.shape[0] != node.weights.shape[0]:
        raise DimensionError(f"node has fan-in {node.weights.shape[0]} but got {c.shape[0]} inputs")
    return c


def _and_factors(w, c):
    pos, neg = np.maximum(w, 0.0), np.maximum(-w, 0.0)
    return (1.0 - pos * (1.0 - c)) * (1.0 - neg * c)


def _or_factors(w, c):
    pos, neg = np.maximum(w, 0.0), np.maximum(-w, 0.0)
    return (1.0 - pos * c) * (1.0 - neg * (1.0 - c))


def and_forward(node, inputs):
    c = _inputs(node, inputs)
    return _clamp(node.bias * float(np.prod(_and_factors(node.weights, c))))


def or_forward(node, inputs):
    c = _inputs(node, inputs)
    return _clamp(1.0 - (1.0 - node.bias) * float(np.prod(_or_factors(node.weights, c))))


def forward(node, inputs):
    return and_forward(node, inputs) if isinstance(node, AndNode) else or_forward(node, inputs)


def _rest_products(f):
    # product of every factor but one, without dividing (factors may be 0)
    out = np.empty_like(f)
    for j in range(f.shape[0]):
        out[j] = np.prod(np.delete(f, j))
    return out


def node_backward(node, inputs, upstream_grad=1.0):
    """Partial derivatives of the node output, scaled by ``upstream_grad``.

    At a weight of exactly 0 the derivative is the sum of the two one-sided
    derivatives, so a parked weight can leave 0 with either sign.
    """
    c = _inputs(node, inputs)
    w = node.weights
    g = float(upstream_grad)
    if isinstance(node, AndNode):
        f = _and_factors(w, c)
        rest = node.bias * _rest_products(f)
        dfdw = np.where(w > 0, -(1.0 - c), np.where(w < 0, c, 2.0 * c - 1.0))
        return NodeGradients(g * rest * dfdw, g * float(np.prod(f)), g * rest * w)
    f = _or_factors(w, c)
    rest = (1.0 - node.bias) * _rest_products(f)
    dfdw = np.where(w > 0, c, np.where(w < 0, -(1.0 - c), 2.0 * c - 1.0))
    return NodeGradients(g * rest * dfdw, g * float(np.prod(f)), g * rest * w)


def demorgan_dual(node):
    """OR dual of an AND node (and back): negate the weights, complement the bias.

    ``1 - (1 - b)`` need not round back to ``b``, so a dual remembers its
    source and dualizing it again returns that source exactly, provided the
    dual was not modified in between.
    """
    src = getattr(node, "_dual_of", None)
    if src is not None and np.array_equal(-node.weights, src.weights) and node.bias == 1.0 - src.bias:
        if isinstance(src, AndNode):
            return AndNode(src.weights.copy(), src.bias)
        return OrNode(src.weights.copy(), src.bias, src.allow_negation)
    if isinstance(node, AndNode):
        dual = OrNode(-node.weights, 1.0 - node.bias, allow_negation=True)
    elif isinstance(node, OrNode):
        dual = AndNode(-node.weights, 1.0 - node.bias)
    else:
        raise TypeError(f"not a logic node: {node!r}")
    dual._dual_of = node
    return dual


def crisp_eval(node, inputs):
    """Classical truth value of a node with weights in {-1, 0, 1} and a full bias."""
    w = node.weights
    if not np.all(np.isin(w, (-1.0, 0.0, 1.0))):
        raise PreconditionError("crisp evaluation needs weights in {-1, 0, 1}")
    x = np.asarray(inputs).reshape(-1)
    if x.shape[0] != w.shape[0]:
        raise DimensionError(f"node has fan-in {w.shape[0]} but got {x.shape[0]} inputs")
    if not np.all(np.isin(x, (0, 1))):
        raise PreconditionError("crisp evaluation needs binary inputs")
    literals = [bool(xj) if wj > 0 else not bool(xj) for wj, xj in zip(w, x) if wj != 0]
    if isinstance(node, AndNode):
        if node.bias != 1.0:
            raise PreconditionError("crisp AND needs bias 1")
        return int(all(literals))
    if node.bias != 0.0:
        raise PreconditionError("crisp OR needs bias 0")
    return int(any(literals))
