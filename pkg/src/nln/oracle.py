"""Exact inference over layered AND/OR networks by enumerating joint states.

The factorized forward treats nodes of one layer as independent. Here the
joint distribution of every layer is carried explicitly, with nodes only
conditionally independent given the previous layer. Cost is exponential in
layer width, so this is a test oracle, not a training path.

Joint vectors index states little-endian: bit ``i`` of the index is the
state of node ``i``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError
from .kernels import NumpyKernels

GUARD = 20
_CHUNK = 1 << 10


@dataclass
class Layer:
    kind: str  # "and" or "or"
    weights: np.ndarray  # (n_out, n_in)
    bias: np.ndarray  # (n_out,)

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.kind not in ("and", "or"):
            raise DomainError(f"layer kind must be 'and' or 'or', got {self.kind!r}")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise DomainError("one bias per node required")

    @property
    def width(self):
        return self.weights.shape[0]

    def forward(self, z):
        f = NumpyKernels.and_forward if self.kind == "and" else NumpyKernels.or_forward
        return f(z, self.weights, self.bias)


def _check(n, guard):
    if n > guard:
        raise CapacityError(f"layer width {n} exceeds the enumeration guard {guard}")


def states(n):
    """All ``2**n`` binary states as rows, little-endian."""
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.float64)


def independent_joint(p, guard=GUARD):
    """Joint of independent Bernoulli variables with parameters ``p``."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    _check(len(p), guard)
    joint = np.ones(1)
    for pi in p:
        joint = np.concatenate([joint * (1.0 - pi), joint * pi])
    return joint


def exact_layer_transition(layer, prev_joint, guard=GUARD):
    """Joint distribution of ``layer`` given the joint of its inputs."""
    prev_joint = np.asarray(prev_joint, dtype=np.float64)
    n_in = layer.weights.shape[1]
    if prev_joint.shape != (1 << n_in,):
        raise DomainError(f"joint of length {1 << n_in} expected, got {prev_joint.shape}")
    _check(n_in, guard)
    _check(layer.width, guard)
    out = np.zeros(1 << layer.width)
    live = np.nonzero(prev_joint)[0]
    for start in range(0, len(live), _CHUNK):
        idx = live[start:start + _CHUNK]
        c = ((idx[:, None] >> np.arange(n_in)) & 1).astype(np.float64)
        p = layer.forward(c)
        cond = prev_joint[idx][:, None]
        for j in range(layer.width):
            cond = np.concatenate([cond * (1.0 - p[:, j:j + 1]), cond * p[:, j:j + 1]], axis=1)
        out += cond.sum(axis=0)
    return out


def joint_marginals(joint, n):
    """Per-node probability of being on."""
    return states(n).T @ joint


def exact_marginals(layers, input_probs, guard=GUARD):
    """Exact per-node marginals for each layer, the input layer first."""
    joint = independent_joint(input_probs, guard)
    out = [np.asarray(input_probs, dtype=np.float64).reshape(-1)]
    for layer in layers:
        joint = exact_layer_transition(layer, joint, guard)
        out.append(joint_marginals(joint, layer.width))
    return out


def factorized_marginals(layers, input_probs):
    """The independence-assuming forward, layer by layer."""
    z = np.asarray(input_probs, dtype=np.float64).reshape(1, -1)
    out = [z[0]]
    for layer in layers:
        z = layer.forward(z)
        out.append(z[0])
    return out


def decomposable_network(rng, n_layers, max_width=12, real_weights=True):
    """Random tree-shaped network: no two nodes of a layer share an ancestor.

    Each node takes a disjoint group of the previous layer's nodes. Returns
    ``(layers, n_inputs)``.
    """
    widths = [int(rng.integers(1, max_width + 1))]
    for _ in range(n_layers):
        widths.append(int(rng.integers(1, widths[-1] + 1)))
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        order = rng.permutation(n_in)
        cuts = np.sort(rng.choice(np.arange(1, n_in), size=n_out - 1, replace=False)) if n_out > 1 else []
        w = np.zeros((n_out, n_in))
        for j, group in enumerate(np.split(order, cuts)):
            # part of a group may stay unused
            keep = group[rng.random(len(group)) < 0.8]
            keep = keep if len(keep) else group[:1]
            if real_weights:
                w[j, keep] = rng.uniform(-1.0, 1.0, len(keep))
            else:
                w[j, keep] = rng.choice([-1.0, 1.0], len(keep))
        kind = "and" if rng.random() < 0.5 else "or"
        layers.append(Layer(kind, w, rng.random(n_out)))
    return layers, widths[0]


def random_network(rng, width, depth):
    """Generating network: ``depth`` AND layers of fixed ``width``.

    Weights are 0 with probability 1/2 and -1 or 1 with probability 1/4
    each. A node with no incoming weight, or an unused node, gets one extra
    weight of uniform sign to a uniformly chosen partner. AND biases are
    uniform in (0, 1). Returns ``(layers, input_probs)``.
    """
    layers = []
    for _ in range(depth):
        w = rng.choice([0.0, 1.0, -1.0], size=(width, width), p=[0.5, 0.25, 0.25])
        for j in np.nonzero(~w.any(axis=1))[0]:
            w[j, rng.integers(width)] = rng.choice([-1.0, 1.0])
        layers.append(Layer("and", w, rng.random(width)))
    for l in range(depth - 1):
        w_next = layers[l + 1].weights
        for i in np.nonzero(~w_next.any(axis=0))[0]:
            w_next[rng.integers(width), i] = rng.choice([-1.0, 1.0])
    return layers, rng.random(width)


def sample_network(layers, input_probs, n, rng):
    """Crisp samples of every layer: inputs and hidden biases are Bernoulli draws."""
    c = (rng.random((n, len(input_probs))) < input_probs).astype(np.float64)
    out = [c]
    for layer in layers:
        hidden = (rng.random((n, layer.width)) < layer.bias).astype(np.float64)
        crisp = Layer(layer.kind, layer.weights, np.ones(layer.width))
        c = crisp.forward(c) * hidden
        out.append(c)
    return out


@dataclass
class GapRow:
    width: int
    depth: int
    trial: int
    loss_exact: float
    loss_factorized: float


def assumption_gap_experiment(width, depth, trials=30, seed=0, n_points=1000, csv_path=None):
    """L2 loss of exact and factorized marginals against sampled data, per depth.

    ``loss_*`` at depth ``l`` is the mean squared difference between the
    predicted marginals of layer ``l`` and the sampled 0/1 states.
    """
    if width > 6:
        raise CapacityError("assumption gap experiment supports widths up to 6")
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(trials):
        layers, p = random_network(rng, width, depth)
        data = sample_network(layers, p, n_points, rng)
        exact = exact_marginals(layers, p)
        fact = factorized_marginals(layers, p)
        for l in range(1, depth + 1):
            le = float(np.mean((data[l] - exact[l]) ** 2))
            lf = float(np.mean((data[l] - fact[l]) ** 2))
            rows.append(GapRow(width, l, t, le, lf))
    if csv_path is not None:
        write_gap_csv(rows, csv_path)
    return rows


def summarize_gap(rows):
    """Mean losses per depth: ``{depth: (exact, factorized)}``."""
    out = {}
    for d in sorted({r.depth for r in rows}):
        sel = [r for r in rows if r.depth == d]
        out[d] = (float(np.mean([r.loss_exact for r in sel])), float(np.mean([r.loss_factorized for r in sel])))
    return out


def write_gap_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width", "depth", "trial", "loss_exact", "loss_factorized"])
        for r in rows:
            w.writerow([r.width, r.depth, r.trial, repr(r.loss_exact), repr(r.loss_factorized)])
