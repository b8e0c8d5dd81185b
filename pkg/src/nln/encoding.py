"""Input encodings: one-hot categoricals, fuzzy dichotomies and fuzzy intervals.

Continuous encoders keep their boundaries and sharpness in coordinates
normalised to the feature range, ``u = (x - lo) / width``, so one learning
rate suits features of any scale. Evaluation uses the feature-unit values
``B = lo + width * B_u`` and ``alpha = alpha_u / width`` exposed as
properties, so extracted rules carry exactly the numbers the network uses.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SchemaError
from .kernels import and_forward

SHARPNESS_K = 8.0
DEFAULT_DICHOTOMIES = 32


def sigmoid(t):
    # split by sign so exp never overflows
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class FuzzyDichotomy:
    boundary: float
    sharpness: float

    def __post_init__(self):
        if not self.sharpness > 0:
            raise ValueError("dichotomy sharpness must be positive")


def dichotomy_eval(d, x):
    return float(sigmoid(np.array(d.sharpness * (x - d.boundary))))


def one_hot_encode(feature, raw_value, missing_token="?"):
    """Return ``(vector, missing)`` for one raw categorical value."""
    k = len(feature.values)
    if raw_value is None or raw_value == missing_token or (isinstance(raw_value, float) and np.isnan(raw_value)):
        if not feature.allows_missing:
            raise DataError(f"feature {feature.name!r} does not allow missing values")
        return np.zeros(k), True
    if raw_value not in feature.values:
        raise SchemaError(f"undeclared value {raw_value!r} for feature {feature.name!r}")
    v = np.zeros(k)
    v[feature.values.index(raw_value)] = 1.0
    return v, False


class ContinuousEncoder:
    """Shared fuzzy dichotomies and the fuzzy-interval AND layer built on them."""

    def __init__(self, lo, width, boundary_u, sharpness_u, interval_w):
        self.lo = float(lo)
        self.width = float(width)
        self.boundary_u = np.asarray(boundary_u, dtype=np.float64)
        self.sharpness_u = np.asarray(sharpness_u, dtype=np.float64)
        self.interval_w = np.asarray(interval_w, dtype=np.float64)

    @property
    def n_dichotomies(self):
        return self.boundary_u.shape[0]

    @property
    def n_intervals(self):
        return self.interval_w.shape[0]

    @property
    def boundaries(self):
        return self.lo + self.width * self.boundary_u

    @property
    def sharpness(self):
        return self.sharpness_u / self.width

    def dichotomies(self):
        return [FuzzyDichotomy(b, s) for b, s in zip(self.boundaries, self.sharpness)]

    def dichotomy_values(self, x):
        """``(N, D)`` dichotomy activations for raw feature values ``x``."""
        return sigmoid(self.sharpness * (np.asarray(x, dtype=np.float64)[:, None] - self.boundaries))

    def interval_values(self, s):
        return and_forward(s, self.interval_w, np.ones(self.n_intervals))

    def forward(self, x):
        """Interval activations for raw feature values; NaN rows give all zeros."""
        x = np.asarray(x, dtype=np.float64)
        miss = np.isnan(x)
        iv = self.interval_values(self.dichotomy_values(np.where(miss, self.lo, x)))
        iv[miss] = 0.0
        return iv

    def copy(self):
        return ContinuousEncoder(self.lo, self.width, self.boundary_u.copy(), self.sharpness_u.copy(),
                                 self.interval_w.copy())


def regular_interval_weights(count):
    """Interval AND weights pairing each dichotomy with the next one negated."""
    w = np.zeros((count + 1, count))
    for i in range(count + 1):
        if i > 0:
            w[i, i - 1] = 1.0
        if i < count:
            w[i, i] = -1.0
    return w


def init_dichotomies_regular(feature_range, count=DEFAULT_DICHOTOMIES, k=SHARPNESS_K):
    """Evenly spaced boundaries splitting the range into ``count + 1`` equal intervals.

    The sharpness is ``k`` over the spacing, so one spacing takes a sigmoid
    from about ``sigma(-k/2)`` to ``sigma(k/2)`` around each boundary.
    """
    lo, hi = (float(v) for v in feature_range)
    if count < 1:
        raise ValueError("need at least one dichotomy")
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise SchemaError("continuous range must be finite")
    if not lo < hi:
        raise SchemaError(f"degenerate continuous range [{lo}, {hi}]")
    spacing = 1.0 / (count + 1)
    boundary_u = spacing * np.arange(1, count + 1)
    sharpness_u = np.full(count, k / spacing)
    return ContinuousEncoder(lo, hi - lo, boundary_u, sharpness_u, regular_interval_weights(count))


@dataclass
class EncodedBatch:
    """Network-ready inputs for a batch of rows.

    ``binary`` is ``(N, n_binary)``; each categorical gives a one-hot matrix
    and a 0/1 missing indicator; each continuous gives raw values (NaN when
    missing) and the indicator.
    """

    binary: np.ndarray
    cat_onehot: list
    cat_missing: list
    con_values: list
    con_missing: list

    def __len__(self):
        return self.binary.shape[0]


def encode(schema, values):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    binary = values[:, schema.of_kind("binary")]
    onehots, cmiss, cvals, qmiss = [], [], [], []
    for i in schema.of_kind("categorical"):
        col = values[:, i]
        miss = np.isnan(col)
        oh = np.zeros((n, len(schema.features[i].values)))
        rows = np.nonzero(~miss)[0]
        oh[rows, col[rows].astype(int)] = 1.0
        onehots.append(oh)
        cmiss.append(miss.astype(np.float64))
    for i in schema.of_kind("continuous"):
        col = values[:, i]
        cvals.append(col)
        qmiss.append(np.isnan(col).astype(np.float64))
    return EncodedBatch(binary, onehots, cmiss, cvals, qmiss)


def take(enc, idx):
    """Rows ``idx`` of an encoded batch."""
    return EncodedBatch(enc.binary[idx], [m[idx] for m in enc.cat_onehot], [m[idx] for m in enc.cat_missing],
                        [v[idx] for v in enc.con_values], [m[idx] for m in enc.con_missing])
