"""The two-level network: input encoders, rule modules and the output OR layer.

Every rule ``r`` is an AND node over one slot per feature, in schema order.
A binary feature feeds its slot directly. A categorical feature feeds the
rule's own equivalency class, a nonnegative OR over the one-hot values. A
continuous feature feeds the rule's own collection, a nonnegative OR over
the fuzzy intervals shared by all rules. The output layer holds one
nonnegative OR node per target label.
"""

import json
import struct

import numpy as np

from .encoding import DEFAULT_DICHOTOMIES, ContinuousEncoder, encode, init_dichotomies_regular
from .errors import DataError, DimensionError, PreconditionError
from .kernels import and_backward, and_forward, or_backward, or_forward
from .schema import parse_schema

FORMAT_MAGIC = b"NLNMODEL"
FORMAT_VERSION = 1
ALPHA_MIN = 1e-6

# domains: 'signed' [-1, 1], 'unit' [0, 1], 'positive' [ALPHA_MIN, inf), 'free'
LOGICAL_DOMAINS = ("signed", "unit")


class NlnModel:
    def __init__(self, schema, and_w, and_b, out_w, out_b, cat_w, cat_miss, encoders, con_w, con_miss,
                 task=None, threshold=None, meta=None):
        self.schema = schema
        self.and_w = and_w
        self.and_b = and_b
        self.out_w = out_w
        self.out_b = out_b
        self.cat_w = list(cat_w)
        self.cat_miss = list(cat_miss)
        self.encoders = list(encoders)
        self.con_w = list(con_w)
        self.con_miss = list(con_miss)
        self.task = task or schema.task
        self.threshold = threshold
        self.meta = dict(meta or {})
        self.cat_cols = schema.of_kind("categorical")
        self.con_cols = schema.of_kind("continuous")
        self.bin_cols = schema.of_kind("binary")

    @property
    def n_rules(self):
        return self.and_w.shape[0]

    @property
    def n_outputs(self):
        return self.out_w.shape[0]

    def copy(self):
        return NlnModel(self.schema, self.and_w.copy(), self.and_b.copy(), self.out_w.copy(), self.out_b.copy(),
                        [w.copy() for w in self.cat_w], [None if m is None else m.copy() for m in self.cat_miss],
                        [e.copy() for e in self.encoders], [w.copy() for w in self.con_w],
                        [None if m is None else m.copy() for m in self.con_miss],
                        self.task, self.threshold, json.loads(json.dumps(self.meta)))

    # parameter registry ------------------------------------------------

    def param_specs(self):
        """``(name, array, domain, logical)`` for every learnable array, in a fixed order.

        The arrays are the live storage, so in-place updates change the model.
        """
        specs = [("and.w", self.and_w, "signed", True), ("and.b", self.and_b, "unit", False),
                 ("out.w", self.out_w, "unit", True), ("out.b", self.out_b, "unit", False)]
        for c, (w, m) in enumerate(zip(self.cat_w, self.cat_miss)):
            specs.append((f"cat{c}.w", w, "unit", True))
            if m is not None:
                specs.append((f"cat{c}.miss", m, "unit", False))
        for q, (enc, w, m) in enumerate(zip(self.encoders, self.con_w, self.con_miss)):
            specs.append((f"con{q}.B", enc.boundary_u, "free", False))
            specs.append((f"con{q}.alpha", enc.sharpness_u, "positive", False))
            specs.append((f"con{q}.iw", enc.interval_w, "signed", True))
            specs.append((f"con{q}.cw", w, "unit", True))
            if m is not None:
                specs.append((f"con{q}.miss", m, "unit", False))
        return specs

    def params(self):
        return {name: arr for name, arr, _, _ in self.param_specs()}

    def n_parameters(self):
        return int(sum(arr.size for _, arr, _, _ in self.param_specs()))

    def n_preprocessing_nodes(self):
        per_rule = self.n_rules * (len(self.cat_cols) + len(self.con_cols))
        return per_rule + sum(e.n_dichotomies + e.n_intervals for e in self.encoders)

    def logical_arrays(self):
        return [(name, arr, dom) for name, arr, dom, logical in self.param_specs() if logical]

    def is_discretized(self):
        return all(np.all(np.isin(arr, (-1.0, 0.0, 1.0))) for _, arr, _ in self.logical_arrays())

    def project(self):
        """Clip every parameter back into its domain."""
        for _, arr, dom, _ in self.param_specs():
            if dom == "signed":
                np.clip(arr, -1.0, 1.0, out=arr)
            elif dom == "unit":
                np.clip(arr, 0.0, 1.0, out=arr)
            elif dom == "positive":
                np.maximum(arr, ALPHA_MIN, out=arr)

    def select_rules(self, idx):
        """Keep only the rule modules ``idx`` (in that order)."""
        idx = np.asarray(idx, dtype=int)
        self.and_w = self.and_w[idx].copy()
        self.and_b = self.and_b[idx].copy()
        self.out_w = self.out_w[:, idx].copy()
        self.cat_w = [w[idx].copy() for w in self.cat_w]
        self.cat_miss = [None if m is None else m[idx].copy() for m in self.cat_miss]
        self.con_w = [w[idx].copy() for w in self.con_w]
        self.con_miss = [None if m is None else m[idx].copy() for m in self.con_miss]
        return self

    # forward / backward -------------------------------------------------

    def encode(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.schema.features):
            raise DimensionError(f"expected rows of {len(self.schema.features)} features, got shape {values.shape}")
        return encode(self.schema, values)

    def forward(self, enc, cache=False):
        """Target probabilities ``(N, K)`` for an encoded batch.

        With ``cache=True`` also returns the intermediate arrays needed by
        :meth:`backward`.
        """
        n, r = len(enc), self.n_rules
        z = np.empty((n, r, len(self.schema.features)))
        if self.bin_cols:
            z[:, :, self.bin_cols] = enc.binary[:, None, :]
        cats = []
        for c, col in enumerate(self.cat_cols):
            p, w = self._cat_inputs(c, enc)
            z[:, :, col] = or_forward(p, w, np.zeros(r))
            cats.append((p, w))
        cons = []
        for q, col in enumerate(self.con_cols):
            enc_q = self.encoders[q]
            x, miss = enc.con_values[q], enc.con_missing[q]
            u = np.where(miss > 0, enc_q.lo, x)
            s = enc_q.dichotomy_values(u)
            iv = enc_q.interval_values(s)
            iv[miss > 0] = 0.0
            p, w = self._con_inputs(q, iv, miss)
            z[:, :, col] = or_forward(p, w, np.zeros(r))
            cons.append((u, s, iv, p, w, miss))
        h = and_forward(z, self.and_w, self.and_b)
        y = or_forward(h, self.out_w, self.out_b)
        if cache:
            return y, {"z": z, "h": h, "cats": cats, "cons": cons}
        return y

    def _cat_inputs(self, c, enc):
        p, w = enc.cat_onehot[c], self.cat_w[c]
        if self.cat_miss[c] is not None:
            p = np.hstack([p, enc.cat_missing[c][:, None]])
            w = np.hstack([w, self.cat_miss[c][:, None]])
        return p, w

    def _con_inputs(self, q, iv, miss):
        w = self.con_w[q]
        if self.con_miss[q] is not None:
            return np.hstack([iv, miss[:, None]]), np.hstack([w, self.con_miss[q][:, None]])
        return iv, w

    def backward(self, cache, dy):
        """Gradients of ``sum(dy * y)`` with respect to every learnable array."""
        grads = {}
        dh, grads["out.w"], grads["out.b"] = or_backward(cache["h"], self.out_w, self.out_b, dy)
        dz, grads["and.w"], grads["and.b"] = and_backward(cache["z"], self.and_w, self.and_b, dh)
        r = self.n_rules
        for c, col in enumerate(self.cat_cols):
            p, w = cache["cats"][c]
            _, dw, _ = or_backward(p, w, np.zeros(r), np.ascontiguousarray(dz[:, :, col]))
            v = self.cat_w[c].shape[1]
            grads[f"cat{c}.w"] = dw[:, :v]
            if self.cat_miss[c] is not None:
                grads[f"cat{c}.miss"] = dw[:, v]
        for q, col in enumerate(self.con_cols):
            enc_q = self.encoders[q]
            u, s, iv, p, w, miss = cache["cons"][q]
            div, dw, _ = or_backward(p, w, np.zeros(r), np.ascontiguousarray(dz[:, :, col]))
            ni = enc_q.n_intervals
            grads[f"con{q}.cw"] = dw[:, :ni]
            if self.con_miss[q] is not None:
                grads[f"con{q}.miss"] = dw[:, ni]
            div = div[:, :ni]
            div[miss > 0] = 0.0
            ds, grads[f"con{q}.iw"], _ = and_backward(s, enc_q.interval_w, np.ones(ni), div)
            dt = ds * s * (1.0 - s)
            # chain through alpha = alpha_u / width and B = lo + width * B_u
            grads[f"con{q}.alpha"] = np.sum(dt * (u[:, None] - enc_q.boundaries), axis=0) / enc_q.width
            grads[f"con{q}.B"] = -np.sum(dt, axis=0) * enc_q.sharpness * enc_q.width
        return grads

    def predict_proba(self, values, chunk=2048):
        enc_rows = np.asarray(values, dtype=np.float64)
        out = np.empty((enc_rows.shape[0], self.n_outputs))
        for i in range(0, enc_rows.shape[0], chunk):
            out[i:i + chunk] = self.forward(self.encode(enc_rows[i:i + chunk]))
        return out


def build_model(schema, n_rules=128, n_targets=None, seed=0, n_dichotomies=DEFAULT_DICHOTOMIES, k=None):
    """Fresh model with the standard initialization.

    Logical weights start uniform in [-1, 1] (in [0, 1] where negation is
    not allowed), rule biases at 1 and output biases at 0; continuous
    encoders start with the regular interval layout. Continuous features
    need a range in the schema (see :meth:`Dataset.with_ranges`).
    """
    if n_rules < 1:
        raise ValueError("need at least one rule")
    n_targets = schema.n_outputs if n_targets is None else n_targets
    if n_targets < 1:
        raise ValueError("need at least one target")
    if schema.targets and n_targets != schema.n_outputs:
        raise DimensionError(f"schema declares {schema.n_outputs} outputs, asked for {n_targets}")
    rng = np.random.default_rng(seed)
    nf = len(schema.features)
    and_w = rng.uniform(-1.0, 1.0, (n_rules, nf))
    and_b = np.ones(n_rules)
    out_w = rng.uniform(0.0, 1.0, (n_targets, n_rules))
    out_b = np.zeros(n_targets)
    cat_w, cat_miss, encoders, con_w, con_miss = [], [], [], [], []
    for i in schema.of_kind("categorical"):
        f = schema.features[i]
        cat_w.append(rng.uniform(0.0, 1.0, (n_rules, len(f.values))))
        cat_miss.append(rng.uniform(0.0, 1.0, n_rules) if f.allows_missing else None)
    for i in schema.of_kind("continuous"):
        f = schema.features[i]
        if not f.has_range:
            raise PreconditionError(f"continuous feature {f.name!r} has no range")
        kw = {} if k is None else {"k": k}
        enc = init_dichotomies_regular((f.lo, f.hi), n_dichotomies, **kw)
        encoders.append(enc)
        con_w.append(rng.uniform(0.0, 1.0, (n_rules, enc.n_intervals)))
        con_miss.append(rng.uniform(0.0, 1.0, n_rules) if f.allows_missing else None)
    return NlnModel(schema, and_w, and_b, out_w, out_b, cat_w, cat_miss, encoders, con_w, con_miss,
                    meta={"seed": int(seed)})


def model_forward(model, rows):
    """Target probabilities for raw feature rows ``(N, F)`` (or one row)."""
    rows = np.asarray(rows, dtype=np.float64)
    single = rows.ndim == 1
    out = model.predict_proba(rows[None, :] if single else rows)
    return out[0] if single else out


def predict(model, probabilities):
    """Labels from probabilities: argmax for multiclass, threshold otherwise."""
    p = np.asarray(probabilities, dtype=np.float64)
    if model.task == "multiclass":
        # argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(p, axis=-1)
    if model.threshold is None:
        raise PreconditionError("binary/multilabel prediction needs a fitted threshold")
    return (p >= model.threshold).astype(int)


# serialization -------------------------------------------------------------
#
# Layout: 8-byte magic, little-endian uint32 format version, uint32 header
# length, UTF-8 JSON header, then every array of the header's "arrays" list
# as little-endian float64 in C order. The header holds the schema text,
# task, threshold, metadata and the continuous encoder offsets.

def _array_list(model):
    arrays = [("and.w", model.and_w), ("and.b", model.and_b), ("out.w", model.out_w), ("out.b", model.out_b)]
    for c, (w, m) in enumerate(zip(model.cat_w, model.cat_miss)):
        arrays.append((f"cat{c}.w", w))
        if m is not None:
            arrays.append((f"cat{c}.miss", m))
    for q, (e, w, m) in enumerate(zip(model.encoders, model.con_w, model.con_miss)):
        arrays += [(f"con{q}.B", e.boundary_u), (f"con{q}.alpha", e.sharpness_u), (f"con{q}.iw", e.interval_w),
                   (f"con{q}.cw", w)]
        if m is not None:
            arrays.append((f"con{q}.miss", m))
    return arrays


def dumps(model):
    arrays = _array_list(model)
    header = {
        "schema": model.schema.to_text(),
        "task": model.task,
        "threshold": model.threshold,
        "meta": model.meta,
        "encoders": [[e.lo, e.width] for e in model.encoders],
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    return FORMAT_MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head + body


def loads(blob):
    if blob[:8] != FORMAT_MAGIC:
        raise DataError("not a model file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    pos = 16 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * size
    if pos != len(blob):
        raise DataError("trailing bytes in model file")
    schema = parse_schema(header["schema"])
    n_cat = len(schema.of_kind("categorical"))
    encoders, con_w, con_miss = [], [], []
    for q, (lo, width) in enumerate(header["encoders"]):
        encoders.append(ContinuousEncoder(lo, width, arrays[f"con{q}.B"], arrays[f"con{q}.alpha"],
                                          arrays[f"con{q}.iw"]))
        con_w.append(arrays[f"con{q}.cw"])
        con_miss.append(arrays.get(f"con{q}.miss"))
    return NlnModel(schema, arrays["and.w"], arrays["and.b"], arrays["out.w"], arrays["out.b"],
                    [arrays[f"cat{c}.w"] for c in range(n_cat)], [arrays.get(f"cat{c}.miss") for c in range(n_cat)],
                    encoders, con_w, con_miss, header["task"], header["threshold"], header["meta"])


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
