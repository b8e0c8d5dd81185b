"""Feature and target declarations.

Schema files are line oriented. Blank lines and ``#`` comments are ignored.
Each feature line reads ``name kind [values...|min max] [missing]``::

    age continuous 0 120 missing
    color categorical red green blue
    smoker binary missing

Targets are declared with a leading ``target`` keyword::

    target class multiclass ckd notckd
    target fraud binary yes

``multiclass`` gives one output per value; ``binary`` gives one output that is
on when the column equals the positive value (``1`` when omitted). Several
binary targets make a multilabel task. A trailing ``missing`` token marks a
feature that may hold the missing token in data files.
"""

from dataclasses import dataclass, field, replace

from .errors import SchemaError

KINDS = ("binary", "categorical", "continuous")


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    values: tuple = ()
    lo: float | None = None
    hi: float | None = None
    allows_missing: bool = False
    promoted: bool = False  # binary feature turned categorical because it may be missing

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.values:
                raise SchemaError(f"feature {self.name!r}: empty value list")
            if len(set(self.values)) != len(self.values):
                raise SchemaError(f"feature {self.name!r}: duplicate values")
        if self.kind == "continuous" and self.lo is not None and self.hi is not None and not self.lo < self.hi:
            raise SchemaError(f"feature {self.name!r}: need min < max, got {self.lo} and {self.hi}")

    @property
    def has_range(self):
        return self.lo is not None and self.hi is not None


@dataclass(frozen=True)
class Target:
    name: str
    kind: str  # 'binary' or 'multiclass'
    values: tuple

    def __post_init__(self):
        if self.kind not in ("binary", "multiclass"):
            raise SchemaError(f"target {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "binary" and len(self.values) != 1:
            raise SchemaError(f"binary target {self.name!r} needs exactly one positive value")
        if self.kind == "multiclass" and len(self.values) < 2:
            raise SchemaError(f"multiclass target {self.name!r} needs at least two classes")

    @property
    def labels(self):
        if self.kind == "binary":
            return (self.name,) if self.values[0] == "1" else (f"{self.name} = {self.values[0]}",)
        return tuple(f"{self.name} = {v}" for v in self.values)


def _promote(f):
    if f.kind == "binary" and f.allows_missing:
        return replace(f, kind="categorical", values=("0", "1"), promoted=True)
    return f


@dataclass(frozen=True)
class Schema:
    features: tuple
    targets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(_promote(f) for f in self.features))
        object.__setattr__(self, "targets", tuple(self.targets))
        names = [f.name for f in self.features] + [t.name for t in self.targets]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature or target name")
        multi = [t for t in self.targets if t.kind == "multiclass"]
        if multi and len(self.targets) > 1:
            raise SchemaError("a multiclass target must be the only target")

    @property
    def task(self):
        if self.targets and self.targets[0].kind == "multiclass":
            return "multiclass"
        return "binary"

    @property
    def n_outputs(self):
        return sum(len(t.labels) for t in self.targets)

    @property
    def output_labels(self):
        return tuple(lab for t in self.targets for lab in t.labels)

    def index(self, name):
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def of_kind(self, kind):
        return [i for i, f in enumerate(self.features) if f.kind == kind]

    def with_features(self, features):
        return Schema(tuple(features), self.targets)

    def to_text(self):
        lines = []
        for f in self.features:
            kind = "binary" if f.promoted else f.kind
            parts = [f.name, kind]
            if f.kind == "categorical" and not f.promoted:
                parts += list(f.values)
            if f.kind == "continuous" and f.has_range:
                parts += [repr(float(f.lo)), repr(float(f.hi))]
            if f.allows_missing:
                parts.append("missing")
            lines.append(" ".join(parts))
        for t in self.targets:
            lines.append(" ".join(["target", t.name, t.kind, *t.values]))
        return "\n".join(lines) + "\n"


def parse_schema(text):
    features, targets = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "target":
                if len(tok) < 3:
                    raise SchemaError("target line needs a name and a kind")
                name, kind, values = tok[1], tok[2], tuple(tok[3:])
                if kind == "binary" and not values:
                    values = ("1",)
                targets.append(Target(name, kind, values))
                continue
            if len(tok) < 2:
                raise SchemaError("feature line needs a name and a kind")
            name, kind, rest = tok[0], tok[1], tok[2:]
            missing = bool(rest) and rest[-1] == "missing"
            if missing:
                rest = rest[:-1]
            if kind == "binary":
                if rest:
                    raise SchemaError("binary features take no values")
                features.append(Feature(name, kind, allows_missing=missing))
            elif kind == "categorical":
                features.append(Feature(name, kind, tuple(rest), allows_missing=missing))
            elif kind == "continuous":
                if len(rest) not in (0, 2):
                    raise SchemaError("continuous features take either no range or 'min max'")
                lo, hi = (float(rest[0]), float(rest[1])) if rest else (None, None)
                features.append(Feature(name, kind, lo=lo, hi=hi, allows_missing=missing))
            else:
                raise SchemaError(f"unknown kind {kind!r}")
        except SchemaError as exc:
            raise SchemaError(f"schema line {lineno}: {exc}") from None
        except ValueError as exc:
            raise SchemaError(f"schema line {lineno}: {exc}") from None
    if not features:
        raise SchemaError("schema declares no features")
    return Schema(tuple(features), tuple(targets))


def load_schema(path):
    with open(path) as fh:
        return parse_schema(fh.read())
