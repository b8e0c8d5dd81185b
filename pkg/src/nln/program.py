"""Logic programs extracted from discretized networks.

A program lists, per target, IF-THEN rules whose literals are binary
features, categorical value sets or unions of fuzzy intervals, each possibly
negated. Evaluation keeps the fuzzy semantics (sigmoid dichotomies,
missing-value weights, biases), so it reproduces the network exactly.

Text grammar, one item per line (``#`` starts a comment)::

    variables A1 A2 ...                    binary features, optional
    target <label> [o=<bias>]
    IF <literal> AND ... THEN <label> [a=<bias> cov=<coverage>]
    IF TRUE THEN <label>                   empty body

Literals::

    f | NOT f                              binary
    f = v | f != v | f in {v, w} | f not in {v, w}
    f < 14.9 (~2.3) | f > 3 (~2.3) | 3 (~2.3) < f < 7 (~1.5) | f any
    (<interval> OR <interval>) | NOT (<interval> OR ...)
    a trailing (?=0.4) gives the missing-value weight

Numbers in ``(~s)`` are dichotomy sharpness values. Exact rendering writes
every float in shortest round-trip form.
"""

import csv
import io
import re
from dataclasses import dataclass, field

import numpy as np

from .encoding import sigmoid
from .errors import NotDiscretizedError, SchemaError
from .schema import Feature, Schema, Target


@dataclass(frozen=True, order=True)
class Condition:
    boundary: float
    sharpness: float
    above: bool  # x > boundary when True, x < boundary otherwise


@dataclass(frozen=True)
class Interval:
    conditions: tuple = ()

    def __post_init__(self):
        # one canonical order, so rendering and parsing agree
        object.__setattr__(self, "conditions", tuple(sorted(self.conditions)))

    def key(self):
        lows = [c.boundary for c in self.conditions if c.above]
        highs = [c.boundary for c in self.conditions if not c.above]
        return (max(lows, default=-np.inf), min(highs, default=np.inf), self.conditions)


@dataclass(frozen=True)
class Literal:
    feature: str
    kind: str
    negated: bool = False
    values: tuple = ()
    intervals: tuple = ()
    missing: float | None = None

    def crisp_key(self, schema=None):
        """Polarity-free identity: the set of allowed values for categoricals."""
        if self.kind == "categorical" and schema is not None:
            allowed = set(self.values)
            if self.negated:
                allowed = set(schema.features[schema.index(self.feature)].values) - allowed
            return (self.feature, "in", frozenset(allowed))
        if self.kind == "continuous":
            return (self.feature, self.negated, tuple(self.intervals))
        return (self.feature, self.negated, frozenset(self.values))


@dataclass
class Rule:
    target: str
    literals: tuple = ()
    bias: float = 1.0
    coverage: float | None = None
    source: int | None = None


@dataclass
class LogicProgram:
    targets: tuple
    target_bias: tuple = ()
    rules: list = field(default_factory=list)
    schema: Schema | None = None
    task: str = "binary"
    threshold: float | None = None

    def __post_init__(self):
        self.targets = tuple(self.targets)
        if not self.target_bias:
            self.target_bias = tuple(0.0 for _ in self.targets)
        self.target_bias = tuple(float(o) for o in self.target_bias)

    def rules_for(self, target):
        return [r for r in self.rules if r.target == target]

    def ordered_rules(self):
        pos = {t: i for i, t in enumerate(self.targets)}

        def key(ir):
            i, r = ir
            cov = -r.coverage if r.coverage is not None else 0.0
            return (pos.get(r.target, len(pos)), cov, i)

        return [r for _, r in sorted(enumerate(self.rules), key=key)]

    def structure(self):
        """Hashable description used to compare programs."""
        return (self.targets, self.target_bias,
                tuple((r.target, r.literals, r.bias, r.coverage) for r in self.ordered_rules()))


# extraction ------------------------------------------------------------------

def _literal(model, r, j):
    f = model.schema.features[j]
    a = model.and_w[r, j]
    neg = bool(a < 0)
    if f.kind == "binary":
        return Literal(f.name, "binary", neg)
    if f.kind == "categorical":
        c = model.cat_cols.index(j)
        vals = tuple(v for v, w in zip(f.values, model.cat_w[c][r]) if w == 1.0)
        miss = None if model.cat_miss[c] is None else float(model.cat_miss[c][r])
        return Literal(f.name, "categorical", neg, values=vals, missing=miss)
    q = model.con_cols.index(j)
    enc = model.encoders[q]
    bounds, sharp = enc.boundaries, enc.sharpness
    intervals = []
    for i in np.nonzero(model.con_w[q][r] == 1.0)[0]:
        conds = tuple(Condition(float(bounds[d]), float(sharp[d]), bool(enc.interval_w[i, d] > 0))
                      for d in np.nonzero(enc.interval_w[i])[0])
        intervals.append(Interval(conds))
    intervals.sort(key=Interval.key)
    miss = None if model.con_miss[q] is None else float(model.con_miss[q][r])
    return Literal(f.name, "continuous", neg, intervals=tuple(intervals), missing=miss)


def extract_program(model, dataset=None):
    """Logic program of a discretized model, with coverage when ``dataset`` is given.

    Coverage of a rule is the share of its target's positive rows it covers,
    counting the rule's activation without its bias.
    """
    if not model.is_discretized():
        raise NotDiscretizedError("extract_program needs every logical weight in {-1, 0, 1}")
    labels = model.schema.output_labels or tuple(f"t{k}" for k in range(model.n_outputs))
    cover = None
    if dataset is not None:
        from .postprocess import rule_activations

        ct = rule_activations(model, dataset)
        pos = dataset.y > 0.5
        cover = np.array([[ct[pos[:, k], r].sum() / max(pos[:, k].sum(), 1) for r in range(model.n_rules)]
                          for k in range(model.n_outputs)])
    rules = []
    for r in range(model.n_rules):
        lits = tuple(_literal(model, r, j) for j in range(len(model.schema.features)) if model.and_w[r, j] != 0)
        for k in np.nonzero(model.out_w[:, r] == 1.0)[0]:
            cov = None if cover is None else float(cover[k, r])
            rules.append(Rule(labels[k], lits, float(model.and_b[r]), cov, r))
    return LogicProgram(labels, tuple(float(o) for o in model.out_b), rules, model.schema, model.task,
                        model.threshold)


# evaluation ------------------------------------------------------------------

def _literal_value(lit, schema, values):
    j = schema.index(lit.feature)
    f = schema.features[j]
    col = values[:, j]
    miss = np.isnan(col)
    if lit.kind == "binary":
        z = col
    elif lit.kind == "categorical":
        codes = [f.values.index(v) for v in lit.values]
        inset = np.isin(np.where(miss, -1, col), codes).astype(np.float64)
        m = 0.0 if lit.missing is None else lit.missing
        z = 1.0 - (1.0 - inset) * (1.0 - m * miss)
    else:
        x = np.where(miss, 0.0, col)
        prod = np.ones(len(col))
        for iv in lit.intervals:
            v = np.ones(len(col))
            for c in iv.conditions:
                s = sigmoid(c.sharpness * (x - c.boundary))
                v = v * (s if c.above else 1.0 - s)
            v[miss] = 0.0
            prod = prod * (1.0 - v)
        m = 0.0 if lit.missing is None else lit.missing
        z = 1.0 - prod * (1.0 - m * miss)
    return 1.0 - z if lit.negated else z


def program_eval(program, values, schema=None):
    """Target probabilities ``(N, K)`` of a program on raw feature rows."""
    schema = schema or program.schema
    if schema is None:
        raise SchemaError("program evaluation needs a schema")
    values = np.asarray(values, dtype=np.float64)
    out = np.empty((values.shape[0], len(program.targets)))
    for k, (t, o) in enumerate(zip(program.targets, program.target_bias)):
        prod = np.ones(values.shape[0])
        for rule in program.rules_for(t):
            c = np.full(values.shape[0], rule.bias)
            for lit in rule.literals:
                c = c * _literal_value(lit, schema, values)
            prod = prod * (1.0 - c)
        out[:, k] = 1.0 - (1.0 - o) * prod
    return np.clip(out, 0.0, 1.0)


# metrics ---------------------------------------------------------------------

def rule_size(rule):
    """Input nodes a rule uses: 1 per binary feature, values per categorical, boundaries per continuous."""
    size = 0
    for lit in rule.literals:
        if lit.kind == "binary":
            size += 1
        elif lit.kind == "categorical":
            size += len(lit.values)
        else:
            size += len({(c.boundary, c.sharpness) for iv in lit.intervals for c in iv.conditions})
    return size


def program_stats(program):
    sizes = [rule_size(r) for r in program.rules]
    return {"rules": len(program.rules), "mean_rule_size": float(np.mean(sizes)) if sizes else 0.0}


# text ------------------------------------------------------------------------

def _num(v, exact, digits):
    return repr(float(v)) if exact else f"{v:.{digits}g}"


def _render_interval(name, iv, exact):
    def sh(c):
        return f"(~{_num(c.sharpness, exact, 3)})"

    lows = [c for c in iv.conditions if c.above]
    highs = [c for c in iv.conditions if not c.above]
    if not iv.conditions:
        return f"{name} any"
    if len(lows) == 1 and len(highs) == 1:
        lo, hi = lows[0], highs[0]
        return f"{_num(lo.boundary, exact, 4)} {sh(lo)} < {name} < {_num(hi.boundary, exact, 4)} {sh(hi)}"
    parts = [f"{name} {'>' if c.above else '<'} {_num(c.boundary, exact, 4)} {sh(c)}" for c in iv.conditions]
    return " & ".join(parts)


def render_literal(lit, exact=False):
    if lit.kind == "binary":
        text = f"NOT {lit.feature}" if lit.negated else lit.feature
    elif lit.kind == "categorical":
        if len(lit.values) == 1:
            text = f"{lit.feature} {'!=' if lit.negated else '='} {lit.values[0]}"
        else:
            text = f"{lit.feature} {'not in' if lit.negated else 'in'} {{{', '.join(lit.values)}}}"
    else:
        ivs = [_render_interval(lit.feature, iv, exact) for iv in lit.intervals]
        if not ivs:
            body = f"{lit.feature} none"
        elif len(ivs) == 1 and not lit.negated:
            body = ivs[0]
        else:
            body = "(" + " OR ".join(ivs) + ")"
        text = f"NOT {body}" if lit.negated else body
    if lit.missing is not None:
        text += f" (?={_num(lit.missing, exact, 3)})"
    return text


def render_text(program, exact=False):
    """Human-readable program; ``exact=True`` writes floats that parse back bit for bit."""
    n = len(program.rules)
    lines = [f"# logic program: {n} rule{'s' if n != 1 else ''}"]
    for t, o in zip(program.targets, program.target_bias):
        lines.append(f"target {t} [o={_num(o, exact, 3) if exact else f'{o:.2f}'}]")
    for rule in program.ordered_rules():
        body = " AND ".join(render_literal(lit, exact) for lit in rule.literals) or "TRUE"
        ann = f"a={repr(float(rule.bias)) if exact else f'{rule.bias:.2f}'}"
        if rule.coverage is not None:
            ann += f" cov={repr(float(rule.coverage)) if exact else f'{rule.coverage:.2f}'}"
        lines.append(f"IF {body} THEN {rule.target} [{ann}]")
    return "\n".join(lines) + "\n"


_NUM = r"[-+]?(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|inf|nan)"
_RULE = re.compile(r"^IF (?P<body>.*) THEN (?P<target>.+?)(?: \[(?P<ann>[^\]]*)\])?$")
_TARGET = re.compile(r"^target (?P<target>.+?)(?: \[o=(?P<o>" + _NUM + r")\])?$")
_MISSING = re.compile(r"^(?P<rest>.*) \(\?=(?P<m>" + _NUM + r")\)$")
_COND = re.compile(r"^(?P<name>\S+) (?P<op>[<>]) (?P<b>" + _NUM + r") \(~(?P<s>" + _NUM + r")\)$")
_CHAIN = re.compile(r"^(?P<lo>" + _NUM + r") \(~(?P<ls>" + _NUM + r")\) < (?P<name>\S+) < (?P<hi>" + _NUM
                    + r") \(~(?P<hs>" + _NUM + r")\)$")


def _parse_interval(text):
    m = _CHAIN.match(text)
    if m:
        return m.group("name"), Interval((Condition(float(m.group("lo")), float(m.group("ls")), True),
                                          Condition(float(m.group("hi")), float(m.group("hs")), False)))
    if text.endswith(" any"):
        return text[:-4], Interval(())
    conds, name = [], None
    for part in text.split(" & "):
        c = _COND.match(part.strip())
        if not c:
            raise SchemaError(f"cannot parse interval {text!r}")
        name = c.group("name")
        conds.append(Condition(float(c.group("b")), float(c.group("s")), c.group("op") == ">"))
    return name, Interval(tuple(conds))


def parse_literal(text):
    text = text.strip()
    missing = None
    m = _MISSING.match(text)
    if m:
        text, missing = m.group("rest"), float(m.group("m"))
    neg = False
    if text.startswith("NOT "):
        neg, text = True, text[4:].strip()
    if text.startswith("(") and text.endswith(")"):
        parts = [_parse_interval(p.strip()) for p in text[1:-1].split(" OR ")]
        return Literal(parts[0][0], "continuous", neg, intervals=tuple(iv for _, iv in parts), missing=missing)
    if text.endswith(" none"):
        return Literal(text[:-5], "continuous", neg, intervals=(), missing=missing)
    m = re.match(r"^(\S+) (not in|in) \{(.*)\}$", text)
    if m:
        vals = tuple(v.strip() for v in m.group(3).split(",") if v.strip())
        return Literal(m.group(1), "categorical", neg ^ (m.group(2) == "not in"), values=vals, missing=missing)
    m = re.match(r"^(\S+) (!=|=) (\S+)$", text)
    if m:
        return Literal(m.group(1), "categorical", neg ^ (m.group(2) == "!="), values=(m.group(3),),
                       missing=missing)
    if re.match(r"^\S+$", text):
        return Literal(text, "binary", neg, missing=missing)
    name, iv = _parse_interval(text)
    return Literal(name, "continuous", neg, intervals=(iv,), missing=missing)


def parse_text(text, schema=None):
    """Parse the rule grammar back into a :class:`LogicProgram`."""
    targets, biases, rules, variables = [], [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("variables "):
                variables = line.split()[1:]
                continue
            m = _TARGET.match(line)
            if m:
                targets.append(m.group("target"))
                biases.append(float(m.group("o")) if m.group("o") else 0.0)
                continue
            m = _RULE.match(line)
            if not m:
                raise SchemaError(f"unrecognised line {line!r}")
            ann = dict(kv.split("=", 1) for kv in (m.group("ann") or "").split())
            body = m.group("body").strip()
            lits = () if body == "TRUE" else tuple(parse_literal(p) for p in body.split(" AND "))
            target = m.group("target").strip()
            if target not in targets:
                targets.append(target)
                biases.append(0.0)
            cov = float(ann["cov"]) if "cov" in ann else None
            rules.append(Rule(target, lits, float(ann.get("a", 1.0)), cov))
        except (SchemaError, ValueError) as exc:
            raise SchemaError(f"program line {lineno}: {exc}") from None
    if schema is None and variables is not None:
        schema = Schema(tuple(Feature(v, "binary") for v in variables),
                        tuple(Target(t, "binary", ("1",)) for t in targets))
    task = schema.task if schema is not None and schema.targets else "binary"
    return LogicProgram(tuple(targets), tuple(biases), rules, schema, task)


# graph -----------------------------------------------------------------------

def _dot_id(text):
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_graph(program):
    """DOT digraph: literal nodes feed AND rule nodes, which feed OR target nodes.

    Negated literals use dashed edges with a hollow dot arrowhead.
    """
    if not isinstance(program, LogicProgram):
        program = extract_program(program)
    lines = ["digraph nln {", "  rankdir=LR;"]
    for k, t in enumerate(program.targets):
        lines.append(f"  target{k} [label={_dot_id(f'OR {t}')}, shape=box];")
    atoms = {}
    for r, rule in enumerate(program.ordered_rules()):
        lines.append(f"  rule{r} [label={_dot_id(f'AND a={rule.bias:.2f}')}, shape=ellipse];")
        for lit in rule.literals:
            atom = render_literal(Literal(lit.feature, lit.kind, False, lit.values, lit.intervals))
            if atom not in atoms:
                atoms[atom] = f"lit{len(atoms)}"
                lines.append(f"  {atoms[atom]} [label={_dot_id(atom)}, shape=plaintext];")
            style = " [style=dashed, arrowhead=odot]" if lit.negated else ""
            lines.append(f"  {atoms[atom]} -> rule{r}{style};")
        lines.append(f"  rule{r} -> target{program.targets.index(rule.target)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# coverage --------------------------------------------------------------------

def coverage_breakdown(model, dataset):
    """Per-rule activation mass (bias excluded) split by true class.

    Returns ``(columns, rows)``. For multiclass tasks the split is by class;
    otherwise by whether the row is positive for the rule's target.
    """
    from .postprocess import rule_activations, rule_targets

    ct = rule_activations(model, dataset)
    labels = model.schema.output_labels or tuple(f"t{k}" for k in range(model.n_outputs))
    targets = rule_targets(model)
    if model.task == "multiclass":
        classes = list(labels)
        cls = np.argmax(dataset.y, axis=1)
    else:
        classes = ["positive", "negative"]
    columns = ["rule", "target"] + classes + ["total", "target_share", "target_coverage"]
    rows = []
    for r in range(model.n_rules):
        k = targets[r]
        if model.task == "multiclass":
            masses = [float(ct[cls == c, r].sum()) for c in range(len(classes))]
        elif k >= 0:
            pos = dataset.y[:, k] > 0.5
            masses = [float(ct[pos, r].sum()), float(ct[~pos, r].sum())]
        else:
            masses = [0.0, 0.0]
        total = float(ct[:, r].sum())
        if k >= 0:
            pos = dataset.y[:, k] > 0.5
            hit = float(ct[pos, r].sum())
            share = hit / total if total > 0 else 0.0
            cov = hit / max(int(pos.sum()), 1)
        else:
            share = cov = 0.0
        rows.append([r, labels[k] if k >= 0 else "-"] + masses + [total, share, cov])
    return columns, rows


def coverage_table(columns, rows):
    cells = [[f"{v:.4g}" if isinstance(v, float) else str(v) for v in row] for row in rows]
    widths = [max([len(str(c))] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    out = ["  ".join(str(c).rjust(w) for c, w in zip(columns, widths))]
    for row in cells:
        out.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    return "\n".join(out) + "\n"


def coverage_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()
