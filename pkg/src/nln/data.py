"""Tabular datasets: typed storage, CSV ingestion and row subsets."""

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, SchemaError
from .schema import load_schema

MISSING_TOKEN = "?"


@dataclass
class Dataset:
    """Rows of features plus a 0/1 target matrix.

    ``values[:, i]`` holds feature ``i``: a probability for binary features,
    an integer value code for categoricals and the raw number for continuous
    ones. Missing entries are NaN.
    """

    schema: object
    values: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(self.schema.features))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(self.values.shape[0], self.schema.n_outputs
                                                               if np.size(self.y) == 0 else -1)
        if self.y.shape[1] != self.schema.n_outputs:
            raise DataError(f"target matrix has {self.y.shape[1]} columns, schema declares {self.schema.n_outputs}")

    def __len__(self):
        return self.values.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.schema, self.values[idx], self.y[idx])

    def strata(self):
        """One label per row, used for stratified splits."""
        if self.schema.task == "multiclass":
            return np.argmax(self.y, axis=1)
        if self.y.shape[1] == 1:
            return self.y[:, 0].astype(int)
        return np.array(["".join("1" if v else "0" for v in row) for row in self.y > 0.5])

    def with_ranges(self):
        """Fill continuous ranges missing from the schema with the data min/max."""
        feats = []
        for i, f in enumerate(self.schema.features):
            if f.kind == "continuous" and not f.has_range:
                col = self.values[:, i]
                col = col[~np.isnan(col)]
                if col.size == 0:
                    raise SchemaError(f"feature {f.name!r}: no range and no observed values")
                lo, hi = float(col.min()), float(col.max())
                if lo == hi:
                    raise SchemaError(f"feature {f.name!r}: degenerate range, all values are {lo}")
                f = replace(f, lo=lo, hi=hi)
            feats.append(f)
        return Dataset(self.schema.with_features(feats), self.values, self.y)

    @staticmethod
    def concat(parts):
        return Dataset(parts[0].schema, np.vstack([p.values for p in parts]), np.vstack([p.y for p in parts]))


def _parse_feature(f, token, missing_token, where):
    if token == missing_token:
        if not f.allows_missing:
            raise DataError(f"{where}: missing value for feature {f.name!r}, which does not allow it")
        return np.nan
    if f.kind == "binary" or (f.kind == "categorical" and f.promoted):
        try:
            v = float(token)
        except ValueError:
            raise DataError(f"{where}: feature {f.name!r} expects 0/1, got {token!r}") from None
        if f.promoted:
            if v not in (0.0, 1.0):
                raise DataError(f"{where}: feature {f.name!r} expects 0/1, got {token!r}")
            return v
        if not 0.0 <= v <= 1.0:
            raise DataError(f"{where}: binary feature {f.name!r} outside [0, 1]: {token!r}")
        return v
    if f.kind == "categorical":
        try:
            return float(f.values.index(token))
        except ValueError:
            raise DataError(f"{where}: undeclared value {token!r} for feature {f.name!r}") from None
    try:
        return float(token)
    except ValueError:
        raise DataError(f"{where}: feature {f.name!r} expects a number, got {token!r}") from None


def _parse_targets(schema, row, cols, where):
    out = []
    for t in schema.targets:
        token = row[cols[t.name]]
        if t.kind == "binary":
            out.append(1.0 if token == t.values[0] else 0.0)
        else:
            if token not in t.values:
                raise DataError(f"{where}: undeclared class {token!r} for target {t.name!r}")
            out.extend(1.0 if token == v else 0.0 for v in t.values)
    return out


def read_csv(path, schema, missing_token=MISSING_TOKEN):
    """Read a headed CSV whose columns include every schema feature and target."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Dataset(schema, np.zeros((0, len(schema.features))), np.zeros((0, schema.n_outputs)))
        header = [h.strip() for h in header]
        cols = {h: i for i, h in enumerate(header)}
        needed = [f.name for f in schema.features] + [t.name for t in schema.targets]
        absent = [n for n in needed if n not in cols]
        if absent:
            raise DataError(f"{path}: header lacks columns {absent}")
        values, ys = [], []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            row = [c.strip() for c in row]
            where = f"{path}:{lineno}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            values.append([_parse_feature(f, row[cols[f.name]], missing_token, where) for f in schema.features])
            ys.append(_parse_targets(schema, row, cols, where))
    n = len(values)
    return Dataset(schema, np.array(values, dtype=np.float64).reshape(n, len(schema.features)),
                   np.array(ys, dtype=np.float64).reshape(n, schema.n_outputs))


def load_csv(path, schema_path, missing_token=MISSING_TOKEN):
    return read_csv(path, load_schema(schema_path), missing_token)


def _format_feature(f, v, missing_token):
    if np.isnan(v):
        return missing_token
    if f.kind == "categorical" and not f.promoted:
        return f.values[int(v)]
    if f.kind == "binary" or f.promoted:
        return str(int(v)) if v in (0.0, 1.0) else repr(float(v))
    return repr(float(v))


def write_csv(dataset, path, missing_token=MISSING_TOKEN):
    schema = dataset.schema
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f.name for f in schema.features] + [t.name for t in schema.targets])
        for vals, ys in zip(dataset.values, dataset.y):
            row = [_format_feature(f, v, missing_token) for f, v in zip(schema.features, vals)]
            k = 0
            for t in schema.targets:
                if t.kind == "binary":
                    row.append(t.values[0] if ys[k] > 0.5 else ("0" if t.values[0] == "1" else f"not_{t.values[0]}"))
                    k += 1
                else:
                    row.append(t.values[int(np.argmax(ys[k:k + len(t.values)]))])
                    k += len(t.values)
            w.writerow(row)
