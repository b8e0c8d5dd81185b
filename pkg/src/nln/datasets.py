"""Benchmark datasets that can be rebuilt exactly from their definitions.

Tic-tac-toe endgames, monk2 and the balance scale are fully determined by
their rules, so they are generated here rather than downloaded. Wine is read
from scikit-learn's bundled copy when that package is installed.
"""

import itertools

import numpy as np

from .data import Dataset
from .schema import Feature, Schema, Target

SQUARES = ("top_left", "top_middle", "top_right", "middle_left", "middle_middle", "middle_right",
           "bottom_left", "bottom_middle", "bottom_right")
LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6))


def _wins(board, player):
    return any(all(board[i] == player for i in line) for line in LINES)


def tictactoe_boards():
    """Every distinct final board of a legal game where x moves first."""
    finals, seen = set(), set()

    def play(board, player):
        key = tuple(board)
        if key in seen:
            return
        seen.add(key)
        if _wins(board, "x") or _wins(board, "o") or "b" not in board:
            finals.add(tuple(board))
            return
        for i in range(9):
            if board[i] == "b":
                board[i] = player
                play(board, "o" if player == "x" else "x")
                board[i] = "b"

    play(["b"] * 9, "x")
    return sorted(finals)


def tictactoe():
    """958 endgame boards; positive when x has three in a row."""
    values = ("x", "o", "b")
    schema = Schema(tuple(Feature(s, "categorical", values) for s in SQUARES),
                    (Target("class", "binary", ("positive",)),))
    boards = tictactoe_boards()
    x = np.array([[values.index(v) for v in b] for b in boards], dtype=float)
    y = np.array([[1.0 if _wins(b, "x") else 0.0] for b in boards])
    return Dataset(schema, x, y)


def tictactoe_truth_text():
    """The eight x-wins rules in the rule grammar."""
    lines = ["target class = positive"]
    for line in LINES:
        lits = " AND ".join(f"{SQUARES[i]} = x" for i in line)
        lines.append(f"IF {lits} THEN class = positive")
    return "\n".join(lines) + "\n"


MONK_VALUES = (("1", "2", "3"), ("1", "2", "3"), ("1", "2"), ("1", "2", "3"), ("1", "2", "3", "4"), ("1", "2"))


def monk2():
    """All 432 monk attribute combinations; positive iff exactly two attributes take their first value."""
    schema = Schema(tuple(Feature(f"a{i + 1}", "categorical", v) for i, v in enumerate(MONK_VALUES)),
                    (Target("class", "binary", ("1",)),))
    rows = list(itertools.product(*[range(len(v)) for v in MONK_VALUES]))
    x = np.array(rows, dtype=float)
    y = (np.sum(x == 0, axis=1) == 2).astype(float)[:, None]
    return Dataset(schema, x, y)


def monk2_truth_text():
    """The 15 size-6 rules of monk2: two attributes at 1, the other four not."""
    lines = ["target class"]
    for pair in itertools.combinations(range(6), 2):
        lits = [f"a{i + 1} = 1" if i in pair else f"a{i + 1} != 1" for i in range(6)]
        lines.append(f"IF {' AND '.join(lits)} THEN class")
    return "\n".join(lines) + "\n"


def balance(categorical=False):
    """The 625 balance-scale configurations, classes L, B, R by torque comparison."""
    names = ("left_weight", "left_distance", "right_weight", "right_distance")
    if categorical:
        feats = tuple(Feature(n, "categorical", ("1", "2", "3", "4", "5")) for n in names)
    else:
        feats = tuple(Feature(n, "continuous", lo=1.0, hi=5.0) for n in names)
    schema = Schema(feats, (Target("class", "multiclass", ("L", "B", "R")),))
    rows = np.array(list(itertools.product(range(1, 6), repeat=4)), dtype=float)
    left, right = rows[:, 0] * rows[:, 1], rows[:, 2] * rows[:, 3]
    cls = np.where(left > right, 0, np.where(left == right, 1, 2))
    x = rows - 1.0 if categorical else rows
    return Dataset(schema, x, np.eye(3)[cls])


def wine():
    """UCI wine recognition data (178 rows, 13 continuous features, 3 classes)."""
    from sklearn.datasets import load_wine

    raw = load_wine()
    x = np.asarray(raw.data, dtype=float)
    names = [n.replace("/", "_").replace(" ", "_") for n in raw.feature_names]
    feats = tuple(Feature(n, "continuous", lo=float(x[:, i].min()), hi=float(x[:, i].max()))
                  for i, n in enumerate(names))
    schema = Schema(feats, (Target("class", "multiclass", ("class_0", "class_1", "class_2")),))
    return Dataset(schema, x, np.eye(3)[raw.target])


GENERATED = {"tictactoe": tictactoe, "monk2": monk2, "balance": balance,
             "balance_categorical": lambda: balance(categorical=True), "wine": wine}
