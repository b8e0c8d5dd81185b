"""Ground-truth Boolean networks and their state-transition tables.

Programs are text files in the rule grammar with a ``variables`` line; the
target ``Ak_next`` gives the next state of ``Ak``. Shipped programs live in
``nln/data/programs``.
"""

import itertools
from importlib import resources
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import CapacityError, SchemaError
from .program import parse_text, program_eval
from .schema import Feature, Schema, Target

GUARD = 20
SHIPPED = ("mammalian", "arabidopsis", "budding")


def program_text(name_or_path):
    """Text of a shipped program by name, or of a file path."""
    if name_or_path in SHIPPED:
        return resources.files("nln").joinpath("data", "programs", f"{name_or_path}.txt").read_text()
    path = Path(name_or_path)
    if not path.exists():
        raise SchemaError(f"no shipped program or file named {name_or_path!r} (shipped: {', '.join(SHIPPED)})")
    return path.read_text()


def load_truth(name_or_path):
    program = parse_text(program_text(name_or_path))
    if program.schema is None:
        raise SchemaError("ground-truth programs need a 'variables' line")
    seen = set()
    for rule in program.rules:
        key = (rule.target, frozenset(rule.literals))
        if key in seen:
            raise SchemaError(f"duplicate rule for {rule.target}")
        seen.add(key)
    return program


def transition_schema(program):
    names = [f.name for f in program.schema.features]
    return Schema(tuple(Feature(n, "binary") for n in names), tuple(Target(t, "binary", ("1",)) for t in program.targets))


def generate_transitions(program):
    """Every state of the variables with the program's next state, ``2**n`` rows.

    Rows count up in binary with the first variable as the most significant bit.
    """
    n = len(program.schema.features)
    if n > GUARD:
        raise CapacityError(f"{n} variables exceed the enumeration guard {GUARD}")
    x = np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)
    y = (program_eval(program, x) > 0.5).astype(np.float64)
    return Dataset(transition_schema(program), x, y)
