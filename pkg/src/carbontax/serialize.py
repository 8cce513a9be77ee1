"""Deterministic JSON / CSV emission.

All floats are written with 17 significant digits (%.17g), which round-trips
float64 exactly and keeps byte-identical outputs across runs.
"""

import json
import math

import numpy as np


def format_float(x):
    """Render a float with 17 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _encode(obj):
    if isinstance(obj, dict):
        items = ", ".join('"%s": %s' % (k, _encode(v)) for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError("cannot serialize %r" % type(obj))


def dumps_json(obj):
    return _encode(obj)


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_encode(obj))
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header, rows):
    """Write rows of mixed str/num cells; floats via format_float."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, str):
                    cells.append(cell)
                elif isinstance(cell, (int, np.integer)):
                    cells.append(str(int(cell)))
                else:
                    cells.append(format_float(cell))
            fh.write(",".join(cells) + "\n")
