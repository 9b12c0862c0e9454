"""CSV helpers shared by every module.

Floats are written with ``repr`` so that a write/read cycle reproduces the
in-memory values bit for bit.
"""

import csv
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def write_rows(path, header, rows):
    """Write ``rows`` under ``header``; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_columns(path, header, *columns):
    return write_rows(path, header, zip(*columns))


def read_float_columns(path):
    header, rows = read_rows(path)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, [data[:, i] for i in range(len(header))]
