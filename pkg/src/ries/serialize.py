"""JSON and CSV conventions for matrices, reports and time series.

Complex scalars are stored as ``[re, im]`` pairs; matrices are row-major
nested lists of such pairs. All JSON emitted by this package is written
with sorted keys and a fixed float format so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from typing import Any

import numpy as np


def complex_to_json(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def matrix_to_json(a: np.ndarray) -> list[list[list[float]]]:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    return [[complex_to_json(z) for z in row] for row in a]


def vector_to_json(v: np.ndarray) -> list[list[float]]:
    return [complex_to_json(z) for z in np.asarray(v, dtype=complex)]


def matrix_from_json(data: Any, name: str = "matrix") -> np.ndarray:
    try:
        rows = []
        for row in data:
            rows.append([complex(entry[0], entry[1]) for entry in row])
        a = np.array(rows, dtype=complex)
    except (TypeError, IndexError) as exc:
        raise ValueError(f"{name}: entries must be [re, im] pairs in nested lists") from exc
    if a.ndim != 2:
        raise ValueError(f"{name}: expected a 2-d array, got shape {a.shape}")
    return a


def dump_json(obj: Any, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
