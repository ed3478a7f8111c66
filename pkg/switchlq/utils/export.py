"""CSV and JSON writers. Numbers use the shortest round-trip decimal form."""
import csv
import json
import os
from typing import Any, Iterable, List, Sequence

import numpy as np


def fmt(value) -> str:
    """Shortest decimal that round-trips to the same float (ints stay ints)."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Write rows with ',' delimiter and LF line endings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=",", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else fmt(cell) for cell in row])
    return path


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy containers and scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    return obj


def write_json(path: str, document: Any) -> str:
    """Write a structured text document (sorted keys, LF endings)."""
    with open(path, "w", newline="\n") as fh:
        json.dump(to_jsonable(document), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def family_rows(times: Sequence[float], family: np.ndarray, one_based: bool = True) -> List[list]:
    """Long-format rows ``(t, regime, row, col, value)`` for a time-indexed matrix family."""
    offset = 1 if one_based else 0
    rows = []
    for t, block in zip(times, family):
        for regime, M in enumerate(block):
            for i in range(M.shape[0]):
                for j in range(M.shape[1]):
                    rows.append([float(t), regime + offset, i + offset, j + offset, float(M[i, j])])
    return rows


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
