"""Deterministic file output: CSV curves, JSON summaries, target documents.

Determinism contract: every writer here is a pure function of its inputs.
Floats are rendered with ``repr`` (shortest round-trip form), JSON keys are
sorted, and line endings are LF regardless of platform, so a rerun with the
same data produces byte-identical files.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .datasets import ExperimentTarget
from .training import PovmTrainingSet, StateTrainingSet

__all__ = [
    "format_cell",
    "load_target",
    "matrix_to_pairs",
    "pairs_to_matrix",
    "save_target",
    "write_csv",
    "write_json",
]


def format_cell(value) -> str:
    """Render one CSV cell; floats via repr of the Python float."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a UTF-8, LF-terminated CSV with a header row."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    """Write sorted-key, 2-space-indented JSON with a trailing newline."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def matrix_to_pairs(matrix: np.ndarray) -> list:
    """Encode a complex matrix as nested [real, imag] pairs."""
    m = np.asarray(matrix, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def pairs_to_matrix(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("expected an n x n x 2 array of [real, imag] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def save_target(path, target: ExperimentTarget, seed=None) -> None:
    """Serialize a generated target with its generator metadata.

    The payload matrices are stored explicitly (real/imag pairs) so a saved
    target can be audited or reloaded without rerunning the generator.
    """
    doc = {"kind": target.kind, "metadata": _jsonable(target.metadata)}
    if seed is not None:
        doc["seed"] = int(seed)
    payload = target.payload
    if isinstance(payload, PovmTrainingSet):
        doc["elements"] = [matrix_to_pairs(el) for el in payload.elements]
        doc["probabilities"] = [float(p) for p in payload.probabilities]
    else:
        doc["target"] = matrix_to_pairs(payload.rho)
    write_json(path, doc)


def load_target(path) -> ExperimentTarget:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "elements" in doc:
        payload = PovmTrainingSet(
            elements=tuple(pairs_to_matrix(el) for el in doc["elements"]),
            probabilities=np.asarray(doc["probabilities"], dtype=float),
        )
    else:
        payload = StateTrainingSet(rho=pairs_to_matrix(doc["target"]))
    return ExperimentTarget(
        kind=doc["kind"], payload=payload, metadata=doc.get("metadata", {})
    )
