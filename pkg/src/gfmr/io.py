"""Plain-text I/O: CSV matrices, dims sidecars, and key=value manifests.

Everything here is meant to round-trip exactly, so floats are written with
repr-level precision and read back with numpy's text loader.
"""

from __future__ import annotations

import os

import numpy as np

FLOAT_FMT = "%.17g"


def write_matrix(path, mat: np.ndarray) -> None:
    """Write a 1-D or 2-D array as comma-separated text, one row per line."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim not in (1, 2):
        raise ValueError(f"expected a 1-D or 2-D array, got ndim={mat.ndim}")
    np.savetxt(path, np.atleast_2d(mat), fmt=FLOAT_FMT, delimiter=",")


def read_matrix(path) -> np.ndarray:
    """Read a comma-separated matrix; always returns a 2-D float array."""
    mat = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    return np.asarray(mat, dtype=float)


def dims_path(outcome_path) -> str:
    return str(outcome_path) + ".dims"


def write_dims(path, dims) -> None:
    """Write outcome axis lengths as a single comma-separated line."""
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"dims must be positive integers, got {dims}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(str(d) for d in dims) + "\n")


def read_dims(path) -> tuple[int, ...]:
    with open(path, encoding="ascii") as fh:
        text = fh.read().strip()
    if not text:
        raise ValueError(f"empty dims file: {path}")
    dims = tuple(int(tok) for tok in text.split(","))
    if any(d < 1 for d in dims):
        raise ValueError(f"dims must be positive, got {dims} in {path}")
    return dims


def write_manifest(path, entries: dict) -> None:
    """Write a key=value file, one entry per line, keys in given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            key = str(key)
            if "=" in key or "\n" in key:
                raise ValueError(f"manifest key {key!r} may not contain '=' or newlines")
            sval = str(value)
            if "\n" in sval:
                raise ValueError(f"manifest value for {key!r} may not contain newlines")
            fh.write(f"{key}={sval}\n")


def read_manifest(path) -> dict:
    """Read a key=value file; '#' lines and blank lines are skipped."""
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
