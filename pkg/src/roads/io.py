"""CSV and JSON serialization for all artifacts.

All matrix CSVs carry a header row of variable names V0..V{n-1}; floats
are written with %.17g so every file round-trips without value change.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .priors import AlignedPrior, SurrogateConfig, validate_constraints


def _header(n: int) -> str:
    return ",".join(f"V{j}" for j in range(n))


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    m = np.asarray(matrix)
    fmt = "%d" if np.issubdtype(m.dtype, np.integer) else "%.17g"
    np.savetxt(path, m, fmt=fmt, delimiter=",", header=_header(m.shape[1]), comments="")


def read_matrix_csv(path, dtype=float) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty file")
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataError(f"{path}: line {lineno}: expected {width} fields")
        try:
            rows.append([float(tok) for tok in fields])
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
    arr = np.asarray(rows, dtype=float)
    if dtype is not float:
        cast = arr.astype(dtype)
        if not np.array_equal(cast, arr):
            raise DataError(f"{path}: non-integral values where {dtype} expected")
        return cast
    return arr


def write_dataset_csv(X: np.ndarray, path) -> None:
    write_matrix_csv(np.asarray(X, dtype=float), path)


def read_dataset_csv(path) -> np.ndarray:
    return read_matrix_csv(path, dtype=float)


def write_constraints_csv(Bc: np.ndarray, path) -> None:
    write_matrix_csv(validate_constraints(Bc), path)


def read_constraints_csv(path) -> np.ndarray:
    return validate_constraints(read_matrix_csv(path, dtype=np.int8))


def write_prior(prior: AlignedPrior, csv_path, sidecar_path) -> None:
    write_matrix_csv(prior.weights, csv_path)
    meta = {
        "tau": prior.tau,
        "surrogate_kind": prior.surrogate_kind,
        "mask": prior.mask.astype(int).tolist(),
        "signed": None if prior.signed is None else prior.signed.tolist(),
    }
    Path(sidecar_path).write_text(json.dumps(meta, indent=2))


def read_prior(csv_path, sidecar_path) -> AlignedPrior:
    weights = read_matrix_csv(csv_path, dtype=float)
    meta = json.loads(Path(sidecar_path).read_text())
    signed = meta.get("signed")
    return AlignedPrior(
        weights=weights,
        mask=np.asarray(meta["mask"], dtype=bool),
        tau=float(meta["tau"]),
        surrogate_kind=meta["surrogate_kind"],
        signed=None if signed is None else np.asarray(signed, dtype=float),
    )


TRACE_COLUMNS = (
    "iteration", "loss_alpha", "loss_beta", "h",
    "lambda_alpha", "grad_norm_alpha", "grad_norm_beta",
)


def write_trace_csv(trace: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        n = len(trace["iteration"])
        for i in range(n):
            fields = []
            for col in TRACE_COLUMNS:
                v = trace[col][i]
                fields.append(str(int(v)) if col == "iteration" else f"{v:.17g}")
            fh.write(",".join(fields) + "\n")


def read_trace_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    out = {col: np.array([float(r[k]) for r in rows]) for k, col in enumerate(header)}
    if "iteration" in out:
        out["iteration"] = out["iteration"].astype(int)
    return out
