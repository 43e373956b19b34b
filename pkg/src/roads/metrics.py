"""Graph-accuracy metrics: thresholding, F1 and structural Hamming distance.

Directed-edge convention: a reversed edge counts as one FP and one FN for
the F1 numbers but contributes a single unit to SHD.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DataError


@dataclass(frozen=True)
class EvalReport:
    f1: float
    precision: float
    recall: float
    shd: int
    threshold: float
    tp: int
    fp: int
    fn: int
    reversed: int
    extra: int
    missing: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def csv_row(self) -> str:
        d = asdict(self)
        return ",".join(str(d[k]) for k in CSV_FIELDS)


CSV_FIELDS = (
    "f1", "precision", "recall", "shd", "threshold",
    "tp", "fp", "fn", "reversed", "extra", "missing",
)
CSV_HEADER = ",".join(CSV_FIELDS)


def binarize(W: np.ndarray, s: float) -> np.ndarray:
    """Entry 1 iff |W_ij| > s (strict); cycles are reported, not repaired."""
    if s <= 0:
        raise ConfigurationError("threshold must be positive")
    W = np.asarray(W, dtype=float)
    return (np.abs(W) > s).astype(np.int8)


def _check_pair(estimate, truth):
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape or estimate.ndim != 2:
        raise DataError("estimate and truth dimensions disagree")
    return estimate.astype(bool), truth.astype(bool)


def _shd_counts(est: np.ndarray, tru: np.ndarray):
    """Per-pair comparison on the upper triangle of the skeletons.

    A pair present in both skeletons but oriented differently (including a
    2-cycle against a single edge) counts once as reversed; skeleton-only
    differences count as extra or missing.
    """
    und_e = est | est.T
    und_t = tru | tru.T
    iu = np.triu_indices(est.shape[0], k=1)
    extra = int((und_e & ~und_t)[iu].sum())
    missing = int((und_t & ~und_e)[iu].sum())
    shared = und_e & und_t
    mismatch = shared & ((est != tru) | (est.T != tru.T))
    reversed_pairs = int(mismatch[iu].sum())
    return extra, missing, reversed_pairs


def shd(estimate: np.ndarray, truth: np.ndarray) -> int:
    """Superfluous + missing + reversed edges, reversed pairs counted once."""
    est, tru = _check_pair(estimate, truth)
    extra, missing, reversed_pairs = _shd_counts(est, tru)
    return extra + missing + reversed_pairs


def f1_report(estimate: np.ndarray, truth: np.ndarray, s: float) -> EvalReport:
    est, tru = _check_pair(estimate, truth)
    tp = int((est & tru).sum())
    fp = int((est & ~tru).sum())
    fn = int((tru & ~est).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    extra, missing, reversed_pairs = _shd_counts(est, tru)
    return EvalReport(
        f1=f1,
        precision=precision,
        recall=recall,
        shd=reversed_pairs + extra + missing,
        threshold=s,
        tp=tp,
        fp=fp,
        fn=fn,
        reversed=reversed_pairs,
        extra=extra,
        missing=missing,
    )


def evaluate_weights(W: np.ndarray, truth: np.ndarray, s: float) -> EvalReport:
    return f1_report(binarize(W, s), truth, s)
