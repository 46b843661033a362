"""Instance selection: keep the rows whose density score clears a threshold.

The threshold can be given directly (keep scores strictly above it) or
derived from a retention ratio (keep the top ``ceil(ratio * n)`` rows).
Either form runs globally over the whole matrix or independently within
each class, which preserves class balance.

Selection depends on the scores only through their ranking plus a
deterministic tie-break (lower original row index wins at the
boundary), so any strictly increasing transform of the scores leaves
the kept set unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scoring import (
    DEFAULT_K,
    DEFAULT_REGULARIZATION,
    DEFAULT_VARIANCE_THRESHOLD,
    ScoreVector,
    score_matrix,
)
from .store import EmbeddingMatrix, Manifest, check_pairing, class_indices

SCORERS = ("gaussian", "ppca", "knn")
SCOPES = ("global", "per_class")


@dataclass(frozen=True)
class SelectionConfig:
    """What to score with, how much to keep, and at what granularity.

    Exactly one of ``retention_ratio`` (fraction in (0, 1]) and
    ``threshold`` (a score cutoff, kept strictly above) must be set.
    """

    scorer: str
    retention_ratio: float | None = None
    threshold: float | None = None
    scope: str = "global"
    regularization: float = DEFAULT_REGULARIZATION
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValidationError(f"unknown scorer {self.scorer!r} (expected one of {SCORERS})")
        if self.scope not in SCOPES:
            raise ValidationError(f"unknown scope {self.scope!r} (expected one of {SCOPES})")
        if (self.retention_ratio is None) == (self.threshold is None):
            raise ValidationError("set exactly one of retention_ratio and threshold")
        if self.retention_ratio is not None and not 0.0 < self.retention_ratio <= 1.0:
            raise ValidationError(f"retention ratio must be in (0, 1], got {self.retention_ratio}")

    def scorer_kwargs(self) -> dict:
        return {
            "regularization": self.regularization,
            "variance_threshold": self.variance_threshold,
            "k": self.k,
        }


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Kept row indices plus the threshold that was actually applied.

    ``realized_threshold`` is a scalar for global scope and a
    per-class-id dict for per-class scope.  ``scores`` aligns with the
    input matrix rows (computed within each class's own fit when scoped).
    """

    kept_indices: np.ndarray
    realized_threshold: float | dict[int, float]
    retention_achieved: float
    scores: ScoreVector

    def __post_init__(self):
        kept = np.asarray(self.kept_indices, dtype=np.int64)
        if kept.size == 0:
            raise ValidationError("selection kept zero rows")
        if kept.size > 1 and not (np.diff(kept) > 0).all():
            raise ValidationError("kept indices must be strictly increasing")
        if kept[0] < 0 or kept[-1] >= len(self.scores):
            raise ValidationError("kept index out of range")
        kept.flags.writeable = False
        object.__setattr__(self, "kept_indices", kept)


def _select_by_ratio(scores: np.ndarray, ratio: float) -> tuple[np.ndarray, float]:
    n = scores.shape[0]
    count = math.ceil(ratio * n)
    # descending score, ascending index at ties
    order = np.lexsort((np.arange(n), -scores))
    kept = np.sort(order[:count])
    return kept, float(scores[order[count - 1]])


def _select_by_threshold(scores: np.ndarray, threshold: float) -> tuple[np.ndarray, float]:
    kept = np.nonzero(scores > threshold)[0]
    if kept.size == 0:
        raise ValidationError(f"threshold {threshold} selects zero rows (max score {scores.max()})")
    return kept, float(threshold)


def select(matrix: EmbeddingMatrix, config: SelectionConfig, threads: int = 1) -> SelectionResult:
    """Score the matrix with the configured scorer and keep the best rows.

    Retention mode keeps exactly ``ceil(ratio * n)`` rows (per class
    when scoped, summed across classes); the realized threshold is the
    score of the last row kept.  Threshold mode keeps rows scoring
    strictly above the given cutoff and reports an error rather than an
    empty result when nothing clears it.
    """
    scores = score_matrix(
        matrix, config.scorer, config.scope, threads=threads, **config.scorer_kwargs()
    )
    values = scores.scores

    if config.scope == "global":
        if config.retention_ratio is not None:
            kept, realized = _select_by_ratio(values, config.retention_ratio)
        else:
            kept, realized = _select_by_threshold(values, config.threshold)
        return SelectionResult(kept, realized, kept.size / matrix.n, scores)

    kept_parts: list[np.ndarray] = []
    realized: dict[int, float] = {}
    for cid, idx in class_indices(matrix).items():
        if config.retention_ratio is not None:
            local, psi = _select_by_ratio(values[idx], config.retention_ratio)
        else:
            local, psi = _select_by_threshold(values[idx], config.threshold)
        kept_parts.append(idx[local])
        realized[cid] = psi
    kept = np.sort(np.concatenate(kept_parts))
    return SelectionResult(kept, realized, kept.size / matrix.n, scores)


def materialize_subset(
    matrix: EmbeddingMatrix,
    manifest: Manifest | None,
    result: SelectionResult,
) -> tuple[EmbeddingMatrix, Manifest | None]:
    """Extract the kept rows (original order) and filter the manifest in lockstep."""
    if len(result.scores) != matrix.n:
        raise ValidationError(
            f"selection was computed for {len(result.scores)} rows, matrix has {matrix.n}"
        )
    kept = result.kept_indices
    if kept[-1] >= matrix.n:
        raise ValidationError(f"kept index {kept[-1]} out of range for {matrix.n} rows")
    if manifest is None:
        return matrix.take(kept), None
    check_pairing(matrix, manifest)
    return matrix.take(kept), manifest.take(kept)


def selection_report(config: SelectionConfig, result: SelectionResult, n_total: int) -> dict:
    """JSON-ready account of a selection run (consumed by training pipelines)."""
    report_config = {
        "scorer": config.scorer,
        "scope": config.scope,
        "retention_ratio": config.retention_ratio,
        "threshold": config.threshold,
    }
    if config.scorer == "gaussian":
        report_config["regularization"] = config.regularization
    elif config.scorer == "ppca":
        report_config["variance_threshold"] = config.variance_threshold
    elif config.scorer == "knn":
        report_config["k"] = config.k
    realized = result.realized_threshold
    if isinstance(realized, dict):
        realized = {str(cid): value for cid, value in sorted(realized.items())}
    return {
        "config": report_config,
        "realized_threshold": realized,
        "retention_achieved": result.retention_achieved,
        "n_kept": int(result.kept_indices.size),
        "n_total": int(n_total),
        "curated": True,
    }
