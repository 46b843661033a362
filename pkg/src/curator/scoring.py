"""Manifold-density scoring over embedding matrices.

Three interchangeable scorers, each fit on a reference matrix and then
applied to query rows; higher scores always mean denser neighbourhoods:

* full-covariance Gaussian log-density
  ``-0.5 * [ln|S| + (z-mu)^T S^-1 (z-mu) + d ln(2*pi)]``,
* probabilistic PCA log-density with the low-rank-plus-isotropic
  covariance ``C = W W^T + sigma^2 I``, keeping enough components to
  explain a configured fraction of the variance,
* negative Euclidean distance to the k-th nearest neighbour, with the
  query itself excluded when it belongs to the reference set.

Fitted models are immutable and safe to score from concurrently.
Scoring parallelizes over fixed-size query blocks, so results are
bit-identical for any thread count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ._blocks import _for_each_block, kth_distances
from .errors import CuratorError, NumericError, ValidationError
from .store import EmbeddingMatrix, Manifest, class_indices

DEFAULT_REGULARIZATION = 1e-6
DEFAULT_VARIANCE_THRESHOLD = 0.95
DEFAULT_K = 5

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-row scores, aligned with the scored matrix's rows."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] < 1:
            raise ValidationError(f"scores must be a nonempty vector, got shape {scores.shape}")
        if not np.isfinite(scores).all():
            raise NumericError("non-finite score produced")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Gaussian density fit: mean, regularized covariance and its factor."""

    mean: np.ndarray
    covariance: np.ndarray
    log_det: float
    cholesky: np.ndarray  # lower-triangular factor of the regularized covariance

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class PpcaModel:
    """Probabilistic PCA fit with q retained components.

    ``weight`` is d x q with columns along the retained eigenvectors,
    scaled so that ``C = weight @ weight.T + residual_variance * I``.
    ``m_cholesky`` factors the q x q inner system
    ``M = weight.T @ weight + residual_variance * I`` through which the
    quadratic form is evaluated (the d x d inverse is never formed).
    """

    mean: np.ndarray
    weight: np.ndarray
    residual_variance: float
    q: int
    log_det: float  # ln|C| = ln|M| + (d - q) ln(residual_variance)
    m_cholesky: np.ndarray
    explained_fraction: float

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class KnnIndex:
    """Reference point set plus neighbour count for distance scoring."""

    reference: EmbeddingMatrix
    k: int = DEFAULT_K

    def __post_init__(self):
        if not 1 <= self.k <= self.reference.n - 1:
            raise ValidationError(
                f"k out of range: need 1 <= k <= n-1 with n={self.reference.n}, got k={self.k}"
            )


def _sample_covariance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and unbiased (n-1 divisor) covariance, symmetrized."""
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return mean, (cov + cov.T) / 2.0


def fit_gaussian(
    data: EmbeddingMatrix, regularization: float = DEFAULT_REGULARIZATION
) -> GaussianModel:
    """Fit mean and covariance, then ridge the covariance for stability.

    The ridge adds ``regularization * (trace/d)`` to the diagonal, i.e.
    it is relative to the average variance; if the covariance is exactly
    zero (all points identical) the scale falls back to 1 so a positive
    ridge still yields a proper density.  ``regularization=0`` keeps the
    raw sample covariance and fails if it is not positive definite.
    """
    if regularization < 0:
        raise ValidationError(f"regularization must be >= 0, got {regularization}")
    if data.n < 2:
        raise ValidationError(f"need at least 2 rows to fit a Gaussian, got {data.n}")
    x = data.data.astype(np.float64)
    mean, cov = _sample_covariance(x)
    if regularization > 0:
        scale = float(np.trace(cov)) / data.d
        if scale <= 0:
            scale = 1.0
        cov = cov + (regularization * scale) * np.eye(data.d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericError(
            "singular covariance; increase regularization or use PPCA/KNN"
        ) from None
    log_det = 2.0 * float(np.log(np.diag(chol)).sum())
    return GaussianModel(mean=mean, covariance=cov, log_det=log_det, cholesky=chol)


def score_gaussian(
    model: GaussianModel, queries: EmbeddingMatrix, threads: int = 1
) -> ScoreVector:
    """Gaussian log-density of each query row under the fitted model."""
    if queries.d != model.d:
        raise ValidationError(f"dimension mismatch: model d={model.d}, queries d={queries.d}")
    x = queries.data.astype(np.float64)
    out = np.empty(queries.n)

    def fill(s, e):
        centered = x[s:e] - model.mean
        y = solve_triangular(model.cholesky, centered.T, lower=True)
        quad = np.square(y).sum(axis=0)
        out[s:e] = -0.5 * (model.log_det + quad + model.d * _LOG_2PI)

    _for_each_block(queries.n, fill, threads)
    return ScoreVector(out)


def _ordered_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs sorted by descending eigenvalue, with deterministic
    sign (largest-magnitude component positive) and stable tie order."""
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    flip = evecs[np.abs(evecs).argmax(axis=0), np.arange(evecs.shape[1])] < 0
    evecs[:, flip] *= -1.0
    return evals, evecs


def fit_ppca(
    data: EmbeddingMatrix, variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
) -> PpcaModel:
    """Fit probabilistic PCA by eigendecomposition of the sample covariance.

    q is the smallest count of leading eigenvalues whose cumulative
    fraction reaches ``variance_threshold``, clamped to at most d-1 so
    the residual variance stays positive; the residual variance is the
    mean of the discarded eigenvalues, floored at 1e-10 times the top
    eigenvalue.
    """
    if not 0.0 < variance_threshold <= 1.0:
        raise ValidationError(f"variance threshold must be in (0, 1], got {variance_threshold}")
    if data.n < 2:
        raise ValidationError(f"need at least 2 rows to fit PPCA, got {data.n}")
    if data.d < 2:
        raise ValidationError("PPCA needs d >= 2 (use the Gaussian scorer for 1-D data)")
    x = data.data.astype(np.float64)
    mean, cov = _sample_covariance(x)
    evals, evecs = _ordered_eigh(cov)
    evals = np.maximum(evals, 0.0)  # clamp eigen round-off
    total = float(evals.sum())
    if total <= 0:
        raise NumericError("all eigenvalues zero: data has no variance")

    fractions = np.cumsum(evals) / total
    reached = np.nonzero(fractions >= variance_threshold)[0]
    q = int(reached[0]) + 1 if reached.size else data.d
    q = min(max(q, 1), data.d - 1)

    sigma2 = float(evals[q:].mean())
    sigma2 = max(sigma2, 1e-10 * float(evals[0]))
    weight = evecs[:, :q] * np.sqrt(np.maximum(evals[:q] - sigma2, 0.0))

    m = weight.T @ weight + sigma2 * np.eye(q)
    m_chol = np.linalg.cholesky(m)
    log_det = 2.0 * float(np.log(np.diag(m_chol)).sum()) + (data.d - q) * math.log(sigma2)
    return PpcaModel(
        mean=mean,
        weight=weight,
        residual_variance=sigma2,
        q=q,
        log_det=log_det,
        m_cholesky=m_chol,
        explained_fraction=float(fractions[q - 1]),
    )


def score_ppca(model: PpcaModel, queries: EmbeddingMatrix, threads: int = 1) -> ScoreVector:
    """PPCA log-density of each query row.

    The quadratic form uses the Woodbury identity
    ``C^-1 = (I - W M^-1 W^T) / sigma^2`` with the factored q x q M.
    """
    if queries.d != model.d:
        raise ValidationError(f"dimension mismatch: model d={model.d}, queries d={queries.d}")
    x = queries.data.astype(np.float64)
    out = np.empty(queries.n)

    def fill(s, e):
        centered = x[s:e] - model.mean
        norms = np.square(centered).sum(axis=1)
        proj = centered @ model.weight
        y = solve_triangular(model.m_cholesky, proj.T, lower=True)
        quad = (norms - np.square(y).sum(axis=0)) / model.residual_variance
        out[s:e] = -0.5 * (model.log_det + quad + model.d * _LOG_2PI)

    _for_each_block(queries.n, fill, threads)
    return ScoreVector(out)


def score_knn(
    index: KnnIndex,
    queries: EmbeddingMatrix,
    queries_are_reference: bool = False,
    threads: int = 1,
) -> ScoreVector:
    """Negative distance from each query to its k-th nearest reference row.

    With ``queries_are_reference`` the query matrix must be row-identical
    to the index's reference set, and each row skips itself, so k
    neighbours means k *other* points.  The k-th nearest is the k-th
    order statistic, counting duplicates with multiplicity.
    """
    ref = index.reference
    if queries.d != ref.d:
        raise ValidationError(f"dimension mismatch: reference d={ref.d}, queries d={queries.d}")
    if queries_are_reference:
        if queries.n != ref.n or not np.array_equal(queries.data, ref.data):
            raise ValidationError("queries_are_reference set but queries differ from reference")
    dist = kth_distances(
        queries.data, ref.data, index.k, exclude_self=queries_are_reference, threads=threads
    )
    return ScoreVector(-dist)


def fit_and_score(
    matrix: EmbeddingMatrix,
    scorer: str,
    *,
    regularization: float = DEFAULT_REGULARIZATION,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    k: int = DEFAULT_K,
    threads: int = 1,
) -> ScoreVector:
    """Fit the named scorer on a matrix and score that same matrix's rows."""
    if scorer == "gaussian":
        model = fit_gaussian(matrix, regularization)
        return score_gaussian(model, matrix, threads=threads)
    if scorer == "ppca":
        model = fit_ppca(matrix, variance_threshold)
        return score_ppca(model, matrix, threads=threads)
    if scorer == "knn":
        index = KnnIndex(matrix, k)
        return score_knn(index, matrix, queries_are_reference=True, threads=threads)
    raise ValidationError(f"unknown scorer {scorer!r} (expected gaussian, ppca or knn)")


def score_matrix(
    matrix: EmbeddingMatrix,
    scorer: str,
    scope: str = "global",
    *,
    regularization: float = DEFAULT_REGULARIZATION,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    k: int = DEFAULT_K,
    threads: int = 1,
) -> ScoreVector:
    """Score every row, fitting once globally or once per class.

    Per-class scores come from each class's own fit, so they rank rows
    within a class but are not comparable across classes.
    """
    kwargs = dict(
        regularization=regularization, variance_threshold=variance_threshold, k=k, threads=threads
    )
    if scope == "global":
        return fit_and_score(matrix, scorer, **kwargs)
    if scope != "per_class":
        raise ValidationError(f"unknown scope {scope!r} (expected 'global' or 'per_class')")
    if matrix.labels is None:
        raise ValidationError("labels required for per-class scope")
    scores = np.empty(matrix.n)
    for cid, idx in class_indices(matrix).items():
        try:
            part = fit_and_score(matrix.take(idx), scorer, **kwargs)
        except CuratorError as exc:
            raise type(exc)(f"class {cid}: {exc}") from exc
        scores[idx] = part.scores
    return ScoreVector(scores)


def scores_to_csv(scores: ScoreVector, manifest: Manifest | None = None) -> str:
    """CSV rows ``index,identifier,score``; identifier empty without a manifest."""
    if manifest is not None and len(manifest) != len(scores):
        raise ValidationError(
            f"manifest has {len(manifest)} entries but scores cover {len(scores)} rows"
        )
    lines = ["index,identifier,score"]
    for i, value in enumerate(scores.scores):
        identifier = manifest.entries[i] if manifest is not None else ""
        lines.append(f"{i},{identifier},{float(value)!r}")
    return "\n".join(lines) + "\n"


def score_summary(
    model_type: str,
    parameters: dict,
    matrix: EmbeddingMatrix,
    scores: ScoreVector,
) -> dict:
    """JSON-ready summary of a scoring run."""
    if len(scores) != matrix.n:
        raise ValidationError(f"score length {len(scores)} != matrix rows {matrix.n}")
    return {
        "model_type": model_type,
        "parameters": parameters,
        "n": matrix.n,
        "d": matrix.d,
        "score_min": float(scores.scores.min()),
        "score_max": float(scores.scores.max()),
        "score_mean": float(scores.scores.mean()),
    }
