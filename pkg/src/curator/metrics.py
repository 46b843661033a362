"""Distribution-level evaluation metrics over embedding and probability files.

* inception score: exponentiated mean KL between per-sample class
  distributions and their split-wise marginal,
* Frechet distance between Gaussian summaries of two feature sets,
* precision / recall and density / coverage over k-NN hypersphere
  manifolds (non-strict membership, so identical sets score 1).

Callers are responsible for the reference convention: feature files for
the reference side must come from the *original* distribution, not a
curated subset (the CLI enforces this by default).  All operations are
pure; sampling is explicit via :func:`subsample` with a fixed seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._blocks import kth_distances, membership_stats
from .errors import NumericError, ValidationError
from .store import EmbeddingMatrix

DEFAULT_NEIGHBORS = 5
DEFAULT_SPLITS = 10

ROW_SUM_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """n x C matrix whose rows are class distributions."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64, order="C")
        if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 1:
            raise ValidationError(f"probability matrix must be 2-D and nonempty, got {probs.shape}")
        if not np.isfinite(probs).all():
            raise ValidationError("probability matrix contains non-finite entries")
        if probs.min() < 0:
            raise ValidationError("probabilities must be >= 0")
        sums = probs.sum(axis=1)
        worst = int(np.abs(sums - 1.0).argmax())
        if abs(sums[worst] - 1.0) > ROW_SUM_TOLERANCE:
            raise ValidationError(f"row {worst} sums to {sums[worst]}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def classes(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def from_matrix(cls, matrix: EmbeddingMatrix) -> "ProbabilityMatrix":
        return cls(matrix.data)


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """Mean and unbiased covariance of a feature set (no regularization).

    The covariance must be symmetric and positive semidefinite up to a
    small round-off allowance; rank deficiency (even a zero matrix from
    a point mass) is fine.
    """

    mean: np.ndarray
    covariance: np.ndarray
    n_source: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValidationError(
                f"summary shapes disagree: mean {mean.shape}, covariance {cov.shape}"
            )
        scale = float(np.abs(cov).max(initial=0.0))
        if scale > 0 and float(np.abs(cov - cov.T).max()) > 1e-10 * scale:
            raise ValidationError("covariance is not symmetric")
        evals = np.linalg.eigvalsh((cov + cov.T) / 2.0)
        top = float(evals.max(initial=0.0))
        if float(evals.min(initial=0.0)) < -1e-8 * max(top, 1e-300):
            raise ValidationError(f"covariance is not positive semidefinite ({evals.min()})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class ManifoldRadii:
    """Per-point distance to the k-th nearest neighbour within one set."""

    radii: np.ndarray
    k: int


@dataclass(frozen=True, eq=False)
class MetricReport:
    """One named metric value plus the configuration that produced it."""

    name: str
    value: float
    std: float | None = None
    config: dict = field(default_factory=dict)
    warning: str | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericError(f"{self.name}: non-finite metric value")


def inception_score(probs: ProbabilityMatrix, splits: int = DEFAULT_SPLITS) -> MetricReport:
    """exp(mean KL(p(y|x) || p(y))) per split; reports mean and std over splits.

    Rows are partitioned into contiguous, equal-as-possible groups and
    p(y) is each group's mean row.  Zero probabilities contribute zero
    to the KL terms.
    """
    if splits < 1:
        raise ValidationError(f"splits must be >= 1, got {splits}")
    if probs.n < splits:
        raise ValidationError(f"need at least one row per split: n={probs.n}, splits={splits}")
    group_scores = []
    for rows in np.array_split(np.arange(probs.n), splits):
        p = probs.probs[rows]
        marginal = p.mean(axis=0)
        support = p > 0
        log_ratio = np.zeros_like(p)
        log_ratio[support] = np.log(p[support]) - np.log(
            np.broadcast_to(marginal, p.shape)[support]
        )
        kl = (p * log_ratio).sum(axis=1)
        group_scores.append(np.exp(kl.mean()))
    group_scores = np.asarray(group_scores)
    return MetricReport(
        name="inception_score",
        value=float(group_scores.mean()),
        std=float(group_scores.std()),
        config={"splits": splits, "n_gen": probs.n, "classes": probs.classes},
    )


def gaussian_summary(features: EmbeddingMatrix) -> GaussianSummary:
    """Mean and unbiased covariance in float64; zero covariance is allowed."""
    if features.n < 2:
        raise ValidationError(f"need at least 2 rows for a Gaussian summary, got {features.n}")
    x = features.data.astype(np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (features.n - 1)
    return GaussianSummary(mean=mean, covariance=(cov + cov.T) / 2.0, n_source=features.n)


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(cov)
    root = np.sqrt(np.maximum(evals, 0.0))
    sym = (evecs * root) @ evecs.T
    return (sym + sym.T) / 2.0


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> MetricReport:
    """Squared Frechet distance between two Gaussian summaries.

    ``|mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a S_b)^(1/2))`` with
    the cross term evaluated through the symmetric product
    ``S_a^(1/2) S_b S_a^(1/2)``, whose eigenvalues are clamped at zero
    before the square root.  A clearly negative eigenvalue (beyond
    round-off) is reported as a conditioning warning alongside the
    value; tiny negative totals clamp to zero.
    """
    if a.d != b.d:
        raise ValidationError(f"dimension mismatch: {a.d} vs {b.d}")
    diff = a.mean - b.mean
    mean_term = float(diff @ diff)
    root_a = _psd_sqrt(a.covariance)
    inner = root_a @ b.covariance @ root_a
    evals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    warning = None
    top = float(evals.max(initial=0.0))
    if top > 0 and float(evals.min()) < -1e-6 * top:
        warning = (
            f"ill-conditioned covariance product: eigenvalue {evals.min():.3e} "
            f"clamped (largest {top:.3e})"
        )
    cross = float(np.sqrt(np.maximum(evals, 0.0)).sum())
    value = mean_term + float(np.trace(a.covariance)) + float(np.trace(b.covariance)) - 2.0 * cross
    if not np.isfinite(value):
        raise NumericError("non-finite Frechet distance")
    return MetricReport(
        name="fid",
        value=max(value, 0.0),
        config={"n_real": a.n_source, "n_gen": b.n_source, "d": a.d},
        warning=warning,
    )


def manifold_radii(points: EmbeddingMatrix, k: int = DEFAULT_NEIGHBORS, threads: int = 1) -> ManifoldRadii:
    """Exact k-th-neighbour radius for every point of the set (self excluded)."""
    if not 1 <= k <= points.n - 1:
        raise ValidationError(f"k out of range: need 1 <= k <= n-1 with n={points.n}, got k={k}")
    radii = kth_distances(points.data, points.data, k, exclude_self=True, threads=threads)
    return ManifoldRadii(radii=radii, k=k)


def _fraction_inside(
    points: EmbeddingMatrix, centers: EmbeddingMatrix, radii: ManifoldRadii, threads: int
) -> float:
    counts, _ = membership_stats(points.data, centers.data, radii.radii, threads=threads)
    return float((counts > 0).mean())


def precision_recall(
    real: EmbeddingMatrix,
    generated: EmbeddingMatrix,
    k: int = DEFAULT_NEIGHBORS,
    threads: int = 1,
) -> tuple[MetricReport, MetricReport]:
    """Fidelity and diversity via k-NN hypersphere manifolds.

    Precision: fraction of generated points inside at least one real
    point's hypersphere.  Recall: the same with the roles swapped.
    Membership is non-strict, so a point on the boundary counts.
    """
    if real.d != generated.d:
        raise ValidationError(f"dimension mismatch: real d={real.d}, generated d={generated.d}")
    config = {"n_real": real.n, "n_gen": generated.n, "k": k}
    precision = _fraction_inside(generated, real, manifold_radii(real, k, threads), threads)
    recall = _fraction_inside(real, generated, manifold_radii(generated, k, threads), threads)
    return (
        MetricReport(name="precision", value=precision, config=dict(config)),
        MetricReport(name="recall", value=recall, config=dict(config)),
    )


def density_coverage(
    real: EmbeddingMatrix,
    generated: EmbeddingMatrix,
    k: int = DEFAULT_NEIGHBORS,
    threads: int = 1,
) -> tuple[MetricReport, MetricReport]:
    """Outlier-robust companions to precision and recall.

    Density: average number of real hyperspheres containing a generated
    sample, scaled by 1/k (can exceed 1).  Coverage: fraction of real
    points whose hypersphere contains at least one generated sample.
    """
    if real.d != generated.d:
        raise ValidationError(f"dimension mismatch: real d={real.d}, generated d={generated.d}")
    radii = manifold_radii(real, k, threads)
    counts, covered = membership_stats(generated.data, real.data, radii.radii, threads=threads)
    config = {"n_real": real.n, "n_gen": generated.n, "k": k}
    return (
        MetricReport(
            name="density",
            value=float(counts.sum()) / (k * generated.n),
            config=dict(config),
        ),
        MetricReport(name="coverage", value=float(covered.mean()), config=dict(config)),
    )


def subsample(matrix: EmbeddingMatrix, count: int, seed: int) -> EmbeddingMatrix:
    """Uniform sample of rows without replacement, original order preserved."""
    if not 1 <= count <= matrix.n:
        raise ValidationError(f"cannot sample {count} of {matrix.n} rows")
    if count == matrix.n:
        return matrix
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(matrix.n, size=count, replace=False))
    return matrix.take(indices)


_CSV_FIELDS = ("n_real", "n_gen", "k", "splits", "seed")


def reports_to_json(reports: list[MetricReport]) -> list[dict]:
    out = []
    for report in reports:
        entry = {"metric": report.name, "value": report.value, "config": dict(report.config)}
        if report.std is not None:
            entry["std"] = report.std
        if report.warning is not None:
            entry["warning"] = report.warning
        out.append(entry)
    return out


def reports_to_csv(reports: list[MetricReport]) -> str:
    """CSV row form ``metric,value,std,n_real,n_gen,k,splits,seed``."""
    lines = ["metric,value,std," + ",".join(_CSV_FIELDS)]
    for report in reports:
        std = "" if report.std is None else repr(report.std)
        tail = ",".join(
            "" if report.config.get(name) is None else str(report.config[name])
            for name in _CSV_FIELDS
        )
        lines.append(f"{report.name},{report.value!r},{std},{tail}")
    return "\n".join(lines) + "\n"
