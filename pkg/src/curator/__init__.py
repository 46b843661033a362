"""Density-based dataset curation and generative-model evaluation.

The toolkit operates on precomputed perceptual embeddings: it scores
how densely populated each point's neighbourhood is, selects the
densest subset of a dataset for generative-model training, and
evaluates generated distributions against a reference with the usual
feature-space metrics.
"""

from .errors import CuratorError, FormatError, NumericError, PolicyError, ValidationError
from .metrics import (
    GaussianSummary,
    ManifoldRadii,
    MetricReport,
    ProbabilityMatrix,
    density_coverage,
    frechet_distance,
    gaussian_summary,
    inception_score,
    manifold_radii,
    precision_recall,
    subsample,
)
from .scoring import (
    GaussianModel,
    KnnIndex,
    PpcaModel,
    ScoreVector,
    fit_gaussian,
    fit_ppca,
    score_gaussian,
    score_knn,
    score_matrix,
    score_ppca,
)
from .selection import SelectionConfig, SelectionResult, materialize_subset, select
from .store import (
    EmbeddingMatrix,
    Manifest,
    partition_by_label,
    read_embeddings,
    read_manifest,
    write_embeddings,
    write_manifest,
)
from .study import ClassStudyRow, CorrelationReport, export_study, run_study

__version__ = "0.1.0"

__all__ = [
    "ClassStudyRow",
    "CorrelationReport",
    "CuratorError",
    "EmbeddingMatrix",
    "FormatError",
    "GaussianModel",
    "GaussianSummary",
    "KnnIndex",
    "Manifest",
    "ManifoldRadii",
    "MetricReport",
    "NumericError",
    "PolicyError",
    "PpcaModel",
    "ProbabilityMatrix",
    "ScoreVector",
    "SelectionConfig",
    "SelectionResult",
    "ValidationError",
    "density_coverage",
    "export_study",
    "fit_gaussian",
    "fit_ppca",
    "frechet_distance",
    "gaussian_summary",
    "inception_score",
    "manifold_radii",
    "materialize_subset",
    "partition_by_label",
    "precision_recall",
    "read_embeddings",
    "read_manifest",
    "run_study",
    "score_gaussian",
    "score_knn",
    "score_matrix",
    "score_ppca",
    "select",
    "subsample",
    "write_embeddings",
    "write_manifest",
]
