"""Per-class study: manifold density of the real data vs quality of the
generated data, correlated across classes.

Each class is treated as its own dataset: a density scorer is fit on
the class's real embeddings (optionally capped to a fixed sample size)
and its mean score is paired with the Frechet distance between the
class's real and generated feature distributions.  Pearson and Spearman
coefficients over those pairs summarize how predictive density is of
output quality.  Generated embeddings are an input; this module never
runs a generative model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import CuratorError, NumericError, ValidationError
from .metrics import frechet_distance, gaussian_summary, subsample
from .scoring import (
    DEFAULT_K,
    DEFAULT_REGULARIZATION,
    DEFAULT_VARIANCE_THRESHOLD,
    fit_and_score,
)
from .store import EmbeddingMatrix, class_indices


@dataclass(frozen=True)
class ClassStudyRow:
    """One class's mean density score and real-vs-generated distance."""

    class_id: int
    mean_score: float
    fid: float
    n_real: int
    n_gen: int

    def __post_init__(self):
        if self.fid < 0:
            raise ValidationError(f"class {self.class_id}: negative fid {self.fid}")
        if self.n_real < 2 or self.n_gen < 2:
            raise ValidationError(f"class {self.class_id}: needs at least 2 points per side")


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    n_classes: int
    scorer: str

    def __post_init__(self):
        if self.n_classes < 3:
            raise ValidationError(f"need at least 3 classes to correlate, got {self.n_classes}")
        for name, value in (("pearson", self.pearson), ("spearman", self.spearman)):
            if not np.isfinite(value) or not -1.0 <= value <= 1.0:
                raise NumericError(f"{name} coefficient out of range: {value}")


def _class_seed(seed: int, class_id: int, side: int) -> int:
    return int(np.random.SeedSequence([seed, class_id, side]).generate_state(1)[0])


def run_study(
    real: EmbeddingMatrix,
    generated: EmbeddingMatrix,
    scorer: str = "gaussian",
    *,
    regularization: float = DEFAULT_REGULARIZATION,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    k: int = DEFAULT_K,
    cap_real: int | None = None,
    cap_gen: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> tuple[list[ClassStudyRow], CorrelationReport]:
    """Per-class mean score vs per-class distance, plus their correlation.

    Every class id present in ``generated`` must exist in ``real``.
    Caps subsample each side independently with per-class seeds derived
    from ``seed``, so the study is deterministic for fixed inputs.
    """
    if real.labels is None or generated.labels is None:
        raise ValidationError("labels required on both real and generated matrices")
    real_groups = class_indices(real)
    gen_groups = class_indices(generated)
    missing = sorted(set(gen_groups) - set(real_groups))
    if missing:
        raise ValidationError(f"generated classes absent from real data: {missing}")

    rows: list[ClassStudyRow] = []
    for cid in sorted(gen_groups):
        real_c = real.take(real_groups[cid])
        gen_c = generated.take(gen_groups[cid])
        if cap_real is not None and cap_real < real_c.n:
            real_c = subsample(real_c, cap_real, _class_seed(seed, cid, 0))
        if cap_gen is not None and cap_gen < gen_c.n:
            gen_c = subsample(gen_c, cap_gen, _class_seed(seed, cid, 1))
        if real_c.n < 2 or gen_c.n < 2:
            raise ValidationError(f"class {cid}: fewer than 2 usable points")
        try:
            scores = fit_and_score(
                real_c,
                scorer,
                regularization=regularization,
                variance_threshold=variance_threshold,
                k=k,
                threads=threads,
            )
            fid = frechet_distance(gaussian_summary(real_c), gaussian_summary(gen_c))
        except CuratorError as exc:
            raise type(exc)(f"class {cid}: {exc}") from exc
        rows.append(
            ClassStudyRow(
                class_id=cid,
                mean_score=float(scores.scores.mean()),
                fid=fid.value,
                n_real=real_c.n,
                n_gen=gen_c.n,
            )
        )

    return rows, correlate_rows(rows, scorer)


def correlate_rows(rows: list[ClassStudyRow], scorer: str) -> CorrelationReport:
    """Pearson and Spearman between mean score and distance across classes.

    Spearman uses average ranks for ties, so it is invariant under any
    strictly increasing transform of either variable.
    """
    xs = np.array([row.mean_score for row in rows])
    ys = np.array([row.fid for row in rows])
    if xs.std() == 0 or ys.std() == 0:
        raise NumericError("zero variance across classes: correlation undefined")
    return CorrelationReport(
        pearson=float(stats.pearsonr(xs, ys).statistic),
        spearman=float(stats.spearmanr(xs, ys).statistic),
        n_classes=len(rows),
        scorer=scorer,
    )


def study_rows_csv(rows: list[ClassStudyRow]) -> str:
    lines = ["class_id,mean_score,fid,n_real,n_gen"]
    for row in sorted(rows, key=lambda r: r.class_id):
        lines.append(f"{row.class_id},{row.mean_score!r},{row.fid!r},{row.n_real},{row.n_gen}")
    return "\n".join(lines) + "\n"


def study_report_json(report: CorrelationReport) -> dict:
    return {
        "pearson": report.pearson,
        "spearman": report.spearman,
        "n_classes": report.n_classes,
        "scorer": report.scorer,
    }


def study_scatter_svg(rows: list[ClassStudyRow], width: int = 640, height: int = 480) -> str:
    """Deterministic scatter (score on x, distance on y), one circle per class."""
    margin = 40.0
    xs = [row.mean_score for row in sorted(rows, key=lambda r: r.class_id)]
    ys = [row.fid for row in sorted(rows, key=lambda r: r.class_id)]

    def scale(values, lo, hi):
        vmin, vmax = min(values), max(values)
        span = vmax - vmin
        if span == 0:
            return [(lo + hi) / 2.0 for _ in values]
        return [lo + (v - vmin) / span * (hi - lo) for v in values]

    px = scale(xs, margin, width - margin)
    # larger distance plotted higher up the page, so invert the y range
    py = scale(ys, height - margin, margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for x, y in zip(px, py):
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_study(
    rows: list[ClassStudyRow],
    report: CorrelationReport,
    destination: str | Path,
    write_svg: bool = True,
) -> None:
    """Write study.csv, study.json and (optionally) study.svg into a directory."""
    if not rows:
        raise ValidationError("no study rows to export")
    out = Path(destination)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.csv").write_text(study_rows_csv(rows), encoding="utf-8")
    (out / "study.json").write_text(
        json.dumps(study_report_json(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if write_svg:
        (out / "study.svg").write_text(study_scatter_svg(rows), encoding="utf-8")
