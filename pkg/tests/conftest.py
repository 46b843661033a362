"""Shared fixtures and independent oracle implementations.

The oracles are deliberately naive transcriptions of the definitions
(full per-row sorts, explicit loops over pairs); they stay independent
of the library's blocked kernels so agreement is meaningful.
"""
from __future__ import annotations

import numpy as np

from curator import EmbeddingMatrix


def knn_oracle_scores(points: np.ndarray, k: int) -> np.ndarray:
    """Negative k-th-neighbour distance via full sort, self excluded."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty(len(pts))
    for i in range(len(pts)):
        dist = np.sqrt(((pts[i] - pts) ** 2).sum(axis=1))
        dist[i] = np.inf
        out[i] = -np.sort(dist)[k - 1]
    return out


def radii_oracle(points: np.ndarray, k: int) -> np.ndarray:
    return -knn_oracle_scores(points, k)


def prdc_oracle(real: np.ndarray, gen: np.ndarray, k: int) -> dict[str, float]:
    """Exhaustive-loop transcription of all four manifold metrics."""
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    radii_real = radii_oracle(real, k)
    radii_gen = radii_oracle(gen, k)
    m, n = len(gen), len(real)

    precision_hits = 0
    density_total = 0
    for j in range(m):
        dist = np.sqrt(((gen[j] - real) ** 2).sum(axis=1))
        inside = dist <= radii_real
        precision_hits += bool(inside.any())
        density_total += int(inside.sum())
    recalled = 0
    covered = 0
    for i in range(n):
        dist = np.sqrt(((real[i] - gen) ** 2).sum(axis=1))
        recalled += bool((dist <= radii_gen).any())
        covered += bool((dist <= radii_real[i]).any())
    return {
        "precision": precision_hits / m,
        "recall": recalled / n,
        "density": density_total / (k * m),
        "coverage": covered / n,
    }


def inception_oracle(probs: np.ndarray, splits: int) -> tuple[float, float]:
    """Loop-level exponentiated mean KL against the split marginal."""
    probs = np.asarray(probs, dtype=np.float64)
    values = []
    for rows in np.array_split(np.arange(len(probs)), splits):
        block = probs[rows]
        marginal = block.mean(axis=0)
        kls = []
        for row in block:
            kl = 0.0
            for j in range(len(row)):
                if row[j] > 0:
                    kl += row[j] * (np.log(row[j]) - np.log(marginal[j]))
            kls.append(kl)
        values.append(np.exp(np.mean(kls)))
    return float(np.mean(values)), float(np.std(values))


def fid_1d_closed_form(mu1: float, var1: float, mu2: float, var2: float) -> float:
    return (mu1 - mu2) ** 2 + (np.sqrt(var1) - np.sqrt(var2)) ** 2


def random_matrix(rng: np.random.Generator, n: int, d: int, n_classes: int | None = None):
    labels = None if n_classes is None else rng.integers(0, n_classes, size=n)
    return EmbeddingMatrix(rng.standard_normal((n, d)), labels)


def rotation_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def affine_study_classes(fids=(1.0, 2.0, 3.0)):
    """Classes engineered so mean Gaussian score is affine decreasing in FID.

    Real class c is {-a_c, +a_c} in 1-D with a_c = exp(fid_c): the mean
    in-sample score is -ln(a_c) + const.  Generated is the same pair
    shifted by sqrt(fid_c): identical covariance, so the distance is the
    squared mean shift, i.e. exactly fid_c.
    """
    real_rows, real_labels, gen_rows, gen_labels = [], [], [], []
    for cid, fid in enumerate(fids):
        a = np.exp(fid)
        shift = np.sqrt(fid)
        real_rows += [[-a], [a]]
        gen_rows += [[-a + shift], [a + shift]]
        real_labels += [cid, cid]
        gen_labels += [cid, cid]
    return (
        EmbeddingMatrix(np.array(real_rows), real_labels),
        EmbeddingMatrix(np.array(gen_rows), gen_labels),
    )


def synthetic_study_pair(
    n_classes: int = 50,
    per_class: int = 200,
    d: int = 8,
    seed: int = 1234,
):
    """Gaussian classes of increasing spread plus a refit-and-draw "generated" side.

    Wider classes have lower density scores and larger finite-sample
    distances to an independent draw from their own fitted Gaussian, so
    score and distance should correlate negatively across classes.
    """
    rng = np.random.default_rng(seed)
    real_parts, gen_parts, labels = [], [], []
    for cid in range(n_classes):
        spread = 0.5 * (1.06**cid)
        center = rng.uniform(-5.0, 5.0, size=d)
        block = center + spread * rng.standard_normal((per_class, d))
        mean = block.mean(axis=0)
        centered = block - mean
        cov = centered.T @ centered / (per_class - 1)
        draw = rng.multivariate_normal(mean, cov, size=per_class)
        real_parts.append(block)
        gen_parts.append(draw)
        labels += [cid] * per_class
    real = EmbeddingMatrix(np.concatenate(real_parts), labels)
    generated = EmbeddingMatrix(np.concatenate(gen_parts), labels)
    return real, generated
