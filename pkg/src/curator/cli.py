"""Command-line front end.

Four commands compose the library into complete workflows:

* ``score``     - fit a density scorer and score every row of a dataset
* ``select``    - score, keep the best rows, and materialize the subset
* ``evaluate``  - compare reference and candidate feature distributions
* ``correlate`` - per-class density-vs-quality study

All randomness enters through ``--seed``; rerunning a command with the
same inputs and flags produces byte-identical outputs.  ``--threads``
changes only how work is scheduled, never the results.

Exit codes: 0 success, 1 unexpected failure, 2 I/O error, 3 invalid
input or configuration, 4 numerically degenerate computation, 5 refused
by policy (curated reference without the override flag).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics, scoring, selection, store, study
from .errors import FormatError, NumericError, PolicyError, ValidationError

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4
EXIT_POLICY = 5

THREADS_ENV_VAR = "CURATOR_THREADS"


def _default_threads() -> int:
    value = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_matrix(path: str) -> store.EmbeddingMatrix:
    return store.read_embeddings(path)


def _load_manifest(path_flag: str | None, embedding_path: str) -> store.Manifest | None:
    """Explicit --manifest wins; otherwise pick up the sidecar if present."""
    if path_flag:
        return store.read_manifest(path_flag)
    sidecar = store.manifest_path_for(embedding_path)
    if sidecar.exists():
        return store.read_manifest(sidecar)
    return None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _selection_config(args) -> selection.SelectionConfig:
    return selection.SelectionConfig(
        scorer=args.scorer,
        retention_ratio=getattr(args, "retention", None),
        threshold=getattr(args, "threshold", None),
        scope=args.scope.replace("-", "_"),
        regularization=args.reg,
        variance_threshold=args.variance,
        k=args.k,
    )


def _scorer_parameters(args) -> dict:
    params = {"scope": args.scope.replace("-", "_")}
    if args.scorer == "gaussian":
        params["regularization"] = args.reg
    elif args.scorer == "ppca":
        params["variance_threshold"] = args.variance
    elif args.scorer == "knn":
        params["k"] = args.k
    return params


def cmd_score(args) -> int:
    matrix = _load_matrix(args.input)
    manifest = _load_manifest(args.manifest, args.input)
    if manifest is not None:
        store.check_pairing(matrix, manifest)
    scores = scoring.score_matrix(
        matrix,
        args.scorer,
        args.scope.replace("-", "_"),
        regularization=args.reg,
        variance_threshold=args.variance,
        k=args.k,
        threads=args.threads,
    )
    out = _out_dir(args)
    (out / "scores.csv").write_text(scoring.scores_to_csv(scores, manifest), encoding="utf-8")
    summary = scoring.score_summary(args.scorer, _scorer_parameters(args), matrix, scores)
    _write_json(out / "scores.json", summary)
    return EXIT_OK


def cmd_select(args) -> int:
    matrix = _load_matrix(args.input)
    manifest = _load_manifest(args.manifest, args.input)
    if manifest is not None:
        store.check_pairing(matrix, manifest)
    config = _selection_config(args)
    result = selection.select(matrix, config, threads=args.threads)
    kept_matrix, kept_manifest = selection.materialize_subset(matrix, manifest, result)

    out = _out_dir(args)
    store.write_embeddings(kept_matrix, out / "kept.emb1")
    if kept_manifest is not None:
        store.write_manifest(kept_manifest, out / "kept.manifest")
    report = selection.selection_report(config, result, matrix.n)
    report["kept_file"] = "kept.emb1"
    _write_json(out / "selection.json", report)
    return EXIT_OK


def _curated_sidecar(reference_path: str) -> Path | None:
    sidecar = Path(reference_path).parent / "selection.json"
    if not sidecar.exists():
        return None
    try:
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if payload.get("curated") and payload.get("kept_file") == Path(reference_path).name:
        return sidecar
    return None


def _child_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def cmd_evaluate(args) -> int:
    sidecar = _curated_sidecar(args.reference)
    if sidecar is not None and not args.allow_curated_reference:
        raise PolicyError(
            f"reference {args.reference} is a curated (post-selection) subset per {sidecar}; "
            "metrics must use the original distribution "
            "(pass --allow-curated-reference to override)"
        )
    reference = _load_matrix(args.reference)
    candidate = _load_matrix(args.candidate)

    fid_candidate = candidate
    pr_reference, pr_candidate = reference, candidate
    if args.n_samples is not None:
        # distance convention: full reference for the Gaussian summary,
        # sampled candidate; manifold metrics sample both sides
        fid_candidate = metrics.subsample(candidate, args.n_samples, _child_seed(args.seed, 0))
        pr_reference = metrics.subsample(reference, args.n_samples, _child_seed(args.seed, 1))
        pr_candidate = metrics.subsample(candidate, args.n_samples, _child_seed(args.seed, 2))

    reports = [
        metrics.frechet_distance(
            metrics.gaussian_summary(reference), metrics.gaussian_summary(fid_candidate)
        )
    ]
    precision, recall = metrics.precision_recall(
        pr_reference, pr_candidate, k=args.k, threads=args.threads
    )
    density, coverage = metrics.density_coverage(
        pr_reference, pr_candidate, k=args.k, threads=args.threads
    )
    reports += [precision, recall, density, coverage]
    if args.probs:
        probs = metrics.ProbabilityMatrix.from_matrix(_load_matrix(args.probs))
        reports.append(metrics.inception_score(probs, splits=args.splits))
    for report in reports:
        report.config["seed"] = args.seed if args.n_samples is not None else None
        report.config["n_samples"] = args.n_samples

    _write_json(_out_dir(args) / "metrics.json", metrics.reports_to_json(reports))
    return EXIT_OK


def cmd_correlate(args) -> int:
    real = _load_matrix(args.reference)
    generated = _load_matrix(args.candidate)
    if real.labels is None or generated.labels is None:
        raise ValidationError("labels required: correlate needs labeled reference and candidate")
    rows, report = study.run_study(
        real,
        generated,
        scorer=args.scorer,
        regularization=args.reg,
        variance_threshold=args.variance,
        k=args.k,
        cap_real=args.n_samples,
        cap_gen=args.n_samples,
        seed=args.seed,
        threads=args.threads,
    )
    study.export_study(rows, report, _out_dir(args))
    return EXIT_OK


def _add_scorer_flags(parser: argparse.ArgumentParser, with_scope: bool = True) -> None:
    parser.add_argument(
        "--scorer", required=True, choices=("gaussian", "ppca", "knn"), help="density scorer"
    )
    if with_scope:
        # no default on purpose: whether to fit globally or per class is a
        # modelling decision the caller has to make explicitly
        parser.add_argument(
            "--scope",
            required=True,
            choices=("global", "per-class"),
            help="fit and select over the whole set or within each class",
        )
    parser.add_argument("--k", type=int, default=scoring.DEFAULT_K, help="neighbour count for knn")
    parser.add_argument(
        "--variance",
        type=float,
        default=scoring.DEFAULT_VARIANCE_THRESHOLD,
        help="explained-variance fraction for ppca",
    )
    parser.add_argument(
        "--reg",
        type=float,
        default=scoring.DEFAULT_REGULARIZATION,
        help="relative covariance ridge for the gaussian scorer",
    )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory (fixed file names inside)")
    parser.add_argument("--seed", type=int, default=0, help="seed for any explicit sampling")
    parser.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help=f"worker threads (default ${THREADS_ENV_VAR} or 1); never changes results",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curator",
        description="Density-based dataset curation and generative-model evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score every row of an embedding file")
    p_score.add_argument("--input", required=True, help="EMB1 embedding file")
    p_score.add_argument("--manifest", help="row manifest (default: <stem>.manifest if present)")
    _add_scorer_flags(p_score)
    _add_common_flags(p_score)
    p_score.set_defaults(handler=cmd_score)

    p_select = sub.add_parser("select", help="score, select and materialize a kept subset")
    p_select.add_argument("--input", required=True, help="EMB1 embedding file")
    p_select.add_argument("--manifest", help="row manifest (default: <stem>.manifest if present)")
    keep = p_select.add_mutually_exclusive_group(required=True)
    keep.add_argument("--retention", type=float, help="fraction of rows to keep, in (0, 1]")
    keep.add_argument("--threshold", type=float, help="keep rows scoring strictly above this")
    _add_scorer_flags(p_select)
    _add_common_flags(p_select)
    p_select.set_defaults(handler=cmd_select)

    p_eval = sub.add_parser("evaluate", help="compare reference and candidate distributions")
    p_eval.add_argument("--reference", required=True, help="EMB1 features of the original data")
    p_eval.add_argument("--candidate", required=True, help="EMB1 features of the generated data")
    p_eval.add_argument("--probs", help="EMB1 class-probability rows for the inception score")
    p_eval.add_argument("--k", type=int, default=metrics.DEFAULT_NEIGHBORS, help="manifold k")
    p_eval.add_argument("--n-samples", type=int, help="subsample size (candidate for the "
                        "Frechet metric, both sides for manifold metrics)")
    p_eval.add_argument("--splits", type=int, default=metrics.DEFAULT_SPLITS,
                        help="inception-score split count")
    p_eval.add_argument("--allow-curated-reference", action="store_true",
                        help="permit a reference file produced by select (normally refused)")
    _add_common_flags(p_eval)
    p_eval.set_defaults(handler=cmd_evaluate)

    p_corr = sub.add_parser("correlate", help="per-class density-vs-quality study")
    p_corr.add_argument("--reference", required=True, help="labeled EMB1 real features")
    p_corr.add_argument("--candidate", required=True, help="labeled EMB1 generated features")
    p_corr.add_argument("--n-samples", type=int, help="per-class sample cap for both sides")
    _add_scorer_flags(p_corr, with_scope=False)
    _add_common_flags(p_corr)
    p_corr.set_defaults(handler=cmd_correlate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.handler(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PolicyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_POLICY
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"error: unexpected failure: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    raise SystemExit(main())
