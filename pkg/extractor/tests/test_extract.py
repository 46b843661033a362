import json

import numpy as np
import pytest
from PIL import Image

from curator import read_embeddings, read_manifest
from curator_extractor import (
    ExtractionConfig,
    ExtractionError,
    discover_images,
    extract,
    get_spec,
)
from curator_extractor.cli import EXIT_INPUT, EXIT_OK, main

MODEL = "resnet18"  # smallest registered backbone keeps CPU tests quick


def build_fixture_tree(root, counts=(12, 8), seed=0):
    """Small class-labeled image tree; returns the total image count."""
    rng = np.random.default_rng(seed)
    total = 0
    for class_index, count in enumerate(counts):
        class_dir = root / f"class_{chr(ord('a') + class_index)}"
        class_dir.mkdir(parents=True)
        for i in range(count):
            pixels = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(class_dir / f"img_{i:03d}.png")
            total += 1
    return total


def run_extract(images, out, **overrides):
    config = ExtractionConfig(
        image_root=images,
        model_name=MODEL,
        out_dir=out,
        batch_size=overrides.pop("batch_size", 8),
        weights="random",
        **overrides,
    )
    return extract(config)


@pytest.fixture(scope="module")
def fixture_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    n = build_fixture_tree(root)
    assert n == 20
    return root


@pytest.fixture(scope="module")
def first_run(fixture_tree, tmp_path_factory):
    out = tmp_path_factory.mktemp("run_a")
    return run_extract(fixture_tree, out), out


class TestAcceptance:
    def test_outputs_pass_emb1_validation(self, first_run):
        result, out = first_run
        features = read_embeddings(result.features_path)
        probs = read_embeddings(result.probs_path)
        assert features.n == 20
        assert probs.n == 20

    def test_feature_dim_matches_pooled_width(self, first_run):
        result, _ = first_run
        features = read_embeddings(result.features_path)
        assert features.d == get_spec(MODEL).feature_dim

    def test_probability_rows_sum_to_one(self, first_run):
        result, _ = first_run
        probs = read_embeddings(result.probs_path)
        sums = probs.data.astype(np.float64).sum(axis=1)
        assert np.abs(sums - 1.0).max() <= 1e-5

    def test_manifests_byte_identical_across_runs(self, first_run, fixture_tree, tmp_path):
        result, _ = first_run
        second = run_extract(fixture_tree, tmp_path / "run_b")
        assert result.manifest_path.read_bytes() == second.manifest_path.read_bytes()
        first_features = read_embeddings(result.features_path)
        second_features = read_embeddings(second.features_path)
        assert np.abs(
            first_features.data.astype(np.float64) - second_features.data.astype(np.float64)
        ).max() <= 1e-5


class TestRowOrderAndLabels:
    def test_manifest_is_sorted_paths(self, first_run):
        result, _ = first_run
        manifest = read_manifest(result.manifest_path)
        assert list(manifest.entries) == sorted(manifest.entries)
        assert manifest.entries[0].startswith("class_a/")

    def test_labels_by_sorted_class_name(self, first_run):
        result, _ = first_run
        features = read_embeddings(result.features_path)
        assert (features.labels[:12] == 0).all()
        assert (features.labels[12:] == 1).all()
        probs = read_embeddings(result.probs_path)
        assert np.array_equal(features.labels, probs.labels)

    def test_batch_size_does_not_change_rows(self, fixture_tree, tmp_path, first_run):
        result, _ = first_run
        odd = run_extract(fixture_tree, tmp_path / "odd", batch_size=7)
        assert odd.manifest_path.read_bytes() == result.manifest_path.read_bytes()
        a = read_embeddings(result.features_path).data.astype(np.float64)
        b = read_embeddings(odd.features_path).data.astype(np.float64)
        assert np.abs(a - b).max() <= 1e-5

    def test_sidecar_records_provenance(self, first_run):
        result, _ = first_run
        sidecar = json.loads(result.sidecar_path.read_text())
        assert sidecar["model"] == MODEL
        assert sidecar["weights"] == "random"
        assert len(sidecar["weight_hash"]) == 64
        assert sidecar["preprocessing"]["crop"] == 224
        assert sidecar["class_ids"] == {"class_a": 0, "class_b": 1}

    def test_weight_hash_stable_across_runs(self, first_run, fixture_tree, tmp_path):
        result, _ = first_run
        second = run_extract(fixture_tree, tmp_path / "again")
        first_hash = json.loads(result.sidecar_path.read_text())["weight_hash"]
        second_hash = json.loads(second.sidecar_path.read_text())["weight_hash"]
        assert first_hash == second_hash


class TestBadInputs:
    def test_undecodable_image_fails_without_flag(self, tmp_path):
        root = tmp_path / "imgs"
        build_fixture_tree(root, counts=(3,))
        (root / "class_a" / "broken.png").write_bytes(b"not an image at all")
        with pytest.raises(ExtractionError, match="cannot decode"):
            run_extract(root, tmp_path / "out")

    def test_undecodable_image_skipped_with_flag(self, tmp_path):
        root = tmp_path / "imgs"
        n = build_fixture_tree(root, counts=(3,))
        (root / "class_a" / "broken.png").write_bytes(b"not an image at all")
        result = run_extract(root, tmp_path / "out", skip_bad=True)
        assert result.n_images == n
        assert result.skipped == [
            {"path": "class_a/broken.png", "error": result.skipped[0]["error"]}
        ]
        manifest = read_manifest(result.manifest_path)
        assert "class_a/broken.png" not in manifest.entries

    def test_empty_root_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(ExtractionError, match="no images"):
            discover_images(tmp_path / "empty")

    def test_missing_root_rejected(self, tmp_path):
        with pytest.raises(ExtractionError, match="not a directory"):
            discover_images(tmp_path / "nothing")


class TestCli:
    def test_happy_path(self, fixture_tree, tmp_path, capsys):
        code = main([
            "--images", str(fixture_tree), "--model", MODEL, "--out", str(tmp_path / "out"),
            "--batch", "8", "--weights", "random",
        ])
        assert code == EXIT_OK
        assert (tmp_path / "out" / "features.emb1").exists()
        assert (tmp_path / "out" / "probs.emb1").exists()
        assert (tmp_path / "out" / "features.manifest").exists()
        assert (tmp_path / "out" / "extraction.json").exists()
        assert "embedded 20 images" in capsys.readouterr().out

    def test_bad_input_exit_code(self, tmp_path):
        code = main([
            "--images", str(tmp_path / "missing"), "--model", MODEL,
            "--out", str(tmp_path / "out"), "--weights", "random",
        ])
        assert code == EXIT_INPUT
