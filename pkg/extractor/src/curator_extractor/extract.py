"""Image-folder feature extraction.

Walks a directory whose immediate subdirectories are class names,
pushes every decodable image through a pretrained classifier, and dumps

* ``features.emb1``  - pooled activations, one row per image
* ``probs.emb1``     - softmax class probabilities, same rows
* ``features.manifest`` - image paths (relative to the root), one per row
* ``extraction.json``   - model id, weight hash and preprocessing record

Row order is the sorted relative path list, so it never depends on
filesystem enumeration order or batch size.  Class ids are assigned by
sorted subdirectory name.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import transforms

from curator import EmbeddingMatrix, Manifest, write_embeddings, write_manifest

from .models import ModelSpec, build_model, get_spec, weight_hash

IMAGE_SUFFIXES = {".bmp", ".gif", ".jpeg", ".jpg", ".png", ".tif", ".tiff", ".webp"}


class ExtractionError(Exception):
    """A non-recoverable problem with the inputs or the model."""


@dataclass(frozen=True)
class ExtractionConfig:
    image_root: Path
    model_name: str
    out_dir: Path
    batch_size: int = 32
    device: str = "cpu"
    weights: str = "pretrained"
    skip_bad: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExtractionError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class ExtractionResult:
    features_path: Path
    probs_path: Path
    manifest_path: Path
    sidecar_path: Path
    n_images: int
    skipped: list[dict] = field(default_factory=list)


def discover_images(image_root: Path) -> tuple[list[Path], list[int], dict[str, int]]:
    """Sorted relative image paths, their class ids, and the id map."""
    root = Path(image_root)
    if not root.is_dir():
        raise ExtractionError(f"image root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    paths: list[Path] = []
    labels: list[int] = []
    class_ids: dict[str, int] = {}
    for class_dir in class_dirs:
        files = sorted(
            p.relative_to(root)
            for p in class_dir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            continue
        class_ids[class_dir.name] = len(class_ids)
        for rel in files:
            paths.append(rel)
            labels.append(class_ids[class_dir.name])
    if not paths:
        raise ExtractionError(f"no images found under {root}")
    return paths, labels, class_ids


def _preprocessor(spec: ModelSpec) -> transforms.Compose:
    prep = spec.preprocessing
    return transforms.Compose(
        [
            transforms.Resize(prep.resize),
            transforms.CenterCrop(prep.crop),
            transforms.ToTensor(),
            transforms.Normalize(mean=prep.mean, std=prep.std),
        ]
    )


def _decode(path: Path, preprocess: transforms.Compose) -> torch.Tensor:
    with Image.open(path) as image:
        return preprocess(image.convert("RGB"))


def extract(config: ExtractionConfig) -> ExtractionResult:
    """Run the full pipeline and write the four output files."""
    spec = get_spec(config.model_name)
    model = build_model(config.model_name, weights=config.weights, seed=config.seed)
    device = torch.device(config.device)
    model.to(device)

    pooled: list[torch.Tensor] = []
    hook = getattr(model, spec.pool_attr).register_forward_hook(
        lambda module, args, output: pooled.append(torch.flatten(output, start_dim=1))
    )

    paths, labels, class_ids = discover_images(config.image_root)
    preprocess = _preprocessor(spec)
    root = Path(config.image_root)

    kept_paths: list[Path] = []
    kept_labels: list[int] = []
    skipped: list[dict] = []
    feature_rows: list[np.ndarray] = []
    prob_rows: list[np.ndarray] = []

    batch_tensors: list[torch.Tensor] = []

    def flush():
        if not batch_tensors:
            return
        stacked = torch.stack(batch_tensors).to(device)
        batch_tensors.clear()
        with torch.no_grad():
            logits = model(stacked)
        probs = torch.softmax(logits, dim=1)
        feature_rows.append(pooled.pop().cpu().numpy().astype(np.float32))
        prob_rows.append(probs.cpu().numpy().astype(np.float32))

    for rel, label in zip(paths, labels):
        try:
            tensor = _decode(root / rel, preprocess)
        except FileNotFoundError:
            raise
        except Exception as exc:
            if not config.skip_bad:
                raise ExtractionError(f"cannot decode {rel}: {exc}") from exc
            skipped.append({"path": rel.as_posix(), "error": str(exc)})
            continue
        kept_paths.append(rel)
        kept_labels.append(label)
        batch_tensors.append(tensor)
        if len(batch_tensors) == config.batch_size:
            flush()
    flush()
    hook.remove()

    if not kept_paths:
        raise ExtractionError("every image failed to decode")

    features = EmbeddingMatrix(np.concatenate(feature_rows), kept_labels)
    probabilities = EmbeddingMatrix(np.concatenate(prob_rows), kept_labels)
    manifest = Manifest(tuple(rel.as_posix() for rel in kept_paths))

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features_path = out / "features.emb1"
    probs_path = out / "probs.emb1"
    manifest_path = out / "features.manifest"
    sidecar_path = out / "extraction.json"

    write_embeddings(features, features_path)
    write_embeddings(probabilities, probs_path)
    write_manifest(manifest, manifest_path)
    sidecar = {
        "model": spec.name,
        "weights": config.weights,
        "weight_hash": weight_hash(model),
        "feature_dim": spec.feature_dim,
        "classes": spec.classes,
        "preprocessing": spec.preprocessing.as_dict(),
        "device": config.device,
        "batch_size": config.batch_size,
        "n_images": len(kept_paths),
        "class_ids": class_ids,
        "skipped": skipped,
    }
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", "utf-8")

    return ExtractionResult(
        features_path=features_path,
        probs_path=probs_path,
        manifest_path=manifest_path,
        sidecar_path=sidecar_path,
        n_images=len(kept_paths),
        skipped=skipped,
    )
