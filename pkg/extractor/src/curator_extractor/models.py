"""Registry of perceptual classifier backbones.

Each entry knows how to build the network, where its global-average-pool
layer lives, the width of the pooled activation, and the preprocessing
the network expects.  Preprocessing is pinned here (and recorded in the
extraction sidecar) because swapping resize/normalization silently
changes every downstream feature comparison.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import torch
from torchvision import models


@dataclass(frozen=True)
class Preprocessing:
    resize: int
    crop: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def as_dict(self) -> dict:
        return {
            "resize": self.resize,
            "crop": self.crop,
            "mean": list(self.mean),
            "std": list(self.std),
        }


@dataclass(frozen=True)
class ModelSpec:
    name: str
    build: Callable[[bool], torch.nn.Module]
    pool_attr: str
    feature_dim: int
    classes: int
    preprocessing: Preprocessing


_IMAGENET = dict(mean=(0.485, 0.456, 0.406), std=(0.229, 0.224, 0.225))

_REGISTRY: dict[str, ModelSpec] = {}


def _register(spec: ModelSpec) -> None:
    _REGISTRY[spec.name] = spec


_register(
    ModelSpec(
        name="inception_v3",
        build=lambda pretrained: models.inception_v3(
            weights=models.Inception_V3_Weights.IMAGENET1K_V1 if pretrained else None,
            init_weights=not pretrained,
        ),
        pool_attr="avgpool",
        feature_dim=2048,
        classes=1000,
        preprocessing=Preprocessing(resize=342, crop=299, **_IMAGENET),
    )
)
_register(
    ModelSpec(
        name="resnet50",
        build=lambda pretrained: models.resnet50(
            weights=models.ResNet50_Weights.IMAGENET1K_V1 if pretrained else None
        ),
        pool_attr="avgpool",
        feature_dim=2048,
        classes=1000,
        preprocessing=Preprocessing(resize=256, crop=224, **_IMAGENET),
    )
)
_register(
    ModelSpec(
        name="resnet18",
        build=lambda pretrained: models.resnet18(
            weights=models.ResNet18_Weights.IMAGENET1K_V1 if pretrained else None
        ),
        pool_attr="avgpool",
        feature_dim=512,
        classes=1000,
        preprocessing=Preprocessing(resize=256, crop=224, **_IMAGENET),
    )
)


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def get_spec(name: str) -> ModelSpec:
    if name not in _REGISTRY:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(available_models())}")
    return _REGISTRY[name]


def build_model(name: str, weights: str = "pretrained", seed: int = 0) -> torch.nn.Module:
    """Instantiate a backbone in eval mode.

    ``weights="pretrained"`` loads the published classifier weights (a
    download on first use); ``weights="random"`` keeps the seeded random
    initialization, which is still a valid embedding choice for
    pipeline-level work.
    """
    spec = get_spec(name)
    if weights not in ("pretrained", "random"):
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    if weights == "random":
        torch.manual_seed(seed)
    try:
        model = spec.build(weights == "pretrained")
    except Exception as exc:
        raise RuntimeError(f"failed to load weights for {name}: {exc}") from exc
    model.eval()
    return model


def weight_hash(model: torch.nn.Module) -> str:
    """Stable digest of the full state dict, for sidecar provenance."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        digest.update(key.encode("utf-8"))
        digest.update(state[key].detach().cpu().numpy().tobytes())
    return digest.hexdigest()
