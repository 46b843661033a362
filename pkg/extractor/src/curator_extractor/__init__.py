"""Image-folder feature extraction into EMB1 embedding files."""

from .extract import ExtractionConfig, ExtractionError, ExtractionResult, discover_images, extract
from .models import available_models, build_model, get_spec, weight_hash

__version__ = "0.1.0"

__all__ = [
    "ExtractionConfig",
    "ExtractionError",
    "ExtractionResult",
    "available_models",
    "build_model",
    "discover_images",
    "extract",
    "get_spec",
    "weight_hash",
]
