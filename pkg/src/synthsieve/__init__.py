"""synthsieve: classify images as camera captures vs. synthetic compositions.

Lightweight depthwise-separable CNNs built from scratch, a ten-feature
forensic baseline with a random forest, a procedural dataset generator,
heat-map diagnostics, and a latency benchmark harness.
"""

__version__ = "0.1.0"

from .models import (  # noqa: F401
    ARCH_IDS,
    CLASS_NAMES,
    Model,
    ModelSpec,
    build_model,
    conv5_activations,
    forward,
    param_count,
)
from .modelio import load_model, save_model  # noqa: F401
