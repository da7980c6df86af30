"""UniConvNet layers and receptive-field analysis tools."""

from ._core import (
    Model,
    UniconvError,
    __version__,
    agd_metrics,
    conv2d,
    gelu,
    kernel_schedule,
    layer_norm,
    run_overfit,
    theoretical_rf,
)

__all__ = [
    "Model",
    "UniconvError",
    "__version__",
    "agd_metrics",
    "conv2d",
    "gelu",
    "kernel_schedule",
    "layer_norm",
    "run_overfit",
    "theoretical_rf",
]
