"""qdscale: hybrid quantum-classical corrective diffusion downscaling.

A self-contained CPU testbed: a float64 reverse-mode autodiff engine, an exact
statevector simulator with trajectory noise, hardware-efficient ansatz
templates, a hybrid quantum bottleneck layer, a two-stage corrective diffusion
downscaler for synthetic 2-component wind fields, and the verification metrics
used to compare classical against hybrid variants.
"""

from .errors import ConfigurationError, NumericError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "NumericError", "__version__"]
