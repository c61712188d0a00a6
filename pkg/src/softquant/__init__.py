"""Low-bit quantization toolkit.

Core pieces:

- ``quantizer``: smooth tanh-based quantizer with analytic gradients
- ``layers`` / ``train``: fake-quantization training for small networks
- ``gemm``: narrow-accumulator low-bit integer GEMM, bit-exact
- ``analysis``: error decomposition, sharpness sweeps, histograms
- ``archive`` / ``config`` / ``cli``: serialization and command line
"""

from .quantizer import (
    ALPHA_MAX,
    ALPHA_MIN,
    K_MAX,
    QuantParamError,
    QuantParams,
    QuantizerGrads,
    alpha_from_k,
    alpha_to_k,
    binary_quantize,
    binary_soft_quantize,
    hard_quantize,
    interval_center,
    interval_of,
    interval_tanh,
    level_index,
    scale_from_alpha,
    soft_quantize,
    soft_quantize_backward,
    uniform_quantize,
)

__version__ = "0.1.0"
