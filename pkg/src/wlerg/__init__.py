"""Wavelet latent position exponential random graphs."""

from .basis import (
    CoefficientGrid2D,
    DyadicInterval,
    WaveletCoefficients,
    WaveletIndex,
    eval_haar,
    forward_haar_2d,
    inverse_haar_2d,
)
from .kernel import (
    BandCoefficients,
    CoefficientLaw,
    Graphon,
    from_constant,
    from_dyadic_sbm,
    from_low_rank,
    from_two_block,
    graphon_eval,
    logit_eval,
    project_logit_surface,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientGrid2D",
    "DyadicInterval",
    "WaveletCoefficients",
    "WaveletIndex",
    "eval_haar",
    "forward_haar_2d",
    "inverse_haar_2d",
    "BandCoefficients",
    "CoefficientLaw",
    "Graphon",
    "from_constant",
    "from_dyadic_sbm",
    "from_low_rank",
    "from_two_block",
    "graphon_eval",
    "logit_eval",
    "project_logit_surface",
]
