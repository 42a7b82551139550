"""hvgan: hypervolume-scalarized multi-loss GAN training at desk scale.

The package bundles a small multi-objective toolkit (Pareto filtering, exact
and Monte-Carlo hypervolume), a negative-log-hypervolume loss scalarizer with
its induced gradient weights, a minimal tape-based reverse-mode autodiff, a
GAN loss zoo, tiny conv generator/discriminator nets with Adam and a
two-phase training loop, PSNR/SSIM/GMSD metrics, and PGM/PPM image plumbing.
"""

__version__ = "0.1.0"

from .moo import (
    Orientation,
    ObjectiveVector,
    PointSet,
    ReferencePoint,
    dominates,
    pareto_filter,
    hypervolume_exact,
    hypervolume_mc,
)
from .scalarize import (
    ScalarizationMode,
    hv_log_loss,
    hv_log_loss_normalized,
    gradient_weights,
    linear_fixed,
)

__all__ = [
    "__version__",
    "Orientation",
    "ObjectiveVector",
    "PointSet",
    "ReferencePoint",
    "dominates",
    "pareto_filter",
    "hypervolume_exact",
    "hypervolume_mc",
    "ScalarizationMode",
    "hv_log_loss",
    "hv_log_loss_normalized",
    "gradient_weights",
    "linear_fixed",
]
