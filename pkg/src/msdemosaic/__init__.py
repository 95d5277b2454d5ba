"""Multispectral filter-array demosaicking toolkit.

Simulates 16-band filter-array capture, reconstructs cubes with per-band
bilinear interpolation or a simplified PPI-difference baseline, and refines
the bilinear result with a six-module 3D-convolutional residual network
trained by Adam. Includes PSNR evaluation, binary cube/checkpoint formats,
and a CLI (``msdemosaic``).
"""

from .classic import (
    DegeneratePatternError,
    TriangleKernel,
    bilinear_demosaic,
    ppi_demosaic,
    ppi_estimate,
)
from .cube import (
    FeatureCube,
    MosaicImage,
    MsfaPattern,
    SpectralCube,
    crop,
    cube_to_features,
    default_pattern,
    features_to_cube,
    tile,
)
from .metrics import band_psnrs, psnr
from .mosaic import BandMask, apply_msfa, band_mask
from .net3d import (
    Conv3dLayer,
    ModuleParams,
    NetworkConfig,
    NetworkParams,
    conv3d_backward,
    conv3d_forward,
    init_params,
    module_backward,
    module_forward,
    network_forward,
    param_count,
    relu,
    relu_backward,
)
from .train import (
    AdamState,
    CrossvalReport,
    FitResult,
    ReportRow,
    TrainPlan,
    adam_step,
    crossval_run,
    demosaic_training_pairs,
    fit,
    make_folds,
    mse_loss,
    train_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "SpectralCube",
    "MsfaPattern",
    "MosaicImage",
    "FeatureCube",
    "default_pattern",
    "crop",
    "tile",
    "cube_to_features",
    "features_to_cube",
    "BandMask",
    "apply_msfa",
    "band_mask",
    "TriangleKernel",
    "DegeneratePatternError",
    "bilinear_demosaic",
    "ppi_estimate",
    "ppi_demosaic",
    "Conv3dLayer",
    "NetworkConfig",
    "ModuleParams",
    "NetworkParams",
    "conv3d_forward",
    "conv3d_backward",
    "relu",
    "relu_backward",
    "module_forward",
    "module_backward",
    "network_forward",
    "init_params",
    "param_count",
    "AdamState",
    "TrainPlan",
    "FitResult",
    "ReportRow",
    "CrossvalReport",
    "mse_loss",
    "adam_step",
    "train_epoch",
    "make_folds",
    "demosaic_training_pairs",
    "fit",
    "crossval_run",
    "psnr",
    "band_psnrs",
    "__version__",
]
