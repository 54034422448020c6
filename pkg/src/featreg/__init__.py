"""Feature-guided iterative B-spline FFD image registration toolkit."""

from .bspline import (
    ControlLattice,
    JacobianMap,
    cubic_bspline_weights,
    dense_grad_to_lattice,
    jacobian_determinant,
    lattice_to_dense,
)
from .core import (
    DisplacementField,
    FeatureMap,
    Image2D,
    SegmentationMap,
    normalize_intensity,
    upscale,
)
from .evaluation import EvalReport, dice, evaluate_registration, hd95, pct_neg_jdet, sdlog_jdet
from .features import (
    ExternalFeatureSet,
    FeatureExtractor,
    commutativity_gap,
    filterbank_extractor,
    identity_extractor,
    load_external,
    pca_project,
)
from .harness import (
    SweepCurve,
    SyntheticPair,
    alpha_sweep,
    make_synthetic_pair,
    rigid_sweep,
    run_benchmark,
    upscale_ablation,
)
from .metrics import MetricValue, diffusion_regularizer, feature_l1, feature_neg_cosine, mse, ncc
from .npyio import load_tensor, save_tensor
from .objective import Objective, ObjectiveSpec, evaluate
from .optim import NumericalAbort, OptimizerConfig, RegistrationResult, register
from .resampler import warp_backward, warp_features, warp_image, warp_segmentation

__version__ = "0.1.0"
