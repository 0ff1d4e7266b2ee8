"""Modular-ridge shot simulation and Möbius information-lattice analysis."""
__version__ = "0.1.0"

from .core import (  # noqa: E402
    DEFAULT_KEYS,
    Dataset,
    DatasetFormatError,
    DecodedShot,
    ExperimentSpec,
    MalformedShotError,
    Shot,
    decode_registers,
    encode_registers,
    load_dataset,
    ridge_distance,
    ridge_hit,
    ridge_residual,
    save_dataset,
)
from .diagnostics import (  # noqa: E402
    FullBitstringModel,
    MarginalsNaiveBayes,
    PairwiseMaxEnt,
    ablation,
    ece,
    stratified_split,
    uniformity,
)
from .infolattice import (  # noqa: E402
    BitSubset,
    LatticeFunction,
    MobiusSynergy,
    compute_g,
    cps,
    key_slice,
    mobius_invert,
    plugin_mi,
    positive_mass,
    zeta_transform,
)
from .keyrec import RidgeKeyClassifier, classify_shot, dictionary_recovery, per_shot_accuracy  # noqa: E402
from .ridge_metrics import bootstrap_contrast_ci, heatmap, ridge_hit_probability, wilson_interval  # noqa: E402
from .simulate import ExactJoint, NoiseModel, calibrate_lambda, exact_distribution, sample_dataset  # noqa: E402
from .stats import permutation_test, reliability_sweep  # noqa: E402
