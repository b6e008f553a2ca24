"""Compressive learning from random periodic feature sketches.

Sketch a dataset with random Fourier features or a distorted periodic map
(one-bit quantized, modulo), then fit k-means centroids or a diagonal GMM
by sketch matching against the Fourier-feature model sketches.
"""

from .errors import (ACLError, DataError, DegenerateFunctionError, DimensionError,
                     IncomparableMapsError, IncompatibleSketchError, InfeasibleSeparationError,
                     InfeasibleTaskError, UnsupportedAnalyticSketchError)
from .features import (FeatureMap, FrequencySampler, apply_map, contribution_bits,
                       kernel_scale_preset, make_feature_map, sample_dither, sample_frequencies)
from .models import (Box, DiracMixture, GaussianMixture, entropy_bound, extended_box,
                     required_sketch_size, sketch_model, sketch_model_gradient, zeta_bound)
from .periodic import (Kind, PeriodicFunction, constant_Cf, constant_cf, evaluate,
                       fourier_coefficient, mean_lipschitz, sup_norm)
from .sketch import Sketch, merge, simulate_nodes, sketch_dataset
from .solver import SolverOptions, TaskSpec, clomp, cost, cost_gradient, gaussian_splitting, solve

__version__ = "0.1.0"
