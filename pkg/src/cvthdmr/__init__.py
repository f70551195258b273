"""Multi-anchor cut-HDMR surrogates with centroidal Voronoi anchors."""

from .config import ExperimentConfig
from .cut_hdmr import (CutHdmrExpansion, ModelOracle, NodeSet, build_expansion, lagrange_basis, predicted_cost,
                       raw_cost, select_nodes)
from .cvt import VoronoiPartition, assign, lloyd
from .errors import (ConvergenceError, DomainError, LoadError, OracleError, ParameterError, PreconditionError,
                     UnsupportedMethodError)
from .multi_anchor import CvtHdmrModel, anchor_mean_point, anchor_random, build, build_single
from .parameter_space import ProductDensity, SampleSet, bounding_box, pdf, sample
from .persistence import load_expansion, load_model, save_expansion, save_model
from .problems import DiffusionProblem, diffusion_oracle, kl_decompose, quadrature_oracle, quadrature_test, solve
from .quadrature import error_stats, integrate_surrogate, reference_integral, relative_integral_error

__version__ = "0.1.0"
