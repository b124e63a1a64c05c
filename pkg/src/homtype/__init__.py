"""Besov and Triebel-Lizorkin machinery on finite spaces of homogeneous type."""
from .space import (QuasiMetricSpace, DoublingProfile, SpaceError, build_space, line_space,
                    grid_space, random_cloud, estimate_doubling)
from .dyadic import NetError, CubeFamily, DyadicTree, build_nets, build_tree
from .wavelets import WaveletBasis, CoefficientSequence, build_haar, build_smoothed, build_kernels, analyze, synthesize
from .seqspaces import SpaceParams, ParamError, validate_params, seq_norm, wavelet_function_norm
from .almost_diag import CubeOperator, certify_boundedness

__version__ = "0.1.0"
