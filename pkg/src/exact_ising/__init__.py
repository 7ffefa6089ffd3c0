"""Exact inference and sampling for zero-field Ising models.

Planar models reduce to perfect matchings on an expanded dual graph;
graphs without a K33 or K5 minor are handled through decompositions into
planar and small pieces.
"""
from .approx import (ApexModel, BoundResult, SpanningFamily, approx_marginals, build_apex,
                     dsg_family, error_metrics, optimize_bound, psg_family)
from .decomposition import (DecompositionNode, DecompositionSolver, NiceDecomposition,
                            edge_marginals, infer, sample, validate)
from .errors import (DisconnectedConditionSet, InfeasibleFamily, InvalidDecomposition,
                     IsingError, NonPlanar, NonZeroField, NoPerfectMatching, NotBiconnected,
                     NotK5Free, NotK33Free, NumericalBreakdown, TooLarge)
from .generator import random_k33_free, random_planar, random_planar_model
from .graph import Graph, expanded_dual, planar_embed, triangulate
from .minorfree import (biconnected_components, k5_decompose, k33_decompose,
                        triconnected_components)
from .model import IsingModel
from .planar import (conditional_log_Z, conditional_sample, log_Z_planar, pairwise_marginal,
                     pairwise_marginals, sample_planar)

__version__ = "0.1.0"
