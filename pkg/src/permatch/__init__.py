"""Exchangeable random permutations and Bayesian graph matching."""

from .perm_core import (
    CycleDecomposition,
    InsertionCandidate,
    NodeSubsetPermutation,
    Permutation,
    canonical_cycles,
    cayley_distance,
    compose,
    conjugate,
    cycle_string,
    delete_last,
    delete_node,
    delete_nodes,
    hamming_distance,
    identity,
    insertion_set,
    insertion_set_append,
    inverse,
    parse_cycles,
    subset_cayley,
)
from .eperpf import (
    Dirichlet,
    EperpfFamily,
    Gnedin,
    NormalizedStable,
    PitmanYor,
    PredictiveWeights,
    family_from_spec,
    log_eperpf,
    log_eppf,
    predictive_weights,
    sample_pa_gcrp,
    uniform_given_partition,
)
from .csbm import (
    BlockCounts,
    ExponentTally,
    Graphs,
    Hyperparams,
    NoiseRates,
    ParentMatrix,
    block_counts,
    edge_exponents,
    log_joint,
    log_marginal_sbm,
    pair_marginal_prob,
    simulate,
)
from .special import log_inc_beta, sample_truncated_beta

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
