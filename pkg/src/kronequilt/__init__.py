"""Sampling stochastic Kronecker graphs and multiplicative attribute graphs.

The MAGM sampler partitions nodes by attribute configuration and quilts the
adjacency matrix together from Kronecker samples, which keeps the cost close
to linear in the number of edges.
"""

from .errors import ResourceGuardError
from .graph import EdgeList, read_edgelist, write_edgelist
from .kronecker import (
    PRESETS,
    THETA1,
    THETA2,
    InitiatorChain,
    InitiatorMatrix,
    RetryBudgetExceeded,
    bernoulli_grid,
    expected_edge_sum,
    kpgm_edge_probability,
    kpgm_sample,
    kpgm_sample_exact,
    naive_kpgm_sample,
    sample_edge_count,
)
from .magm import (
    AttributeAssignment,
    MagmModel,
    NodePartition,
    build_partition,
    edge_probability_matrix,
    expected_magm_edges,
    load_model_config,
    magm_edge_probability,
    max_multiplicity,
    naive_magm_sample,
    parse_model_config,
    quilt_sample,
    read_attributes,
    sample_attributes,
    write_attributes,
)
from .speedup import SpeedupPlan, fast_magm_sample, select_threshold, skip_runs, uniform_block_sample
from .stats import (
    degree_distribution,
    largest_scc_fraction,
    measure_partition_size,
    oversized_partition_bound,
    partition_bound,
    poisson_chernoff,
)

__version__ = "0.1.0"
