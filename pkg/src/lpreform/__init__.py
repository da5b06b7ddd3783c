"""Learning-based column reordering for linear programs.

The pipeline: an LP becomes a bipartite constraint/variable graph, a graph
encoder embeds the variables, embeddings are pooled over ordered variable
clusters, and a pointer network emits a cluster permutation. Applying the
permutation yields an equivalent LP whose simplex iteration count differs;
the policy is trained with REINFORCE against the built-in simplex solver to
make that count drop.
"""

from .exceptions import LpReformError
from .graph import BipartiteGraph, featurize, graph_stats
from .lp import (
    ClusterSplit,
    ColumnPermutation,
    LpInstance,
    PermSource,
    RowSense,
    StandardFormLp,
    apply_permutation,
    compose,
    emit_sparsity_image,
    expand_cluster_permutation,
    to_standard_form,
)
from .mps import read_mps, write_mps
from .nets import PolicyParams, load_checkpoint, save_checkpoint
from .reformulate import (
    PermutationSample,
    SplitConfig,
    k_shot_reformulate,
    pool_clusters,
    propose_permutation,
    split_variables,
)
from .simplex import (
    Basis,
    BasicSolution,
    Metric,
    Pricing,
    SimplexSolver,
    SolveMetrics,
    SolveStatus,
    SolverConfig,
    SolverEnvironment,
    evaluate_metric,
    initial_slack_basis,
    solve,
    solve_standard,
)
from .training import TrainConfig, brute_force_oracle, evaluate, train

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
