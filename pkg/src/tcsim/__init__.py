"""GP log-likelihood-ratio similarity and clustering for sparse time courses."""

from .clustering import (
    AffinityGraph,
    ClusterAssignment,
    hierarchical_average_linkage,
    knn_graph,
    spectral_cluster,
)
from .errors import (
    DataError,
    DegenerateClusteringError,
    DegenerateInputError,
    DegenerateNullError,
    EigenSolverError,
    ExperimentError,
    FactorizationError,
    IncompatibleGridsError,
    InvalidInputError,
    InvalidOrientationError,
    NumericalError,
    OptimizationError,
    PairwiseError,
    ParseError,
    TcsimError,
    UsageError,
)
from .evaluation import bhi, bhi_zscore, nmi, wilcoxon_rank_sum
from .experiment import (
    ExperimentResult,
    ExperimentSpec,
    parse_experiment_spec,
    run_experiment,
)
from .gp import (
    CovarianceBundle,
    FittedModel,
    Hyperparams,
    OptimizerConfig,
    assemble_covariance,
    fit_shared_hyperparams,
    kernel_matrix,
    lml_gradient,
    log_marginal_likelihood,
)
from .similarity import (
    MEASURES,
    SimilarityMatrix,
    bregman_rkhs,
    correlation_distance,
    dtw,
    euclidean,
    gp_similarity_async,
    gp_similarity_sync,
    pairwise_matrix,
    to_dissimilarity,
)
from .synthdata import SynthConfig, generate, profile, uneven_grid
from .timecourse import (
    TimeCourse,
    center_dataset,
    common_grid,
    normalize_times,
    read_dataset,
    shares_grid,
    write_long,
    write_wide,
)

__version__ = "0.1.0"
