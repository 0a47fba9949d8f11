"""embedlab: desk-scale verification lab for column-ensemble random embeddings."""

from .decoupling import (
    ChainDiagnostics,
    bernoulli_moment_check,
    chain_diagnostics,
    compute_V,
    compute_W,
    compute_Z,
    verify_bilinearity_telescope,
    verify_decoupling_identity,
)
from .distortion import (
    BoundEvaluation,
    DistortionReport,
    SingularPair,
    distortion_finite,
    distortion_sphere,
    evaluate_gaussian_bound,
    evaluate_logconcave_bound,
    evaluate_main_bound,
    theta_m,
)
from .embedding_core import (
    EmbeddingMatrix,
    GramMatrix,
    SelectorVector,
    SignVector,
    build_embedding,
    column_norm_deviation,
    gram,
    load_matrix_csv,
    randomize_columns,
    random_selector,
    random_signs,
    save_matrix_csv,
)
from .rng import fork, stream_from, substream
from .set_geometry import (
    AdmissibleSequence,
    DifferenceSet,
    Ellipsoid,
    FiniteCloud,
    SparseSphere,
    UnitSphere,
    WidthEstimate,
    build_admissible_sequence,
    critical_dimension,
    diameter,
    estimate_mean_width,
    lambda_star,
    load_cloud_csv,
    scales_s0_s1,
)
from .sparse_overlap import (
    AssumptionFit,
    SelectorAverage,
    SparseNormStat,
    SparseOverlapStat,
    dimension_reduction_check,
    fit_assumption_constant,
    order_statistic_tail_check,
    overlap_stat,
    rearrangement_norm,
    rearrangement_slice_norm,
    selector_average,
    self_bounding_check,
    sparse_operator_norm,
)
from .vector_models import (
    RandomVectorModel,
    SuitabilityReport,
    estimate_moment_equivalence,
    estimate_suitability,
    estimate_thin_shell,
    sample_matrix,
    sample_vector,
)

__version__ = "0.1.0"
