"""Random-mesh finite elements: P1 FEM on randomly perturbed simplicial
meshes, probabilistic a posteriori error estimators, adaptive refinement,
and Bayesian inversion with a randomized forward map."""

__version__ = "0.1.0"

from .adapt import AdaptConfig, AdaptRecord, adapt_loop, gamma_loc
from .bayes import (
    ForwardMap,
    KLPrior,
    ObservationSet,
    PosteriorSummary,
    forward,
    kl_to_field,
    mh_chain,
    posterior_summary,
    potential,
    prior_spectrum,
    synthesize_observations,
)
from .estimators import (
    EstimatorReport,
    babuska_1d,
    check_lemma_bounds,
    effectivity,
    estimator_rm1_1d,
    estimator_rm2,
    jump_functional_1d,
    lambda_term_1d,
    residual_2d,
)
from .fem import (
    AssemblyError,
    EllipticProblem,
    PwLinearField,
    assemble,
    error_norms,
    h1_distance_1d,
    interpolate,
    solve,
    supermesh_1d,
)
from .mesh import (
    MeshError,
    OutOfDomainError,
    PerturbationConfig,
    PerturbedMesh,
    SimplicialMesh,
    build_lshape_2d,
    build_structured_2d,
    build_uniform_1d,
    coarsen_1d,
    displace,
    locate,
    perturb,
    quasi_uniformity,
    refine,
)
