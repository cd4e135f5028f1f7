"""conecert: verified positivity certificates for tensor products of
finite-dimensional operator systems.

The package works with concrete operator systems (unital self-adjoint
subspaces of a direct sum of matrix algebras) and produces certificates --
not bare yes/no answers -- for cone membership questions: matrix-level
positivity, dual-cone membership, quotient positivity, and membership in
the minimal/maximal tensor cones.  Every verdict that leaves the package
is re-verified with plain numpy linear algebra, independently of whatever
solver produced it.
"""

__version__ = "0.1.0"

from .linalg import (
    TOL_PSD,
    TOL_EQ,
    RANK_CUTOFF,
    ShapeError,
    NotSelfAdjointError,
    NotPositiveError,
    AmbientAlgebra,
    BlockMatrix,
    PsdVerdict,
    psd_check,
    psd_sqrt,
    moore_penrose_sqrt_inverse,
    tensor_shuffle,
    matrix_units_gram,
    hermitian_to_real,
    real_to_hermitian,
    matrix_to_json,
    matrix_from_json,
)
from .catalog import (
    NotMemberError,
    UnknownSystemError,
    MembershipResult,
    OperatorSystem,
    KernelSubspace,
    block_sum_system,
    equal_diagonal_system,
    tied_diagonal_system,
    balanced_trace_system,
    diagonal_algebra_system,
    full_matrix_system,
    full_algebra_system,
    diagonal_traceless_kernel,
    amplified_system,
    realize_matrix_of_elements,
    BalancedDiagonalEmbedding,
    balanced_diagonal_embedding,
    system_from_name,
)
from .duality import (
    trace_pairing,
    Functional,
    FunctionalMatrix,
    DualWitness,
    DualVerdict,
    dual_positive,
    faithful_state,
    QuotientVerdict,
    QuotientSystem,
    CrosscheckReport,
    pairing_crosscheck,
    ExtensionResult,
    approx_extension,
)
from .tensors import (
    EPS_SCHEDULE,
    TensorElement,
    min_positive,
    CertificateCheck,
    MaxCertificate,
    InnerOutcome,
    max_inner_nuclear_factor,
    max_inner_search,
    OuterEvidence,
    OuterOutcome,
    max_outer_refute,
    clifford_generators,
    FreeCyclicElement,
    NPWitness,
    NPOutcome,
    np_sample_refute,
)
from .partition import (
    RankAmbiguityError,
    PartitionInstance,
    PartitionCertificate,
    PartitionCheck,
    solve_partition,
    verify_partition,
    partition_element,
    partition_to_max_certificate,
    random_partition_instance,
)
from .entangled import (
    MaxEntangled,
    me_element,
    me_concrete_element,
    MeCheck,
    MeCertificate,
    exact_me_certificate,
    nuclear_me_certificate,
    MeObstruction,
    MeOutcome,
    me_span_decision,
    FactorizationPair,
    extract_factorization,
    basis_conditioning,
    basis_conditioning_bound,
    ProbeReport,
    coincidence_probe,
)
from .config import RunConfig, load_config
from .store import CertificateStore, StoreError, canonical_json, content_key
