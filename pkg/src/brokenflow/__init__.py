"""Broken geodesic flows on spheres of linear subspace arrangements."""

from .arrangement import (
    CollisionFace,
    Subspace,
    SubspaceLattice,
    close_under_intersection,
    cluster_rank,
    lattice_from_json,
    lattice_report,
    locate,
    n_body_rank,
)
from .broken import (
    BreakEvent,
    BreakPolicy,
    BrokenPath,
    ClosureVerdict,
    GeodesicArc,
    HolderReport,
    RelationTarget,
    TimePiRelation,
    first_hit,
    holder_check,
    limit_closure_check,
    reflect,
    time_pi_relation,
    trace_broken,
)
from .errors import (
    AmbiguousHit,
    AmbiguousLocation,
    BrokenflowError,
    ChartDomain,
    DerivativeMismatch,
    DimensionMismatch,
    EmptyRegion,
    InsufficientResolution,
    IntegrationDiverged,
    InvalidEnergy,
    InvalidSubspace,
    NotInLattice,
    NotOnFace,
    NoUniformLimit,
    OffShell,
    RadialDegeneracy,
    SingularBasePoint,
)
from .flow import (
    BicharSegment,
    FlowConfig,
    SphericalGeodesic,
    full_free_trajectory,
    hamilton_field,
    integrate_bichar,
    model_field_Wflat,
    rebuild_bichar,
    reparametrize,
    tau_closed_form,
)
from .phasespace import (
    ChartState,
    ClassLabel,
    Classification,
    CompressedCovector,
    FaceChart,
    MomentumSplit,
    ScCovector,
    chart_at,
    classify,
    compress,
    pi_invariant_eval,
    split_momentum,
)
from .symbols import (
    Certificate,
    SymbolContext,
    certify_positivity,
    cutoffs,
    fine_family,
    measure_constants,
    omega_coarse,
    phi_coarse,
    q_b2_e_coarse,
    tangential_family,
)

__version__ = "0.1.0"
