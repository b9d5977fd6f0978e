"""Positivity and partial-monotonicity certification toolkit.

A Lipschitz function that is positive at a point stays positive on a ball
whose radius is the value over the Lipschitz constant.  This package turns
that fact into finite certificates over boxes: it covers the box with the
Voronoi cells of evaluated points, certifies when every cell fits inside its
ball, and otherwise proposes the next evaluation point.  On top of that it
bounds the Lipschitz constants of partial derivatives of small dense
networks, certifies partial monotonicity, and trains networks toward
certifiability with a hinge penalty and counter-example fine-tuning.
"""

__version__ = "0.1.0"

from .errors import (
    AllCovered,
    CertifyError,
    ConstantColumn,
    DimensionMismatch,
    DimensionTooHigh,
    DuplicatePoint,
    EvaluationFailure,
    IndexOutOfRange,
    InternalGeometry,
    MalformedCSV,
    NoEligibleCheckpoint,
    NonNumeric,
    NonPositiveLipschitz,
    NoVertices,
    OutOfDomain,
    PointOutsideDomain,
    UnsupportedActivation,
    ViolationPresent,
)
from .geometry import (
    BoxDomain,
    HalfSpace,
    VoronoiCell,
    bisector,
    box_halfspaces,
    compute_cell,
    compute_diagram,
    covered_count,
    furthest_vertex,
    grid_points,
    update_diagram,
)
from .lipvor import (
    CertificationResult,
    CertificationState,
    CertificationStatus,
    PositivityProblem,
    build_state,
    certified_fraction,
    certify,
    global_condition,
    iteration_bound,
    positivity_radius,
    select_next_vertex,
)
from .mlp import (
    ActivationKind,
    LayerSpec,
    Network,
    forward,
    forward_batch,
    hessian,
    hessian_batch,
    init_network,
    jacobian,
    jacobian_batch,
    load_network,
    partial_derivative,
    save_network,
)
from .lipschitz import (
    LipschitzEstimate,
    empirical_gradient_sup,
    lipschitz_bound,
    lipschitz_bounds,
    spectral_norm,
)
from .monotonicity import (
    Direction,
    MonotonicityConstraint,
    MonotonicityReport,
    MonotonicityStatus,
    certify_features_independently,
    certify_monotonic,
    monotone_positivity_problem,
)
from .training import (
    Dataset,
    TrainingConfig,
    TrainingReport,
    certify_train_loop,
    finetune_with_counterexamples,
    monotonic_penalty,
    train,
)
from .harness import (
    HeatScenario,
    generate_heat_dataset,
    generate_tabular_csv,
    heat_solution,
    load_tabular,
    run_heat_demo,
    run_tabular_demo,
)
