"""Upper bounds on the L2 gain of stable LTI systems under nonnegative inputs."""
from .bounds import (
    BoundCell,
    BoundReport,
    SmallGainCertificate,
    certify_small_gain,
    compute_bound,
    relu_feedback_sim,
    sweep,
)
from .cones import CopositiveMultiplier, is_copositive_2x2, metzler_lyapunov_solution, simplex_min
from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    InvalidAlpha,
    L2PlusError,
    NotControllable,
    NotHurwitz,
    NotMetzler,
    NotSquare,
    SolverError,
    StructureMismatch,
)
from .filterbank import AugmentedSystem, PositiveFilterSpec, augment, build_positive_filter
from .linsys import (
    Signal,
    StateSpace,
    hinf_norm,
    sample_lower_bound_2plus,
    simulate,
    solve_lyapunov,
)

__version__ = "0.1.0"
