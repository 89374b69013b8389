"""SDP relaxation of the filtered copositive program, its dual and witnesses."""
from .conic import BACKENDS, Cone, ConeProblem, ConicSolution, Status, smat, svec
from .lmi import (
    CertifiedPoint,
    certify_primal,
    SolveResult,
    VariableLayout,
    assemble_primal,
    build_dual,
    dual_constraint_residual,
    lmi_matrix,
    lmi_residual,
    psd_plus_nn_decompose,
    psd_plus_nn_margin,
    solve,
)
from .witness import (
    DualWitness,
    PrimalWitness,
    dual_interior_witness,
    filter_gramian,
    primal_interior_witness,
    augmented_controllable,
)

__all__ = [
    "BACKENDS",
    "Cone",
    "ConeProblem",
    "ConicSolution",
    "Status",
    "smat",
    "svec",
    "SolveResult",
    "CertifiedPoint",
    "certify_primal",
    "VariableLayout",
    "assemble_primal",
    "build_dual",
    "dual_constraint_residual",
    "lmi_matrix",
    "lmi_residual",
    "psd_plus_nn_decompose",
    "psd_plus_nn_margin",
    "solve",
    "DualWitness",
    "PrimalWitness",
    "dual_interior_witness",
    "filter_gramian",
    "primal_interior_witness",
    "augmented_controllable",
]
