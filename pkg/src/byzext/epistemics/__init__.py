"""Epistemic formulas, finite interpreted systems and knowledge checks."""

from .checks import (
    Claim,
    PreconditionError,
    brainvat_sweep,
    build_witness,
    check_hope_nsr,
    check_lss_fault_detection,
    check_not_knows,
    check_preconditions,
    standard_claims,
)
from .formulas import (
    And,
    Const,
    Correct,
    FakeAt,
    FormulaSyntaxError,
    Implies,
    Knows,
    Not,
    Nsr,
    Occurred,
    OccurredOk,
    Or,
    Prop,
    believes,
    faulty,
    hopes,
    parse_formula,
    show,
)
from .model import InterpretedSystem, ModelError

__all__ = [
    "And", "Claim", "Const", "Correct", "FakeAt", "FormulaSyntaxError", "Implies", "InterpretedSystem",
    "Knows", "ModelError", "Not", "Nsr", "Occurred", "OccurredOk", "Or", "PreconditionError", "Prop",
    "believes", "brainvat_sweep", "build_witness", "check_hope_nsr", "check_lss_fault_detection",
    "check_not_knows", "check_preconditions", "faulty", "hopes", "parse_formula", "show", "standard_claims",
]
