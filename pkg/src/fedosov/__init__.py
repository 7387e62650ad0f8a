"""Exact symbolic engine for Fedosov dg manifolds of Lie pairs, PBW maps and their intertwiners."""
from .coefficients import CoefficientError, Poly, coeff_add, coeff_mul, coeff_partial
from .enveloping import (PBW, EnvelopingElement, comultiply, kapranov_action, nabla_lightning, normal_form, pbw,
                         pbw_inverse, quotient_project, verify_Q_equals_dL_lightning)
from .fedosov import (FedosovField, VerticalVectorField, assemble_Q, euler, fedosov_X, hat_koszul, homotopy_h,
                      koszul, sigma0)
from .functions import FormalFunction, PolySection, Shape, contract, ff_mul, filtration_order, pair
from .geodesic import JetMap, compare_with_pbw, geodesic_jet, transition_jet
from .liepair import (BForm, Connection, LiePair, Presentation, SplittingOffset, bott_check, cE_differential,
                      covariant_derivative, curvature, frame_change, load_presentation, torsion, validate)
from .operators import (FiltrationShiftingOperator, decompose, delta_op, dual_of_coalgebra_map, eth, exp_field,
                        h_natural_op, log_phi, pushforward_polydiff, sigma0_op, solve_phi)
from .presentations import shipped, shipped_names

__version__ = "0.1.0"

__all__ = [
    "CoefficientError",
    "Poly",
    "coeff_add",
    "coeff_mul",
    "coeff_partial",
    "PBW",
    "EnvelopingElement",
    "comultiply",
    "kapranov_action",
    "nabla_lightning",
    "normal_form",
    "pbw",
    "pbw_inverse",
    "quotient_project",
    "verify_Q_equals_dL_lightning",
    "FedosovField",
    "VerticalVectorField",
    "assemble_Q",
    "euler",
    "fedosov_X",
    "hat_koszul",
    "homotopy_h",
    "koszul",
    "sigma0",
    "FormalFunction",
    "PolySection",
    "Shape",
    "contract",
    "ff_mul",
    "filtration_order",
    "pair",
    "JetMap",
    "compare_with_pbw",
    "geodesic_jet",
    "transition_jet",
    "BForm",
    "Connection",
    "LiePair",
    "Presentation",
    "SplittingOffset",
    "bott_check",
    "cE_differential",
    "covariant_derivative",
    "curvature",
    "frame_change",
    "load_presentation",
    "torsion",
    "validate",
    "FiltrationShiftingOperator",
    "decompose",
    "delta_op",
    "dual_of_coalgebra_map",
    "eth",
    "exp_field",
    "h_natural_op",
    "log_phi",
    "pushforward_polydiff",
    "sigma0_op",
    "solve_phi",
    "shipped",
    "shipped_names",
]
