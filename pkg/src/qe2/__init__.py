"""High-precision q-special functions with a truncated operator-algebra
oracle, plus a verification harness for the summation identities that the
coaction expansion of the deformed Euclidean plane produces."""

from .errors import (DegreeOverflow, DenominatorPole, GridFileError,
                     NonConvergent, QE2Error, SingularPoint, TruncationError)
from .qcore import (PrecisionCtx, QParam, SeriesResult, q_exp, q_exp_invbase,
                    q_factorial, q_number, q_pochhammer)
from .qspecial import (QKummerArgs, bessel_j, kummer_1f1, q_bessel, q_kummer,
                       q_laguerre)
from .repmatrix import (RepWeight, ZetaPoint, d_elem, d_scalar,
                        expansion_gauge, f_weight, phi_mn, t_elem,
                        t_elem_bessel, u_elem, u_shift_coeff)
from .qalgebra import (FockBasis, NOPoly, OpMatrix, QExact, RootScalar,
                       build_fock_ops, build_u_constructive,
                       coaction_weight_apply, coaction_weight_sandwich,
                       expand_d_poly, nopoly_adjoint, nopoly_normal_product,
                       r_action)
from .identities import (GridSpec, IdentityReport, run_grid, verify_example,
                         verify_limit, verify_sum_four, verify_sum_three,
                         verify_sum_two)

__version__ = "1.0.0"
