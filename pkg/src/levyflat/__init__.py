"""Desk-scale numerical verification that invariant manifolds of
jump-driven semilinear SPDEs carry at least as much flatness as the number
of driving sources with small jumps."""

from .hilbert import (DEFAULT_TOL, GridSpace, HVector, Subspace, complement,
                      inner, intersect, norm, orthonormalize, principal_angles,
                      project, unit_grid)
from .manifold import (Classification, FlatnessReport, Manifold, ManifoldChart,
                       chain_consistency, classify, closest_point, decompose,
                       flatness_at, flatness_global, global_closest_point,
                       tangent_at)
from .levy import (DriverPath, JumpMeasureSpec, LevyDriver, atom_jumps,
                   cumulant, cumulant_prime, moment_check, sample_path,
                   small_jump_indices, uniform_jumps)
from .spde import (Coefficients, IdentitySemigroup, MatrixSemigroup, SPDEProblem,
                   ShiftSemigroup, apply_semigroup, convergence_order,
                   jump_coefficient, simulate_mild)
from .checks import (TestReport, flatness_bound_check, jump_closure_test,
                     path_invariance_test, tangency_test)
from .models import (VasicekParams, build_fixtures, build_hjmm_vasicek,
                     build_sine_counterexample, get_model, hjm_drift)

__version__ = "0.1.0"
