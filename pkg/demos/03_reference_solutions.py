"""
Reference solutions through the QP reduction
============================================

Eliminate the coupling variables analytically, solve the resulting convex
QP with the interior-point solver, and tighten the constraints for the
robust margin and probability formulations.
"""

import numpy as np
import scipy.stats

from umdobench import (
    MDASettings,
    assemble,
    check_positive_definite,
    default_benchmark_problem,
    export_qp,
    reduce_deterministic,
    reduce_margin,
    reduce_probability,
    solve_mda,
    solve_qp,
)

problem = default_benchmark_problem(seed=70)
system = assemble(problem)
sigma = problem.uncertainty.sigma

############################################################
# The reduction is exact
#
# The reduced quadratic reproduces the coupled objective and constraints
# at any design point, and its Hessian is positive definite.

qp = reduce_deterministic(system, problem.t)
x = np.random.default_rng(5).random(system.d)
y = solve_mda(system, x, settings=MDASettings(method="direct")).y
x0 = x[: system.d_shared]
print("objective gap:", f"{qp.objective(x) - (x0 @ x0 + y @ y):.2e}")
print("constraint gap:", f"{np.max(np.abs(qp.constraints(x) - (problem.t - y))):.2e}")
definite, lam_min = check_positive_definite(qp)
print("positive definite:", definite, f"(smallest eigenvalue {lam_min:.4f})")

############################################################
# Deterministic reference solution

sol = solve_qp(qp)
print("status:", sol.status, "| objective:", f"{sol.f_star:.6f}",
      "| KKT residual:", f"{sol.kkt_residual:.1e}")

############################################################
# Margin-constrained robust problem
#
# Each constraint tightens by two propagated standard deviations; the
# objective gains the expected quadratic noise energy. The optimum moves
# and its value grows.

margin = solve_qp(reduce_margin(system, problem.t, sigma, kappa=2.0))
print("margin status:", margin.status, "| objective:", f"{margin.f_star:.6f}")
print("design shift:", f"{np.linalg.norm(margin.x_star - sol.x_star):.4f}")

############################################################
# Probability-constrained problem
#
# Requiring each output to stay feasible with the probability matching a
# two-sigma margin reproduces the margin problem exactly.

eps = float(scipy.stats.norm.cdf(-2.0))
prob = solve_qp(reduce_probability(system, problem.t, eps, sigma=sigma))
print("probability status:", prob.status,
      "| gap to margin solution:", f"{np.max(np.abs(prob.x_star - margin.x_star)):.2e}")

############################################################
# An unattainable margin is reported, not silently clipped

too_tight = solve_qp(reduce_margin(system, problem.t, sigma, kappa=1e6))
print("kappa = 1e6 status:", too_tight.status)

############################################################
# Export for external solvers

blob = export_qp(reduce_margin(system, problem.t, sigma, kappa=2.0))
print("exported QP:", len(blob), "bytes of JSON")
