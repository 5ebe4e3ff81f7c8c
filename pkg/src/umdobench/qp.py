"""Convex-QP reductions and the interior-point reference solver.

Eliminating the coupling variables through the exact linear map turns the
deterministic problem into a box-constrained convex QP

    min 0.5 x'Qx + c'x + d0   s.t.  A x <= b,  lower <= x <= upper

with Q = 2(Qx0 + beta'beta), c = 2 beta'alpha, d0 = alpha'alpha, A = -beta
and b = alpha - t. The robust variants keep Q, c and A and only move the
right-hand side: the margin statistic subtracts kappa standard deviations of
each coupling output, the probability statistic adds the epsilon-quantile of
the propagated noise. Both add the expected quadratic noise energy
trace(P'P Sigma) to the objective constant so that reported optima are
comparable with sampled estimates of the robust objective.

Solutions come from a dense primal-dual path-following interior-point method
(predictor-corrector), giving reference optima certified by their KKT
residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .errors import NumericalError
from .problem import _emit

__all__ = [
    "QPData",
    "QPSolution",
    "reduce_deterministic",
    "reduce_margin",
    "reduce_probability",
    "solve_qp",
    "check_positive_definite",
    "export_qp",
]

_VARIANCE_GUARD = 1e-12


@dataclass(frozen=True)
class QPData:
    """A box-constrained inequality QP: min 0.5 x'Qx + c'x + d0, Ax <= b.

    ``d0`` is an additive objective constant carried along so that optimal
    values can be compared across problem variants. Bounds default to the
    unit box.
    """

    Q: np.ndarray
    c: np.ndarray
    d0: float
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        c = np.asarray(self.c, dtype=float)
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        d = c.size
        if Q.shape != (d, d):
            raise ValueError(f"Q must have shape ({d}, {d}), got {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-10):
            raise ValueError("Q must be symmetric")
        if A.size == 0:
            A = A.reshape(0, d)
        if A.shape[1] != d:
            raise ValueError(f"A must have {d} columns, got {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b must have length {A.shape[0]}, got {b.shape}")
        lower = np.zeros(d) if self.lower is None else np.asarray(self.lower, float)
        upper = np.ones(d) if self.upper is None else np.asarray(self.upper, float)
        if lower.shape != (d,) or upper.shape != (d,):
            raise ValueError("bounds must have the design dimension")
        if np.any(lower >= upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        for name, value in (
            ("Q", Q), ("c", c), ("A", A), ("b", b), ("lower", lower), ("upper", upper)
        ):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "d0", float(self.d0))

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.d0)

    def constraints(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b


@dataclass
class QPSolution:
    """Certified solution of a :class:`QPData` instance.

    ``kkt_residual`` is the maximum over the stationarity, primal
    feasibility and complementarity residuals at the returned point.
    ``status`` is ``optimal``, ``infeasible`` (Farkas certificate found) or
    ``max_iter``.
    """

    x_star: np.ndarray
    f_star: float
    g_star: np.ndarray
    kkt_residual: float
    status: str
    iterations: int = 0


def _propagated_variance(P, sigma):
    """diag(P Sigma P') with a guard against tiny negative round-off."""
    sigma = np.asarray(sigma, dtype=float)
    p = P.shape[0]
    if sigma.shape != (p, p):
        raise ValueError(f"sigma must have shape ({p}, {p}), got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be symmetric")
    var = np.einsum("ij,jk,ik->i", P, sigma, P)
    if var.min() < -_VARIANCE_GUARD:
        raise NumericalError(
            f"propagated variance has negative component {var.min():.3e}"
        )
    return np.maximum(var, 0.0)


def reduce_deterministic(system, t: float) -> QPData:
    """Eliminate the coupling variables of the noise-free problem.

    The resulting QP is exactly equivalent: its objective equals the summed
    squares of the shared design variables and the coupling outputs, and row
    j of ``A x - b`` equals ``t - y_j(x)``.
    """
    alpha, beta, _ = system.linear_map
    Q = 2.0 * (system.Qx0 + beta.T @ beta)
    c = 2.0 * beta.T @ alpha
    d0 = float(alpha @ alpha)
    A = -beta
    b = alpha - t
    return QPData(Q=Q, c=c, d0=d0, A=A, b=b)


def reduce_margin(system, t: float, sigma, kappa: float) -> QPData:
    """Reduce the mean-plus-kappa-standard-deviations robust problem.

    The constraint right-hand side tightens by kappa propagated standard
    deviations per coupling output; the objective constant grows by the
    expected quadratic noise energy trace(P'P Sigma).
    """
    base = reduce_deterministic(system, t)
    _, _, P = system.linear_map
    var = _propagated_variance(P, sigma)
    return QPData(
        Q=base.Q,
        c=base.c,
        d0=base.d0 + float(var.sum()),
        A=base.A,
        b=base.b - kappa * np.sqrt(var),
        lower=base.lower,
        upper=base.upper,
    )


def reduce_probability(
    system,
    t: float,
    epsilon: float,
    sigma=None,
    dist: str = "gaussian",
    sample=None,
) -> QPData:
    """Reduce the chance-constrained robust problem.

    Componentwise semantics: constraint row j becomes
    ``(A x - b)_j <= q_epsilon_j`` with q the epsilon-quantile of the j-th
    propagated noise component. For ``dist="gaussian"`` the quantile comes
    from the closed form ``sqrt(diag(P Sigma P')) * z_epsilon``; for
    ``dist="empirical"`` it is the per-component empirical quantile of the
    propagated rows of ``sample``. The objective constant grows by the
    expected quadratic noise energy (exact trace for the Gaussian path,
    sample mean for the empirical path).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    base = reduce_deterministic(system, t)
    _, _, P = system.linear_map

    if dist == "gaussian":
        if sigma is None:
            raise ValueError("gaussian reduction needs a covariance")
        var = _propagated_variance(P, sigma)
        q = np.sqrt(var) * scipy.stats.norm.ppf(epsilon)
        noise_energy = float(var.sum())
    elif dist == "empirical":
        if sample is None:
            raise ValueError("empirical reduction needs a noise sample")
        sample = np.asarray(sample, dtype=float)
        if sample.ndim != 2 or sample.shape[1] != system.p:
            raise ValueError(f"sample must have shape (n, {system.p})")
        propagated = sample @ P.T
        q = np.quantile(propagated, epsilon, axis=0)
        noise_energy = float(np.mean(np.sum(propagated ** 2, axis=1)))
    else:
        raise ValueError(f"dist must be 'gaussian' or 'empirical', got {dist!r}")

    return QPData(
        Q=base.Q,
        c=base.c,
        d0=base.d0 + noise_energy,
        A=base.A,
        b=base.b + q,
        lower=base.lower,
        upper=base.upper,
    )


def check_positive_definite(qp: QPData) -> tuple[bool, float]:
    """Smallest eigenvalue test of the quadratic form.

    Returns ``(is_pd, lambda_min)`` with the threshold scaled by the trace,
    so near-singular forms from rank-deficient design maps report False.
    """
    w = np.linalg.eigvalsh(0.5 * (qp.Q + qp.Q.T))
    lambda_min = float(w[0])
    threshold = 1e-12 * max(np.trace(qp.Q) / qp.dim, np.finfo(float).tiny)
    return lambda_min > threshold, lambda_min


def _stack_inequalities(qp: QPData):
    """Fold the box into the inequality system G x <= h."""
    d = qp.dim
    eye = np.eye(d)
    G = np.vstack([qp.A, eye, -eye])
    h = np.concatenate([qp.b, qp.upper, -qp.lower])
    return G, h


def solve_qp(
    qp: QPData,
    tol: float = 1e-9,
    max_iter: int = 100,
    x0=None,
) -> QPSolution:
    """Solve the QP with a predictor-corrector interior-point method.

    The box is folded into the inequality system and the slack/dual pair is
    driven along the central path; each iteration factors the dense normal
    matrix ``Q + G' W G`` (always positive definite thanks to the box rows)
    and takes a Mehrotra predictor plus corrector step with a 0.995
    fraction-to-boundary rule. Convergence is declared when the maximum of
    the stationarity, primal-feasibility and complementarity residuals drops
    below ``tol``.

    Primal infeasibility is recognized through a Farkas certificate carried
    by the diverging duals (``G'z ~ 0`` with ``h'z < 0``) and reported as
    ``status="infeasible"`` rather than raised.
    """
    G, h = _stack_inequalities(qp)
    d, m = qp.dim, G.shape[0]
    Q, c = qp.Q, qp.c

    if x0 is None:
        x = 0.5 * (qp.lower + qp.upper)
    else:
        x = np.asarray(x0, dtype=float).copy()
        span = qp.upper - qp.lower
        x = np.clip(x, qp.lower + 1e-3 * span, qp.upper - 1e-3 * span)
    s = np.maximum(h - G @ x, 1e-2)
    z = np.ones(m)

    def residuals(x, s, z):
        r_d = Q @ x + c + G.T @ z
        r_p = G @ x + s - h
        mu = s @ z / m
        return r_d, r_p, mu

    status = "max_iter"
    kkt = np.inf
    iterations = 0
    # The distance of the iterate to the argmin scales like mu divided by
    # the smallest curvature, so complementarity is pushed three decades
    # below the KKT tolerance; Mehrotra steps make that 1-2 extra iterations.
    mu_target = 1e-3 * tol
    for iterations in range(1, max_iter + 1):
        r_d, r_p, mu = residuals(x, s, z)
        feas = max(
            float(np.abs(r_d).max()),
            float(np.abs(r_p).max()) if m else 0.0,
        )
        kkt = max(feas, float(mu))
        if feas <= tol and mu <= mu_target:
            status = "optimal"
            break

        # Farkas certificate for an empty feasible set: a nonnegative dual
        # combination of the rows vanishing while the right-hand side
        # combination is negative.
        z_scale = float(z.sum())
        if z_scale > 1e8:
            zn = z / z_scale
            if h @ zn < -1e-10 and np.abs(G.T @ zn).max() <= 1e-8 * (-(h @ zn)):
                status = "infeasible"
                break

        w = z / np.maximum(s, 1e-300)
        M = Q + (G.T * w) @ G
        try:
            chol = scipy.linalg.cho_factor(M, check_finite=False)
        except scipy.linalg.LinAlgError:
            M = M + 1e-12 * max(1.0, np.trace(M)) * np.eye(d)
            chol = scipy.linalg.cho_factor(M, check_finite=False)

        def newton_step(r_c):
            rhs = -r_d - G.T @ ((z * r_p - r_c) / s)
            dx = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
            ds = -r_p - G @ dx
            dz = -(r_c + z * ds) / s
            return dx, ds, dz

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        # Predictor (affine scaling) step.
        dx_a, ds_a, dz_a = newton_step(s * z)
        alpha_a = min(max_step(s, ds_a), max_step(z, dz_a))
        mu_aff = (s + alpha_a * ds_a) @ (z + alpha_a * dz_a) / m
        sigma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # Corrector step re-using the factorization.
        dx, ds, dz = newton_step(s * z + ds_a * dz_a - sigma * mu)
        alpha = 0.995 * min(max_step(s, ds), max_step(z, dz))
        alpha = min(1.0, alpha)

        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz

    n_true = qp.n_constraints
    return QPSolution(
        x_star=x,
        f_star=qp.objective(x),
        g_star=qp.constraints(x) if n_true else np.zeros(0),
        kkt_residual=float(kkt),
        status=status,
        iterations=iterations,
    )


def export_qp(qp: QPData) -> bytes:
    """Render the QP as canonical JSON bytes for external cross-checks."""
    doc = {
        "Q": [[float(v) for v in row] for row in qp.Q],
        "c": [float(v) for v in qp.c],
        "d0": qp.d0,
        "A": [[float(v) for v in row] for row in qp.A],
        "b": [float(v) for v in qp.b],
        "lower": [float(v) for v in qp.lower],
        "upper": [float(v) for v in qp.upper],
    }
    return _emit(doc).encode("ascii")
