"""Statistical estimators for the robust problem variants.

Three estimators of the objective/constraint statistics are provided:

* Monte-Carlo sampling (:func:`mc_estimate`, :func:`mc_estimate_probability`):
  unbiased sample mean and (M-1)-denominator standard deviation over i.i.d.
  noise realizations, each evaluated through a caller-supplied function that
  typically runs one coupling solve per realization.
* First-order Taylor expansion (:func:`taylor_estimate`): one evaluation at
  the mean noise plus the analytic Jacobian with respect to the noise; exact
  for outputs that are linear in the noise, biased for quadratic ones.
* Closed forms (:func:`exact_stats`): ground truth available because the
  coupling solution is affine in both design and noise. Used as the oracle
  when benchmarking the other two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import EvaluationError, NumericalError

__all__ = [
    "StatisticSpec",
    "StatEstimate",
    "ExactStats",
    "GaussianSampler",
    "mc_estimate",
    "mc_estimate_probability",
    "taylor_estimate",
    "exact_stats",
]

_CONSTRAINT_STATS = ("expectation", "margin", "probability")


@dataclass(frozen=True)
class StatisticSpec:
    """Which statistic the robust formulation applies to each output.

    The objective always uses the expectation. Constraints use the
    expectation, the margin ``mean + kappa * std`` or the probability of
    violation at level ``epsilon``.
    """

    objective_stat: str = "expectation"
    constraint_stat: str = "margin"
    kappa: float = 2.0
    epsilon: float | None = None

    def __post_init__(self):
        if self.objective_stat != "expectation":
            raise ValueError("objective_stat must be 'expectation'")
        if self.constraint_stat not in _CONSTRAINT_STATS:
            raise ValueError(
                f"constraint_stat must be one of {_CONSTRAINT_STATS}, "
                f"got {self.constraint_stat!r}"
            )
        if self.constraint_stat == "margin" and not math.isfinite(self.kappa):
            raise ValueError("margin statistic needs a finite kappa")
        if self.constraint_stat == "probability":
            if self.epsilon is None or not 0.0 < self.epsilon < 1.0:
                raise ValueError("probability statistic needs epsilon in (0, 1)")


@dataclass
class StatEstimate:
    """Mean/std estimate of a vector output plus the composed statistic.

    ``value`` is the statistic requested by the caller's
    :class:`StatisticSpec` (the mean by default, ``mean + kappa * std`` for
    the margin). ``n_evals`` counts underlying discipline evaluations and
    ``n_failed`` the Monte-Carlo realizations dropped because their coupling
    solve did not converge.
    """

    mean: np.ndarray
    std: np.ndarray
    value: np.ndarray
    n_evals: int
    estimator: str
    n_failed: int = 0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=float))
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float))
        if np.any(self.std < 0):
            raise ValueError("std must be nonnegative")
        if self.n_evals < 1:
            raise ValueError("n_evals must be >= 1")


@dataclass
class ExactStats:
    """Closed-form objective and constraint statistics at one design point."""

    objective: StatEstimate
    constraints: StatEstimate


def composed_value(mean, std, spec: StatisticSpec | None) -> np.ndarray:
    """Compose mean/std into the requested constraint statistic."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if spec is None or spec.constraint_stat == "expectation":
        return mean.copy()
    if spec.constraint_stat == "margin":
        return mean + spec.kappa * np.atleast_1d(np.asarray(std, dtype=float))
    raise ValueError(
        "probability statistics are not composed from mean/std; use the "
        "chance-constrained QP reduction or mc_estimate_probability"
    )


class GaussianSampler:
    """Centered Gaussian noise with independent per-discipline blocks.

    Each block covariance is factored once (eigenvalue factorization, robust
    to semi-definite blocks) and realizations are drawn block by block from a
    PCG64 stream, so draws are reproducible functions of the seed.
    """

    def __init__(self, sigma_blocks):
        self.sigma_blocks = tuple(np.asarray(b, dtype=float) for b in sigma_blocks)
        self._factors = []
        for i, block in enumerate(self.sigma_blocks):
            if block.ndim != 2 or block.shape[0] != block.shape[1]:
                raise ValueError(f"sigma block {i} is not square")
            sym = 0.5 * (block + block.T)
            w, v = np.linalg.eigh(sym)
            if w.size and w.min() < -1e-12 * max(1.0, abs(w).max()):
                raise ValueError(f"sigma block {i} is not positive semi-definite")
            self._factors.append(v * np.sqrt(np.maximum(w, 0.0)))

    @classmethod
    def from_model(cls, model) -> "GaussianSampler":
        """Build from an :class:`~umdobench.problem.UncertaintyModel`."""
        return cls(model.sigma_blocks)

    @property
    def p(self) -> int:
        return sum(b.shape[0] for b in self.sigma_blocks)

    @property
    def sigma(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.sigma_blocks)

    def draw(self, m: int, seed) -> np.ndarray:
        """Draw ``m`` realizations, shape (m, p)."""
        rng = np.random.default_rng(seed)
        parts = [
            rng.standard_normal((m, factor.shape[0])) @ factor.T
            for factor in self._factors
        ]
        return np.concatenate(parts, axis=1)


def _run_samples(fn, x, sampler, m, seed):
    """Evaluate fn on m draws, dropping realizations that raise EvaluationError."""
    draws = sampler.draw(m, seed)
    rows = []
    n_failed = 0
    for u in draws:
        try:
            rows.append(np.atleast_1d(np.asarray(fn(x, u), dtype=float)))
        except EvaluationError:
            n_failed += 1
    return rows, n_failed


def mc_estimate(fn, x, sampler, m: int, seed, spec: StatisticSpec | None = None) -> StatEstimate:
    """Monte-Carlo mean/std of ``fn(x, U)`` over ``m`` noise realizations.

    Returns the sample mean and the unbiased (m-1)-denominator standard
    deviation per output component. Realizations whose evaluation raises
    :class:`EvaluationError` (e.g. a non-converged coupling solve) are
    excluded and counted in ``n_failed``; ``n_evals`` reports all ``m``
    attempted evaluations.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    rows, n_failed = _run_samples(fn, x, sampler, m, seed)
    if len(rows) < 2:
        raise NumericalError(
            f"only {len(rows)} of {m} realizations converged; cannot estimate"
        )
    values = np.vstack(rows)
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1)
    return StatEstimate(
        mean=mean,
        std=std,
        value=composed_value(mean, std, spec),
        n_evals=m,
        estimator="mc",
        n_failed=n_failed,
    )


def mc_estimate_probability(fn, x, sampler, m: int, seed) -> np.ndarray:
    """Componentwise empirical frequency of ``fn(x, U) >= 0``.

    Realizations raising :class:`EvaluationError` are excluded from both
    numerator and denominator.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rows, _ = _run_samples(fn, x, sampler, m, seed)
    if not rows:
        raise NumericalError(f"none of {m} realizations converged")
    return np.mean(np.vstack(rows) >= 0.0, axis=0)


def taylor_estimate(fn_value, fn_grad_u, x, sigma, spec: StatisticSpec | None = None) -> StatEstimate:
    """First-order Taylor mean/std around the mean noise.

    ``fn_value(x, u)`` evaluates the output at the mean noise (u = 0);
    ``fn_grad_u(x, u)`` returns its gradient with respect to the noise, one
    column per output component (shape (p,) for scalar outputs, (p, k) for
    vector ones). The estimate is ``mean = fn_value(x, 0)`` and covariance
    ``J' Sigma J``: exact for outputs linear in the noise, and missing the
    quadratic correction otherwise. ``n_evals`` counts the value and the
    Jacobian evaluation.
    """
    sigma = np.asarray(sigma, dtype=float)
    u0 = np.zeros(sigma.shape[0])
    mean = np.atleast_1d(np.asarray(fn_value(x, u0), dtype=float))
    J = np.asarray(fn_grad_u(x, u0), dtype=float)
    if J.ndim == 1:
        J = J[:, None]
    if J.shape != (sigma.shape[0], mean.size):
        raise ValueError(
            f"gradient must have shape ({sigma.shape[0]}, {mean.size}), got {J.shape}"
        )
    cov = J.T @ sigma @ J
    var = np.diag(cov)
    if var.size and var.min() < -1e-12 * max(1.0, abs(var).max()):
        raise NumericalError("Taylor variance has a negative component")
    std = np.sqrt(np.maximum(var, 0.0))
    return StatEstimate(
        mean=mean,
        std=std,
        value=composed_value(mean, std, spec),
        n_evals=2,
        estimator="taylor",
    )


def exact_stats(system, t: float, sigma, x, spec: StatisticSpec | None = None) -> ExactStats:
    """Closed-form statistics of the objective and constraints.

    The coupling solution is affine in the Gaussian noise, so everything is
    available in closed form: the objective mean carries the expected
    quadratic noise energy ``trace(P'P Sigma)`` and its variance the usual
    linear-plus-quadratic Gaussian form; the constraint values ``t - y`` are
    Gaussian with mean ``Ax - b`` and standard deviation
    ``sqrt(diag(P Sigma P'))``. Serves as the ground-truth oracle for
    benchmarking the sampled estimators.
    """
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    alpha, beta, P = system.linear_map
    y_mean = alpha + beta @ x
    x_shared = x[: system.d_shared]

    PSP = P @ sigma @ P.T
    var_cons = np.diag(PSP).copy()
    if var_cons.size and var_cons.min() < -1e-12 * max(1.0, abs(var_cons).max()):
        raise NumericalError("propagated variance has a negative component")
    var_cons = np.maximum(var_cons, 0.0)
    std_cons = np.sqrt(var_cons)
    noise_energy = float(var_cons.sum())

    obj_mean = float(x_shared @ x_shared + y_mean @ y_mean + noise_energy)
    # Gaussian variance of |y_mean + PU|^2: linear term 4 y_mean' PSP y_mean
    # plus quadratic term 2 tr((P'P Sigma)^2).
    M_sigma = (P.T @ P) @ sigma
    obj_var = float(4.0 * y_mean @ PSP @ y_mean + 2.0 * np.trace(M_sigma @ M_sigma))
    obj_std = math.sqrt(max(obj_var, 0.0))

    cons_mean = t - y_mean

    objective = StatEstimate(
        mean=[obj_mean],
        std=[obj_std],
        value=[obj_mean],
        n_evals=1,
        estimator="exact",
    )
    constraints = StatEstimate(
        mean=cons_mean,
        std=std_cons,
        value=composed_value(cons_mean, std_cons, spec),
        n_evals=1,
        estimator="exact",
    )
    return ExactStats(objective=objective, constraints=constraints)
