"""Independent reference implementations used to validate the package.

Everything here is written from the documented contracts alone, using only
numpy, so that agreement with the package is meaningful evidence and not a
tautology.
"""

import numpy as np


def draw_reference_instance(config):
    """Re-derive a generated instance from the documented PRNG contract.

    Consumes a fresh PCG64 stream in the documented order (constant blocks,
    shared design blocks, local design blocks, coupling blocks in row-major
    block order, every matrix row-major) using only flat draws, then applies
    the documented row rescaling. Returns (a, D_shared, D_local, C_blocks).
    """
    n = config.n_disciplines
    p, dl, ds = config.p_coupling, config.d_local, config.d_shared
    rng = np.random.default_rng(config.seed)

    a = np.concatenate([rng.random(pi) for pi in p])
    D_shared = [rng.random(pi * ds).reshape(pi, ds) for pi in p]
    D_local = [rng.random(pi * di).reshape(pi, di) for pi, di in zip(p, dl)]
    raw = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                raw[(i, j)] = rng.random(p[i] * p[j]).reshape(p[i], p[j])

    C_blocks = {}
    for i in range(n):
        row_sum = np.zeros(p[i])
        for j in range(n):
            if j != i:
                row_sum += raw[(i, j)].sum(axis=1)
        scale = config.coupling_strength / np.maximum(1.0, row_sum)
        for j in range(n):
            if j != i:
                C_blocks[(i, j)] = raw[(i, j)] * scale[:, None]
    return a, D_shared, D_local, C_blocks


def finite_difference_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def finite_difference_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        J[:, k] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return J


def solve_qp_projected_gradient(Q, c, A, b, lo, hi, n_iter=200_000, tol=1e-12):
    """Slow but independent QP solver used as a reference oracle.

    Minimizes 0.5 x'Qx + c'x subject to A x <= b and lo <= x <= hi by
    accelerated projected gradient, projecting onto the feasible set with
    Dykstra's algorithm (alternating projections onto each halfspace and the
    box with correction terms). Only suitable for small problems.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = c.size
    row_nrm2 = (A * A).sum(axis=1)

    def project(z, sweeps=600):
        x = z.copy()
        m = A.shape[0]
        corr = np.zeros((m + 1, d))
        for _ in range(sweeps):
            x_prev = x.copy()
            for k in range(m):
                y = x + corr[k]
                viol = A[k] @ y - b[k]
                xk = y - max(0.0, viol) / row_nrm2[k] * A[k] if viol > 0 else y
                corr[k] = y - xk
                x = xk
            y = x + corr[m]
            xb = np.clip(y, lo, hi)
            corr[m] = y - xb
            x = xb
            if np.linalg.norm(x - x_prev) < 1e-14:
                break
        return x

    L = np.linalg.eigvalsh(Q).max() + 1.0
    x = project(np.zeros(d))
    v = x.copy()
    tk = 1.0
    for _ in range(n_iter):
        g = Q @ v + c
        x_new = project(v - g / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        v = x_new + (tk - 1) / t_new * (x_new - x)
        step = np.linalg.norm(x_new - x)
        x, tk = x_new, t_new
        if step < tol:
            break
    return x
