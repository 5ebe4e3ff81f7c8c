"""Scalable coupled-linear-discipline benchmark problems.

A problem instance consists of N disciplines. Discipline i maps the shared
design variables x0, its local design variables x_i and the other disciplines'
coupling outputs y_j (j != i) to its own coupling output:

    y_i = a_i - D_shared[i] @ x0 - D_local[i] @ x_i + sum_{j != i} C[i,j] @ y_j

All coefficients are drawn uniformly on [0, 1) from a seeded PCG64 generator,
then the coupling blocks are rescaled row-wise so that the assembled coupling
matrix is strictly diagonally dominant (see :func:`generate`). The inequality
constraints require every component of every y_i to stay above a scalar
threshold ``t``, which :func:`tune_feasibility` calibrates so that a chosen
fraction of the unit design hypercube is feasible.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    CapacityError,
    ProblemFormatError,
    ProblemVersionError,
    SingularCouplingError,
)

__all__ = [
    "ProblemConfig",
    "ScalableProblem",
    "BlockSystem",
    "UncertaintyModel",
    "generate",
    "assemble",
    "tune_feasibility",
    "serialize",
    "deserialize",
    "problem_digest",
    "FORMAT_VERSION",
    "MAX_MATRIX_ELEMENTS",
]

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# Guard against accidental huge allocations during generation: the assembled
# system stores a p x p coupling matrix and a p x d design map.
MAX_MATRIX_ELEMENTS = 1 << 26


@dataclass(frozen=True)
class ProblemConfig:
    """Dimensions and generation parameters of a scalable problem.

    Parameters
    ----------
    n_disciplines : int
        Number of coupled disciplines N (>= 1).
    d_shared : int
        Dimension of the design variables shared by all disciplines.
    d_local : tuple of int
        Per-discipline local design dimensions, length N.
    p_coupling : tuple of int
        Per-discipline coupling output dimensions, length N.
    coupling_strength : float
        Upper bound, in (0, 1), on every row sum of the off-diagonal part of
        the assembled coupling matrix. Controls the contraction rate of
        fixed-point coupling solvers; values near 1 couple strongly but
        converge slowly.
    feasibility_level : float
        Target fraction, in (0, 1), of the unit design hypercube that should
        satisfy all constraints after threshold tuning.
    seed : int
        Seed of the generation PRNG (PCG64). Generation is a pure function
        of this configuration.
    """

    n_disciplines: int
    d_shared: int
    d_local: tuple[int, ...]
    p_coupling: tuple[int, ...]
    coupling_strength: float = 0.5
    feasibility_level: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d_local", tuple(int(v) for v in self.d_local))
        object.__setattr__(self, "p_coupling", tuple(int(v) for v in self.p_coupling))
        if self.n_disciplines < 1:
            raise ValueError("n_disciplines must be >= 1")
        if self.d_shared < 1:
            raise ValueError("d_shared must be >= 1")
        for name, dims in (("d_local", self.d_local), ("p_coupling", self.p_coupling)):
            if len(dims) != self.n_disciplines:
                raise ValueError(f"{name} must have length n_disciplines")
            if any(v < 1 for v in dims):
                raise ValueError(f"all {name} entries must be >= 1")
        if not 0.0 < self.coupling_strength < 1.0:
            raise ValueError("coupling_strength must lie in (0, 1)")
        if not 0.0 < self.feasibility_level < 1.0:
            raise ValueError("feasibility_level must lie in (0, 1)")

    @property
    def d(self) -> int:
        """Total design dimension d_shared + sum(d_local)."""
        return self.d_shared + sum(self.d_local)

    @property
    def p(self) -> int:
        """Total coupling dimension sum(p_coupling)."""
        return sum(self.p_coupling)

    @property
    def is_well_posed(self) -> bool:
        """Whether the reduced quadratic form is positive definite a.s.

        True when every discipline outputs at least as many couplings as it
        has local design variables and the total coupling dimension is at
        least the total design dimension.
        """
        return (
            all(p >= d for p, d in zip(self.p_coupling, self.d_local))
            and self.p >= self.d
        )


@dataclass(frozen=True)
class UncertaintyModel:
    """Centered block-independent noise added to the coupling equations.

    ``sigma_blocks[i]`` is the covariance of the noise entering discipline i;
    the assembled covariance is block diagonal. The mean is zero.
    """

    kind: str
    sigma_blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.kind not in ("gaussian", "none"):
            raise ValueError(f"unknown uncertainty kind: {self.kind!r}")
        blocks = tuple(np.asarray(b, dtype=float) for b in self.sigma_blocks)
        for i, b in enumerate(blocks):
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError(f"sigma block {i} is not square")
            if not np.allclose(b, b.T, atol=1e-12):
                raise ValueError(f"sigma block {i} is not symmetric")
            w = np.linalg.eigvalsh(0.5 * (b + b.T))
            if w.size and w.min() < -1e-12 * max(1.0, abs(w).max()):
                raise ValueError(f"sigma block {i} is not positive semi-definite")
        object.__setattr__(self, "sigma_blocks", blocks)

    @property
    def p_coupling(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.sigma_blocks)

    @property
    def sigma(self) -> np.ndarray:
        """Assembled block-diagonal covariance, shape (p, p)."""
        return scipy.linalg.block_diag(*self.sigma_blocks)

    @classmethod
    def isotropic(cls, p_coupling, std: float) -> "UncertaintyModel":
        """Gaussian noise with covariance std**2 * I on every block."""
        if std < 0:
            raise ValueError("std must be >= 0")
        blocks = tuple(std ** 2 * np.eye(p) for p in p_coupling)
        return cls(kind="gaussian", sigma_blocks=blocks)

    @classmethod
    def disabled(cls, p_coupling) -> "UncertaintyModel":
        """Zero-noise model (deterministic problem)."""
        return cls(kind="none", sigma_blocks=tuple(np.zeros((p, p)) for p in p_coupling))


@dataclass
class ScalableProblem:
    """A generated problem instance.

    Fields follow the block structure of the coupling equations: ``a`` stacks
    the per-discipline constant terms, ``D_shared[i]`` and ``D_local[i]`` are
    the design-variable coefficient blocks of discipline i and
    ``C_blocks[(i, j)]`` the coupling coefficients of discipline i with
    respect to the outputs of discipline j. ``t`` is the scalar constraint
    threshold (0 until :func:`tune_feasibility` is called).
    """

    config: ProblemConfig
    a: np.ndarray
    D_shared: tuple[np.ndarray, ...]
    D_local: tuple[np.ndarray, ...]
    C_blocks: dict[tuple[int, int], np.ndarray]
    t: float = 0.0
    uncertainty: UncertaintyModel | None = None

    def __eq__(self, other):
        if not isinstance(other, ScalableProblem):
            return NotImplemented
        return serialize(self) == serialize(other)


class BlockSystem:
    """Assembled dense form of the coupling equations ``C y = a - D x (+ u)``.

    ``C`` carries identity diagonal blocks and the negated coupling blocks
    off the diagonal; ``D`` has its first ``d_shared`` columns dense and the
    remaining columns block diagonal; ``Qx0`` selects the shared design
    variables in the quadratic objective. The LU factorization of ``C`` and
    the derived linear maps are computed lazily and cached.
    """

    def __init__(self, C, D, a, Qx0, p_coupling, d_shared, d_local):
        self.C = np.asarray(C, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.Qx0 = np.asarray(Qx0, dtype=float)
        self.p_coupling = tuple(p_coupling)
        self.d_shared = int(d_shared)
        self.d_local = tuple(d_local)

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def d(self) -> int:
        return self.D.shape[1]

    @functools.cached_property
    def block_slices(self) -> tuple[slice, ...]:
        """Row slice of each discipline in the stacked coupling vector."""
        offsets = np.concatenate([[0], np.cumsum(self.p_coupling)])
        return tuple(slice(int(o), int(e)) for o, e in zip(offsets[:-1], offsets[1:]))

    @functools.cached_property
    def lu(self):
        """Cached LU factorization of the coupling matrix.

        Raises
        ------
        SingularCouplingError
            If a pivot of the factorization (numerically) vanishes.
        """
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(self.C, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= np.finfo(float).eps * max(1.0, diag.max()):
            raise SingularCouplingError("coupling matrix is numerically singular")
        return lu, piv

    @functools.cached_property
    def iteration_matrix(self) -> np.ndarray:
        """Fixed-point iteration matrix I - C (the stacked coupling blocks)."""
        return np.eye(self.p) - self.C

    @functools.cached_property
    def linear_map(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact affine coupling solution ``y = alpha + beta @ x + P @ u``.

        Returns ``(alpha, beta, P)`` with ``P`` the inverse coupling matrix,
        ``alpha = P @ a`` and ``beta = -P @ D``.
        """
        P = scipy.linalg.lu_solve(self.lu, np.eye(self.p), check_finite=False)
        alpha = P @ self.a
        beta = -P @ self.D
        return alpha, beta, P


def _capacity_check(config: ProblemConfig, max_elements: int) -> None:
    p, d = config.p, config.d
    needed = p * (p + d)
    if needed > max_elements:
        raise CapacityError(
            f"problem needs {needed} matrix elements for p={p}, d={d}; "
            f"cap is {max_elements}"
        )


def generate(config: ProblemConfig, max_elements: int = MAX_MATRIX_ELEMENTS) -> ScalableProblem:
    """Draw a random problem instance from a configuration.

    All entries of the constant vector, the design coefficient blocks and the
    raw coupling blocks are i.i.d. uniform on [0, 1), drawn from
    ``numpy.random.default_rng(config.seed)`` (PCG64) in a fixed order: the
    constant blocks a_1..a_N, then the shared design blocks for disciplines
    1..N, the local design blocks for disciplines 1..N, and finally the
    coupling blocks in row-major (i, j) order, each matrix filled row-major.
    The coupling blocks are then rescaled row-wise by
    ``coupling_strength / max(1, row_sum)`` so every off-diagonal row sum of
    the assembled coupling matrix is at most ``coupling_strength`` < 1, which
    makes the matrix strictly diagonally dominant (hence invertible) and the
    fixed-point iteration a contraction.

    The constraint threshold is left at 0; call :func:`tune_feasibility` to
    calibrate it.

    Raises
    ------
    CapacityError
        If the assembled system would exceed ``max_elements`` matrix entries.
    """
    _capacity_check(config, max_elements)
    n = config.n_disciplines
    rng = np.random.default_rng(config.seed)

    a_blocks = [rng.random(p) for p in config.p_coupling]
    d_shared_blocks = tuple(rng.random((p, config.d_shared)) for p in config.p_coupling)
    d_local_blocks = tuple(
        rng.random((p, dl)) for p, dl in zip(config.p_coupling, config.d_local)
    )
    raw = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                raw[(i, j)] = rng.random((config.p_coupling[i], config.p_coupling[j]))

    # Row-wise rescaling of the coupling blocks; rows whose raw sum is below 1
    # shrink by coupling_strength, the rest are normalized to hit it exactly.
    c_blocks = {}
    for i in range(n):
        others = [raw[(i, j)] for j in range(n) if j != i]
        if others:
            row_sums = np.sum([blk.sum(axis=1) for blk in others], axis=0)
            factors = config.coupling_strength / np.maximum(1.0, row_sums)
            for j in range(n):
                if j != i:
                    c_blocks[(i, j)] = raw[(i, j)] * factors[:, None]

    return ScalableProblem(
        config=config,
        a=np.concatenate(a_blocks),
        D_shared=d_shared_blocks,
        D_local=d_local_blocks,
        C_blocks=c_blocks,
    )


def assemble(problem: ScalableProblem) -> BlockSystem:
    """Stack the per-discipline blocks into the dense compact form."""
    cfg = problem.config
    n, p, d = cfg.n_disciplines, cfg.p, cfg.d
    row_off = np.concatenate([[0], np.cumsum(cfg.p_coupling)]).astype(int)

    C = np.eye(p)
    for (i, j), blk in problem.C_blocks.items():
        C[row_off[i]:row_off[i + 1], row_off[j]:row_off[j + 1]] = -blk

    D = np.zeros((p, d))
    D[:, : cfg.d_shared] = np.vstack(problem.D_shared)
    col = cfg.d_shared
    for i in range(n):
        D[row_off[i]:row_off[i + 1], col:col + cfg.d_local[i]] = problem.D_local[i]
        col += cfg.d_local[i]

    Qx0 = np.zeros((d, d))
    Qx0[: cfg.d_shared, : cfg.d_shared] = np.eye(cfg.d_shared)

    return BlockSystem(
        C=C,
        D=D,
        a=problem.a.copy(),
        Qx0=Qx0,
        p_coupling=cfg.p_coupling,
        d_shared=cfg.d_shared,
        d_local=cfg.d_local,
    )


def tune_feasibility(
    problem: ScalableProblem,
    n_samples: int = 10_000,
    quantile_seed: int = 0,
) -> float:
    """Calibrate the constraint threshold to the configured feasibility level.

    Draws ``n_samples`` design points uniformly on the unit hypercube,
    evaluates the noise-free coupling outputs through the exact linear map,
    takes the minimum output component per point, and sets the threshold to
    the empirical ``1 - feasibility_level`` quantile of those minima (linear
    interpolation between order statistics). After tuning, the fraction of
    the design space on which every coupling output stays above the threshold
    approximates ``feasibility_level``.

    The sampling stream is seeded by ``quantile_seed``, independent of the
    matrix-generation seed. The threshold is stored on the problem and
    returned.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    system = assemble(problem)
    alpha, beta, _ = system.linear_map
    rng = np.random.default_rng(quantile_seed)
    X = rng.random((n_samples, system.d))
    worst = (alpha[None, :] + X @ beta.T).min(axis=1)
    t = float(np.quantile(worst, 1.0 - problem.config.feasibility_level))
    problem.t = t
    return t


# --- JSON problem files ------------------------------------------------------
#
# Floats are rendered with 17 significant digits, which round-trips IEEE-754
# doubles exactly, so serialize/deserialize is a bitwise identity.


def _fmt_float(x) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError("cannot serialize non-finite value")
    return format(x, ".17g")


def _emit(obj) -> str:
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(k)}: {_emit(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_emit(v) for v in obj) + "]"
    if isinstance(obj, (bool, type(None))):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _matrix(arr: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.asarray(arr, dtype=float)]


def serialize(problem: ScalableProblem) -> bytes:
    """Render a problem as canonical JSON bytes (17-significant-digit floats)."""
    cfg = problem.config
    doc = {
        "version": FORMAT_VERSION,
        "config": {
            "n_disciplines": cfg.n_disciplines,
            "d_shared": cfg.d_shared,
            "d_local": list(cfg.d_local),
            "p_coupling": list(cfg.p_coupling),
            "coupling_strength": cfg.coupling_strength,
            "feasibility_level": cfg.feasibility_level,
            "seed": cfg.seed,
        },
        "a": [float(v) for v in problem.a],
        "D_shared": [_matrix(m) for m in problem.D_shared],
        "D_local": [_matrix(m) for m in problem.D_local],
        "C_blocks": [
            [i, j, _matrix(problem.C_blocks[(i, j)])]
            for (i, j) in sorted(problem.C_blocks)
        ],
        "t": problem.t,
        "sigma_blocks": (
            None
            if problem.uncertainty is None or problem.uncertainty.kind == "none"
            else [_matrix(b) for b in problem.uncertainty.sigma_blocks]
        ),
    }
    return _emit(doc).encode("ascii")


def _require(mapping, key, path):
    if not isinstance(mapping, dict):
        raise ProblemFormatError("expected a JSON object", field=path)
    if key not in mapping:
        raise ProblemFormatError("missing required field", field=f"{path}{key}")
    return mapping[key]


def _as_matrix(value, shape, path):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"not a numeric matrix: {exc}", field=path) from exc
    if arr.shape != shape:
        raise ProblemFormatError(
            f"expected shape {shape}, got {arr.shape}", field=path
        )
    return arr


def deserialize(data: bytes | str) -> ScalableProblem:
    """Parse problem bytes written by :func:`serialize`.

    Raises
    ------
    ProblemVersionError
        If the file declares a different format version.
    ProblemFormatError
        If a field is missing or malformed; the error names the field path.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"invalid JSON: {exc}", field="<root>") from exc

    version = _require(doc, "version", "")
    if version != FORMAT_VERSION:
        raise ProblemVersionError(
            f"unsupported format version {version!r} (expected {FORMAT_VERSION})",
            field="version",
        )

    cfg_doc = _require(doc, "config", "")
    try:
        config = ProblemConfig(
            n_disciplines=int(_require(cfg_doc, "n_disciplines", "config.")),
            d_shared=int(_require(cfg_doc, "d_shared", "config.")),
            d_local=tuple(_require(cfg_doc, "d_local", "config.")),
            p_coupling=tuple(_require(cfg_doc, "p_coupling", "config.")),
            coupling_strength=float(_require(cfg_doc, "coupling_strength", "config.")),
            feasibility_level=float(_require(cfg_doc, "feasibility_level", "config.")),
            seed=int(_require(cfg_doc, "seed", "config.")),
        )
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"invalid config: {exc}", field="config") from exc

    n = config.n_disciplines
    a = np.asarray(_require(doc, "a", ""), dtype=float)
    if a.shape != (config.p,):
        raise ProblemFormatError(
            f"expected length {config.p}, got shape {a.shape}", field="a"
        )

    d_shared_doc = _require(doc, "D_shared", "")
    d_local_doc = _require(doc, "D_local", "")
    if len(d_shared_doc) != n:
        raise ProblemFormatError(f"expected {n} blocks", field="D_shared")
    if len(d_local_doc) != n:
        raise ProblemFormatError(f"expected {n} blocks", field="D_local")
    D_shared = tuple(
        _as_matrix(m, (config.p_coupling[i], config.d_shared), f"D_shared[{i}]")
        for i, m in enumerate(d_shared_doc)
    )
    D_local = tuple(
        _as_matrix(m, (config.p_coupling[i], config.d_local[i]), f"D_local[{i}]")
        for i, m in enumerate(d_local_doc)
    )

    C_blocks = {}
    for entry in _require(doc, "C_blocks", ""):
        if not isinstance(entry, list) or len(entry) != 3:
            raise ProblemFormatError("expected [i, j, matrix] triples", field="C_blocks")
        i, j = int(entry[0]), int(entry[1])
        if not (0 <= i < n and 0 <= j < n and i != j):
            raise ProblemFormatError(f"invalid block index ({i}, {j})", field="C_blocks")
        C_blocks[(i, j)] = _as_matrix(
            entry[2],
            (config.p_coupling[i], config.p_coupling[j]),
            f"C_blocks[{i},{j}]",
        )
    expected_blocks = n * (n - 1)
    if len(C_blocks) != expected_blocks:
        raise ProblemFormatError(
            f"expected {expected_blocks} coupling blocks, got {len(C_blocks)}",
            field="C_blocks",
        )

    t = float(_require(doc, "t", ""))

    sigma_doc = _require(doc, "sigma_blocks", "")
    uncertainty = None
    if sigma_doc is not None:
        if len(sigma_doc) != n:
            raise ProblemFormatError(f"expected {n} blocks", field="sigma_blocks")
        blocks = tuple(
            _as_matrix(m, (config.p_coupling[i], config.p_coupling[i]), f"sigma_blocks[{i}]")
            for i, m in enumerate(sigma_doc)
        )
        try:
            uncertainty = UncertaintyModel(kind="gaussian", sigma_blocks=blocks)
        except ValueError as exc:
            raise ProblemFormatError(str(exc), field="sigma_blocks") from exc

    return ScalableProblem(
        config=config,
        a=a,
        D_shared=D_shared,
        D_local=D_local,
        C_blocks=C_blocks,
        t=t,
        uncertainty=uncertainty,
    )


def problem_digest(problem: ScalableProblem) -> str:
    """SHA-256 hex digest of the canonical serialization."""
    return hashlib.sha256(serialize(problem)).hexdigest()
