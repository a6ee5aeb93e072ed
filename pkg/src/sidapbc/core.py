"""Configuration-dependent fields, mechanical systems and finite-difference oracles.

Everything here is a pure function of its inputs. Fields carry analytic
derivatives; the finite-difference helpers exist only to cross-check them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

# Relative tolerance used when comparing analytic derivatives with central differences.
FD_RTOL = 1e-5


class EvaluationError(ValueError):
    """A field produced a non-finite value; ``point`` is the offending probe."""

    def __init__(self, message: str, point: Array):
        super().__init__(f"{message} at q={np.array2string(np.asarray(point), precision=6)}")
        self.point = np.asarray(point, dtype=float)


class NotPSDError(ValueError):
    def __init__(self, eigenvalue: float):
        super().__init__(f"matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")
        self.eigenvalue = eigenvalue


class RankDeficientError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _inv(a: Array, what: str = "matrix") -> Array:
    a = np.asarray(a, dtype=float)
    # Closed forms for the small blocks that dominate simulation time.
    if a.shape == (1, 1):
        if a[0, 0] == 0.0 or not np.isfinite(a[0, 0]):
            raise SingularMatrixError(f"{what} is singular")
        return 1.0 / a
    if a.shape == (2, 2):
        (a00, a01), (a10, a11) = a.tolist()
        det = a00 * a11 - a01 * a10
        scale = max(abs(a00), abs(a01), abs(a10), abs(a11))
        if not abs(det) > 1e-14 * scale * scale or det != det or abs(det) == float("inf"):
            raise SingularMatrixError(f"{what} is singular")
        return np.array([[a11 / det, -a01 / det], [-a10 / det, a00 / det]])
    try:
        out = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{what} is singular") from exc
    if not np.all(np.isfinite(out)):
        raise SingularMatrixError(f"{what} is singular")
    return out


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    """Generalized position ``q`` and momentum ``p``."""

    q: Array
    p: Array

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError(f"q and p must be vectors of equal length, got {q.shape} and {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size

    def vector(self) -> Array:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, y: Array) -> "State":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n], y[n:])


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Scalar function of q with an analytic gradient."""

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    name: str = ""

    def __call__(self, q: Array) -> float:
        return float(self.value(q))

    @classmethod
    def zero(cls, n: int) -> "ScalarField":
        return cls(lambda q: 0.0, lambda q: np.zeros(n), name="zero")


@dataclass(frozen=True)
class MatrixField:
    """Matrix-valued function of q with analytic partial derivatives.

    ``partials(q)`` returns an array of shape ``(n, r, c)`` whose i-th slice is
    the derivative with respect to ``q_i``.
    """

    value: Callable[[Array], Array]
    partials: Callable[[Array], Array]
    shape: tuple
    name: str = ""
    is_constant: bool = False

    def __call__(self, q: Array) -> Array:
        return np.asarray(self.value(q), dtype=float)

    def partial(self, q: Array, i: int) -> Array:
        return np.asarray(self.partials(q), dtype=float)[i]

    @classmethod
    def constant(cls, a: Array, n: int, name: str = "") -> "MatrixField":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        zeros = np.zeros((n,) + a.shape)
        return cls(lambda q: a, lambda q: zeros, a.shape, name=name, is_constant=True)

    def inverse(self, name: str = "") -> "MatrixField":
        """Field of the matrix inverse, with partials -A^-1 (dA) A^-1."""
        if self.shape[0] != self.shape[1]:
            raise ValueError("only square fields can be inverted")
        if self.is_constant:
            # Constant fields ignore their argument.
            zeros = np.zeros_like(np.asarray(self.partials(None), dtype=float))
            ai = _inv(self(None), self.name or "matrix field")
            return MatrixField(lambda q: ai, lambda q: zeros, self.shape, name=name or f"inv({self.name})",
                               is_constant=True)

        def value(q):
            return _inv(self(q), self.name or "matrix field")

        def partials(q):
            ai = value(q)
            return -np.einsum("ij,njk,kl->nil", ai, np.asarray(self.partials(q)), ai)

        return MatrixField(value, partials, self.shape, name=name or f"inv({self.name})")


@dataclass(frozen=True)
class VectorField:
    """Vector-valued function with an analytic Jacobian of shape ``(len, n)``."""

    value: Callable[[Array], Array]
    jacobian: Callable[[Array], Array]
    name: str = ""

    def __call__(self, q: Array) -> Array:
        return np.atleast_1d(np.asarray(self.value(q), dtype=float))


def check_vector_field(f: VectorField, probes) -> float:
    return max(relative_error(f.jacobian(q), fd_jacobian(f, q)) for q in probes)


def quadratic_gradient(a: MatrixField, q: Array, w: Array) -> Array:
    """Gradient in q of ``w^T A(q) w`` at frozen ``w``."""
    if a.is_constant:
        return np.zeros(len(a.partials(q)))
    return np.einsum("i,nij,j->n", w, a.partials(q), w)


def product_jacobian(a: MatrixField, q: Array, w: Array) -> Array:
    """Jacobian in q of ``A(q) w`` at frozen ``w``; column i is ``dA/dq_i w``."""
    return np.einsum("nij,j->in", a.partials(q), w)


# ---------------------------------------------------------------------------
# Finite-difference oracles
# ---------------------------------------------------------------------------


def fd_step(q: Array, scale: float = 1e-6) -> Array:
    return scale * (1.0 + np.abs(np.asarray(q, dtype=float)))


def _check_finite(v, q):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise EvaluationError("non-finite evaluation", q)
    return v


def fd_gradient(f: Callable[[Array], float], q: Array, h=None) -> Array:
    """Central-difference gradient of a scalar function.

    ``h`` may be a scalar or a per-coordinate array; it defaults to
    ``1e-6 * (1 + |q_i|)``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    steps = fd_step(q) if h is None else np.broadcast_to(np.asarray(h, dtype=float), q.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")
    grad = np.empty(q.size)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = steps[i]
        fp = _check_finite(f(q + e), q + e)
        fm = _check_finite(f(q - e), q - e)
        grad[i] = (fp - fm) / (2 * steps[i])
    return grad


def fd_jacobian(F: Callable[[Array], Array], q: Array, h=None) -> Array:
    """Central-difference Jacobian; column i is the difference along ``e_i``.

    Matrix-valued maps are supported: the result then has shape ``(n,) + F(q).shape``
    with the derivative index first, matching :attr:`MatrixField.partials`.
    Vector-valued maps return the usual ``(len(F), n)`` Jacobian.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    steps = fd_step(q) if h is None else np.broadcast_to(np.asarray(h, dtype=float), q.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")
    cols = []
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = steps[i]
        fp = _check_finite(F(q + e), q + e)
        fm = _check_finite(F(q - e), q - e)
        cols.append((fp - fm) / (2 * steps[i]))
    stacked = np.array(cols)
    if stacked.ndim <= 2:
        return np.atleast_2d(stacked.T) if stacked.ndim == 2 else stacked.reshape(1, -1)
    return stacked


def relative_error(analytic: Array, reference: Array) -> float:
    """``max|a - r| / (1 + max|r|)``, the error measure used by all oracle checks."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - reference)) / (1.0 + np.max(np.abs(reference))))


def check_scalar_field(f: ScalarField, probes) -> float:
    """Worst relative gradient error of ``f`` over the probe points."""
    return max(relative_error(f.gradient(q), fd_gradient(f.value, q)) for q in probes)


def check_matrix_field(f: MatrixField, probes) -> float:
    """Worst relative partial-derivative error of ``f`` over the probe points."""
    worst = 0.0
    for q in probes:
        got = np.asarray(f.partials(q), dtype=float)
        if f(q).shape != tuple(f.shape):
            raise ValueError(f"field {f.name!r} changed shape at q={q}")
        worst = max(worst, relative_error(got, fd_jacobian(f, q)))
    return worst


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------


def psd_sqrt(s: Array, tol: float = 1e-10) -> Array:
    """Symmetric PSD square root; eigenvalues in ``[-tol, 0)`` are clamped to zero."""
    s = np.asarray(s, dtype=float)
    sym = 0.5 * (s + s.T)
    evals, evecs = np.linalg.eigh(sym)
    if evals.size and evals.min() < -tol:
        raise NotPSDError(float(evals.min()))
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    return 0.5 * (root + root.T)


def left_annihilator(g: Array, tol: float = 1e-10) -> Array:
    """Orthonormal rows spanning the left null space of ``g`` (shape ``(n-m, n)``)."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    n, m = g.shape
    u, sv, _ = np.linalg.svd(g, full_matrices=True)
    if m > n or sv.size < m or sv[-1] <= tol * max(1.0, sv[0]):
        raise RankDeficientError(f"input map of shape {g.shape} does not have full column rank")
    return u[:, m:].T.copy()


def min_eigenvalue(a: Array) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MechanicalSystem:
    """Open-loop port-Hamiltonian mechanical system.

    The annihilator defaults to the pointwise orthonormal left annihilator of
    ``input_map``.
    """

    n: int
    m: int
    inertia: MatrixField
    potential: ScalarField
    input_map: MatrixField
    annihilator: Optional[Callable[[Array], Array]] = None
    name: str = ""
    inertia_inverse: MatrixField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inertia_inverse", self.inertia.inverse(name="M^-1"))
        if self.annihilator is None:
            object.__setattr__(self, "annihilator", lambda q: left_annihilator(self.input_map(q)))

    @property
    def s(self) -> int:
        return self.n - self.m

    def hamiltonian(self, x: State) -> float:
        return 0.5 * x.p @ self.inertia_inverse(x.q) @ x.p + self.potential(x.q)

    def grad_q_hamiltonian(self, x: State) -> Array:
        return 0.5 * quadratic_gradient(self.inertia_inverse, x.q, x.p) + self.potential.gradient(x.q)

    def field(self, x: State, u: Array) -> tuple:
        return open_loop_field(self, x, u)

    def check(self, probes) -> dict:
        """Structural invariants at the probe points (worst case of each)."""
        worst = {"min_inertia_eig": np.inf, "annihilation": 0.0, "rank_ok": True, "symmetry": 0.0}
        for q in probes:
            mq = self.inertia(q)
            worst["symmetry"] = max(worst["symmetry"], float(np.max(np.abs(mq - mq.T))))
            worst["min_inertia_eig"] = min(worst["min_inertia_eig"], min_eigenvalue(mq))
            g = self.input_map(q)
            gp = np.atleast_2d(self.annihilator(q))
            if self.s:
                worst["annihilation"] = max(worst["annihilation"], float(np.max(np.abs(gp @ g))))
            rank_ok = np.linalg.matrix_rank(g) == self.m and (
                self.s == 0 or np.linalg.matrix_rank(gp) == self.s
            )
            worst["rank_ok"] = worst["rank_ok"] and bool(rank_ok)
        return worst


@dataclass(frozen=True)
class TargetDynamics:
    """Desired closed loop: metric ``md`` (M_d), potential ``vd`` and force map Λ(x)."""

    md: MatrixField
    vd: ScalarField
    lambda_map: Callable[[State], Array]
    q_star: Array
    md_inverse: Optional[MatrixField] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "q_star", np.atleast_1d(np.asarray(self.q_star, dtype=float)))
        if self.md_inverse is None:
            object.__setattr__(self, "md_inverse", self.md.inverse(name="M_d^-1"))

    @classmethod
    def from_inverse(cls, md_inv: MatrixField, vd, lambda_map, q_star) -> "TargetDynamics":
        """Build from M_d^-1, which is how the worked examples state the metric."""
        return cls(md_inv.inverse(name="M_d"), vd, lambda_map, q_star, md_inverse=md_inv)

    def hamiltonian(self, x: State) -> float:
        return 0.5 * x.p @ self.md_inverse(x.q) @ x.p + self.vd(x.q)

    def grad_q_hamiltonian(self, x: State) -> Array:
        return 0.5 * quadratic_gradient(self.md_inverse, x.q, x.p) + self.vd.gradient(x.q)


def hessian_fd(f: Callable[[Array], float], q: Array) -> Array:
    """Finite-difference Hessian (Jacobian of the FD gradient), symmetrized."""
    q = np.asarray(q, dtype=float)
    hmat = fd_jacobian(lambda z: fd_gradient(f, z, h=1e-4 * (1 + np.abs(z))), q, h=1e-4 * (1 + np.abs(q)))
    return 0.5 * (hmat + hmat.T)


def minimum_check(vd: ScalarField, q_star: Array, coords=None, grad_tol: float = 1e-10) -> dict:
    """Strict-minimum test of ``vd`` at ``q_star`` restricted to ``coords``.

    ``coords`` selects the coordinates the potential actually depends on; with
    the default all coordinates are checked.
    """
    q_star = np.asarray(q_star, dtype=float)
    idx = np.arange(q_star.size) if coords is None else np.asarray(coords, dtype=int)
    grad = np.asarray(vd.gradient(q_star))[idx]
    hess = hessian_fd(vd.value, q_star)[np.ix_(idx, idx)]
    min_eig = min_eigenvalue(hess) if idx.size else np.inf
    grad_norm = float(np.max(np.abs(grad))) if idx.size else 0.0
    return {
        "gradient_norm": grad_norm,
        "hessian_min_eig": float(min_eig),
        "ok": bool(grad_norm <= grad_tol and min_eig > 0),
    }


# ---------------------------------------------------------------------------
# Vector fields
# ---------------------------------------------------------------------------


def open_loop_field(sys: MechanicalSystem, x: State, u: Array) -> tuple:
    """``(qdot, pdot)`` of the pH system with input ``u``."""
    minv = sys.inertia_inverse(x.q)
    qdot = minv @ x.p
    pdot = -sys.grad_q_hamiltonian(x) + np.atleast_2d(sys.input_map(x.q)) @ np.atleast_1d(u)
    return qdot, pdot


def target_field(sys, tgt: TargetDynamics, x: State) -> tuple:
    """``(qdot, pdot)`` of the target dynamics with metric, potential and Λ of ``tgt``.

    Only ``sys.inertia`` is used, so the Lyapunov-form systems work too.
    """
    cached = getattr(sys, "inertia_inverse", None)
    minv = cached(x.q) if cached is not None else _inv(sys.inertia(x.q), "inertia")
    md = tgt.md(x.q)
    w = tgt.md_inverse(x.q) @ x.p
    qdot = minv @ x.p
    pdot = -md @ minv @ tgt.grad_q_hamiltonian(x) + tgt.lambda_map(x) @ w
    return qdot, pdot


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeBox:
    """Axis-aligned box of states ``q_low <= q <= q_high``, ``p_low <= p <= p_high``."""

    q_low: Array
    q_high: Array
    p_low: Array
    p_high: Array

    def __post_init__(self):
        for name in ("q_low", "q_high", "p_low", "p_high"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.q_high < self.q_low) or np.any(self.p_high < self.p_low):
            raise ValueError("probe box bounds are inverted")

    @classmethod
    def symmetric(cls, q_half, p_half) -> "ProbeBox":
        q_half = np.atleast_1d(np.asarray(q_half, dtype=float))
        p_half = np.atleast_1d(np.asarray(p_half, dtype=float))
        return cls(-q_half, q_half, -p_half, p_half)

    def sample(self, count: int, seed: int = 0) -> list:
        rng = np.random.default_rng(seed)
        qs = rng.uniform(self.q_low, self.q_high, size=(count, self.q_low.size))
        ps = rng.uniform(self.p_low, self.p_high, size=(count, self.p_low.size))
        return [State(q, p) for q, p in zip(qs, ps)]

    def sample_q(self, count: int, seed: int = 0) -> list:
        return [x.q for x in self.sample(count, seed)]
