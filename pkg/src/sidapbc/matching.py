"""Matching equations of IDA-PBC and of SIDA-PBC with generalized forces.

Every residual is evaluated pointwise; nothing here solves a PDE. The
convention throughout is ``w = M_d^-1 p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    MatrixField,
    MechanicalSystem,
    State,
    TargetDynamics,
    _inv,
    min_eigenvalue,
    psd_sqrt,
    quadratic_gradient,
    target_field,
)

# Tolerance ladder: exact algebra with constant matrices, then identities
# that go through analytic partials of transcendental entries.
TOL_EXACT = 1e-12
TOL_ANALYTIC = 1e-8
# Tolerance ladder shared by the verification suites and embedded in reports.
TOLERANCES = {
    "exact": TOL_EXACT,
    "algebraic": 1e-10,
    "identity": 1e-9,
    "analytic": TOL_ANALYTIC,
    "trajectory": 1e-6,
    "finite_difference": 1e-5,
    "negative_control": 1e-4,
}


@dataclass(frozen=True)
class GyroscopicForces:
    """Skew matrices U_i generating the gyroscopic term J_2 = sum_i w_i U_i."""

    u_mats: Sequence[MatrixField]

    def matrices(self, q) -> list:
        return [np.asarray(u(q), dtype=float) for u in self.u_mats]

    def max_skew_error(self, probes) -> float:
        return max(float(np.max(np.abs(u + u.T))) for q in probes for u in self.matrices(q))


@dataclass(frozen=True)
class GeneralizedForces:
    """Free matrices Q_i with 2 C_i = w^T Q_i w."""

    q_mats: Sequence[MatrixField]

    def __post_init__(self):
        shapes = {tuple(qm.shape) for qm in self.q_mats}
        n = len(self.q_mats)
        if shapes and shapes != {(n, n)}:
            raise ValueError(f"expected {n} matrices of shape ({n}, {n}), got shapes {shapes}")

    def matrices(self, q) -> list:
        return [np.asarray(qm(q), dtype=float) for qm in self.q_mats]


def gyroscopic_as_generalized(gyro: GyroscopicForces) -> GeneralizedForces:
    """Q_i reproducing ``C = J_2 w``: row j of Q_i is twice row i of U_j."""
    n = len(gyro.u_mats)

    def make(i):
        def value(q):
            us = gyro.matrices(q)
            return 2.0 * np.array([us[j][i] for j in range(n)])

        def partials(q):
            dus = [np.asarray(u.partials(q)) for u in gyro.u_mats]
            return 2.0 * np.stack([dus[j][:, i, :] for j in range(n)], axis=1)

        return MatrixField(value, partials, (n, n), name=f"Q_{i + 1}")

    return GeneralizedForces([make(i) for i in range(n)])


@dataclass
class ResidualReport:
    """Worst-case summary of a residual evaluated on sampled states."""

    name: str
    max_abs: float
    per_sample: list = field(repr=False)
    samples: int
    seed: int | None = None
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.max_abs <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "max_abs": self.max_abs,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "seed": self.seed,
            "passed": self.passed,
        }


def residual_report(name, fn: Callable[[State], np.ndarray], states, seed=None, tolerance=None):
    per_sample = []
    worst = 0.0
    for x in states:
        r = np.atleast_1d(np.asarray(fn(x), dtype=float))
        per_sample.append((x, r))
        if r.size:
            val = float(np.max(np.abs(r)))
            worst = max(worst, val) if np.isfinite(val) else np.inf
    return ResidualReport(name, worst, per_sample, len(per_sample), seed, tolerance)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def build_j2(gyro: GyroscopicForces, md: MatrixField, x: State) -> np.ndarray:
    w = _inv(md(x.q), "M_d") @ x.p
    us = gyro.matrices(x.q)
    return sum((wi * ui for wi, ui in zip(w, us)), np.zeros((x.n, x.n)))


def build_lambda(gyro: GeneralizedForces, md: MatrixField, x: State) -> np.ndarray:
    """Λ = 1/2 sum_i e_i w^T Q_i, i.e. row i is ``w^T Q_i / 2``."""
    w = _inv(md(x.q), "M_d") @ x.p
    return 0.5 * np.array([w @ qi for qi in gyro.matrices(x.q)]).reshape(x.n, x.n)


def pde_count(s: int) -> int:
    """Number of kinetic-energy PDEs left after the free matrices are used: s(s+1)(s+2)/6."""
    if s < 0:
        raise ValueError("s must be non-negative")
    return s * (s + 1) * (s + 2) // 6


def _ke_terms(sys: MechanicalSystem, tgt: TargetDynamics, x: State) -> np.ndarray:
    """``grad(p^T M^-1 p) - M_d M^-1 grad(p^T M_d^-1 p)`` (full n-vector)."""
    minv = sys.inertia_inverse(x.q)
    return quadratic_gradient(sys.inertia_inverse, x.q, x.p) - tgt.md(x.q) @ minv @ quadratic_gradient(
        tgt.md_inverse, x.q, x.p
    )


def _annihilate(sys: MechanicalSystem, q, vec) -> np.ndarray:
    if sys.s == 0:
        return np.zeros(0)
    return np.atleast_2d(sys.annihilator(q)) @ vec


# ---------------------------------------------------------------------------
# Standard IDA-PBC
# ---------------------------------------------------------------------------


def ida_ke_residual(sys, tgt, gyro: GyroscopicForces, x: State) -> np.ndarray:
    j2 = build_j2(gyro, tgt.md, x)
    w = tgt.md_inverse(x.q) @ x.p
    return _annihilate(sys, x.q, _ke_terms(sys, tgt, x) + 2 * j2 @ w)


def pe_residual(sys, tgt, x: State) -> np.ndarray:
    minv = sys.inertia_inverse(x.q)
    vec = sys.potential.gradient(x.q) - tgt.md(x.q) @ minv @ tgt.vd.gradient(x.q)
    return _annihilate(sys, x.q, vec)


def _left_pseudo_inverse(g: np.ndarray) -> np.ndarray:
    g = np.atleast_2d(g)
    return _inv(g.T @ g, "G^T G") @ g.T


def _shaping_bracket(sys, tgt, x, force) -> np.ndarray:
    minv = sys.inertia_inverse(x.q)
    return sys.grad_q_hamiltonian(x) - tgt.md(x.q) @ minv @ tgt.grad_q_hamiltonian(x) + force


def ida_control(sys, tgt, gyro, x: State, kp) -> np.ndarray:
    """Energy shaping plus damping injection ``-K_P G^T M_d^-1 p`` (K_P is m x m)."""
    g = np.atleast_2d(sys.input_map(x.q))
    w = tgt.md_inverse(x.q) @ x.p
    force = build_j2(gyro, tgt.md, x) @ w
    kp = np.atleast_2d(np.asarray(kp, dtype=float))
    return _left_pseudo_inverse(g) @ _shaping_bracket(sys, tgt, x, force) - kp @ g.T @ w


# ---------------------------------------------------------------------------
# Matrix form of the KE-PDE
# ---------------------------------------------------------------------------


def _row(sys, q, k):
    if not 0 <= k < sys.s:
        raise IndexError(f"row index {k} out of range for s={sys.s}")
    return np.atleast_2d(sys.annihilator(q))[k]


def ke_matrix_terms(sys, tgt, k: int, q) -> tuple:
    """``(A_k, Gamma_k, B_k)`` at q, with ``k`` a 0-based annihilator row."""
    v = _row(sys, q, k)
    md = tgt.md(q)
    gamma = v @ md @ sys.inertia_inverse(q)
    a_k = md @ np.einsum("i,ijk->jk", v, sys.inertia_inverse.partials(q)) @ md
    b_k = md @ np.einsum("i,ijk->jk", gamma, tgt.md_inverse.partials(q)) @ md
    return a_k, gamma, b_k


def ke_matrix_w(sys, gyro: GyroscopicForces, k: int, q) -> np.ndarray:
    v = _row(sys, q, k)
    rows = np.array([v @ u for u in gyro.matrices(q)])
    return rows + rows.T


def ke_matrix_residual(sys, tgt, gyro, k: int, q) -> np.ndarray:
    a_k, _, b_k = ke_matrix_terms(sys, tgt, k, q)
    return b_k - a_k - ke_matrix_w(sys, gyro, k, q)


# Sign relating component k of ida_ke_residual to w^T (B_k - A_k - W_k) w.
KE_FORM_SIGN = -1.0


def ke_quadratic_form(sys, tgt, gyro, k: int, x: State) -> float:
    w = tgt.md_inverse(x.q) @ x.p
    return float(w @ ke_matrix_residual(sys, tgt, gyro, k, x.q) @ w)


# ---------------------------------------------------------------------------
# SIDA-PBC with generalized forces
# ---------------------------------------------------------------------------


def sida_ke_residual(sys, tgt, gforces: GeneralizedForces, x: State) -> np.ndarray:
    lam = build_lambda(gforces, tgt.md, x)
    w = tgt.md_inverse(x.q) @ x.p
    return _annihilate(sys, x.q, _ke_terms(sys, tgt, x) + 2 * lam @ w)


def sida_ke_matrix_residual(sys, tgt, gforces, k: int, q, variant: str = "consistent") -> np.ndarray:
    """Per-row matrix form of the generalized-force KE-PDE.

    ``variant="consistent"`` returns
    ``sum_i [Gamma_ki dM_d/dq_i + v_ki M_d dM^-1/dq_i M_d] + sum_i v_ki Q_i``,
    whose quadratic form in ``w`` equals component k of
    :func:`sida_ke_residual`. ``variant="printed"`` keeps the literature
    layout ``sum_i [Gamma_ki dM_d/dq_i - v_ki M_d dM^-1/dq_i M_d] + sum_i e_i v_k^T Q_i``,
    which does not share that property in general.
    """
    v = _row(sys, q, k)
    md = tgt.md(q)
    gamma = v @ md @ sys.inertia_inverse(q)
    dmd = np.asarray(tgt.md.partials(q))
    dminv = np.asarray(sys.inertia_inverse.partials(q))
    qs = gforces.matrices(q)
    metric = np.einsum("i,ijk->jk", gamma, dmd)
    kinetic = md @ np.einsum("i,ijk->jk", v, dminv) @ md
    if variant == "consistent":
        return metric + kinetic + sum(vi * qi for vi, qi in zip(v, qs))
    if variant == "printed":
        return metric - kinetic + np.array([v @ qi for qi in qs])
    raise ValueError(f"unknown variant {variant!r}")


def sida_control(sys, tgt, x: State) -> np.ndarray:
    g = np.atleast_2d(sys.input_map(x.q))
    w = tgt.md_inverse(x.q) @ x.p
    force = tgt.lambda_map(x) @ w
    return _left_pseudo_inverse(g) @ _shaping_bracket(sys, tgt, x, force)


def sida_matching_residual(sys, u_law: Callable[[State], np.ndarray], tgt, x: State) -> np.ndarray:
    """Closed-loop momentum rate minus target momentum rate (full n-vector)."""
    minv = sys.inertia_inverse(x.q)
    w = tgt.md_inverse(x.q) @ x.p
    lhs = -sys.grad_q_hamiltonian(x) + np.atleast_2d(sys.input_map(x.q)) @ np.atleast_1d(u_law(x))
    rhs = -tgt.md(x.q) @ minv @ tgt.grad_q_hamiltonian(x) + tgt.lambda_map(x) @ w
    return lhs - rhs


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------


def stability_condition(tgt, x: State, tol: float = TOL_EXACT) -> tuple:
    """``(w^T Λ w, value <= tol)``."""
    w = tgt.md_inverse(x.q) @ x.p
    value = float(w @ tgt.lambda_map(x) @ w)
    return value, value <= tol


def lambda_sum_nonpositive(tgt, x: State, tol: float = 1e-12) -> bool:
    """Sufficient condition Λ + Λ^T <= 0."""
    lam = tgt.lambda_map(x)
    return -min_eigenvalue(-(lam + lam.T)) <= tol


def damping_output(tgt, x: State) -> np.ndarray:
    """``y_D = sqrt(-(Λ + Λ^T)) w``, so that the energy rate is ``-|y_D|^2 / 2``."""
    lam = tgt.lambda_map(x)
    return psd_sqrt(-(lam + lam.T)) @ (tgt.md_inverse(x.q) @ x.p)


def hd_dot(sys, tgt, x: State) -> float:
    """Rate of H_d along the target field, by the chain rule."""
    qdot, pdot = target_field(sys, tgt, x)
    w = tgt.md_inverse(x.q) @ x.p
    return float(tgt.grad_q_hamiltonian(x) @ qdot + w @ pdot)


def energy_rate(tgt, x: State, qdot, pdot) -> float:
    """``dH_d/dt`` along an arbitrary velocity ``(qdot, pdot)``."""
    w = tgt.md_inverse(x.q) @ x.p
    return float(tgt.grad_q_hamiltonian(x) @ qdot + w @ pdot)


__all__ = [
    "GyroscopicForces",
    "GeneralizedForces",
    "ResidualReport",
    "TOLERANCES",
    "build_j2",
    "build_lambda",
    "damping_output",
    "energy_rate",
    "gyroscopic_as_generalized",
    "hd_dot",
    "ida_control",
    "ida_ke_residual",
    "lambda_sum_nonpositive",
    "ke_quadratic_form",
    "ke_matrix_residual",
    "ke_matrix_terms",
    "ke_matrix_w",
    "pde_count",
    "pe_residual",
    "residual_report",
    "sida_control",
    "sida_ke_matrix_residual",
    "sida_ke_residual",
    "sida_matching_residual",
    "stability_condition",
]
