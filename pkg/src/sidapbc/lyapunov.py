"""Direct-Lyapunov designs seen as SIDA-PBC with generalized forces.

The plant is a second-order system ``qdot = M^-1 p``, ``pdot = g(q) + f(q, p) + G u``
that need not be Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import MatrixField, ScalarField, State, _inv, min_eigenvalue, quadratic_gradient


@dataclass(frozen=True)
class GeneralSecondOrderSystem:
    n: int
    m: int
    mass: MatrixField
    g_vec: Callable[[np.ndarray], np.ndarray]
    f_vec: Callable[[np.ndarray, np.ndarray], np.ndarray]
    input_map: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @property
    def inertia(self) -> MatrixField:
        return self.mass

    def forces(self, x: State) -> np.ndarray:
        return np.asarray(self.g_vec(x.q), dtype=float) + np.asarray(self.f_vec(x.q, x.p), dtype=float)

    def field(self, x: State, u) -> tuple:
        return general_field(self, x, u)

    def check(self, states) -> dict:
        """Positive-definite mass and vanishing forces at rest, worst over ``states``."""
        min_eig = min(min_eigenvalue(self.mass(x.q)) for x in states)
        rest = max(float(np.max(np.abs(self.f_vec(x.q, np.zeros(self.n))))) for x in states)
        return {"min_mass_eig": min_eig, "rest_force": rest}


@dataclass(frozen=True)
class LyapunovCandidate:
    """``H_d = p^T M_d^-1 p / 2 + V_d(q)`` with minimum at ``q_star``."""

    md: MatrixField
    vd: ScalarField
    q_star: np.ndarray
    md_inverse: Optional[MatrixField] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "q_star", np.atleast_1d(np.asarray(self.q_star, dtype=float)))
        if self.md_inverse is None:
            object.__setattr__(self, "md_inverse", self.md.inverse(name="M_d^-1"))

    @classmethod
    def from_inverse(cls, md_inv: MatrixField, vd: ScalarField, q_star) -> "LyapunovCandidate":
        return cls(md_inv.inverse(name="M_d"), vd, q_star, md_inverse=md_inv)

    def hamiltonian(self, x: State) -> float:
        return 0.5 * x.p @ self.md_inverse(x.q) @ x.p + self.vd(x.q)

    def grad_q_hamiltonian(self, x: State) -> np.ndarray:
        return 0.5 * quadratic_gradient(self.md_inverse, x.q, x.p) + self.vd.gradient(x.q)


def general_field(sys: GeneralSecondOrderSystem, x: State, u) -> tuple:
    qdot = _inv(sys.mass(x.q), "mass") @ x.p
    pdot = sys.forces(x) + np.atleast_2d(sys.input_map(x.q)) @ np.atleast_1d(u)
    return qdot, pdot


def extract_c(sys: GeneralSecondOrderSystem, cand: LyapunovCandidate, u_law, x: State) -> np.ndarray:
    """The force ``C`` that the design leaves in the closed loop.

    ``C = g + f + G u + M_d M^-1 grad_q H_d``.
    """
    minv = _inv(sys.mass(x.q), "mass")
    applied = sys.forces(x) + np.atleast_2d(sys.input_map(x.q)) @ np.atleast_1d(u_law(x))
    return applied + cand.md(x.q) @ minv @ cand.grad_q_hamiltonian(x)


def lyap_hd_dot(sys, cand, u_law, x: State) -> float:
    """``p^T M_d^-1 C``, the rate of H_d along the closed loop."""
    return float((cand.md_inverse(x.q) @ x.p) @ extract_c(sys, cand, u_law, x))


def lyap_matching_residual(sys, cand, u_law, lambda_map, x: State) -> np.ndarray:
    minv = _inv(sys.mass(x.q), "mass")
    w = cand.md_inverse(x.q) @ x.p
    applied = sys.forces(x) + np.atleast_2d(sys.input_map(x.q)) @ np.atleast_1d(u_law(x))
    target = -cand.md(x.q) @ minv @ cand.grad_q_hamiltonian(x) + lambda_map(x) @ w
    return applied - target
