"""Ball and beam in the coordinates of the direct-Lyapunov design.

q = (beam angle, ball position). The momentum is ``p = diag(sqrt(2(eps + q_u^2)), 1) qdot``
and the unactuated momentum carries viscous damping ``-delta p_u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import MatrixField, ProbeBox, ScalarField, State, TargetDynamics, _inv, min_eigenvalue
from ..lyapunov import GeneralSecondOrderSystem, LyapunovCandidate
from . import load_defaults


@dataclass(frozen=True)
class BallBeamParams:
    eps: float = 1.0
    delta: float = 1.0
    K: float = 1.0
    K_P: float = 1.0

    def __post_init__(self):
        for name in ("eps", "delta", "K", "K_P"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def default_params() -> BallBeamParams:
    return BallBeamParams(**load_defaults("ball_beam")["params"])


def _ab(prm, q_u):
    """``a = sqrt(2 eps + q_u^2)``, ``b = sqrt(eps + q_u^2)``."""
    return math.sqrt(2 * prm.eps + q_u**2), math.sqrt(prm.eps + q_u**2)


def mass_field(prm: BallBeamParams) -> MatrixField:
    def value(q):
        return np.array([[math.sqrt(2 * (prm.eps + q[1] ** 2)), 0.0], [0.0, 1.0]])

    def partials(q):
        d = 2 * q[1] / math.sqrt(2 * (prm.eps + q[1] ** 2))
        return np.array([np.zeros((2, 2)), np.diag([d, 0.0])])

    return MatrixField(value, partials, (2, 2), name="M")


def md_inv_field(prm: BallBeamParams) -> MatrixField:
    def value(q):
        a, b = _ab(prm, q[1])
        return np.array([[a, -b], [-b, a]])

    def partials(q):
        a, b = _ab(prm, q[1])
        da, db = q[1] / a, q[1] / b
        return np.array([np.zeros((2, 2)), [[da, -db], [-db, da]]])

    return MatrixField(value, partials, (2, 2), name="M_d^-1")


def vd_field(prm: BallBeamParams) -> ScalarField:
    """``eps sqrt(2) (1 - cos q_a) + K/2 (q_a - asinh(q_u / sqrt(2 eps)) / sqrt(2))^2``."""

    def phi(q):
        return q[0] - math.asinh(q[1] / math.sqrt(2 * prm.eps)) / math.sqrt(2)

    def value(q):
        return prm.eps * math.sqrt(2) * (1 - math.cos(q[0])) + 0.5 * prm.K * phi(q) ** 2

    def gradient(q):
        a, _ = _ab(prm, q[1])
        f = prm.K * phi(q)
        return np.array([prm.eps * math.sqrt(2) * math.sin(q[0]) + f, -f / (math.sqrt(2) * a)])

    return ScalarField(value, gradient, name="V_d")


def system(prm: BallBeamParams) -> GeneralSecondOrderSystem:
    def g_vec(q):
        return np.array([0.0, -math.sin(q[0])])

    def f_vec(q, p):
        return np.array([0.0, q[1] * p[0] ** 2 / (2 * (prm.eps + q[1] ** 2)) - prm.delta * p[1]])

    return GeneralSecondOrderSystem(2, 1, mass_field(prm), g_vec, f_vec, lambda q: np.array([[1.0], [0.0]]),
                                    name="ball-beam")


def candidate(prm: BallBeamParams) -> LyapunovCandidate:
    return LyapunovCandidate.from_inverse(md_inv_field(prm), vd_field(prm), np.zeros(2))


def c_terms(prm: BallBeamParams, x: State, cu_variant: str = "q_u") -> tuple:
    """The state-dependent gains c_a and c_u of the controller.

    ``cu_variant`` selects the coordinate in the denominator ``2 (eps + q^2)``
    of c_u; only ``"q_u"`` satisfies the matching identity.
    """
    q_a, q_u = x.q
    p_a, p_u = x.p
    a, b = _ab(prm, q_u)
    if cu_variant == "q_u":
        den = 2 * (prm.eps + q_u**2)
    elif cu_variant == "q_a":
        den = 2 * (prm.eps + q_a**2)
    else:
        raise ValueError(f"unknown c_u variant {cu_variant!r}")
    c_u = -q_u * p_u / (2 * a * b) + q_u * p_a / den
    c_a = -q_u * p_a / (2 * a * b)
    return c_a, c_u


def control(prm: BallBeamParams, x: State, cu_variant: str = "q_u") -> np.ndarray:
    q_a, q_u = x.q
    p_a, p_u = x.p
    a, b = _ab(prm, q_u)
    c_a, c_u = c_terms(prm, x, cu_variant)
    grad_u = vd_field(prm).gradient(x.q)[1]
    u = (-a / b * math.sin(q_a) + grad_u / b - c_a * p_a - c_u * p_u
         - (prm.delta + prm.K_P * a) * p_a + prm.K_P * b * p_u)
    return np.array([u])


def bracket_matrix(prm: BallBeamParams, q_u: float) -> np.ndarray:
    """``[[a, b], [b, a]]``; its determinant is eps for every q_u."""
    a, b = _ab(prm, q_u)
    return np.array([[a, b], [b, a]])


def lambda_parts(prm: BallBeamParams, x: State) -> tuple:
    """Skew (M_d-sandwiched) and damping parts of Λ; Λ is their sum."""
    q_u = x.q[1]
    p_a, p_u = x.p
    a, b = _ab(prm, q_u)
    md = _inv(md_inv_field(prm)(x.q))
    e = -q_u * p_u / b + a * q_u * p_a / b**2
    skew = -0.5 * md @ np.array([[0.0, e], [-e, 0.0]]) @ md
    damping = -(prm.delta / prm.eps) * (bracket_matrix(prm, q_u) + np.diag([prm.eps * prm.K_P / prm.delta, 0.0]))
    return skew, damping


def lambda_matrix(prm: BallBeamParams, x: State) -> np.ndarray:
    skew, damping = lambda_parts(prm, x)
    return skew + damping


def pd_decomposition(prm: BallBeamParams, q_u: float, p=(1.0, 1.0)) -> dict:
    """Split Λ at ``q_u`` and report the definiteness facts behind its sign.

    ``skew_quadratic`` is ``w^T S w`` for the skew part at momentum ``p``;
    ``second_min_eig`` is the smallest eigenvalue of
    ``[[a + eps K_P / delta, b], [b, a]]``.
    """
    x = State([0.0, q_u], p)
    skew, damping = lambda_parts(prm, x)
    second = bracket_matrix(prm, q_u) + np.diag([prm.eps * prm.K_P / prm.delta, 0.0])
    w = md_inv_field(prm)(x.q) @ x.p
    min_eig = min_eigenvalue(second)
    return {
        "skew": skew,
        "damping": damping,
        "second": second,
        "skew_quadratic": float(w @ skew @ w),
        "bracket_det": float(np.linalg.det(bracket_matrix(prm, q_u))),
        "second_min_eig": min_eig,
        "pd": min_eig > 0,
    }


@dataclass(frozen=True)
class BallBeam:
    params: BallBeamParams
    system: GeneralSecondOrderSystem
    candidate: LyapunovCandidate
    target: TargetDynamics
    box: ProbeBox
    cu_variant: str = "q_u"

    def control(self, x: State) -> np.ndarray:
        return control(self.params, x, self.cu_variant)

    def lambda_map(self, x: State) -> np.ndarray:
        return lambda_matrix(self.params, x)


def build(params: BallBeamParams | None = None, box: ProbeBox | None = None, cu_variant: str = "q_u") -> BallBeam:
    prm = params or default_params()
    if box is None:
        b = load_defaults("ball_beam")["probe_box"]
        box = ProbeBox.symmetric(b["q_half"], b["p_half"])
    cand = candidate(prm)
    tgt = TargetDynamics(cand.md, cand.vd, lambda x: lambda_matrix(prm, x), cand.q_star, md_inverse=cand.md_inverse)
    return BallBeam(prm, system(prm), cand, tgt, box, cu_variant)
