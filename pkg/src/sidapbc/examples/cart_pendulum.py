"""Inverted pendulum on a cart, after partial feedback linearization.

q = (cart position, pendulum angle from upright), p = blkdiag(1, m l^2) qdot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from ..core import (
    MatrixField,
    MechanicalSystem,
    ProbeBox,
    ScalarField,
    State,
    TargetDynamics,
    VectorField,
    _inv,
    fd_jacobian,
)
from ..pfl import GainSet, PartitionedSystem, gain_condition_check, pfl_system
from . import load_defaults


@dataclass(frozen=True)
class CartPendulumParams:
    M_c: float = 1.0
    m: float = 1.0
    l: float = 1.0
    g: float = 9.81

    def __post_init__(self):
        for name in ("M_c", "m", "l", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def default_params() -> CartPendulumParams:
    return CartPendulumParams(**load_defaults("cart_pendulum")["params"])


def default_gains() -> GainSet:
    d = load_defaults("cart_pendulum")["gains"]
    return GainSet(d["k_e"], 1.0, d["k_u"], [[d["K_k"]]], [[0.0]], [[d["K_P"]]])


def make_gains(k_e: float, k_u: float, K_k: float, K_P: float) -> GainSet:
    """Gain set of the worked example (k_a = 1, K_I = 0)."""
    return GainSet(k_e, 1.0, k_u, [[K_k]], [[0.0]], [[K_P]])


def _scalar(x):
    return float(np.asarray(x).reshape(-1)[0])


def partitioned(prm: CartPendulumParams) -> PartitionedSystem:
    ml = prm.m * prm.l

    m_au = MatrixField(
        lambda qu: np.array([[ml * math.cos(qu[0])]]),
        lambda qu: np.array([[[-ml * math.sin(qu[0])]]]),
        (1, 1),
        name="m_au",
    )
    m_uu = MatrixField.constant([[prm.m * prm.l**2]], 1, name="m_uu")
    v_u = ScalarField(
        lambda qu: prm.m * prm.g * prm.l * math.cos(qu[0]),
        lambda qu: np.array([-prm.m * prm.g * prm.l * math.sin(qu[0])]),
        name="V_u",
    )
    v_n = VectorField(
        lambda qu: np.array([-ml * math.sin(qu[0])]),
        lambda qu: np.array([[-ml * math.cos(qu[0])]]),
        name="V_N",
    )
    return PartitionedSystem(
        m=1,
        s=1,
        m_aa=[[prm.M_c + prm.m]],
        m_au=m_au,
        m_uu=m_uu,
        v_a=ScalarField.zero(1),
        v_u=v_u,
        v_n=v_n,
        name="cart-pendulum",
    )


def original_system(prm: CartPendulumParams) -> MechanicalSystem:
    """The cart-pendulum before partial feedback linearization."""
    ml = prm.m * prm.l
    inertia = MatrixField(
        lambda q: np.array([[prm.M_c + prm.m, ml * math.cos(q[1])], [ml * math.cos(q[1]), prm.m * prm.l**2]]),
        lambda q: np.array([np.zeros((2, 2)), [[0.0, -ml * math.sin(q[1])], [-ml * math.sin(q[1]), 0.0]]]),
        (2, 2),
        name="M",
    )
    potential = ScalarField(
        lambda q: prm.m * prm.g * prm.l * math.cos(q[1]),
        lambda q: np.array([0.0, -prm.m * prm.g * prm.l * math.sin(q[1])]),
        name="V",
    )
    return MechanicalSystem(2, 1, inertia, potential, MatrixField.constant([[1.0], [0.0]], 2, name="G"), name="cart-pendulum")


# ---------------------------------------------------------------------------
# Closed-form controller data (k_a = 1, K_I = 0)
# ---------------------------------------------------------------------------


def k_scalar(prm: CartPendulumParams, gains: GainSet, q_u: float) -> float:
    kk = _scalar(gains.K_k)
    return gains.k_e + kk + gains.k_u * kk * prm.m * math.cos(q_u) ** 2


def md_inv_field(prm: CartPendulumParams, gains: GainSet) -> MatrixField:
    ke, ku, kk, m, l = gains.k_e, gains.k_u, _scalar(gains.K_k), prm.m, prm.l

    def value(q):
        c = math.cos(q[1])
        off = -ku * kk * c / l
        return np.array([[ke + kk, off], [off, ke * ku / (m * l**2) + ku**2 * kk * c**2 / l**2]])

    def partials(q):
        c, s = math.cos(q[1]), math.sin(q[1])
        doff = ku * kk * s / l
        return np.array([np.zeros((2, 2)), [[0.0, doff], [doff, -2 * ku**2 * kk * c * s / l**2]]])

    return MatrixField(value, partials, (2, 2), name="M_d^-1")


def vd_field(prm: CartPendulumParams, gains: GainSet) -> ScalarField:
    amp = gains.k_e * gains.k_u * prm.m * prm.g * prm.l
    return ScalarField(lambda q: amp * math.cos(q[1]), lambda q: np.array([0.0, -amp * math.sin(q[1])]), name="V_d")


def control(prm: CartPendulumParams, gains: GainSet, x: State) -> np.ndarray:
    """Closed-form outer-loop input of the worked example."""
    ku, kk, kp, m, l, g = gains.k_u, _scalar(gains.K_k), _scalar(gains.K_P), prm.m, prm.l, prm.g
    q_u = x.q[1]
    p_a, p_u = x.p
    k = k_scalar(prm, gains, q_u)
    shaping = -ku * kk * m * math.sin(q_u) * (p_u**2 / (m**2 * l**3) - g * math.cos(q_u)) / k
    damping = kp * k * (p_a - ku / l * math.cos(q_u) * p_u)
    return np.array([shaping - damping])


def lambda_matrix(prm: CartPendulumParams, gains: GainSet, x: State) -> np.ndarray:
    ku, kk, kp, m, l = gains.k_u, _scalar(gains.K_k), _scalar(gains.K_P), prm.m, prm.l
    q_u = x.q[1]
    p_a, p_u = x.p
    md = _inv(md_inv_field(prm, gains)(x.q))
    coef = ku * kk * math.sin(q_u) / (m * l**3)  # k_a = 1
    inner = np.array([[0.0, -2 * coef * p_u], [coef * p_u, coef * p_a]])
    gt = np.array([1.0, -m * l * math.cos(q_u)])
    return 0.5 * md @ inner @ md - kp * np.outer(gt, gt)


@dataclass(frozen=True)
class CartPendulum:
    """Everything needed to verify and simulate the cart-pendulum design."""

    params: CartPendulumParams
    gains: GainSet
    partitioned: PartitionedSystem
    system: MechanicalSystem
    target: TargetDynamics
    box: ProbeBox
    q_u_interval: tuple

    def control(self, x: State) -> np.ndarray:
        return control(self.params, self.gains, x)

    def lambda_map(self, x: State) -> np.ndarray:
        return lambda_matrix(self.params, self.gains, x)

    def gain_report(self, points: int = 101):
        return gain_condition_check(self.partitioned, self.gains, self.q_u_interval, self.target.q_star, points)

    def sign_conditions(self) -> dict:
        """Sign conditions quoted with the worked example, on the q_u interval."""
        grid = np.linspace(self.q_u_interval[0], self.q_u_interval[1], 201)
        k_max = max(k_scalar(self.params, self.gains, qu) for qu in grid)
        return {"k_e>0": self.gains.k_e > 0, "k_u<0": self.gains.k_u < 0, "K<0": k_max < 0}


def build(params: CartPendulumParams | None = None, gains: GainSet | None = None, box: ProbeBox | None = None,
          q_u_interval=None) -> CartPendulum:
    prm = params or default_params()
    gs = gains or default_gains()
    d = load_defaults("cart_pendulum")
    if box is None:
        b = d["probe_box"]
        box = ProbeBox.symmetric(b["q_half"], b["p_half"])
    interval = tuple(q_u_interval or d["q_u_interval"])
    ps = partitioned(prm)
    tgt = TargetDynamics.from_inverse(
        md_inv_field(prm, gs), vd_field(prm, gs), lambda x: lambda_matrix(prm, gs, x), np.zeros(2)
    )
    return CartPendulum(prm, gs, ps, pfl_system(ps), tgt, box, interval)


def linear_decay_rate(cart: CartPendulum) -> float:
    """Slowest decay rate of the closed loop linearized at the origin.

    The cart position is left out: with K_I = 0 it does not feed back, so its
    eigenvalue is zero for every gain choice.
    """
    def rhs(y):
        x = State.from_vector(y)
        return np.concatenate(cart.system.field(x, cart.control(x)))

    jac = fd_jacobian(rhs, np.zeros(4))
    keep = [1, 2, 3]
    return float(-np.max(np.linalg.eigvals(jac[np.ix_(keep, keep)]).real))


def search_gains(params: CartPendulumParams, interval=(-1.0, 1.0), k_e_grid=(0.5, 0.75, 1.0, 1.5, 2.0),
                 k_u_grid=(-10.0, -15.0, -20.0, -30.0), K_k_grid=(0.15, 0.2, 0.25, 0.35, 0.5),
                 K_P_grid=(0.01, 0.02, 0.03, 0.05), points: int = 41) -> list:
    """Grid search for gains passing every condition on ``interval``.

    Returns ``(decay_rate, gains)`` pairs for the passing sets, fastest first.
    The quoted sign conditions (k_e > 0, k_u < 0, K < 0 on the interval) are
    applied before the full gain check.
    """
    ps = partitioned(params)
    grid = np.linspace(interval[0], interval[1], points)
    out = []
    for k_e, k_u, K_k, K_P in product(k_e_grid, k_u_grid, K_k_grid, K_P_grid):
        gains = make_gains(float(k_e), float(k_u), float(K_k), float(K_P))
        if not (k_e > 0 and k_u < 0 and max(k_scalar(params, gains, qu) for qu in grid) < 0):
            continue
        if not gain_condition_check(ps, gains, interval, np.zeros(2), points).passed:
            continue
        rate = linear_decay_rate(build(params, gains, q_u_interval=interval))
        out.append((rate, gains))
    out.sort(key=lambda item: -item[0])
    return out
