"""Energy shaping on the partially feedback-linearized mechanical system.

Coordinates are split as ``q = (q_a, q_u)`` with ``m`` actuated and ``s``
unactuated entries. After partial feedback linearization the system has
inertia ``blkdiag(I_m, m_uu(q_u))``, potential ``V_u(q_u)`` and input map
``[I_m; -m_au(q_u)^T]``; the controller below acts on that system only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from .core import (
    MatrixField,
    MechanicalSystem,
    ScalarField,
    State,
    TargetDynamics,
    VectorField,
    _inv,
    min_eigenvalue,
    minimum_check,
    product_jacobian,
)


class GainConditionError(ValueError):
    """K(q_u) is singular, so the controller is undefined."""


@dataclass(frozen=True)
class PartitionedSystem:
    """Inertia blocks and potentials of a system satisfying the PFL assumptions.

    ``m_au``, ``m_uu``, ``v_u`` and ``v_n`` are fields of ``q_u`` alone and
    ``v_a`` of ``q_a`` alone. ``v_n`` must satisfy ``jacobian(v_n) = -m_au``.
    """

    m: int
    s: int
    m_aa: np.ndarray
    m_au: MatrixField
    m_uu: MatrixField
    v_a: ScalarField
    v_u: ScalarField
    v_n: VectorField
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "m_aa", np.atleast_2d(np.asarray(self.m_aa, dtype=float)))

    @property
    def n(self) -> int:
        return self.m + self.s

    def split(self, q):
        q = np.asarray(q, dtype=float)
        return q[: self.m], q[self.m :]

    def full_inertia(self, q_u) -> np.ndarray:
        mau = self.m_au(q_u)
        return np.block([[self.m_aa, mau], [mau.T, self.m_uu(q_u)]])

    def structure_report(self, probes_u) -> dict:
        """Worst violations of the structural assumptions over ``q_u`` probes.

        ``row_gradient``: each row of m_au is a gradient field (symmetric
        Jacobian). ``vn_jacobian``: jacobian(v_n) + m_au. ``inertia_min_eig``:
        the full inertia stays positive definite.
        """
        sym = 0.0
        vn = 0.0
        pd = np.inf
        for q_u in probes_u:
            d = np.asarray(self.m_au.partials(q_u))  # (s, m, s)
            for i in range(self.m):
                jac = d[:, i, :].T  # jac[k, j] = d m_au[i, k] / d q_uj
                sym = max(sym, float(np.max(np.abs(jac - jac.T))) if jac.size else 0.0)
            vn = max(vn, float(np.max(np.abs(np.asarray(self.v_n.jacobian(q_u)) + self.m_au(q_u)))))
            pd = min(pd, min_eigenvalue(self.full_inertia(q_u)))
        return {"row_gradient": sym, "vn_jacobian": vn, "inertia_min_eig": pd}


@dataclass(frozen=True)
class GainSet:
    """Scalar gains k_e, k_a, k_u and m x m matrices K_k, K_I (PSD) and K_P (PD)."""

    k_e: float
    k_a: float
    k_u: float
    K_k: np.ndarray
    K_I: np.ndarray
    K_P: np.ndarray

    def __post_init__(self):
        for name in ("K_k", "K_I", "K_P"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))

    def validate(self) -> dict:
        """Symmetry and definiteness of the matrix gains."""
        out = {}
        for name, strict in (("K_k", False), ("K_I", False), ("K_P", True)):
            mat = getattr(self, name)
            sym = bool(np.allclose(mat, mat.T, atol=1e-14))
            eig = min_eigenvalue(mat)
            out[name] = sym and (eig > 0 if strict else eig >= -1e-14)
        return out

    def replace(self, **changes) -> "GainSet":
        fields = dict(k_e=self.k_e, k_a=self.k_a, k_u=self.k_u, K_k=self.K_k, K_I=self.K_I, K_P=self.K_P)
        fields.update(changes)
        return GainSet(**fields)


# ---------------------------------------------------------------------------
# Post-PFL system
# ---------------------------------------------------------------------------


def _lift(ps: PartitionedSystem, block_value, block_partials, shape, name, is_constant=False):
    """Embed a field of q_u into a field of the full q (zero q_a partials)."""
    if is_constant:
        value0 = np.asarray(block_value(np.zeros(ps.s)), dtype=float)
        return MatrixField.constant(value0, ps.n, name=name)

    def value(q):
        return block_value(ps.split(q)[1])

    def partials(q):
        out = np.zeros((ps.n,) + shape)
        out[ps.m :] = block_partials(ps.split(q)[1])
        return out

    return MatrixField(value, partials, shape, name=name)


def _inertia_tilde(ps: PartitionedSystem) -> MatrixField:
    m, s = ps.m, ps.s

    def value(q_u):
        out = np.eye(ps.n)
        out[m:, m:] = ps.m_uu(q_u)
        return out

    def partials(q_u):
        out = np.zeros((s, ps.n, ps.n))
        out[:, m:, m:] = ps.m_uu.partials(q_u)
        return out

    return _lift(ps, value, partials, (ps.n, ps.n), "M~", is_constant=ps.m_uu.is_constant)


def _input_tilde(ps: PartitionedSystem) -> MatrixField:
    m, s = ps.m, ps.s

    def value(q_u):
        return np.vstack([np.eye(m), -ps.m_au(q_u).T])

    def partials(q_u):
        out = np.zeros((s, ps.n, m))
        out[:, m:, :] = -np.transpose(np.asarray(ps.m_au.partials(q_u)), (0, 2, 1))
        return out

    return _lift(ps, value, partials, (ps.n, m), "G~")


def pfl_system(ps: PartitionedSystem) -> MechanicalSystem:
    """Post-PFL pH system; its momentum is ``p = blkdiag(I, m_uu) qdot``."""
    potential = ScalarField(
        lambda q: ps.v_u(ps.split(q)[1]),
        lambda q: np.concatenate([np.zeros(ps.m), ps.v_u.gradient(ps.split(q)[1])]),
        name="V_u",
    )
    return MechanicalSystem(ps.n, ps.m, _inertia_tilde(ps), potential, _input_tilde(ps), name=f"pfl({ps.name})")


# ---------------------------------------------------------------------------
# Shaped energy
# ---------------------------------------------------------------------------


def _coupling(ps, q_u):
    """``N = m_au m_uu^-1`` and its q_u partials ``(s, m, s)``."""
    muu_inv = _inv(ps.m_uu(q_u), "m_uu")
    mau = ps.m_au(q_u)
    d_muu_inv = -np.einsum("ij,njk,kl->nil", muu_inv, np.asarray(ps.m_uu.partials(q_u)), muu_inv)
    d_n = np.einsum("nij,jk->nik", np.asarray(ps.m_au.partials(q_u)), muu_inv) + np.einsum(
        "ij,njk->nik", mau, d_muu_inv
    )
    return mau @ muu_inv, d_n, muu_inv, d_muu_inv


def k_matrix(ps: PartitionedSystem, g: GainSet, q_u) -> np.ndarray:
    n_mat = _coupling(ps, q_u)[0]
    return g.k_e * np.eye(ps.m) + g.k_a * g.K_k + g.k_u * g.K_k @ n_mat @ ps.m_au(q_u).T


def _md_inv_parts(ps, g, q_u):
    n_mat, d_n, muu_inv, d_muu_inv = _coupling(ps, q_u)
    top = g.k_e * g.k_a * np.eye(ps.m) + g.k_a**2 * g.K_k
    x = -g.k_a * g.k_u * g.K_k @ n_mat
    y = g.k_e * g.k_u * muu_inv + g.k_u**2 * n_mat.T @ g.K_k @ n_mat
    dx = -g.k_a * g.k_u * np.einsum("ij,njk->nik", g.K_k, d_n)
    ntk = np.einsum("nji,jk->nik", d_n, g.K_k @ n_mat)
    dy = g.k_e * g.k_u * d_muu_inv + g.k_u**2 * (ntk + np.transpose(ntk, (0, 2, 1)))
    return top, x, y, dx, dy


def md_inv_pfl(ps: PartitionedSystem, g: GainSet, q_u) -> np.ndarray:
    top, x, y, _, _ = _md_inv_parts(ps, g, q_u)
    return np.block([[top, x], [x.T, y]])


def md_inv_field(ps: PartitionedSystem, g: GainSet) -> MatrixField:
    """M_d^-1 as a field of the full q, with analytic partials."""
    m, s = ps.m, ps.s

    def partials(q_u):
        _, _, _, dx, dy = _md_inv_parts(ps, g, q_u)
        out = np.zeros((s, ps.n, ps.n))
        out[:, :m, m:] = dx
        out[:, m:, :m] = np.transpose(dx, (0, 2, 1))
        out[:, m:, m:] = dy
        return out

    return _lift(ps, lambda q_u: md_inv_pfl(ps, g, q_u), partials, (ps.n, ps.n), "M_d^-1")


def vd_pfl(ps: PartitionedSystem, g: GainSet) -> ScalarField:
    """Shaped potential ``k_e k_u V_u + |k_a q_a + k_u V_N|^2_{K_I} / 2``.

    The q_u gradient uses ``jacobian(V_N) = -m_au`` rather than the supplied
    Jacobian of V_N.
    """

    def value(q):
        q_a, q_u = ps.split(q)
        z = g.k_a * q_a + g.k_u * ps.v_n(q_u)
        return float(g.k_e * g.k_u * ps.v_u(q_u) + 0.5 * z @ g.K_I @ z)

    def gradient(q):
        q_a, q_u = ps.split(q)
        z = g.k_a * q_a + g.k_u * ps.v_n(q_u)
        kz = g.K_I @ z
        grad_u = g.k_e * g.k_u * np.asarray(ps.v_u.gradient(q_u)) - g.k_u * ps.m_au(q_u).T @ kz
        return np.concatenate([g.k_a * kz, grad_u])

    return ScalarField(value, gradient, name="V_d")


def y_n(ps: PartitionedSystem, g: GainSet, x: State) -> np.ndarray:
    """Passive output ``k_a p_a - k_u m_au m_uu^-1 p_u``."""
    p_a, p_u = ps.split(x.p)
    n_mat = _coupling(ps, ps.split(x.q)[1])[0]
    return g.k_a * p_a - g.k_u * n_mat @ p_u


# ---------------------------------------------------------------------------
# Controller and generalized-force matrix
# ---------------------------------------------------------------------------


def _quadratic_blocks(ps, x):
    """Jacobians in q_u of ``m_uu^-1 p_u`` (s x s) and ``N p_u`` (m x s)."""
    q_u = ps.split(x.q)[1]
    p_u = ps.split(x.p)[1]
    n_mat, d_n, muu_inv, d_muu_inv = _coupling(ps, q_u)
    j_muu = np.einsum("nij,j->in", d_muu_inv, p_u)
    j_n = np.einsum("nij,j->in", d_n, p_u)
    return n_mat, muu_inv, j_muu, j_n


def _k_inverse(ps, g, q_u):
    k = k_matrix(ps, g, q_u)
    if abs(np.linalg.det(k)) < 1e-14:
        raise GainConditionError(f"K(q_u) is singular at q_u={np.asarray(q_u)}")
    return k, np.linalg.inv(k)


def pfl_control(ps: PartitionedSystem, g: GainSet, x: State, variant: str = "consistent") -> np.ndarray:
    """Outer-loop input v on the post-PFL system.

    The two momentum-quadratic terms enter the bracket as
    ``+(k_u/2) K_k N J_muu^T p_u - k_u K_k J_N m_uu^-1 p_u`` (``variant="consistent"``),
    which is the sign pattern that satisfies the matching identity with
    :func:`pfl_lambda`. ``variant="printed"`` flips both signs.
    """
    if variant not in ("consistent", "printed"):
        raise ValueError(f"unknown variant {variant!r}")
    q_a, q_u = ps.split(x.q)
    p_u = ps.split(x.p)[1]
    k, k_inv = _k_inverse(ps, g, q_u)
    n_mat, muu_inv, j_muu, j_n = _quadratic_blocks(ps, x)
    z = g.k_a * q_a + g.k_u * ps.v_n(q_u)
    quad = 0.5 * g.k_u * g.K_k @ n_mat @ j_muu.T @ p_u - g.k_u * g.K_k @ j_n @ muu_inv @ p_u
    if variant == "printed":
        quad = -quad
    bracket = g.k_u * g.K_k @ n_mat @ np.asarray(ps.v_u.gradient(q_u)) + g.K_I @ z + quad
    return -k_inv @ bracket - g.K_P @ k.T @ y_n(ps, g, x)


def pfl_lambda(ps: PartitionedSystem, g: GainSet, x: State) -> np.ndarray:
    sys_tilde = pfl_system(ps)
    md_inv = md_inv_field(ps, g)
    q_u = ps.split(x.q)[1]
    mdi = md_inv(x.q)
    md = _inv(mdi, "M_d^-1")
    mti = sys_tilde.inertia_inverse(x.q)
    gt = sys_tilde.input_map(x.q)
    _, k_inv = _k_inverse(ps, g, q_u)
    deltas = _deltas(ps, g, x, md_inv, sys_tilde, mdi, mti, gt, k_inv)
    return 0.5 * md @ sum(deltas) @ md - gt @ g.K_P @ gt.T


def _deltas(ps, g, x, md_inv, sys_tilde, mdi, mti, gt, k_inv):
    n_mat, muu_inv, j_muu, j_n = _quadratic_blocks(ps, x)
    inner = np.hstack(
        [np.zeros((ps.m, ps.m)), g.k_u * g.K_k @ n_mat @ j_muu.T - 2 * g.k_u * g.K_k @ j_n @ muu_inv]
    )
    delta1 = -mdi @ gt @ k_inv @ inner
    delta2 = -mdi @ product_jacobian(sys_tilde.inertia_inverse, x.q, x.p).T
    delta3 = mti @ product_jacobian(md_inv, x.q, x.p).T
    return delta1, delta2, delta3


def delta_terms(ps: PartitionedSystem, g: GainSet, x: State) -> tuple:
    """The three momentum-linear pieces whose sum, sandwiched by M_d, gives Λ."""
    sys_tilde = pfl_system(ps)
    md_inv = md_inv_field(ps, g)
    q_u = ps.split(x.q)[1]
    _, k_inv = _k_inverse(ps, g, q_u)
    return _deltas(
        ps, g, x, md_inv, sys_tilde, md_inv(x.q), sys_tilde.inertia_inverse(x.q), sys_tilde.input_map(x.q), k_inv
    )


def metric_input_identity(ps: PartitionedSystem, g: GainSet, q_u) -> np.ndarray:
    """``M_d^-1 G~ - [k_a I; -k_u m_uu^-1 m_au^T] K``; identically zero."""
    q_u = np.atleast_1d(np.asarray(q_u, dtype=float))
    gt = np.vstack([np.eye(ps.m), -ps.m_au(q_u).T])
    n_mat = _coupling(ps, q_u)[0]
    factor = np.vstack([g.k_a * np.eye(ps.m), -g.k_u * n_mat.T])
    return md_inv_pfl(ps, g, q_u) @ gt - factor @ k_matrix(ps, g, q_u)


def delta_cancellation(ps: PartitionedSystem, g: GainSet, x: State) -> float:
    """``p^T (Delta_1 + Delta_2 + Delta_3) p``; identically zero."""
    return float(x.p @ sum(delta_terms(ps, g, x)) @ x.p)


def pfl_target(ps: PartitionedSystem, g: GainSet, q_star=None) -> TargetDynamics:
    """Target dynamics (M_d, V_d, Λ) assigned by :func:`pfl_control`."""
    q_star = np.zeros(ps.n) if q_star is None else q_star
    return TargetDynamics.from_inverse(md_inv_field(ps, g), vd_pfl(ps, g), lambda x: pfl_lambda(ps, g, x), q_star)


# ---------------------------------------------------------------------------
# Gain validation
# ---------------------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_value: float
    worst_point: Optional[list] = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_value": self.worst_value,
            "worst_point": self.worst_point,
        }


@dataclass
class GainReport:
    conditions: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "conditions": [c.as_dict() for c in self.conditions]}


def q_u_grid(low, high, points: int = 101) -> list:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(low, high)]
    return [np.array(pt) for pt in product(*axes)]


def gain_condition_check(
    ps: PartitionedSystem, g: GainSet, box, q_star=None, points: int = 101, det_tol: float = 1e-9
) -> GainReport:
    """Grid check of the gain assumptions over a ``(low, high)`` box in q_u.

    Conditions: ``det_K`` (K(q_u) nonsingular), ``md_inv_pd`` (shaped inverse
    metric positive definite) and ``vd_minimum`` (strict minimum of V_d at
    ``q_star``; when K_I = 0 the potential ignores q_a and only the q_u
    coordinates are examined).
    """
    grid = q_u_grid(box[0], box[1], points)
    dets = [abs(float(np.linalg.det(k_matrix(ps, g, q_u)))) for q_u in grid]
    i_det = int(np.argmin(dets))
    eigs = [min_eigenvalue(md_inv_pfl(ps, g, q_u)) for q_u in grid]
    i_eig = int(np.argmin(eigs))
    q_star = np.zeros(ps.n) if q_star is None else np.asarray(q_star, dtype=float)
    coords = range(ps.m, ps.n) if not np.any(g.K_I) else None
    vmin = minimum_check(vd_pfl(ps, g), q_star, coords=coords, grad_tol=1e-8)
    return GainReport(
        [
            ConditionResult("det_K", dets[i_det] > det_tol, dets[i_det], grid[i_det].tolist()),
            ConditionResult("md_inv_pd", eigs[i_eig] > 0, eigs[i_eig], grid[i_eig].tolist()),
            ConditionResult("vd_minimum", vmin["ok"], vmin["hessian_min_eig"], q_star.tolist()),
        ]
    )
