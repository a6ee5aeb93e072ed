"""Verification suites for the worked examples, shared by the CLI and the tests.

Each suite returns a list of :class:`Check` records: the worst value of one
residual or condition over the sampled states, its tolerance and the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    MatrixField,
    State,
    TargetDynamics,
    check_matrix_field,
    check_scalar_field,
    check_vector_field,
    target_field,
)
from .lyapunov import lyap_hd_dot, lyap_matching_residual
from .matching import TOLERANCES, energy_rate, sida_matching_residual, stability_condition
from .pfl import delta_cancellation, metric_input_identity, pfl_control, pfl_lambda


@dataclass(frozen=True)
class Check:
    """``value <= tolerance`` (``bound="upper"``) or ``value > tolerance`` (``bound="lower"``)."""

    name: str
    value: float
    tolerance: float
    bound: str = "upper"
    samples: int = 0

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.bound == "upper" else self.value > self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "tolerance": float(self.tolerance),
            "bound": self.bound,
            "samples": self.samples,
            "passed": self.passed,
        }


def _worst(fn: Callable[[State], object], states) -> float:
    worst = 0.0
    for x in states:
        r = np.abs(np.atleast_1d(np.asarray(fn(x), dtype=float)))
        if r.size:
            val = float(np.max(r))
            if not np.isfinite(val):
                return float("inf")
            worst = max(worst, val)
    return worst


def _upper(name, fn, states, tol) -> Check:
    return Check(name, _worst(fn, states), tol, "upper", len(states))


# ---------------------------------------------------------------------------
# Perturbations (negative controls)
# ---------------------------------------------------------------------------


def _scaled(field: MatrixField, factor: float) -> MatrixField:
    return MatrixField(lambda q: factor * field(q), lambda q: factor * np.asarray(field.partials(q)), field.shape,
                       name=f"{factor}*{field.name}", is_constant=field.is_constant)


@dataclass(frozen=True)
class Perturbation:
    """Relative perturbations applied before verification.

    ``md`` scales M_d (through M_d^-1), ``lam`` scales Λ and ``control``
    scales the controller output. ``flip_damping`` reverses the sign of the
    damping-injection gain K_P in the controller (cart-pendulum only).
    """

    md: float = 0.0
    lam: float = 0.0
    control: float = 0.0
    flip_damping: bool = False

    @property
    def active(self) -> bool:
        return bool(self.md or self.lam or self.control or self.flip_damping)


def perturbed(bundle, pert: Perturbation) -> tuple:
    """``(target, control law)`` of ``bundle`` with ``pert`` applied."""
    tgt = bundle.target
    if pert.md:
        tgt = TargetDynamics.from_inverse(_scaled(tgt.md_inverse, 1.0 / (1.0 + pert.md)), tgt.vd, tgt.lambda_map,
                                          tgt.q_star)
    if pert.lam:
        lam = tgt.lambda_map
        tgt = replace(tgt, lambda_map=lambda x: (1.0 + pert.lam) * lam(x))
    control = bundle.control
    if pert.flip_damping:
        if not hasattr(bundle, "gains"):
            raise ValueError("flip_damping needs a design with a K_P gain")
        flipped = replace(bundle, gains=bundle.gains.replace(K_P=-bundle.gains.K_P))
        control = flipped.control
    if pert.control:
        base = control
        control = lambda x: (1.0 + pert.control) * np.asarray(base(x))  # noqa: E731
    return tgt, control


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _field_match(sys, u_law, tgt):
    def residual(x):
        a = sys.field(x, u_law(x))
        b = target_field(sys, tgt, x)
        return np.concatenate([a[0] - b[0], a[1] - b[1]])

    return residual


def cart_pendulum_suite(cart, states, pert: Optional[Perturbation] = None, probes: int = 100) -> list:
    """Matching, metric, delta-cancellation, energy, stability, gain and oracle checks for the cart-pendulum."""
    pert = pert or Perturbation()
    tgt, u_law = perturbed(cart, pert)
    sys, ps, g = cart.system, cart.partitioned, cart.gains
    tol = TOLERANCES
    checks = [
        _upper("matching_residual", lambda x: sida_matching_residual(sys, u_law, tgt, x), states, tol["analytic"]),
        _upper("control_closed_form", lambda x: u_law(x) - pfl_control(ps, g, x), states, tol["analytic"]),
        _upper("lambda_closed_form", lambda x: tgt.lambda_map(x) - pfl_lambda(ps, g, x), states,
               tol["analytic"]),
        _upper("metric_input_identity", lambda x: metric_input_identity(ps, g, ps.split(x.q)[1]), states, tol["algebraic"]),
        _upper("delta_cancellation", lambda x: delta_cancellation(ps, g, x), states, tol["identity"]),
    ]

    def balance(x):
        qdot, pdot = sys.field(x, u_law(x))
        y = sys.input_map(x.q).T @ (tgt.md_inverse(x.q) @ x.p)
        return energy_rate(tgt, x, qdot, pdot) + y @ g.K_P @ y

    checks.append(_upper("energy_balance", balance, states, tol["identity"]))
    checks.append(Check("stability_condition", max(stability_condition(tgt, x)[0] for x in states),
                        tol["exact"], "upper", len(states)))
    checks.append(_upper("closed_loop_equals_target", _field_match(sys, u_law, tgt), states, tol["analytic"]))
    for cond in cart.gain_report().conditions:
        checks.append(Check(f"gain_{cond.name}", cond.worst_value, 0.0, "lower"))
    structure = ps.structure_report([x.q[ps.m:] for x in states[:probes]])
    checks.append(Check("structure_row_gradient", structure["row_gradient"], tol["exact"]))
    checks.append(Check("structure_vn_jacobian", structure["vn_jacobian"], tol["exact"]))
    checks.append(Check("annihilator", sys.check([x.q for x in states[:probes]])["annihilation"], tol["exact"]))
    checks.extend(cart_pendulum_oracles(cart, [x.q for x in states[:probes]]))
    return checks


def cart_pendulum_oracles(cart, qs) -> list:
    """Finite-difference checks of every analytic partial of the cart-pendulum design."""
    from .examples.cart_pendulum import original_system

    tol = TOLERANCES["finite_difference"]
    ps, sys, tgt = cart.partitioned, cart.system, cart.target
    orig = original_system(cart.params)
    qus = [q[ps.m:] for q in qs]
    n = len(qs)
    return [
        Check("fd_inertia", check_matrix_field(sys.inertia, qs), tol, samples=n),
        Check("fd_input_map", check_matrix_field(sys.input_map, qs), tol, samples=n),
        Check("fd_potential", check_scalar_field(sys.potential, qs), tol, samples=n),
        Check("fd_md_inverse", check_matrix_field(tgt.md_inverse, qs), tol, samples=n),
        Check("fd_md", check_matrix_field(tgt.md, qs), tol, samples=n),
        Check("fd_vd", check_scalar_field(tgt.vd, qs), tol, samples=n),
        Check("fd_m_au", check_matrix_field(ps.m_au, qus), tol, samples=n),
        Check("fd_m_uu", check_matrix_field(ps.m_uu, qus), tol, samples=n),
        Check("fd_v_u", check_scalar_field(ps.v_u, qus), tol, samples=n),
        Check("fd_v_n", check_vector_field(ps.v_n, qus), tol, samples=n),
        Check("fd_original_inertia", check_matrix_field(orig.inertia, qs), tol, samples=n),
        Check("fd_original_potential", check_scalar_field(orig.potential, qs), tol, samples=n),
    ]


def ball_beam_suite(beam, states, pert: Optional[Perturbation] = None, probes: int = 100) -> list:
    """Matching, determinant, stability and oracle checks for the ball-and-beam."""
    from .examples.ball_beam import bracket_matrix, pd_decomposition
    from .lyapunov import LyapunovCandidate

    pert = pert or Perturbation()
    tgt, u_law = perturbed(beam, pert)
    cand = LyapunovCandidate(tgt.md, tgt.vd, tgt.q_star, md_inverse=tgt.md_inverse)
    sys, prm = beam.system, beam.params
    tol = TOLERANCES
    checks = [
        _upper("matching_residual", lambda x: lyap_matching_residual(sys, cand, u_law, tgt.lambda_map, x), states,
               tol["analytic"]),
        _upper("bracket_determinant", lambda x: np.linalg.det(bracket_matrix(prm, x.q[1])) - prm.eps, states,
               tol["exact"]),
        Check("stability_condition", max(stability_condition(tgt, x)[0] for x in states), tol["exact"], "upper",
              len(states)),
        Check("hd_dot_nonpositive", max(lyap_hd_dot(sys, cand, u_law, x) for x in states), tol["exact"], "upper",
              len(states)),
        _upper("closed_loop_equals_target", _field_match(sys, u_law, tgt), states, tol["analytic"]),
    ]
    decomp = [pd_decomposition(prm, x.q[1], x.p) for x in states]
    checks.append(Check("pd_second_matrix", min(d["second_min_eig"] for d in decomp), 0.0, "lower", len(states)))
    checks.append(Check("skew_part_workless", max(abs(d["skew_quadratic"]) for d in decomp), tol["exact"], "upper",
                        len(states)))
    checks.extend(ball_beam_oracles(beam, [x.q for x in states[:probes]]))
    return checks


def ball_beam_oracles(beam, qs) -> list:
    tol = TOLERANCES["finite_difference"]
    tgt = beam.target
    n = len(qs)
    return [
        Check("fd_mass", check_matrix_field(beam.system.mass, qs), tol, samples=n),
        Check("fd_md_inverse", check_matrix_field(tgt.md_inverse, qs), tol, samples=n),
        Check("fd_md", check_matrix_field(tgt.md, qs), tol, samples=n),
        Check("fd_vd", check_scalar_field(tgt.vd, qs), tol, samples=n),
    ]


SUITES = {"cart_pendulum": cart_pendulum_suite, "ball_beam": ball_beam_suite}
