import math

import numpy as np
import pytest

from sidapbc.core import State, check_matrix_field, check_scalar_field, minimum_check
from sidapbc.examples import SYSTEMS, ball_beam as bb, cart_pendulum as cp, load_defaults
from sidapbc.lyapunov import LyapunovCandidate, extract_c, lyap_hd_dot, lyap_matching_residual


def test_shipped_defaults_load():
    for name in SYSTEMS:
        doc = load_defaults(name)
        assert {"params", "probe_box", "initial_state", "integrator"} <= doc.keys()
    with pytest.raises(KeyError):
        load_defaults("unicycle")


def test_defaults_are_fresh_copies():
    a = load_defaults("ball_beam")
    a["params"]["eps"] = -1
    assert load_defaults("ball_beam")["params"]["eps"] == 1


@pytest.mark.parametrize("name", ["eps", "delta", "K", "K_P"])
def test_ball_beam_params_must_be_positive(name):
    with pytest.raises(ValueError):
        bb.BallBeamParams(**{name: 0.0})


def test_cart_pendulum_params_must_be_positive():
    with pytest.raises(ValueError):
        cp.CartPendulumParams(M_c=1.0, m=-1.0, l=1.0, g=9.81)


def test_ball_beam_metric_at_origin():
    md_inv = bb.md_inv_field(bb.default_params())(np.zeros(2))
    assert np.allclose(md_inv, [[math.sqrt(2), -1.0], [-1.0, math.sqrt(2)]], atol=1e-15)


@pytest.mark.parametrize("eps, q_u", [(1.0, 0.0), (2.0, 3.0), (0.5, 10.0)])
def test_metric_and_bracket_determinants_equal_eps(eps, q_u):
    prm = bb.BallBeamParams(eps=eps)
    q = np.array([0.4, q_u])
    assert np.linalg.det(bb.md_inv_field(prm)(q)) == pytest.approx(eps, rel=1e-12)
    assert np.linalg.det(bb.bracket_matrix(prm, q_u)) == pytest.approx(eps, rel=1e-12)


def test_ball_beam_fields_pass_oracles(beam, beam_states):
    prm = beam.params
    qs = [x.q for x in beam_states[:100]]
    assert check_matrix_field(bb.mass_field(prm), qs) < 1e-5
    assert check_matrix_field(bb.md_inv_field(prm), qs) < 1e-5
    assert check_matrix_field(beam.candidate.md, qs) < 1e-5
    assert check_scalar_field(bb.vd_field(prm), qs) < 1e-5


def test_ball_beam_potential_has_strict_minimum(beam):
    res = minimum_check(beam.candidate.vd, np.zeros(2))
    assert res["ok"] and res["hessian_min_eig"] > 0


def test_ball_beam_system_check(beam, beam_states):
    report = beam.system.check(beam_states[:50])
    assert report["min_mass_eig"] > 0
    assert report["rest_force"] == 0.0


def test_ball_beam_matching_residual(beam, beam_states):
    worst = max(np.max(np.abs(lyap_matching_residual(beam.system, beam.candidate, beam.control, beam.lambda_map, x)))
                for x in beam_states)
    assert worst <= 1e-10


def test_q_a_denominator_breaks_matching(beam, beam_states):
    wrong = bb.build(cu_variant="q_a")
    worst = max(np.max(np.abs(lyap_matching_residual(wrong.system, beam.candidate, wrong.control, beam.lambda_map, x)))
                for x in beam_states)
    assert worst == pytest.approx(0.14448342749862997, rel=1e-9)
    with pytest.raises(ValueError):
        bb.c_terms(beam.params, beam_states[0], "other")


def test_extracted_force_equals_lambda_times_velocity(beam, beam_states):
    for x in beam_states[:50]:
        c = extract_c(beam.system, beam.candidate, beam.control, x)
        w = beam.candidate.md_inverse(x.q) @ x.p
        assert np.allclose(c, beam.lambda_map(x) @ w, atol=1e-10)


def test_ball_beam_hd_decreases(beam, beam_states):
    rates = [lyap_hd_dot(beam.system, beam.candidate, beam.control, x) for x in beam_states]
    assert max(rates) == pytest.approx(-0.0018120637091740407, rel=1e-8)


@pytest.mark.parametrize(
    "eps, q_u, det, min_eig",
    [(1.0, 0.0, 1.0, 0.7961795736232002), (1.0, 1.0, 1.0, 0.7320508075688771), (0.5, 10.0, 0.5, 0.27179006105509984)],
)
def test_pd_decomposition(eps, q_u, det, min_eig):
    d = bb.pd_decomposition(bb.BallBeamParams(eps=eps), q_u)
    assert abs(d["skew_quadratic"]) <= 1e-12
    assert d["bracket_det"] == pytest.approx(det, rel=1e-10)
    assert d["second_min_eig"] == pytest.approx(min_eig, rel=1e-12)
    assert d["pd"]
    assert np.allclose(d["skew"] + d["damping"], bb.lambda_matrix(bb.BallBeamParams(eps=eps), State([0.0, q_u], [1.0, 1.0])))


def test_candidate_from_inverse_keeps_inverse():
    prm = bb.default_params()
    md_inv = bb.md_inv_field(prm)
    cand = LyapunovCandidate.from_inverse(md_inv, bb.vd_field(prm), [0.0, 0.0])
    assert cand.md_inverse is md_inv
    q = np.array([0.2, -0.7])
    assert np.allclose(cand.md(q) @ md_inv(q), np.eye(2), atol=1e-13)
    assert cand.hamiltonian(State(np.zeros(2), np.zeros(2))) == 0.0


def test_cart_pendulum_original_system_oracles(cart, cart_states):
    sys = cp.original_system(cart.params)
    qs = [x.q for x in cart_states[:100]]
    assert check_matrix_field(sys.inertia, qs) < 1e-5
    assert check_scalar_field(sys.potential, qs) < 1e-5


def test_cart_pendulum_closed_forms_pass_oracles(cart, cart_states):
    qs = [x.q for x in cart_states[:100]]
    assert check_matrix_field(cp.md_inv_field(cart.params, cart.gains), qs) < 1e-5
    assert check_scalar_field(cp.vd_field(cart.params, cart.gains), qs) < 1e-5


def test_cart_pendulum_upright_is_equilibrium(cart):
    x = State(np.zeros(2), np.zeros(2))
    assert np.allclose(cart.control(x), 0.0)
    assert np.allclose(cart.target.vd.gradient(x.q), 0.0)
