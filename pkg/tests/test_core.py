import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sidapbc.core import (
    EvaluationError,
    MatrixField,
    MechanicalSystem,
    NotPSDError,
    ProbeBox,
    RankDeficientError,
    ScalarField,
    SingularMatrixError,
    State,
    VectorField,
    _inv,
    check_matrix_field,
    check_scalar_field,
    check_vector_field,
    fd_gradient,
    fd_jacobian,
    left_annihilator,
    minimum_check,
    open_loop_field,
    psd_sqrt,
    relative_error,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_state_validates_shapes():
    with pytest.raises(ValueError):
        State([0.0, 1.0], [0.0])
    x = State([1.0, 2.0], [3.0, 4.0])
    assert x.n == 2
    assert np.array_equal(x.vector(), [1.0, 2.0, 3.0, 4.0])


@given(arrays(float, 6, elements=finite))
def test_state_vector_roundtrip(y):
    assert np.array_equal(State.from_vector(y).vector(), y)


def test_fd_gradient_of_known_function():
    f = lambda q: np.sin(q[0]) * q[1] ** 2  # noqa: E731
    q = np.array([0.4, -1.3])
    expected = [np.cos(0.4) * 1.69, 2 * np.sin(0.4) * -1.3]
    assert relative_error(fd_gradient(f, q), expected) < 1e-9


def test_fd_jacobian_shape_conventions():
    q = np.array([0.1, 0.2, 0.3])
    assert fd_jacobian(lambda z: np.array([z[0] * z[1], z[2]]), q).shape == (2, 3)
    assert fd_jacobian(lambda z: np.outer(z, z[:2]), q).shape == (3, 3, 2)


def test_fd_rejects_nonfinite_values():
    with pytest.raises(EvaluationError), np.errstate(divide="ignore", invalid="ignore"):
        fd_gradient(lambda q: np.log(q[0]), np.array([0.0]))


def test_matrix_field_inverse_partials_match_finite_differences():
    a = MatrixField(
        lambda q: np.array([[2.0 + np.sin(q[0]), q[1]], [q[1], 3.0 + q[0] ** 2]]),
        lambda q: np.array([[[np.cos(q[0]), 0.0], [0.0, 2 * q[0]]], [[0.0, 1.0], [1.0, 0.0]]]),
        (2, 2),
    )
    probes = ProbeBox.symmetric([0.8, 0.8], [0.0, 0.0]).sample_q(50, seed=3)
    assert check_matrix_field(a, probes) < 1e-7
    assert check_matrix_field(a.inverse(), probes) < 1e-7


def test_constant_field_inverse_is_constant():
    a = MatrixField.constant([[2.0, 0.0], [0.0, 4.0]], 2)
    inv = a.inverse()
    assert inv.is_constant
    assert np.allclose(inv(np.zeros(2)), np.diag([0.5, 0.25]))
    assert not np.any(inv.partials(np.zeros(2)))


def test_small_inverse_closed_forms_agree_with_lapack():
    rng = np.random.default_rng(0)
    for shape in ((1, 1), (2, 2), (3, 3)):
        a = rng.normal(size=shape) + 3 * np.eye(shape[0])
        assert np.allclose(_inv(a), np.linalg.inv(a), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("a", [[[0.0]], [[1.0, 2.0], [2.0, 4.0]], np.zeros((3, 3))])
def test_singular_inverse_raises(a):
    with pytest.raises(SingularMatrixError):
        _inv(np.array(a, dtype=float))


def test_field_checks_detect_wrong_partials():
    good = ScalarField(lambda q: q[0] ** 3, lambda q: np.array([3 * q[0] ** 2]))
    bad = ScalarField(lambda q: q[0] ** 3, lambda q: np.array([2 * q[0] ** 2]))
    probes = [np.array([0.5]), np.array([1.5])]
    assert check_scalar_field(good, probes) < 1e-8
    assert check_scalar_field(bad, probes) > 1e-2
    vec = VectorField(lambda q: np.array([q[0] * q[1]]), lambda q: np.array([[q[1], q[0]]]))
    assert check_vector_field(vec, [np.array([0.3, -0.7])]) < 1e-8


@settings(max_examples=50)
@given(arrays(float, (3, 3), elements=finite))
def test_psd_sqrt_squares_back(a):
    s = a @ a.T
    r = psd_sqrt(s)
    assert np.allclose(r, r.T)
    assert np.allclose(r @ r, s, atol=1e-7 * (1 + np.abs(s).max()))


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -0.5]))


@settings(max_examples=50)
@given(arrays(float, (4, 2), elements=finite))
def test_left_annihilator_properties(g):
    assume(np.linalg.svd(g, compute_uv=False)[-1] > 1e-3)
    gp = left_annihilator(g)
    assert gp.shape == (2, 4)
    assert np.allclose(gp @ g, 0.0, atol=1e-10 * (1 + np.abs(g).max()))
    assert np.allclose(gp @ gp.T, np.eye(2), atol=1e-12)


def test_left_annihilator_rejects_rank_deficiency():
    with pytest.raises(RankDeficientError):
        left_annihilator(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_probe_box_sampling_is_seeded_and_bounded():
    box = ProbeBox.symmetric([1.0, 2.0], [0.5, 0.5])
    a, b = box.sample(30, seed=4), box.sample(30, seed=4)
    assert all(np.array_equal(x.vector(), y.vector()) for x, y in zip(a, b))
    qs = np.array([x.q for x in a])
    assert np.all(np.abs(qs) <= [1.0, 2.0])


def test_minimum_check_on_quadratic_and_saddle():
    bowl = ScalarField(lambda q: q @ q, lambda q: 2 * q)
    saddle = ScalarField(lambda q: q[0] ** 2 - q[1] ** 2, lambda q: np.array([2 * q[0], -2 * q[1]]))
    assert minimum_check(bowl, np.zeros(2))["ok"]
    res = minimum_check(saddle, np.zeros(2))
    assert not res["ok"] and res["hessian_min_eig"] < 0
    assert minimum_check(saddle, np.zeros(2), coords=[0])["ok"]


def test_open_loop_field_conserves_energy_without_input(generic, generic_states):
    sys = generic[0]
    for x in generic_states[:50]:
        qdot, pdot = open_loop_field(sys, x, np.zeros(1))
        dh_dp = sys.inertia_inverse(x.q) @ x.p
        assert abs(sys.grad_q_hamiltonian(x) @ qdot + dh_dp @ pdot) < 1e-12


def test_mechanical_system_check(generic, generic_states):
    report = generic[0].check([x.q for x in generic_states[:20]])
    assert report["rank_ok"]
    assert report["min_inertia_eig"] > 0
    assert report["annihilation"] < 1e-14
    assert report["symmetry"] == 0.0


def test_generic_fields_pass_oracles(generic, generic_states):
    sys, tgt, gyro = generic
    qs = [x.q for x in generic_states[:100]]
    for f in (sys.inertia, sys.inertia_inverse, sys.input_map, tgt.md, tgt.md_inverse, *gyro.u_mats):
        assert check_matrix_field(f, qs) < 1e-5, f.name
    assert check_scalar_field(sys.potential, qs) < 1e-5


def test_mechanical_system_builds_default_annihilator():
    g = MatrixField.constant([[1.0], [0.0]], 2)
    sys = MechanicalSystem(2, 1, MatrixField.constant(np.eye(2), 2), ScalarField.zero(2), g)
    assert np.allclose(np.abs(sys.annihilator(np.zeros(2))), [[0.0, 1.0]])
