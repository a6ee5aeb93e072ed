"""Shared fixtures: the two worked examples and a generic test system.

The generic system has n = 3, m = 1, a configuration-dependent inertia,
input map and target metric, and state-dependent skew matrices U_i. None of
its fields is tuned to satisfy the matching equations; it exercises the
identities that must hold for any system.
"""

import numpy as np
import pytest

from sidapbc.core import MatrixField, MechanicalSystem, ProbeBox, ScalarField, TargetDynamics
from sidapbc.examples import ball_beam, cart_pendulum
from sidapbc.matching import GyroscopicForces


def _sym(a):
    return 0.5 * (a + a.T)


def trig_field(base, mats, kind, name):
    """``base + sum_i f(q_i) mats[i]`` with f = sin or cos, plus analytic partials."""
    base = np.asarray(base, dtype=float)
    mats = [np.asarray(m, dtype=float) for m in mats]
    f, df = (np.sin, np.cos) if kind == "sin" else (np.cos, lambda t: -np.sin(t))

    def value(q):
        return base + sum(f(qi) * mi for qi, mi in zip(q, mats))

    def partials(q):
        return np.array([df(qi) * mi for qi, mi in zip(q, mats)])

    return MatrixField(value, partials, base.shape, name=name)


def make_generic(seed: int = 7):
    rng = np.random.default_rng(seed)
    n = 3
    inertia = trig_field(np.diag([4.0, 5.0, 6.0]) + _sym(rng.uniform(-0.5, 0.5, (n, n))),
                         [_sym(rng.uniform(-0.3, 0.3, (n, n))) for _ in range(n)], "sin", "M")
    md = trig_field(np.diag([3.0, 2.5, 4.0]) + _sym(rng.uniform(-0.4, 0.4, (n, n))),
                    [_sym(rng.uniform(-0.3, 0.3, (n, n))) for _ in range(n)], "cos", "M_d")
    c = rng.uniform(0.5, 1.5, n)
    potential = ScalarField(lambda q: float(c @ np.cos(q)), lambda q: -c * np.sin(q), name="V")
    pmat = np.diag([2.0, 3.0, 1.5])
    vd = ScalarField(lambda q: 0.5 * q @ pmat @ q, lambda q: pmat @ q, name="V_d")
    g = MatrixField(
        lambda q: np.array([[1.0], [0.2 * np.sin(q[0])], [0.1 * np.cos(q[2])]]),
        lambda q: np.array([[[0.0], [0.2 * np.cos(q[0])], [0.0]], np.zeros((3, 1)),
                            [[0.0], [0.0], [-0.1 * np.sin(q[2])]]]),
        (3, 1),
        name="G",
    )
    sys = MechanicalSystem(n, 1, inertia, potential, g, name="generic")
    skews = []
    for i in range(n):
        k = rng.uniform(-1, 1, (n, n))
        k = k - k.T
        skews.append(MatrixField(
            lambda q, k=k, i=i: (1.0 + 0.3 * np.sin(q[i])) * k,
            lambda q, k=k, i=i: np.array([0.3 * np.cos(q[i]) * k if j == i else np.zeros((n, n)) for j in range(n)]),
            (n, n),
            name=f"U_{i + 1}",
        ))
    gyro = GyroscopicForces(skews)
    tgt = TargetDynamics(md, vd, lambda x: np.zeros((n, n)), np.zeros(n))
    return sys, tgt, gyro


@pytest.fixture(scope="session")
def generic():
    return make_generic()


@pytest.fixture(scope="session")
def generic_states():
    return ProbeBox.symmetric([1.5] * 3, [2.0] * 3).sample(200, seed=11)


@pytest.fixture(scope="session")
def cart():
    return cart_pendulum.build()


@pytest.fixture(scope="session")
def beam():
    return ball_beam.build()


@pytest.fixture(scope="session")
def cart_states(cart):
    return cart.box.sample(200, seed=0)


@pytest.fixture(scope="session")
def beam_states(beam):
    return beam.box.sample(200, seed=0)


# ---------------------------------------------------------------------------
# Acceptance reporting: one verdict line per criterion, merged across parts
# ---------------------------------------------------------------------------

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """``criterion(number, part, passed, detail)`` records one part of an acceptance criterion."""

    def record(number: int, part: str, passed: bool, detail: str) -> None:
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
        print(f"CRITERION {number} [{part}]: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}: {text}" for part, _, text in parts)
        terminalreporter.write_line(f"CRITERION {number}: {verdict} {detail}")
