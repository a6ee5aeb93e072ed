"""Time integration of open-loop, closed-loop and target dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45

from .core import State, target_field


class IntegrationError(RuntimeError):
    """Integration stopped early; ``last_state`` is the last finite state reached."""

    def __init__(self, message: str, t: float, last_state: Optional[State]):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t
        self.last_state = last_state


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    t_end: float = 10.0
    record_stride: int = 1
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_min: float = 1e-10
    dt_max: float = 0.1

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not (self.dt > 0 and self.t_end > 0 and self.record_stride >= 1):
            raise ValueError("dt, t_end and record_stride must be positive")
        if not (self.rtol > 0 and self.atol > 0 and 0 < self.dt_min <= self.dt_max):
            raise ValueError("tolerances and step bounds must be positive with dt_min <= dt_max")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # rows are stacked (q, p)
    monitors: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def q(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, self.n :]

    def state(self, i: int) -> State:
        return State.from_vector(self.states[i])

    @property
    def final_state(self) -> State:
        return self.state(-1)


Field = Callable[[State], tuple]


def _rhs(field_fn: Field):
    def f(y):
        qdot, pdot = field_fn(State.from_vector(y))
        return np.concatenate([np.atleast_1d(qdot), np.atleast_1d(pdot)])

    return f


def _finite_or_raise(y, t, last):
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite state derivative", t, last)


def integrate(field_fn: Field, x0: State, cfg: IntegratorConfig, monitors: Optional[dict] = None) -> Trajectory:
    """Integrate ``field_fn`` from ``x0`` and record every ``record_stride``-th step.

    ``monitors`` maps a name to ``State -> float or vector``; each is evaluated
    at the recorded states.
    """
    f = _rhs(field_fn)
    times, states = [0.0], [x0.vector()]
    if cfg.method == "rk4":
        steps = int(round(cfg.t_end / cfg.dt))
        y = x0.vector()
        h = cfg.dt
        for k in range(1, steps + 1):
            t = (k - 1) * h
            k1 = f(y)
            _finite_or_raise(k1, t, State.from_vector(y))
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            _finite_or_raise(y_new, t + h, State.from_vector(y))
            y = y_new
            if k % cfg.record_stride == 0 or k == steps:
                times.append(k * h)
                states.append(y.copy())
    else:
        solver = RK45(lambda t, y: f(y), 0.0, x0.vector(), cfg.t_end, rtol=cfg.rtol, atol=cfg.atol,
                      max_step=cfg.dt_max, first_step=min(cfg.dt, cfg.dt_max))
        k = 0
        while solver.status == "running":
            last = State.from_vector(solver.y)
            try:
                msg = solver.step()
            except FloatingPointError as exc:  # pragma: no cover - numpy default is warn
                raise IntegrationError(str(exc), solver.t, last) from exc
            if solver.status == "failed":
                raise IntegrationError(f"step-size underflow: {msg}", solver.t, last)
            _finite_or_raise(solver.y, solver.t, last)
            if solver.status == "running" and solver.step_size < cfg.dt_min:
                raise IntegrationError(f"step-size underflow ({solver.step_size:.3e} < {cfg.dt_min:.3e})",
                                       solver.t, last)
            k += 1
            if k % cfg.record_stride == 0 or solver.status == "finished":
                times.append(solver.t)
                states.append(solver.y.copy())
    traj = Trajectory(np.array(times), np.array(states))
    for name, fn in (monitors or {}).items():
        traj.monitors[name] = np.array([fn(traj.state(i)) for i in range(len(times))])
    return traj


def closed_loop_field(sys, u_law) -> Field:
    return lambda x: sys.field(x, u_law(x))


def target_dynamics_field(sys, tgt) -> Field:
    return lambda x: target_field(sys, tgt, x)


def _energy_rate(energy, qdot, pdot, x):
    w = energy.md_inverse(x.q) @ x.p
    return float(energy.grad_q_hamiltonian(x) @ qdot + w @ pdot)


def simulate_closed_loop(sys, u_law, x0: State, cfg: IntegratorConfig, energy=None, residual=None) -> Trajectory:
    """Integrate the plant under ``u_law``.

    Monitors: ``u`` always; ``H_d`` and ``Hd_dot`` when ``energy`` (a target or
    Lyapunov candidate) is given; ``residual_norm`` (infinity norm) when
    ``residual`` is given.
    """
    fld = closed_loop_field(sys, u_law)
    monitors = {"u": lambda x: np.atleast_1d(u_law(x))}
    if energy is not None:
        monitors["H_d"] = energy.hamiltonian
        monitors["Hd_dot"] = lambda x: _energy_rate(energy, *fld(x), x)
    if residual is not None:
        monitors["residual_norm"] = lambda x: float(np.max(np.abs(residual(x)), initial=0.0))
    return integrate(fld, x0, cfg, monitors)


def trajectory_gap(a: Trajectory, b: Trajectory) -> float:
    """Largest componentwise state difference between two trajectories.

    Trajectories on the same time grid are compared sample by sample;
    otherwise both are interpolated onto the union of their record times.
    """
    if a.times.shape == b.times.shape and np.array_equal(a.times, b.times):
        return float(np.max(np.abs(a.states - b.states)))
    grid = np.union1d(a.times, b.times)
    diff = [np.interp(grid, a.times, a.states[:, j]) - np.interp(grid, b.times, b.states[:, j])
            for j in range(a.states.shape[1])]
    return float(np.max(np.abs(diff)))


def compare_with_target(sys, u_law, tgt, x0: State, cfg: IntegratorConfig) -> float:
    """Sup-norm gap between the closed loop and the target dynamics from ``x0``."""
    a = integrate(closed_loop_field(sys, u_law), x0, cfg)
    b = integrate(target_dynamics_field(sys, tgt), x0, cfg)
    return trajectory_gap(a, b)


def monotonicity_check(traj: Trajectory, rel_tol: float = 1e-8) -> tuple:
    """``(violations, max positive Hd_dot)`` from the recorded H_d monitor."""
    hd = np.asarray(traj.monitors["H_d"], dtype=float)
    jumps = np.diff(hd)
    violations = int(np.sum(jumps > rel_tol * (1.0 + np.abs(hd[:-1]))))
    rate = traj.monitors.get("Hd_dot")
    max_rate = float(max(0.0, np.max(rate))) if rate is not None and len(rate) else 0.0
    return violations, max_rate


def convergence_norm(traj: Trajectory, q_star, coords=None) -> np.ndarray:
    q_star = np.asarray(q_star, dtype=float)
    idx = np.arange(traj.n) if coords is None else np.asarray(coords, dtype=int)
    dq = np.linalg.norm(traj.q[:, idx] - q_star[idx], axis=1)
    return dq + np.linalg.norm(traj.p, axis=1)


def classify_convergence(traj: Trajectory, q_star, coords=None, threshold: float = 1e-3,
                         tail: float = 0.1) -> bool:
    """True iff the error norm stays below ``threshold`` over the last ``tail`` of the horizon."""
    norm = convergence_norm(traj, q_star, coords)
    t0 = traj.times[-1] * (1.0 - tail)
    return bool(np.all(norm[traj.times >= t0] < threshold))
