"""Command-line front end: ``verify``, ``simulate`` and ``count-pdes``.

Run configurations are JSON documents validated against :data:`CONFIG_SCHEMA`.
Every field is optional except ``system``; omitted fields take the example
defaults shipped with the package. Exit codes: 0 when every check passes, 1
when a check fails, 2 for an invalid configuration or command line.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import ProbeBox, State
from .examples import ball_beam, cart_pendulum, load_defaults
from .lyapunov import LyapunovCandidate, lyap_matching_residual
from .matching import TOLERANCES, pde_count, sida_matching_residual
from .sim import IntegratorConfig, IntegrationError, classify_convergence, monotonicity_check, simulate_closed_loop
from .suites import SUITES, Perturbation, perturbed

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "sidapbc run configuration",
    "type": "object",
    "required": ["system"],
    "additionalProperties": False,
    "properties": {
        "system": {"enum": ["cart_pendulum", "ball_beam"]},
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "gains": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in ("k_e", "k_u", "K_k", "K_P")},
        },
        "q_u_interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "probe_box": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"q_half": _NUMBER_LIST, "p_half": _NUMBER_LIST},
        },
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["rk4", "rk45"]},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "record_stride": {"type": "integer", "minimum": 1},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "dt_min": {"type": "number", "exclusiveMinimum": 0},
                "dt_max": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "initial_state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["q", "p"],
            "properties": {"q": _NUMBER_LIST, "p": _NUMBER_LIST},
        },
        "converge_coords": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "zero_control": {"type": "boolean"},
        "perturb": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "md": {"type": "number"},
                "lam": {"type": "number"},
                "control": {"type": "number"},
                "flip_damping": {"type": "boolean"},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "string", "minLength": 1} for k in ("report", "csv", "summary")},
        },
    },
}

DEFAULT_OUTPUTS = {"report": "verify_report.json", "csv": "trajectory.csv", "summary": "simulate_summary.json"}
DEFAULT_SAMPLES = 200


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def resolve_config(doc: dict, seed=None) -> dict:
    """Validate ``doc`` and fill every omitted field from the example defaults."""
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = copy.deepcopy(load_defaults(doc["system"]))
    cfg["system"] = doc["system"]
    for key, value in doc.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    cfg.setdefault("samples", DEFAULT_SAMPLES)
    cfg.setdefault("seed", 0)
    cfg.setdefault("zero_control", False)
    cfg.setdefault("perturb", {})
    cfg["outputs"] = {**DEFAULT_OUTPUTS, **cfg.get("outputs", {})}
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_bundle(cfg: dict):
    """The example design described by a resolved config."""
    try:
        box = ProbeBox.symmetric(cfg["probe_box"]["q_half"], cfg["probe_box"]["p_half"])
        if cfg["system"] == "cart_pendulum":
            prm = cart_pendulum.CartPendulumParams(**cfg["params"])
            gd = cfg["gains"]
            gains = cart_pendulum.make_gains(gd["k_e"], gd["k_u"], gd["K_k"], gd["K_P"])
            return cart_pendulum.build(prm, gains, box, cfg["q_u_interval"])
        prm = ball_beam.BallBeamParams(**cfg["params"])
        return ball_beam.build(prm, box)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config rejected: {exc}") from None


def _integrator(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig(**cfg["integrator"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator rejected: {exc}") from None


def _header(cfg: dict, command: str) -> dict:
    return {
        "command": command,
        "system": cfg["system"],
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "tolerances": dict(TOLERANCES),
        "version": __version__,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_verify(cfg: dict, out: Path) -> int:
    bundle = build_bundle(cfg)
    states = bundle.box.sample(cfg["samples"], cfg["seed"])
    pert = Perturbation(**cfg["perturb"])
    try:
        checks = SUITES[cfg["system"]](bundle, states, pert)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    passed = all(c.passed for c in checks)
    report = {**_header(cfg, "verify"), "samples": cfg["samples"], "perturbation": cfg["perturb"],
              "checks": [c.as_dict() for c in checks], "passed": passed}
    _write_json(out / cfg["outputs"]["report"], report)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} value={c.value:.3e} "
              f"{'<=' if c.bound == 'upper' else '>'} {c.tolerance:.0e}")
    failed = [c.name for c in checks if not c.passed]
    print("all checks passed" if passed else f"failed checks: {', '.join(failed)}")
    return 0 if passed else 1


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_csv(traj, n: int, m: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"q_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)]
                    + ["H_d", "Hd_dot"] + [f"u_{i + 1}" for i in range(m)] + ["residual_norm"])
    mon = traj.monitors
    for i, t in enumerate(traj.times):
        row = [t, *traj.states[i], mon["H_d"][i], mon["Hd_dot"][i], *np.atleast_1d(mon["u"][i]),
               mon["residual_norm"][i]]
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def cmd_simulate(cfg: dict, out: Path) -> int:
    bundle = build_bundle(cfg)
    sys_, n, m = bundle.system, bundle.system.n, bundle.system.m
    tgt, u_law = perturbed(bundle, Perturbation(**cfg["perturb"]))
    if cfg["zero_control"]:
        u_law = lambda x: np.zeros(m)  # noqa: E731
    if cfg["system"] == "cart_pendulum":
        residual = lambda x: sida_matching_residual(sys_, u_law, tgt, x)  # noqa: E731
    else:
        cand = LyapunovCandidate(tgt.md, tgt.vd, tgt.q_star, md_inverse=tgt.md_inverse)
        residual = lambda x: lyap_matching_residual(sys_, cand, u_law, tgt.lambda_map, x)  # noqa: E731
    x0 = State(cfg["initial_state"]["q"], cfg["initial_state"]["p"])
    if x0.n != n:
        raise ConfigError(f"initial_state must have {n} coordinates")
    coords = cfg.get("converge_coords")
    if coords is not None and any(c >= n for c in coords):
        raise ConfigError(f"converge_coords must be below {n}")
    integ = _integrator(cfg)
    summary = _header(cfg, "simulate")
    try:
        traj = simulate_closed_loop(sys_, u_law, x0, integ, energy=tgt, residual=residual)
    except IntegrationError as exc:
        summary.update(completed=False, converged=False, error=str(exc), t_stop=exc.t,
                       final_state=None if exc.last_state is None else exc.last_state.vector().tolist())
        _write_json(out / cfg["outputs"]["summary"], summary)
        print(f"integration aborted: {exc}")
        return 1
    (out / cfg["outputs"]["csv"]).write_text(trajectory_csv(traj, n, m))
    violations, max_rate = monotonicity_check(traj)
    converged = classify_convergence(traj, tgt.q_star, coords)
    summary.update(
        completed=True,
        converged=converged,
        final_state={"q": traj.final_state.q.tolist(), "p": traj.final_state.p.tolist()},
        hd_violations=violations,
        max_positive_hd_dot=max_rate,
        max_residual_norm=float(np.max(traj.monitors["residual_norm"])),
        records=len(traj.times),
    )
    if hasattr(sys_, "hamiltonian"):
        h = np.array([sys_.hamiltonian(traj.state(i)) for i in range(len(traj.times))])
        summary["open_loop_energy_drift"] = float(np.max(np.abs(h - h[0])))
    _write_json(out / cfg["outputs"]["summary"], summary)
    print(f"converged={str(converged).lower()} hd_violations={violations} "
          f"final_q={traj.final_state.q.tolist()} final_p={traj.final_state.p.tolist()}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidapbc", description="Verify and simulate SIDA-PBC designs.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("verify", "run the residual and invariant checks"),
                           ("simulate", "integrate the closed loop and write CSV plus a JSON summary")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, type=Path, help="run configuration (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p = sub.add_parser("count-pdes", help="number of kinetic-energy PDEs for s unactuated coordinates")
    p.add_argument("s", type=int)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "count-pdes":
        try:
            print(pde_count(args.s))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg = resolve_config(doc, args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        command = cmd_verify if args.command == "verify" else cmd_simulate
        return command(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
