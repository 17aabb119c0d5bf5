"""Batch front-end: ``hamadv <command> --config <file> [--out <dir>] [--threads N]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import default_threads
from .adversary import ConstructionParams, SweepGrid, Thresholds, generate_certificate
from .diagnostics import (
    CSV_COLUMNS,
    StepMap,
    consistency_probe,
    energy_drift,
    measure_translation_constant,
    summarize,
    sweep,
    write_sweep_csv,
)
from .errors import ConfigError, HamadvError, ParseError, ValidationError
from .integrators import EXPLICIT_METHODS, METHODS, SOLVERS, IntegratorConfig, iterate
from .multidof import (
    LiftKind,
    check_condition_product,
    check_condition_untouched,
    jacobian_block_report,
    reduce_to_planar,
)
from .phase import FreeParticle, Harmonic, PhasePoint, SeparableBump, spec_from_json

COMMANDS = ("integrate", "diagnose", "adversary", "multidof")
EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

TOP_KEYS = {"command", "integrator", "hamiltonian", "dt", "parameters", "output_dir", "seed"}
INTEGRATOR_KEYS = {"method", "solver_tol", "max_iters", "base", "solver"}
HAMILTONIAN_KEYS = {
    "free_particle": {"variant"},
    "harmonic": {"variant", "omega"},
    "separable_bump": {"variant", "bumps"},
    "lift_single": {"variant", "n", "inner"},
    "lift_product": {"variant", "n", "inner"},
}
BUMP_KEYS = {"center", "radius", "amplitude"}

_CONSTRUCTION_KEYS = {"lambda", "exclusion_radius", "q0_margin", "grid", "thresholds", "fd_step", "full_tapes", "continuity_points"}
PARAMETER_KEYS = {
    "integrate": {"x0", "n_steps"},
    "diagnose": {"x0", "n_samples", "sample_box", "fd_step", "energy_steps", "dt_sequence", "translation_samples", "det_tol"},
    "adversary": _CONSTRUCTION_KEYS,
    "multidof": _CONSTRUCTION_KEYS | {"lift", "n_samples", "sample_scale"},
}
GRID_KEYS = {"nq", "np", "q_span", "p_range"}
THRESHOLD_KEYS = {"energy_tol", "det_tol", "mismatch_tol"}


@dataclass
class ScenarioConfig:
    command: str
    integrator: IntegratorConfig
    hamiltonian: object
    dt: float
    parameters: dict = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "integrator": self.integrator.to_json(),
            "hamiltonian": self.hamiltonian.to_json(),
            "dt": self.dt,
            "parameters": self.parameters,
            "seed": self.seed,
        }


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(where, "expected an object")
    for key in obj:
        if key not in allowed:
            raise ValidationError(f"{where}.{key}" if where else key, "unknown key")


def _number(obj, key, where, positive=False, default=None):
    if key not in obj:
        return default
    v = obj[key]
    name = f"{where}.{key}" if where else key
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(name, "expected a finite number")
    if positive and not v > 0:
        raise ValidationError(name, "must be positive")
    return float(v)


def _integer(obj, key, where, minimum=None, default=None):
    if key not in obj:
        return default
    v = obj[key]
    name = f"{where}.{key}" if where else key
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(name, "expected an integer")
    if minimum is not None and v < minimum:
        raise ValidationError(name, f"must be at least {minimum}")
    return v


def _validate_hamiltonian(obj, where="hamiltonian"):
    if not isinstance(obj, dict) or obj.get("variant") not in HAMILTONIAN_KEYS:
        raise ValidationError(f"{where}.variant", f"expected one of {sorted(HAMILTONIAN_KEYS)}")
    variant = obj["variant"]
    _reject_unknown(obj, HAMILTONIAN_KEYS[variant], where)
    if variant == "harmonic":
        _number(obj, "omega", where, positive=True)
    if variant == "separable_bump":
        bumps = obj.get("bumps", [])
        if not isinstance(bumps, list):
            raise ValidationError(f"{where}.bumps", "expected a list")
        for i, b in enumerate(bumps):
            _reject_unknown(b, BUMP_KEYS, f"{where}.bumps[{i}]")
            for key in BUMP_KEYS:
                if key not in b:
                    raise ValidationError(f"{where}.bumps[{i}].{key}", "missing")
                _number(b, key, f"{where}.bumps[{i}]", positive=key == "radius")
    if variant in ("lift_single", "lift_product"):
        _integer(obj, "n", where, minimum=2)
        if "inner" not in obj:
            raise ValidationError(f"{where}.inner", "missing")
        _validate_hamiltonian(obj["inner"], f"{where}.inner")
        if obj["inner"]["variant"].startswith("lift_"):
            raise ValidationError(f"{where}.inner", "must be planar")
    try:
        return spec_from_json(obj)
    except (ValueError, HamadvError) as exc:
        raise ValidationError(where, str(exc)) from exc


def _validate_integrator(obj):
    _reject_unknown(obj, INTEGRATOR_KEYS, "integrator")
    if obj.get("method") not in METHODS:
        raise ValidationError("integrator.method", f"expected one of {list(METHODS)}")
    _number(obj, "solver_tol", "integrator", positive=True)
    _integer(obj, "max_iters", "integrator", minimum=0)
    if "base" in obj and obj["base"] not in EXPLICIT_METHODS:
        raise ValidationError("integrator.base", f"expected one of {list(EXPLICIT_METHODS)}")
    if "solver" in obj and obj["solver"] not in SOLVERS:
        raise ValidationError("integrator.solver", f"expected one of {list(SOLVERS)}")
    try:
        return IntegratorConfig.from_json(obj)
    except ValueError as exc:
        raise ValidationError("integrator", str(exc)) from exc


def _validate_parameters(command, params):
    _reject_unknown(params, PARAMETER_KEYS[command], "parameters")
    if "grid" in params:
        _reject_unknown(params["grid"], GRID_KEYS, "parameters.grid")
    if "thresholds" in params:
        _reject_unknown(params["thresholds"], THRESHOLD_KEYS, "parameters.thresholds")
        for key in params["thresholds"]:
            _number(params["thresholds"], key, "parameters.thresholds", positive=True)
    if "lambda" in params:
        lam = _number(params, "lambda", "parameters")
        if not 0.0 < lam < 0.5:
            raise ValidationError("parameters.lambda", "must lie in (0, 1/2)")
    for key in ("exclusion_radius", "fd_step", "det_tol", "sample_scale"):
        _number(params, key, "parameters", positive=True)
    _number(params, "q0_margin", "parameters")
    for key in ("n_steps", "n_samples", "energy_steps", "continuity_points"):
        _integer(params, key, "parameters", minimum=1)
    if "lift" in params:
        _reject_unknown(params["lift"], {"kind", "n"}, "parameters.lift")
        if params["lift"].get("kind") not in ("single", "product"):
            raise ValidationError("parameters.lift.kind", "expected 'single' or 'product'")
        _integer(params["lift"], "n", "parameters.lift", minimum=2)
    if "dt_sequence" in params:
        seq = params["dt_sequence"]
        if not isinstance(seq, list) or len(seq) < 3 or any(not isinstance(v, (int, float)) or v <= 0 for v in seq):
            raise ValidationError("parameters.dt_sequence", "expected at least 3 positive numbers")
        if any(b >= a for a, b in zip(seq, seq[1:])):
            raise ValidationError("parameters.dt_sequence", "must be strictly decreasing")
    if "full_tapes" in params and not isinstance(params["full_tapes"], bool):
        raise ValidationError("parameters.full_tapes", "expected a boolean")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario config, filling defaults."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    _reject_unknown(obj, TOP_KEYS, "")
    command = obj.get("command")
    if command not in COMMANDS:
        raise ValidationError("command", f"expected one of {list(COMMANDS)}")
    if "integrator" not in obj:
        raise ValidationError("integrator", "missing")
    integrator = _validate_integrator(obj["integrator"])
    hamiltonian = _validate_hamiltonian(obj.get("hamiltonian", {"variant": "free_particle"}))
    if "dt" not in obj:
        raise ValidationError("dt", "missing")
    dt = _number(obj, "dt", "", positive=True)
    params = obj.get("parameters", {})
    _validate_parameters(command, params)
    if command == "adversary" and not isinstance(hamiltonian, FreeParticle):
        raise ValidationError("hamiltonian", "the adversary starts from the free particle")
    if command == "multidof" and hamiltonian.n != 1:
        raise ValidationError("hamiltonian", "multidof takes the planar inner Hamiltonian")
    output_dir = obj.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ValidationError("output_dir", "expected a string")
    seed = _integer(obj, "seed", "", minimum=0, default=0)
    return ScenarioConfig(command, integrator, hamiltonian, dt, params, output_dir, seed)


# ---------------------------------------------------------------------------
# commands


def _x0(params, n):
    if "x0" in params:
        try:
            x = PhasePoint.from_json(params["x0"])
        except (KeyError, TypeError, ValueError, HamadvError) as exc:
            raise ValidationError("parameters.x0", str(exc)) from exc
        if x.n != n:
            raise ValidationError("parameters.x0", f"expected dimension n={n}")
        return x
    return PhasePoint((0.0,) * n, (1.0,) * n)


def _construction(params, dt, threads) -> tuple[ConstructionParams, bool]:
    grid = params.get("grid", {})
    th = params.get("thresholds", {})
    defaults = SweepGrid()
    cp = ConstructionParams(
        dt=dt,
        lam=params.get("lambda", 0.25),
        exclusion_radius=params.get("exclusion_radius"),
        q0_margin=params.get("q0_margin"),
        grid=SweepGrid(
            nq=grid.get("nq", defaults.nq),
            np=grid.get("np", defaults.np),
            q_span=tuple(grid.get("q_span", defaults.q_span)),
            p_range=tuple(grid.get("p_range", defaults.p_range)),
        ),
        thresholds=Thresholds(**th),
        fd_step=params.get("fd_step", 1e-5),
        continuity_points=params.get("continuity_points", 32),
        threads=threads,
    )
    return cp, params.get("full_tapes", False)


def run_integrate(cfg: ScenarioConfig, threads: int):
    params = cfg.parameters
    x0 = _x0(params, cfg.hamiltonian.n)
    results = iterate(cfg.integrator, cfg.hamiltonian, x0, cfg.dt, params.get("n_steps", 10))
    traj = [r.point.to_json() for r in results if r.defined]
    failure = None
    if results and not results[-1].defined:
        failure = {"step": len(results), "reason": results[-1].reason}
    drift = energy_drift(StepMap(cfg.integrator, cfg.hamiltonian, cfg.dt), cfg.hamiltonian, x0, len(results))
    payload = {"x0": x0.to_json(), "trajectory": traj, "undefined": failure, "energy_drift": drift.drift}
    return payload, None, EXIT_OK


def _random_points(rng, n, count, box):
    qlo, qhi = box.get("q", [-2.0, 2.0])
    plo, phi = box.get("p", [-2.0, 2.0])
    qs = rng.uniform(qlo, qhi, size=(count, n))
    ps = rng.uniform(plo, phi, size=(count, n))
    return [PhasePoint(tuple(map(float, q)), tuple(map(float, p))) for q, p in zip(qs, ps)]


def run_diagnose(cfg: ScenarioConfig, threads: int):
    params = cfg.parameters
    spec, integ, dt = cfg.hamiltonian, cfg.integrator, cfg.dt
    rng = np.random.default_rng(cfg.seed)
    n = spec.n
    fmap = StepMap(integ, spec, dt)
    points = _random_points(rng, n, params.get("n_samples", 100), params.get("sample_box", {}))
    payload = {}
    rows = None
    if n == 1:
        rows = sweep(fmap, spec, points, params.get("fd_step", 1e-5), threads)
        summary = summarize(rows, det_tol=params.get("det_tol"))
        payload["jacobian_sweep"] = [r.to_json() for r in rows]
        payload["sweep_summary"] = summary.to_json()
    else:
        from .diagnostics import jacobian

        dets = []
        for x in points:
            rep = jacobian(fmap, x, params.get("fd_step", 1e-5))
            dets.append({"point": x.to_json(), "det": rep.determinant, "det_err": rep.det_error})
        payload["jacobian_sweep"] = dets
    x0 = _x0(params, n)
    drift = energy_drift(fmap, spec, x0, params.get("energy_steps", 100))
    payload["energy_drift"] = {"x0": x0.to_json(), "drift": drift.drift, "steps": drift.steps, "undefined_reason": drift.undefined_reason}
    if n == 1 and isinstance(spec, (FreeParticle, Harmonic, SeparableBump)):
        dts = params.get("dt_sequence", [0.1, 0.05, 0.025, 0.0125])
        try:
            payload["consistency"] = consistency_probe(integ, spec, x0, dts).to_json()
        except HamadvError as exc:
            payload["consistency"] = {"error": f"{type(exc).__name__}: {exc}"}
    if isinstance(spec, FreeParticle):
        samples = params.get("translation_samples", [-5.0, 0.0, 1.0, 5.0, 100.0])
        payload["translation"] = measure_translation_constant(fmap, samples, dt).to_json()
    return payload, rows, EXIT_OK


def run_adversary(cfg: ScenarioConfig, threads: int):
    cp, full = _construction(cfg.parameters, cfg.dt, threads)
    cert = generate_certificate(cfg.integrator, cp)
    code = EXIT_VIOLATION if cert.verdict.violated else EXIT_OK
    return {"certificate": cert.to_json(full)}, cert.det_sweep, code


def run_multidof(cfg: ScenarioConfig, threads: int):
    params = cfg.parameters
    lift_obj = params.get("lift", {"kind": "single", "n": 2})
    kind = LiftKind(lift_obj.get("kind", "single"), lift_obj.get("n", 2))
    lifted = kind.lift(cfg.hamiltonian)
    rng = np.random.default_rng(cfg.seed)
    scale = params.get("sample_scale", 1.0)
    samples = [
        PhasePoint(tuple(map(float, rng.normal(0.0, scale, kind.n))), tuple(map(float, rng.normal(0.0, scale, kind.n))))
        for _ in range(params.get("n_samples", 20))
    ]
    if kind.kind == "single":
        condition = {"name": "untouched", **check_condition_untouched(cfg.integrator, lifted, samples, cfg.dt)}
    else:
        condition = {"name": "product", **check_condition_product(cfg.integrator, lifted, samples, cfg.dt)}
    block = jacobian_block_report(StepMap(cfg.integrator, lifted, cfg.dt), samples[0], pattern=kind.kind)
    cp, full = _construction(params, cfg.dt, threads)
    cert = generate_certificate(reduce_to_planar(cfg.integrator, kind), cp)
    payload = {
        "lift": kind.to_json(),
        "condition": condition,
        "block_jacobian": {"point": samples[0].to_json(), **block.to_json()},
        "certificate": cert.to_json(full),
    }
    code = EXIT_VIOLATION if cert.verdict.violated else EXIT_OK
    return payload, cert.det_sweep, code


RUNNERS = {
    "integrate": run_integrate,
    "diagnose": run_diagnose,
    "adversary": run_adversary,
    "multidof": run_multidof,
}


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def run_scenario(cfg: ScenarioConfig, out_dir: Path | None = None, threads: int = 1) -> int:
    """Run one scenario and write ``report.json`` (and ``sweep.csv`` when there is a sweep).

    Returns the process exit status.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"hamadv: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report = {"command": cfg.command, "config": cfg.to_json()}
    try:
        payload, rows, code = RUNNERS[cfg.command](cfg, threads)
    except HamadvError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        (out / "report.json").write_text(dumps_report(report))
        print(f"hamadv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report.update(payload)
    try:
        (out / "report.json").write_text(dumps_report(report))
        if rows:
            write_sweep_csv(rows, out / "sweep.csv")
    except OSError as exc:
        print(f"hamadv: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return code


EPILOG = f"""\
exit status: 0 clean run, 2 when a certificate names a violated property,
1 on configuration or runtime errors.

sweep.csv columns: {", ".join(CSV_COLUMNS)}
  q, p     sweep point
  det      central-difference Jacobian determinant of one step at (q, p)
  det_err  |det(h) - det(h/2)|, the finite-difference error estimate
Undefined points leave det and det_err empty.

Thread count falls back to $HAMADV_THREADS, then to the number of cores.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamadv",
        description="Run integrator diagnostics and adversarial bump-Hamiltonian certificates.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON scenario file")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, default=None, help="sweep worker count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
        if cfg.command != args.command:
            raise ValidationError("command", f"config says {cfg.command!r}, command line says {args.command!r}")
    except (OSError, ConfigError) as exc:
        print(f"hamadv: {exc}", file=sys.stderr)
        return EXIT_ERROR
    threads = args.threads if args.threads is not None else default_threads()
    return run_scenario(cfg, args.out, max(1, threads))


if __name__ == "__main__":
    sys.exit(main())
