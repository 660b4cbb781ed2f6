"""Config-driven experiment runner.

Usage: ``afm <task> --config <path> [--seed N] [--out <dir>]``.

Exit codes: 0 success, 2 invalid config, 3 task failure. Every run writes
``report.json`` (config echo, deterministic ``results`` section, timing and
versions) plus task-specific CSV tables into the output directory.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from afm import kernels
from afm.errors import AFMError, AssumptionFailed, ConfigInvalid
from afm.iomap import (
    SamplerSpec,
    WeightingSequence,
    check_causality,
    check_time_invariance,
    estimate_fading_modulus,
    estimate_memory_horizon,
    estimate_modulus,
    inverse_modulus,
)
from afm.stability import (
    DemidovichCertificate,
    GridSpec,
    contraction_certificate,
    lure_certify,
    lyapunov_decrease_check,
    verify_demidovich,
)
from afm.statespace import compute_invariant_ball, simulate_states, thm3_memory_bound, thm4_bounds
from afm.systems import BuiltSystem, build_system
from afm.tcn import ReluFilterMap, TrainSpec, compare_parsimony, fit_tcn, theorem1_plan

TASKS = ["simulate", "memory", "modulus", "certify", "bounds", "fit-tcn", "compare", "check", "pipeline"]

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_natural = {"type": "integer", "minimum": 0}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": list(required)}


SCHEMA = _obj({
    "task": {"enum": TASKS},
    "seed": _natural,
    "system": {"type": "object"},
    "R": _pos,
    "eps": {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]},
    "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "gamma_grid": {"type": "array", "minItems": 1,
                   "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
    "t_max": _posint,
    "t": _natural,
    "m": _natural,
    "samples": _natural,
    "trials": _posint,
    "delta_grid": {"type": "array", "items": _nonneg, "minItems": 1},
    "weights": _obj({"rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}}, ["rho"]),
    "sampler": _obj({"uniform": _natural, "signs": _natural, "constants": {"type": "boolean"},
                     "mode": {"enum": ["sampled", "extremal"]}}),
    "certificate": _obj({
        "P": {"type": "array"},
        "mu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "contraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "file": {"type": "string"},
    }),
    "lipschitz": _obj({"L_f": _nonneg, "L_g": _nonneg}),
    "grid": _obj({"x_radius": _pos, "x_points": _posint, "u_bound": _pos, "u_points": _posint,
                  "max_points": _posint}),
    "lyapunov_samples": _posint,
    "arch": _obj({"width": _posint, "depth": _posint}),
    "train": _obj({"samples": _posint, "corners": _natural, "heldout": _posint, "epochs": _natural,
                   "lr": _pos, "worst_weight": _nonneg, "worst_frac": _pos, "restarts": _posint,
                   "polish": {"type": "boolean"}, "polish_nfev": _posint, "reseed_rounds": _natural,
                   "restart_batch": _posint, "target_error": _pos}),
    "depth_constant": _pos,
    "degrees": {"type": "array", "items": _posint, "minItems": 2},
    "input": _obj({"kind": {"enum": ["ones", "signs", "uniform", "values"]}, "length": _posint,
                   "batch": _posint, "values": {"type": "array", "items": {"type": "number"}}}),
    "output": _obj({"dir": {"type": "string"}}),
}, ["system"])


def _field_path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        if extra:
            parts.append(extra[0])
            return ".".join(parts)
    if err.validator == "required":
        missing = [r for r in err.validator_value if r not in err.instance]
        if missing:
            parts.append(missing[0])
    return ".".join(parts) or "<root>"


def validate_config(cfg, seed_override=None) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigInvalid("<root>", "config must be a JSON object")
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = seed_override
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg),
                    key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        e = errors[0]
        path = _field_path(e)
        msg = "unknown field" if e.validator == "additionalProperties" else e.message
        raise ConfigInvalid(path, msg)
    if "seed" not in cfg:
        raise ConfigInvalid("seed", "a seed is mandatory (config field or --seed)")
    grid = cfg.get("delta_grid")
    if grid is not None:
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ConfigInvalid("delta_grid", "must be nondecreasing")
        if grid[-1] > 2 * cfg.get("R", 1.0):
            raise ConfigInvalid("delta_grid", "entries must not exceed 2R")
    return cfg


# helpers


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _eps_list(cfg, default=(0.01,)):
    e = cfg.get("eps", list(default))
    return [float(v) for v in (e if isinstance(e, list) else [e])]


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _need_state_space(built: BuiltSystem, task):
    if built.state_space is None:
        raise ConfigInvalid("system.name", f"task {task!r} needs a state-space system, got {built.name}")
    return built.state_space


def _grid(cfg) -> GridSpec:
    return GridSpec(seed=cfg["seed"], **cfg.get("grid", {}))


def _sampler(cfg) -> SamplerSpec:
    return SamplerSpec(**cfg.get("sampler", {}))


def _certificate(cfg, built: BuiltSystem, base_dir: Path) -> tuple[DemidovichCertificate, dict]:
    """Certificate from the config, from the Lur'e pipeline, or from contraction.

    Non-Lur'e certificates are verified on the configured grid and by the
    Lyapunov sample check before use.
    """
    sys_ = _need_state_space(built, "certify")
    spec = cfg.get("certificate")
    if spec and "file" in spec:
        p = Path(spec["file"])
        p = p if p.is_absolute() else base_dir / p
        cert = DemidovichCertificate.from_json(p.read_text())
    elif spec and "P" in spec:
        if "mu" not in spec:
            raise ConfigInvalid("certificate.mu", "required with P")
        P = np.asarray(spec["P"], dtype=float)
        P = P.reshape(sys_.n, sys_.n)
        cert = DemidovichCertificate(P, float(spec["mu"]), provenance="config")
    elif spec and "contraction" in spec:
        cert = contraction_certificate(float(spec["contraction"]), sys_.n)
    elif built.lure is not None:
        cert = lure_certify(built.lure, cfg.get("grid") and _grid(cfg))
        return cert, {"method": "lure/bounded-real", "grid_points": cert.details.get("grid_points")}
    else:
        A = sys_.kernel.A if sys_.kernel is not None else None
        if A is None or built.name not in ("linear", "contractive_tanh"):
            raise AssumptionFailed("certificate", f"no automatic certificate for {built.name}")
        lam = float(np.linalg.norm(A, 2))
        if not lam < 1:
            raise AssumptionFailed("contraction", f"||A||_2 = {lam:.6g} >= 1")
        cert = contraction_certificate(max(lam, 1e-9), sys_.n)
    R = cfg.get("R", 1.0)
    grid = _grid(cfg) if "grid" in cfg else GridSpec(x_radius=R, u_bound=R, seed=cfg["seed"])
    res = verify_demidovich(sys_, cert, grid)
    if not res.passed:
        raise AssumptionFailed("demidovich", f"matrix inequality fails with margin {res.margin:.6g} "
                                             f"at {res.worst_point}")
    lyap = lyapunov_decrease_check(sys_, cert, cfg.get("lyapunov_samples", 10_000), cfg["seed"],
                                   x_radius=grid.x_radius, u_bound=grid.u_bound)
    if not lyap.passed:
        raise AssumptionFailed("lyapunov", f"{len(lyap.violations)} sampled decrease violations")
    cert.margin = res.margin
    return cert, {"method": cert.provenance, "grid_points": res.points, "demidovich_margin": res.margin,
                  "lyapunov_samples": lyap.samples, "lyapunov_violations": len(lyap.violations)}


def _lipschitz(cfg, sys_):
    lip = cfg.get("lipschitz", {})
    return float(lip.get("L_f", sys_.L_f)), float(lip.get("L_g", sys_.L_g))


def _probe_inputs(R, length, seed, count=256):
    rng = np.random.default_rng(seed)
    return np.vstack([np.full(length, R), np.full(length, -R),
                      rng.choice([-R, R], size=(count // 2, length)),
                      rng.uniform(-R, R, size=(count - count // 2, length))])


def _end_to_end(F, model, R, length, seed) -> float:
    U = _probe_inputs(R, length, seed)
    return float(np.max(np.abs(F.outputs(U) - model.outputs(U))))


def _default_delta_grid(R):
    return np.concatenate([[0.0], np.geomspace(1e-4 * R, 2 * R, 80)])


# tasks


def task_simulate(cfg, built, out, base_dir):
    R = cfg.get("R", 1.0)
    spec = cfg.get("input", {})
    kind = spec.get("kind", "ones")
    length = spec.get("length", cfg.get("t_max", 50) + 1)
    batch = spec.get("batch", 1)
    rng = np.random.default_rng(cfg["seed"])
    if kind == "ones":
        U = np.full((batch, length), R)
    elif kind == "signs":
        U = rng.choice([-R, R], size=(batch, length))
    elif kind == "uniform":
        U = rng.uniform(-R, R, size=(batch, length))
    else:
        if "values" not in spec:
            raise ConfigInvalid("input.values", "required for kind 'values'")
        U = np.asarray(spec["values"], dtype=float)[None, :]
    Y = built.F.outputs(U)
    results = {"inputs": U, "outputs": Y}
    if built.state_space is not None:
        results["final_states"] = simulate_states(built.state_space, U)[:, -1]
    _write_csv(out / "outputs.csv", ["t"] + [f"y{i}" for i in range(Y.shape[0])],
               [[t] + [float(v) for v in Y[:, t]] for t in range(Y.shape[1])])
    return results


def task_memory(cfg, built, out, base_dir):
    R, t_max = cfg.get("R", 1.0), cfg.get("t_max", 50)
    ests = [estimate_memory_horizon(built.F, e, R, t_max, _sampler(cfg), cfg["seed"])
            for e in _eps_list(cfg)]
    _write_csv(out / "memory.csv", ["eps", "m", "worst_deviation"],
               [[e.epsilon, m, float(v)] for e in ests for m, v in enumerate(e.curve)])
    return {"estimates": [e.report() for e in ests], "m_hat": [e.m_hat for e in ests]}


def task_modulus(cfg, built, out, base_dir):
    R = cfg.get("R", 1.0)
    t = cfg.get("t", cfg.get("t_max", 20))
    grid = cfg.get("delta_grid", np.linspace(0, 2 * R, 11).tolist())
    table = estimate_modulus(built.F, t, grid, R, cfg.get("samples", 256), cfg["seed"])
    (out / "modulus.csv").write_text(table.to_csv())
    results = {"modulus": table.report(),
               "inverse": {str(e): inverse_modulus(table, e) for e in _eps_list(cfg)}}
    if "weights" in cfg:
        w = WeightingSequence.geometric(cfg["weights"]["rho"])
        fading = estimate_fading_modulus(built.F, w, grid, R, cfg.get("t_max", 30),
                                         cfg.get("samples", 256), cfg["seed"])
        (out / "fading.csv").write_text(fading.to_csv())
        results["fading"] = fading.report()
    return results


def task_certify(cfg, built, out, base_dir):
    cert, info = _certificate(cfg, built, base_dir)
    data = cert.to_json()
    (out / "certificate.json").write_text(json.dumps(_clean(data), sort_keys=True, indent=2))
    return {"certificate": data, "checks": info}


def task_bounds(cfg, built, out, base_dir):
    sys_ = _need_state_space(built, "bounds")
    cert, info = _certificate(cfg, built, base_dir)
    R = cfg.get("R", 1.0)
    L_f, L_g = _lipschitz(cfg, sys_)
    deltas = cfg.get("delta_grid", [0.01, 0.1])
    ball = compute_invariant_ball(sys_, cert, R, rng_seed=cfg["seed"])
    beta = cert.beta()
    rows, out_rows = [], []
    for e in _eps_list(cfg):
        b = thm4_bounds(cert.kappa, cert.mu, L_f, L_g, R, e, 0.0)
        thm3 = thm3_memory_bound(beta, ball.diam, L_g, e)
        rows.append({"eps": e, "memory_bound": b.m_star_bound, "memory_bound_ceil": b.m_star_ceil,
                     "memory_bound_series": thm3})
        out_rows.append([e, b.m_star_bound, b.m_star_ceil, thm3])
    omegas = [{"delta": d, "modulus_bound": thm4_bounds(cert.kappa, cert.mu, L_f, L_g, R, 1.0, d).omega_bound}
              for d in deltas]
    _write_csv(out / "bounds.csv", ["eps", "memory_bound", "memory_bound_ceil", "memory_bound_series"], out_rows)
    _write_csv(out / "modulus_bounds.csv", ["delta", "modulus_bound"],
               [[o["delta"], o["modulus_bound"]] for o in omegas])
    return {"certificate": cert.to_json(), "checks": info, "L_f": L_f, "L_g": L_g,
            "invariant_ball_radius": ball.radius, "memory": rows, "modulus": omegas}


def _plan_inputs(cfg, F, R):
    t_max, seed = cfg.get("t_max", 50), cfg["seed"]
    grid = cfg.get("delta_grid", _default_delta_grid(R).tolist())
    mem_cache, mod_cache = {}, {}

    def m_star(e):
        if e not in mem_cache:
            mem_cache[e] = estimate_memory_horizon(F, e, R, t_max, _sampler(cfg), seed).m_hat
        return mem_cache[e]

    def inv_mod(m, e):
        if m not in mod_cache:
            mod_cache[m] = estimate_modulus(F, m, grid, R, cfg.get("samples", 256), seed)
        return inverse_modulus(mod_cache[m], e)

    return m_star, inv_mod


def task_fit_tcn(cfg, built, out, base_dir):
    R = cfg.get("R", 1.0)
    F = built.F
    plan = None
    if "m" in cfg:
        m = cfg["m"]
    else:
        e = _eps_list(cfg)[0]
        m_star, inv_mod = _plan_inputs(cfg, F, R)
        plan = theorem1_plan(e, cfg.get("gamma", 0.5), R, m_star, inv_mod, cfg.get("depth_constant", 1.0),
                             gamma_grid=cfg.get("gamma_grid"))
        m = plan["m"]
    arch = cfg.get("arch", {"width": m + 2, "depth": 2})
    model, report = fit_tcn(F, m, R, arch, cfg.get("train"), cfg["seed"])
    report["end_to_end_sup_error"] = _end_to_end(F, model, R, cfg.get("t_max", 50) + 1, cfg["seed"])
    (out / "model.json").write_text(json.dumps(model.to_json(), indent=2))
    return {"fit": report, "plan": plan}


def task_compare(cfg, built, out, base_dir):
    if not isinstance(built.F, ReluFilterMap):
        raise ConfigInvalid("system.name", "compare needs a relu_filter system")
    kw = {"degrees": cfg["degrees"]} if "degrees" in cfg else {}
    rep = compare_parsimony(built.F, _eps_list(cfg, (0.1, 0.01, 0.001)), cfg.get("m"), cfg.get("R", 1.0), **kw)
    _write_csv(out / "parsimony.csv",
               ["eps", "tcn_m", "tcn_params", "volterra_degree", "volterra_terms", "extrapolated"],
               [[r["eps"], r["tcn_m"], r["tcn_params"], r["volterra_degree"], r["volterra_terms"],
                 r["extrapolated"]] for r in rep["rows"]])
    _write_csv(out / "degree_sweep.csv", ["degree", "sup_error"], rep["degree_sweep"])
    return rep


def task_check(cfg, built, out, base_dir):
    R = cfg.get("R", 1.0)
    trials = cfg.get("trials", 200)
    causal = check_causality(built.F, R, trials, rng_seed=cfg["seed"])
    ti = check_time_invariance(built.F, R, trials, rng_seed=cfg["seed"])
    results = {"causality": causal.report(), "time_invariance": ti.report()}
    if built.state_space is not None:
        s = built.state_space
        results["state_space"] = {"equilibrium_ok": s.is_time_invariant(),
                                  "lipschitz_violations": s.check_lipschitz(R, rng_seed=cfg["seed"])}
    return results


def pipeline_bounds_vs_empirical(cfg, built, out, base_dir):
    """certify, closed-form bounds, plan, empirical horizon and fit, one row per eps."""
    sys_ = _need_state_space(built, "pipeline")
    cert, info = _certificate(cfg, built, base_dir)
    R, gamma, seed = cfg.get("R", 1.0), cfg.get("gamma", 0.5), cfg["seed"]
    L_f, L_g = _lipschitz(cfg, sys_)
    F = built.F
    m_star, inv_mod = _plan_inputs(cfg, F, R)
    rows = []
    for e in _eps_list(cfg):
        b = thm4_bounds(cert.kappa, cert.mu, L_f, L_g, R, e, 0.0)
        m_hat = m_star(e)
        plan = theorem1_plan(e, gamma, R, m_star, inv_mod, cfg.get("depth_constant", 1.0),
                             gamma_grid=cfg.get("gamma_grid", [gamma]))
        m = plan["m"]
        arch = cfg.get("arch", {"width": m + 2, "depth": 2})
        model, rep = fit_tcn(F, m, R, arch, cfg.get("train"), seed)
        e2e = _end_to_end(F, model, R, cfg.get("t_max", 50) + 1, seed)
        rows.append({
            "eps": e, "theory_m_bound": b.m_star_bound, "theory_m_ceil": b.m_star_ceil, "m_hat": m_hat,
            "bound_dominates": b.m_star_ceil >= m_hat,
            "plan_m": m, "plan_width": plan["width"], "plan_log10_depth": plan["log10_depth_bound"],
            "fit_width": arch["width"], "fit_depth": arch["depth"],
            "fit_heldout_sup_error": rep["heldout_sup_error"], "end_to_end_sup_error": e2e,
            "within_eps": e2e <= e,
        })
    _write_csv(out / "pipeline.csv", list(rows[0]), [list(r.values()) for r in rows])
    slope = None
    if len(rows) >= 2:
        x = np.log([1 / r["eps"] for r in rows])
        slope = float(np.polyfit(x, [r["m_hat"] for r in rows], 1)[0])
    return {"certificate": cert.to_json(), "checks": info, "rows": rows,
            "m_hat_vs_log_inv_eps_slope": slope}


DISPATCH = {
    "simulate": task_simulate,
    "memory": task_memory,
    "modulus": task_modulus,
    "certify": task_certify,
    "bounds": task_bounds,
    "fit-tcn": task_fit_tcn,
    "compare": task_compare,
    "check": task_check,
    "pipeline": pipeline_bounds_vs_empirical,
}


def _versions():
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "afm": own, "kernel_backend": kernels.BACKEND}


def results_digest(results) -> str:
    return hashlib.sha256(json.dumps(_clean(results), sort_keys=True).encode()).hexdigest()


def run(cfg: dict, task: str, out_dir: Path, base_dir: Path | None = None) -> dict:
    """Validate, dispatch and write ``report.json``. Task errors are raised after the
    report (with the error recorded) has been written."""
    base_dir = base_dir or Path.cwd()
    if task not in DISPATCH:
        raise ConfigInvalid("task", f"unknown task {task!r}")
    if cfg.get("task", task) != task:
        raise ConfigInvalid("task", f"config is for {cfg['task']!r}, not {task!r}")
    built = build_system(cfg["system"], base_dir=base_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    report = {"task": task, "config": cfg, "versions": _versions()}
    try:
        results = _clean(DISPATCH[task](cfg, built, out_dir, base_dir))
    except ConfigInvalid:
        raise
    except AFMError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc),
                           "details": _clean(getattr(exc, "details", {}))}
        report["wall_time"] = time.perf_counter() - start
        (out_dir / "report.json").write_text(json.dumps(_clean(report), sort_keys=True, indent=2))
        raise
    report["results"] = results
    report["results_sha256"] = results_digest(results)
    report["wall_time"] = time.perf_counter() - start
    (out_dir / "report.json").write_text(json.dumps(_clean(report), sort_keys=True, indent=2))
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="afm", description="Memory, stability and TCN experiments.")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args(argv)
    try:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid("<file>", str(exc)) from exc
        cfg = validate_config(raw, args.seed)
        out = args.out or Path(cfg.get("output", {}).get("dir", f"afm-out/{args.task}"))
        report = run(cfg, args.task, out, args.config.parent)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AFMError as exc:
        print(f"task failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"task": args.task, "out": str(out), "results_sha256": report["results_sha256"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
