"""Command line harness: one subcommand per workflow plus a config sweep.

Every run writes into its output directory:

* ``report.json``: the task report, including the list of checked invariants;
* ``schedule.json``: the control in block form (with ``--emit-schedule``);
* task CSVs for plotting (dispersal curves, error vs n, time vs N0, ...);
* ``FAILED``: a marker holding the reason, present only when the run failed.

Exit status: 0 when every invariant of the task holds, 1 when the task ran
but failed (or raised), 2 for usage errors.  All randomness comes from
``numpy.random.default_rng(seed)`` (PCG64).
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import disperse as dsp
from .config import (SUBCOMMAND_TASKS, ExperimentConfig, UsageError, load_mapping, pair_from,
                     parse_config, parse_sweep, set_path, state_from, vector_from)
from .engine import ControlSchedule, Propagator, propagate
from .errors import QSteerError
from .findim import diagnostics
from .ladder import steer_in_window, time_bound
from .model import ModelSpec, QuantumState, galerkin
from .pipeline import diameter_sweep, execute_and_verify, plan_small_time
from .pulse import make_pulse, measure_deviation

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ROUNDTRIP_TOL = 1e-10
NORM_DRIFT_TOL = 1e-9
ORACLE_TOL = 1e-8

SWEEP_HEADER = ["index", "task", "status", "exit_code", "alpha", "eps", "T", "N0", "seed",
                "metric", "value", "time", "message"]


# --------------------------------------------------------------------------- output helpers

def jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating, Fraction)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(x.real), jsonable(x.imag)]
    if x is None or isinstance(x, str):
        return x
    return str(x)


def write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(jsonable(data), indent=2) + "\n")


def cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])


@dataclass
class TaskOutput:
    report: dict
    checks: dict[str, bool]
    summary: dict
    schedule: ControlSchedule | None = None
    replay: tuple | None = None  # (spec, truncation, psi0, final dense state)
    csvs: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


@dataclass
class RunResult:
    status: str
    exit_code: int
    out_dir: Path
    report: dict
    summary: dict


# --------------------------------------------------------------------------- tasks

def _need(value, name: str, task: str):
    if value is None:
        raise UsageError(f"params.{name}: Field required for task {task}")
    return value


def _simulate(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    psi0 = state_from(p.psi0 if p.psi0 is not None else 1, rng, "psi0")
    if p.schedule_file:
        sched = ControlSchedule.from_records(json.loads(Path(p.schedule_file).read_text()))
    elif p.control is not None:
        sched = ControlSchedule.from_segments([s.u for s in p.control], [s.dt for s in p.control],
                                              "config")
    else:
        T = p.duration if p.duration is not None else _need(p.T, "T", "simulate")
        sched = ControlSchedule.constant(p.u, T, f"constant({p.u})")
    n = p.truncation or max(8, 2 * psi0.last_index + 8)
    res = propagate(galerkin(spec, n), sched, psi0)
    x = res.final_state.to_dense(n)
    T = sched.total_duration
    report = {
        "truncation": n, "total_duration": T, "n_segments": sched.n_segments,
        "l1_norm": sched.l1_norm, "norm_drift": res.unitarity_defect,
        "final_state": res.final_state.to_dict(),
    }
    sup = psi0.support
    if sup is not None and sup[0] == sup[1]:
        k = sup[0]
        report["level"] = k
        report["final_phase"] = float(np.angle(x[k - 1]))
        if sched.l1_norm == 0:
            lam = spec.eigenvalue(k)
            report["free_phase"] = float(np.angle(np.exp(1j * lam * T)))
    rows = [[i + 1, z.real, z.imag, abs(z) ** 2] for i, z in enumerate(x)]
    return TaskOutput(report, {"norm_drift<=1e-9": res.unitarity_defect <= NORM_DRIFT_TOL},
                      {"metric": "norm_drift", "value": res.unitarity_defect, "time": T},
                      sched, (spec, n, psi0, x), {"state.csv": (["level", "re", "im", "abs2"], rows)})


def _pulse(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    K = _need(p.K, "K", "pulse")
    n_trunc = p.truncation or max(p.j, p.k) + 2
    prop = Propagator(galerkin(spec, n_trunc))
    rows, certs, pulse = [], [], None
    ok = True
    prev = None
    for n in p.n_list:
        pulse = make_pulse(spec, n_trunc, p.j, p.k, K, p.phi, n,
                           steps_per_period=p.steps_per_period or 64)
        dev = measure_deviation(spec, n_trunc, pulse, prop)
        ok &= dev <= pulse.bound
        rows.append([n, dev, pulse.bound, prev / dev if prev else None, pulse.duration])
        certs.append(pulse.certificate() | {"deviation": dev})
        prev = dev
    psi0 = QuantumState.basis(p.j)
    x = prop.evolve(pulse.schedule, psi0.to_dense(n_trunc))
    report = {"truncation": n_trunc, "pulses": certs}
    return TaskOutput(report, {"deviation<=bound": bool(ok)},
                      {"metric": "deviation", "value": rows[-1][1], "time": pulse.duration},
                      pulse.schedule, (spec, n_trunc, psi0, x),
                      {"error_vs_n.csv": (["n", "deviation", "bound", "ratio_to_previous", "tau"], rows)})


def _steer(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    eps = p.eps if p.eps is not None else 0.1
    runs, rows = [], []
    first = None
    for i in range(p.pairs):
        if p.psi0 is not None and p.psi1 is not None:
            psi0, psi1 = state_from(p.psi0, rng, "psi0"), state_from(p.psi1, rng, "psi1")
        else:
            N0, P = _need(p.N0, "N0", "steer-window"), _need(p.P, "P", "steer-window")
            psi0, psi1 = QuantumState.random(rng, N0, P), QuantumState.random(rng, N0, P)
        sched, rep = steer_in_window(spec, psi0, psi1, eps, p.N0, p.P, p.truncation,
                                     p.verify_truncation, p.steps_per_period)
        runs.append(rep.to_dict())
        rows.append([i, rep.fidelity, rep.distance, rep.total_time, rep.bound_time, rep.passed])
        if first is None:
            n = rep.truncation
            x = Propagator(galerkin(spec, n)).evolve(sched, psi0.to_dense(n))
            first = (sched, (spec, n, psi0, x))
        if p.psi0 is not None and p.psi1 is not None:
            break
    fids = [r["fidelity"] for r in runs]
    report = {"eps": eps, "runs": runs, "min_fidelity": min(fids)}
    return TaskOutput(report, {"fidelity>=1-eps": all(r["passed"] for r in runs)},
                      {"metric": "min_fidelity", "value": min(fids), "time": runs[0]["total_time"]},
                      first[0], first[1],
                      {"steer.csv": (["pair", "fidelity", "distance", "total_time", "time_bound",
                                      "passed"], rows)})


def _small_time(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    psi0, psi1 = state_from(p.psi0, rng, "psi0"), state_from(p.psi1, rng, "psi1")
    eps, T = _need(p.eps, "eps", "small-time"), _need(p.T, "T", "small-time")
    plan = plan_small_time(spec, psi0, psi1, eps, T, K_max=p.K_max, grid=p.grid,
                           max_truncation=p.max_truncation, steps_per_period=p.steps_per_period)
    if not plan.feasible:
        return TaskOutput({"plan": plan.to_dict()}, {"plan_feasible": False},
                          {"metric": "distance", "value": None, "time": None,
                           "message": plan.diagnosis})
    rep = execute_and_verify(spec, plan, psi0, psi1, p.verify_truncation)
    rows = []
    if plan.kick_in:
        rows.append(["dispersal-in", plan.kick_in.eta, plan.kick_in.K, None, plan.kick_in.gap, None])
    if plan.window_report:
        rows += [[s.name, s.duration, s.K, s.eta, s.error, s.bound] for s in plan.window_report.stages]
    if plan.kick_out:
        rows.append(["dispersal-out", plan.kick_out.eta, plan.kick_out.K, None, plan.kick_out.gap, None])
    checks = {
        "plan_feasible": True,
        "verdict_pass": rep.verdict == "pass",
        "total_time<T": plan.total_time_exact < Fraction(T),
        "composition_certificate": rep.composition_ok,
    }
    n = rep.verify_truncations[0]
    x = Propagator(galerkin(spec, n)).evolve(plan.schedule, psi0.to_dense(n))
    return TaskOutput(rep.to_dict(), checks,
                      {"metric": "distance", "value": rep.distance, "time": rep.total_time,
                       "N0": plan.N0},
                      plan.schedule, (spec, n, psi0, x),
                      {"stages.csv": (["stage", "duration", "K", "eta", "measured_error", "bound"], rows)})


def _diameter_sweep(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    psi0, psi1 = state_from(p.psi0, rng, "psi0"), state_from(p.psi1, rng, "psi1")
    eps, T_list = _need(p.eps, "eps", "diameter-sweep"), _need(p.T_list, "T_list", "diameter-sweep")
    out = diameter_sweep(spec, psi0, psi1, eps, T_list, K_max=p.K_max, grid=p.grid,
                         max_truncation=p.max_truncation, steps_per_period=p.steps_per_period)
    cols = ["T", "feasible", "verdict", "distance", "total_time", "N0", "P", "truncation", "diagnosis"]
    rows = [[r[c] for c in cols] for r in out["rows"]]
    feasible = [r for r in out["rows"] if r["feasible"]]
    checks = {
        "feasible_plans_verified": all(r["verdict"] == "pass" for r in feasible),
        "within_budget": all(r["total_time"] < r["T"] for r in feasible),
        "positive_time": all(r["total_time"] > 0 for r in feasible),
    }
    return TaskOutput(out, checks, {"metric": "achieved_time", "value": out["achieved_time"],
                                    "time": out["achieved_time"]},
                      csvs={"diameter.csv": (cols, rows)})


def _oracle_points(n: int) -> int:
    return max(4096, 1 << math.ceil(math.log2(4 * n)))


def _dispersal(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    psi = state_from(p.psi0 if p.psi0 is not None else 1, rng, "psi0")
    N0 = _need(p.N0, "N0", "dispersal-curve")
    K_max = p.K_max or 100.0
    trunc = p.truncation or dsp.default_truncation(psi, K_max)
    Ks, mass = dsp.dispersal_curve(psi, N0, K_max, p.grid, spec, trunc)
    report: dict = {"N0": N0, "K_max": K_max, "grid": p.grid, "truncation": trunc,
                    "min_low_mass": float(mass.min()), "argmin_K": float(Ks[int(np.argmin(mass))])}
    checks = {}
    K_check = K_max
    if p.eps is not None:
        hits = np.flatnonzero(mass < p.eps)
        checks["dispersal_found"] = bool(hits.size)
        if hits.size:
            res = dsp.find_dispersal(psi, N0, p.eps, K_max, p.grid, spec, trunc)
            report["dispersal"] = res.to_dict()
            K_check = res.K
    y = dsp.apply_expKB(psi, K_check, trunc, spec).to_dense(trunc)
    z = dsp.grid_expKB(psi, K_check, trunc, _oracle_points(trunc)).to_dense(trunc)
    agree = float(np.linalg.norm(y - z))
    report["oracle_K"] = K_check
    report["oracle_disagreement"] = agree
    checks["oracle_agreement<=1e-8"] = agree <= ORACLE_TOL
    value = report.get("dispersal", {}).get("K", report["min_low_mass"])
    return TaskOutput(report, checks,
                      {"metric": "K" if "dispersal" in report else "min_low_mass", "value": value,
                       "N0": N0},
                      csvs={"dispersal_curve.csv": (["K", "low_mass"], [[a, b] for a, b in zip(Ks, mass)])})


def _findim(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    pair = pair_from(_need(p.pair, "pair", "findim"), spec, rng)
    psi0 = vector_from(p.psi0, "psi0") if p.psi0 is not None else None
    psi1 = vector_from(p.psi1, "psi1") if p.psi1 is not None else None
    if (psi0 is None) != (psi1 is None):
        raise UsageError("params.psi0/psi1: give both or neither")
    report = diagnostics(pair, psi0, psi1, p.orbit_K_max, p.orbit_grid)
    report["pair"] = pair.to_dict()
    return TaskOutput(report, {"valid_pair": True},
                      {"metric": "lie_rank", "value": report["lie_rank"]})


def _time_bound(cfg: ExperimentConfig, spec: ModelSpec, rng) -> TaskOutput:
    p = cfg.params
    eps = _need(p.eps, "eps", "time-bound")
    N0s = p.N0_list or [_need(p.N0, "N0", "time-bound")]
    rows = [[N0, time_bound(spec.alpha, eps, N0)] for N0 in N0s]
    ok = all(math.isfinite(b) and b > 0 for _, b in rows)
    report = {"alpha": spec.alpha, "eps": eps, "bounds": [{"N0": a, "time_bound": b} for a, b in rows]}
    return TaskOutput(report, {"finite_positive": ok},
                      {"metric": "time_bound", "value": rows[0][1], "time": rows[0][1], "N0": N0s[0]},
                      csvs={"time_vs_N0.csv": (["N0", "time_bound"], rows)})


TASK_RUNNERS = {
    "simulate": _simulate,
    "pulse": _pulse,
    "steer-window": _steer,
    "small-time": _small_time,
    "diameter-sweep": _diameter_sweep,
    "dispersal-curve": _dispersal,
    "findim": _findim,
    "time-bound": _time_bound,
}


# --------------------------------------------------------------------------- run / sweep

def _roundtrip(path: Path, replay: tuple) -> float:
    spec, n, psi0, x = replay
    sched = ControlSchedule.from_records(json.loads(path.read_text()))
    y = Propagator(galerkin(spec, n)).evolve(sched, psi0.to_dense(n))
    return float(np.linalg.norm(y - x))


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    """Execute one configured task and write its artifacts."""
    out_dir = Path(out or cfg.out or "qsteer-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / "FAILED"
    if marker.exists():
        marker.unlink()
    rng = np.random.default_rng(cfg.seed)
    header = {"task": cfg.task, "seed": cfg.seed, "rng": "numpy PCG64",
              "model": cfg.model.model_dump(by_alias=True, exclude_none=True),
              "params": cfg.params.model_dump(exclude_none=True)}
    try:
        spec = cfg.model.build()
        res = TASK_RUNNERS[cfg.task](cfg, spec, rng)
        checks = dict(res.checks)
        report = header | {"result": res.report}
        for name, (cols, rows) in res.csvs.items():
            write_csv(out_dir / name, cols, rows)
        if cfg.emit_schedule and res.schedule is not None:
            path = out_dir / "schedule.json"
            write_json(path, res.schedule.to_records())
            if res.replay is not None:
                err = _roundtrip(path, res.replay)
                report["schedule_roundtrip_error"] = err
                checks["schedule_roundtrip<=1e-10"] = err <= ROUNDTRIP_TOL
        passed = all(checks.values())
        report["invariants"] = checks
        report["status"] = "pass" if passed else "fail"
        summary = res.summary
        if not passed:
            failed = [k for k, v in checks.items() if not v]
            summary = summary | {"message": summary.get("message") or "failed: " + ", ".join(failed)}
    except UsageError:
        raise
    except (QSteerError, ValueError, ArithmeticError, OSError) as exc:
        report = header | {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        summary = {"message": report["error"]}
        passed = False
    write_json(out_dir / "report.json", report)
    if not passed:
        marker.write_text((summary.get("message") or report.get("status", "fail")) + "\n")
    status = report["status"]
    return RunResult(status, EXIT_OK if passed else EXIT_FAIL, out_dir, report, summary)


def _sweep_row(index: int, data: dict, out_dir: Path) -> list:
    model = data.get("model") if isinstance(data.get("model"), dict) else {}
    params = data.get("params") if isinstance(data.get("params"), dict) else {}
    base = {"alpha": model.get("alpha"), "eps": params.get("eps"), "T": params.get("T"),
            "N0": params.get("N0"), "seed": data.get("seed", 0), "task": data.get("task")}
    try:
        cfg = parse_config(data)
        res = run(cfg, out_dir)
        status, code, summ = res.status, res.exit_code, res.summary
    except UsageError as exc:
        status, code, summ = "usage-error", EXIT_USAGE, {"message": str(exc)}
    except Exception as exc:  # a sweep never aborts on one bad run
        status, code, summ = "error", EXIT_FAIL, {"message": f"{type(exc).__name__}: {exc}"}
    N0 = summ.get("N0", base["N0"])
    return [index, base["task"], status, code, base["alpha"], base["eps"], base["T"], N0, base["seed"],
            summ.get("metric"), summ.get("value"), summ.get("time"), summ.get("message")]


def expand_sweep(data: dict) -> list[dict]:
    sw = parse_sweep(data)
    if sw.configs is not None:
        configs = [copy.deepcopy(c) for c in sw.configs]
    else:
        keys = list((sw.grid or {}).keys())
        configs = []
        for combo in itertools.product(*[(sw.grid or {})[k] for k in keys]):
            c = copy.deepcopy(sw.base)
            for k, v in zip(keys, combo):
                set_path(c, k, v)
            configs.append(c)
    if sw.seed is not None:
        for i, c in enumerate(configs):
            c.setdefault("seed", sw.seed + i)
    return configs


def sweep(data: dict, out: str | Path | None = None, workers: int | None = None) -> Path:
    """Run every config of a sweep and aggregate one CSV row per config index."""
    sw = parse_sweep(data)
    configs = expand_sweep(data)
    out_dir = Path(out or sw.out or "qsteer-sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    dirs = [out_dir / f"run_{i:04d}" for i in range(len(configs))]
    nw = workers or sw.workers
    if nw > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            rows = list(ex.map(_sweep_row, range(len(configs)), configs, dirs))
    else:
        rows = [_sweep_row(i, c, d) for i, (c, d) in enumerate(zip(configs, dirs))]
    path = out_dir / "sweep.csv"
    write_csv(path, SWEEP_HEADER, rows)
    return path


# --------------------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsteer", description="Ladder steering experiments on the torus model.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, schedule=True):
        p.add_argument("--config", required=True, help="YAML or JSON config file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="seed for numpy's PCG64 generator")
        if schedule:
            p.add_argument("--emit-schedule", action="store_true",
                           help="write schedule.json and check that it re-simulates")
            p.add_argument("--verify-truncation", type=int, help="verification Galerkin order")

    common(sub.add_parser("run", help="run the task named in the config"))
    for name, task in SUBCOMMAND_TASKS.items():
        common(sub.add_parser(name, help=f"task {task}"))
    sp = sub.add_parser("sweep", help="run a list or grid of configs into one CSV")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int)
    return ap


def _config_from_args(args) -> ExperimentConfig:
    data = load_mapping(args.config)
    if args.command != "run":
        task = SUBCOMMAND_TASKS[args.command]
        if data.setdefault("task", task) != task:
            raise UsageError(f"task: config names '{data['task']}' but the subcommand runs '{task}'")
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "emit_schedule", False):
        data["emit_schedule"] = True
    if getattr(args, "verify_truncation", None) is not None:
        data.setdefault("params", {})
        if not isinstance(data["params"], dict):
            raise UsageError("params: must be a mapping")
        data["params"]["verify_truncation"] = args.verify_truncation
    return parse_config(data)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            path = sweep(load_mapping(args.config), args.out, args.workers)
            print(path)
            return EXIT_OK
        cfg = _config_from_args(args)
        res = run(cfg, args.out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(jsonable({"status": res.status, "out": str(res.out_dir)} | res.summary)))
    if args.command == "findim" and res.status == "pass":
        print(json.dumps(jsonable(res.report["result"]), indent=2))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
