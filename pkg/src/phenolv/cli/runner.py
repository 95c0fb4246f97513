"""Execute a ``RunConfig``: run the model, write CSVs and the manifest.

Every run writes into its own directory.  ``manifest.json`` is written last
and only on success; a failed run removes whatever it had written and leaves
``failure.json`` with the error chain instead.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..model import ModelParams, ValidationError, quadrature
from ..ode_sim import (
    OdeOutcome,
    OdeSimConfig,
    build_ode_separatrix,
    predict_ode_outcome,
    run_ode_sim,
)
from ..pde_sim import (
    InadmissibleSteadyState,
    PdeSimConfig,
    PdeStepper,
    pde_lv_params,
    predict_pde_outcome,
    principal_shifts,
    run_pde_sim,
    solve_mass_system,
    steady_state,
)
from ..phase_plane import (
    Basin,
    LVCase,
    basin_query,
    equilibria,
    global_separatrix,
    integrate_lv,
)
from ..spectral import operator_residual
from .config import Command, RunConfig, patch_config, sections_as_text, to_ini

MANIFEST = "manifest.json"
FAILURE = "failure.json"
SUMMARY = "sweep_summary.csv"

# fixed CSV layouts
HEADERS = {
    "equilibria.csv": ("name", "Y", "X"),
    "trajectories.csv": ("start", "Y0", "X0", "Y_T", "X_T", "Y_pred", "X_pred", "error"),
    "separatrix.csv": ("Y", "X"),
    "diagnostics.csv": ("t", "r1", "r2", "lyapunov", "I1", "I2", "conc_frac", "argmax_u"),
    "final_state.csv": ("x", "u", "v"),
    "profiles.csv": ("x", "u_bar", "v_bar"),
    "dynamics.csv": ("t", "r1", "r2", "dist_u", "dist_v"),
    SUMMARY: (
        "index", "value", "status", "predicted_outcome", "observed_outcome",
        "predicted_r1", "observed_r1", "rel_err_r1", "predicted_r2", "observed_r2", "rel_err_r2",
    ),
}

EXTINCT = 1e-6  # mass below which a species counts as extinct


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if hasattr(v, "value"):  # enums
        return v.value
    return v


def rel_error(observed: float, predicted: float) -> float:
    """Relative error, absolute when the prediction is zero."""
    if not (math.isfinite(observed) and math.isfinite(predicted)):
        return float("nan")
    if predicted == 0:
        return abs(observed)
    return abs(observed - predicted) / abs(predicted)


def observed_outcome(r1: float, r2: float) -> str:
    u_alive, v_alive = r1 >= EXTINCT, r2 >= EXTINCT
    if u_alive and v_alive:
        return "Coexist"
    if u_alive:
        return "UWins"
    if v_alive:
        return "VWins"
    return "Extinct"


@dataclass
class RunManifest:
    command: str
    config: dict
    config_ini: str
    version: str
    started_utc: str
    duration_s: float
    files: list = field(default_factory=list)  # [{"name", "rows"}]
    prediction: dict = field(default_factory=dict)
    observed: list = field(default_factory=list)  # [{"quantity", "predicted", "observed", "rel_error"}]
    status: str = "ok"

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2) + "\n"

    def observed_value(self, quantity: str) -> float:
        for row in self.observed:
            if row["quantity"] == quantity:
                return row["observed"]
        return float("nan")


class _Emitter:
    """Writes CSVs into ``out`` and remembers them for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[dict] = []

    def csv(self, name: str, rows) -> None:
        header = HEADERS[name]
        n = 0
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise RuntimeError(f"{name}: row of length {len(row)} for header {header}")
                w.writerow([_cell(v) for v in row])
                n += 1
        self.files.append({"name": name, "rows": n})

    def cleanup(self) -> None:
        for f in self.files:
            try:
                (self.out / f["name"]).unlink()
            except FileNotFoundError:
                pass
        self.files.clear()


def _observe(table: list, quantity: str, predicted: float, observed: float) -> None:
    table.append(
        {
            "quantity": quantity,
            "predicted": float(predicted),
            "observed": float(observed),
            "rel_error": rel_error(float(observed), float(predicted)),
        }
    )


# ---------------------------------------------------------------------------
# per-command handlers; each returns (prediction, observed)


def _run_phase_plane(cfg: RunConfig, em: _Emitter):
    p = cfg.params
    rep = equilibria(p)
    case = rep.case_tag
    rows = [("origin", 0.0, 0.0), ("P2", p.d_bar, 0.0), ("P3", 0.0, p.m_bar)]
    if rep.P1 is not None:
        rows.append(("P1", *rep.P1))
    em.csv("equilibria.csv", rows)

    curve = None
    if case is LVCase.BISTABLE:
        curve = global_separatrix(p, **cfg.separatrix.kwargs())
    rng = np.random.default_rng(cfg.seed)
    hi = 2.0 * max(p.d_bar, p.m_bar)
    traj_rows, errors = [], []
    counts = {}
    for i in range(cfg.sim.n_starts):
        Y0, X0 = rng.uniform(0.05 * hi, hi, size=2)
        tr = integrate_lv(p, Y0, X0, cfg.sim.t_end, n_samples=2, rtol=cfg.sim.rtol, atol=cfg.sim.atol)
        YT, XT = tr.final
        if case is LVCase.COEXISTENCE:
            target = rep.P1
        elif case is LVCase.EXCLUSION_U:
            target = rep.P2
        elif case is LVCase.EXCLUSION_V:
            target = rep.P3
        elif case is LVCase.BISTABLE:
            basin = basin_query(curve, Y0, X0)
            counts[basin.value] = counts.get(basin.value, 0) + 1
            target = {Basin.P_WINS: rep.P2, Basin.X_WINS: rep.P3}.get(basin, rep.P1)
        else:
            target = None
        if target is not None:
            err = math.hypot(YT - target[0], XT - target[1])
        elif case is LVCase.DEGENERATE:
            err = abs(YT + p.b * XT - p.d_bar)  # distance from the line of equilibria
            target = (float("nan"), float("nan"))
        else:
            err = float("nan")
            target = (float("nan"), float("nan"))
        errors.append(err)
        traj_rows.append((i, Y0, X0, YT, XT, target[0], target[1], err))
    em.csv("trajectories.csv", traj_rows)

    prediction = {
        "outcome": case.value,
        "P1": rep.P1,
        "lambda1": rep.lambda1,
        "lambda2": rep.lambda2,
        "k": rep.k,
        "a2": rep.a2,
    }
    if counts:
        prediction["basin_counts"] = counts
    observed = []
    _observe(observed, "max_start_error", 0.0, max(errors) if errors else float("nan"))
    return prediction, observed


def _run_separatrix(cfg: RunConfig, em: _Emitter):
    p = cfg.params
    curve = global_separatrix(p, **cfg.separatrix.kwargs())
    em.csv("separatrix.csv", zip(curve.Y, curve.X))
    res = curve.residual()
    prediction = {
        "outcome": LVCase.BISTABLE.value,
        "saddle": curve.saddle,
        "k": curve.local_k,
        "a2": curve.local_a2,
    }
    observed = []
    _observe(observed, "max_residual", 0.0, float(np.abs(res).max()))
    _observe(observed, "monotone", 1.0, float(np.all(np.diff(curve.Y) > 0) and np.all(np.diff(curve.X) > 0)))
    _observe(observed, "n_points", float(curve.Y.size), float(curve.Y.size))
    return prediction, observed


def _initial(spec, grid, ss=None):
    if spec.family == "steady":
        if ss is None:
            raise InadmissibleSteadyState("steady-profile initial data need an admissible steady state",
                                          float("nan"), float("nan"), float("nan"), float("nan"))
        vals = spec.as_dict
        return float(vals["scale"]) * getattr(ss, vals["profile"])
    return spec.resource().sample(grid)


def _run_ode_sim(cfg: RunConfig, em: _Emitter):
    grid = cfg.grid.build()
    params: ModelParams = cfg.params
    u0, v0 = _initial(cfg.u0, grid), _initial(cfg.v0, grid)
    try:
        pred = predict_ode_outcome(params, grid, u0, v0)
    except ValidationError as exc:
        if "bistable" not in str(exc):
            raise
        sep = build_ode_separatrix(params, grid, u0, **cfg.separatrix.kwargs())
        pred = predict_ode_outcome(params, grid, u0, v0, sep)
    sim = cfg.sim
    final, diag = run_ode_sim(
        params, grid, u0, v0, OdeSimConfig(sim.t_end, sim.dt, sim.record_every, sim.eps_conc)
    )
    em.csv("diagnostics.csv", diag.rows())
    em.csv("final_state.csv", zip(grid.nodes, final.u, final.v))

    prediction = {
        "outcome": pred.outcome.value,
        "r1": pred.r1_star,
        "r2": pred.r2_star,
        "d_M": pred.d_M,
        "xbar": pred.xbar,
        "separatrix_gap": pred.separatrix_gap,
    }
    r1, r2 = final.r1, final.r2
    observed = []
    _observe(observed, "r1_T", pred.r1_star, r1)
    _observe(observed, "r2_T", pred.r2_star, r2)
    if pred.outcome is OdeOutcome.CONTINUUM:
        _observe(observed, "r1_T+b*r2_T", pred.d_M, r1 + params.b * r2)
    if r1 > EXTINCT:
        _observe(observed, "conc_frac_T", 1.0, diag.final_metrics.mass_fraction_near_peak)
        _observe(observed, "argmax_u_T", pred.xbar, diag.final_metrics.peak_location)
    _observe(observed, "lyapunov_violation", 0.0, diag.lyapunov_violation())
    observed.append({"quantity": "outcome", "predicted": pred.outcome.value,
                     "observed": observed_outcome(r1, r2), "rel_error": None})
    return prediction, observed


def _steady_or_none(params, grid):
    try:
        return steady_state(params, grid), None
    except InadmissibleSteadyState as exc:
        return None, exc


def _run_pde_sim(cfg: RunConfig, em: _Emitter):
    grid = cfg.grid.build()
    params: ModelParams = cfg.params
    ss, bad = _steady_or_none(params, grid)
    u0, v0 = _initial(cfg.u0, grid, ss), _initial(cfg.v0, grid, ss)
    pred = None
    if ss is not None:
        sep = None
        if params.b * params.c > 1:
            sep = global_separatrix(pde_lv_params(ss, params), **cfg.separatrix.kwargs())
        pred = predict_pde_outcome(params, grid, u0, v0, separatrix=sep)
        stepper = PdeStepper(params, grid, cfg.sim.dt, (ss.s1, ss.s2))
    else:
        stepper = PdeStepper(params, grid, cfg.sim.dt, (bad.s1, bad.s2))
    sim = cfg.sim
    final, diag = run_pde_sim(
        params, grid, u0, v0, PdeSimConfig(sim.t_end, sim.dt, sim.record_every), pred, stepper
    )
    em.csv("dynamics.csv", diag.rows())
    if ss is not None:
        em.csv("profiles.csv", zip(grid.nodes, ss.u_bar, ss.v_bar))
    em.csv("final_state.csv", zip(grid.nodes, final.u, final.v))

    r1, r2 = final.r1, final.r2
    observed = []
    if pred is None:
        prediction = {"outcome": "Inadmissible", "message": str(bad), "r1_bar": bad.r1_bar, "r2_bar": bad.r2_bar}
        _observe(observed, "r1_T", float("nan"), r1)
        _observe(observed, "r2_T", float("nan"), r2)
        return prediction, observed
    s = pred.steady
    prediction = {
        "outcome": pred.outcome.value,
        "r1": pred.r1_limit,
        "r2": pred.r2_limit,
        "scale": pred.scale,
        "s1": s.s1,
        "s2": s.s2,
        "r1_bar": s.r1_bar,
        "r2_bar": s.r2_bar,
        "K1": s.K1,
        "K2": s.K2,
        "separatrix_gap": pred.separatrix_gap,
    }
    _observe(observed, "r1_T", pred.r1_limit, r1)
    _observe(observed, "r2_T", pred.r2_limit, r2)
    _observe(observed, "dist_u_T", 0.0, diag.dist_u[-1])
    _observe(observed, "dist_v_T", 0.0, diag.dist_v[-1])
    observed.append({"quantity": "outcome", "predicted": pred.outcome.value,
                     "observed": observed_outcome(r1, r2), "rel_error": None})
    return prediction, observed


def _run_steady_state(cfg: RunConfig, em: _Emitter):
    grid = cfg.grid.build()
    params: ModelParams = cfg.params
    s1, phi, s2, psi = principal_shifts(params, grid)
    r1, r2 = solve_mass_system(s1, s2, params.b, params.c)
    prediction = {"s1": s1, "s2": s2, "r1_bar": r1, "r2_bar": r2}
    if not (r1 > 0 and r2 > 0):
        # reported, not fatal: the exclusion scenarios do not need it
        prediction["outcome"] = "Inadmissible"
        em.csv("profiles.csv", zip(grid.nodes, phi, psi))
        return prediction, []
    ss = steady_state(params, grid)
    if cfg.u0 is not None:
        ss = ss.with_projections(grid, _initial(cfg.u0, grid, ss), _initial(cfg.v0, grid, ss))
        prediction.update(K1=ss.K1, K2=ss.K2)
    prediction["outcome"] = "Admissible"
    em.csv("profiles.csv", zip(grid.nodes, ss.u_bar, ss.v_bar))
    observed = []
    d_vals, m_vals = params.d.sample(grid), params.m.sample(grid)
    _observe(observed, "residual_u", 0.0,
             operator_residual(d_vals, grid, s1, ss.u_bar) / np.abs(ss.u_bar).max())
    _observe(observed, "residual_v", 0.0,
             operator_residual(m_vals, grid, s2, ss.v_bar) / np.abs(ss.v_bar).max())
    _observe(observed, "mass_u", r1, quadrature(grid, ss.u_bar))
    _observe(observed, "mass_v", r2, quadrature(grid, ss.v_bar))
    _observe(observed, "boundary_ratio", 0.0,
             max(ss.u_bar[1] / ss.u_bar.max(), ss.u_bar[-2] / ss.u_bar.max(),
                 ss.v_bar[1] / ss.v_bar.max(), ss.v_bar[-2] / ss.v_bar.max()))
    return prediction, observed


HANDLERS = {
    Command.PHASE_PLANE: _run_phase_plane,
    Command.SEPARATRIX: _run_separatrix,
    Command.ODE_SIM: _run_ode_sim,
    Command.PDE_SIM: _run_pde_sim,
    Command.STEADY_STATE: _run_steady_state,
}


# ---------------------------------------------------------------------------
# drivers


def _error_chain(exc: BaseException) -> list[dict]:
    chain = []
    while exc is not None:
        chain.append({"type": type(exc).__name__, "message": str(exc)})
        exc = exc.__cause__ or exc.__context__
    return chain


def _new_manifest(cfg: RunConfig) -> RunManifest:
    return RunManifest(
        command=cfg.command.value,
        config=sections_as_text(cfg),
        config_ini=to_ini(cfg),
        version=__version__,
        started_utc=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        duration_s=0.0,
    )


def _write_failure(out: Path, manifest: RunManifest, exc: BaseException) -> None:
    record = {
        "status": "failed",
        "command": manifest.command,
        "config": manifest.config,
        "version": manifest.version,
        "started_utc": manifest.started_utc,
        "error_chain": _error_chain(exc),
        "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__),
    }
    (out / FAILURE).write_text(json.dumps(_jsonable(record), indent=2) + "\n")


def _prepare(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ValidationError(f"run.output_dir: {out} is not writable")
    for name in (MANIFEST, FAILURE):
        try:
            (out / name).unlink()
        except FileNotFoundError:
            pass


def execute(cfg: RunConfig, out_dir: str | os.PathLike | None = None, threads: int = 1) -> RunManifest:
    """Run ``cfg`` and write its outputs into ``out_dir`` (default ``cfg.output_dir``).

    On failure the emitted files are removed, ``failure.json`` is written and
    the exception propagates.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    if cfg.command is Command.SWEEP:
        return sweep(cfg, cfg.sweep.axis, cfg.sweep.values, out, threads)
    _prepare(out)
    manifest = _new_manifest(cfg)
    em = _Emitter(out)
    t0 = time.perf_counter()
    try:
        prediction, observed = HANDLERS[cfg.command](cfg, em)
    except BaseException as exc:
        em.cleanup()
        _write_failure(out, manifest, exc)
        raise
    manifest.duration_s = time.perf_counter() - t0
    manifest.files = em.files
    manifest.prediction = prediction
    manifest.observed = observed
    (out / MANIFEST).write_text(manifest.to_json())
    return manifest


def _child(args):
    cfg, out = args
    try:
        return execute(cfg, out), None
    except Exception as exc:  # recorded in the summary; the sweep goes on
        return None, f"{type(exc).__name__}: {exc}"


def _summary_row(i, value, manifest: RunManifest | None, error: str | None):
    nan = float("nan")
    if manifest is None:
        return (i, value, "failed: " + (error or ""), "", "", nan, nan, nan, nan, nan, nan)
    pred = manifest.prediction
    obs = {row["quantity"]: row for row in manifest.observed}
    p1, p2 = pred.get("r1", nan), pred.get("r2", nan)
    o1 = obs.get("r1_T", {}).get("observed", nan)
    o2 = obs.get("r2_T", {}).get("observed", nan)
    outcome = obs.get("outcome", {}).get("observed", "")
    return (i, value, "ok", pred.get("outcome", ""), outcome,
            p1, o1, rel_error(o1, p1), p2, o2, rel_error(o2, p2))


def sweep(base: RunConfig, axis: str, values, out_dir, threads: int = 1) -> RunManifest:
    """Independent runs with ``axis`` set to each value; one subdirectory per run.

    Child failures are recorded in ``sweep_summary.csv`` and do not stop the sweep.
    """
    out = Path(out_dir)
    _prepare(out)
    manifest = _new_manifest(base)
    t0 = time.perf_counter()
    values = [float(v) for v in values]
    children = [patch_config(base, axis, v) for v in values]
    jobs = [(c, out / f"run_{i:03d}") for i, c in enumerate(children)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_child, jobs))
    else:
        results = [_child(j) for j in jobs]

    em = _Emitter(out)
    rows = [_summary_row(i, v, m, e) for i, (v, (m, e)) in enumerate(zip(values, results))]
    em.csv(SUMMARY, rows)
    manifest.duration_s = time.perf_counter() - t0
    manifest.files = em.files + [
        {"name": f"{job[1].name}/{f['name']}", "rows": f["rows"]}
        for job, (m, _) in zip(jobs, results) if m is not None
        for f in m.files
    ]
    manifest.prediction = {"axis": axis, "values": values}
    manifest.observed = [
        {"quantity": f"{axis}={r[1]!r}", "predicted": r[3], "observed": r[4], "rel_error": None}
        for r in rows
    ]
    (out / MANIFEST).write_text(manifest.to_json())
    return manifest
