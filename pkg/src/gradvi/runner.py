"""Run a configured problem end to end and write its artifacts.

Each run writes into ``<out>/<spec hash>/``:

* ``spec.json``: the canonical config, enough to repeat the run;
* ``report.json``: solver statistics, diagnostics and contract flags;
* field CSVs (see :mod:`gradvi.fieldio`) and per-iteration residual logs;
* ``timing.json``: wall-clock times, kept apart so that everything else is
  byte-identical between repeated runs.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import spec_hash
from .domain import ScalarField
from .fieldio import export_field
from .gauge import EuclideanBall
from .gradient import admm_solve, feasibility_profile, lipschitz_excess
from .obstacle import active_sets, kkt_residuals, psor_solve
from .problem import ProblemSpec
from .regularity import bound_params, bound_profile
from .vector import (assemble_vector, collinearity_angles, direct_vector_solve, invariance_check,
                     k1_feasibility, random_orthogonal_fixing, reduce_to_scalar, scalar_energy_j1,
                     vector_energy)

__all__ = ["RunResult", "run", "regularity_study", "distance_only", "EQUIVALENCE_FACTOR"]

log = logging.getLogger(__name__)

# sup-norm agreement allowed between formulations, in units of h
EQUIVALENCE_FACTOR = 5.0
LIPSCHITZ_FACTOR = 5.0  # slack in units of h^2
REGULARITY_STEP_CHANGE = 0.15
N_ROTATIONS = 20


@dataclass
class RunResult:
    report: dict
    ok: bool
    directory: Path | None
    timing: dict = field(default_factory=dict)


def _clean(obj):
    """Replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _residual_csv(history: np.ndarray) -> str:
    lines = ["iteration,primal,dual"]
    lines += [f"{i + 1},{p:.17g},{d:.17g}" for i, (p, d) in enumerate(history)]
    return "\n".join(lines) + "\n"


def _diff(u: ScalarField, v: ScalarField) -> dict:
    g = u.grid
    d = (u.values - v.values)[g.interior]
    return {"sup": float(np.max(np.abs(d), initial=0.0)),
            "l2": float(np.sqrt(g.cell_volume * np.sum(d * d)))}


def _mask_field(u: ScalarField, problem) -> ScalarField:
    sets = active_sets(u, problem)
    vals = np.where(u.grid.active, 0.0, np.nan)
    vals[sets.lower] = -1.0
    vals[sets.upper] = 1.0
    return ScalarField(u.grid, vals)


class _Timer:
    def __init__(self):
        self.times = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.times[name] = time.perf_counter() - self.t

        return _Ctx()


def _scalar_run(spec: ProblemSpec, report, contracts, fields, logs, timer):
    h = spec.h
    opts = spec.solver
    metric = spec.body.polar_body
    with timer("distance"):
        dist = spec.distance
    fields["distance"] = dist
    primary = None
    u_obs = u_grad = None
    if spec.formulation in ("obstacle", "both"):
        prob = spec.obstacle_problem()
        with timer("obstacle"):
            u_obs, st = psor_solve(prob, opts.omega, opts.tol, opts.max_sweeps)
        sets = active_sets(u_obs, prob)
        lo, hi = prob.lower.values, prob.upper.values
        inside = spec.grid.interior
        report["obstacle"] = {
            "stats": st.to_dict(),
            "kkt": kkt_residuals(u_obs, prob, sets),
            "feasibility": feasibility_profile(u_obs, spec.body, spec.k),
            "lipschitz_excess": lipschitz_excess(u_obs, metric, spec.k),
        }
        contracts["obstacle_converged"] = st.converged
        contracts["obstacle_bounds"] = bool(
            np.all(u_obs.values[inside] >= lo[inside] - 1e-12)
            and np.all(u_obs.values[inside] <= hi[inside] + 1e-12))
        contracts["obstacle_lipschitz"] = report["obstacle"]["lipschitz_excess"] <= LIPSCHITZ_FACTOR * h * h
        fields["u_obstacle"] = u_obs
        fields["active_sets"] = _mask_field(u_obs, prob)
        primary = u_obs
    if spec.formulation in ("gradient", "both"):
        with timer("gradient"):
            u_grad, st = admm_solve(spec.gradient_problem(), opts.rho, opts.admm_tol, opts.max_iters)
        prof = feasibility_profile(u_grad, spec.body, spec.k)
        report["gradient"] = {
            "stats": st.to_dict(),
            "feasibility": prof,
            "lipschitz_excess": lipschitz_excess(u_grad, metric, spec.k),
        }
        contracts["gradient_converged"] = st.converged
        contracts["gradient_feasible"] = prof["max_ratio"] * spec.k <= spec.k + 10 * opts.admm_tol
        contracts["gradient_lipschitz"] = report["gradient"]["lipschitz_excess"] <= LIPSCHITZ_FACTOR * h * h
        fields["u_gradient"] = u_grad
        logs["admm_residuals"] = st.history
        if primary is None:
            primary = u_grad
    if u_obs is not None and u_grad is not None:
        d = _diff(u_grad, u_obs)
        d["tolerance"] = EQUIVALENCE_FACTOR * h
        report["equivalence"] = d
        contracts["equivalence"] = d["sup"] <= d["tolerance"]
    params = bound_params(spec.body, spec.k, spec.c, spec.eta, seed=spec.seed)
    reg = bound_profile(primary, dist, params)
    report["regularity"] = {"params": params.to_dict(), **reg.to_dict()}
    fields["regularity_ratio"] = reg.ratio


def _vector_run(spec: ProblemSpec, report, contracts, fields, logs, timer):
    h = spec.h
    opts = spec.solver
    vp = spec.vector_problem()
    red = reduce_to_scalar(vp, spec)
    prob = red.obstacle_problem()
    with timer("reduced"):
        u, st = psor_solve(prob, opts.omega, opts.tol, opts.max_sweeps)
    V = assemble_vector(u, vp.eta)
    eta2 = float(vp.eta @ vp.eta)
    I = vector_energy(V, vp.eta)
    J = scalar_energy_j1(u)
    ident = abs(I - eta2 * J) / max(abs(I), 1e-300) if I != 0 else abs(eta2 * J)
    rng = np.random.default_rng(spec.seed)
    inv = [invariance_check(V, vp.eta, random_orthogonal_fixing(vp.eta, rng)) for _ in range(N_ROTATIONS)]
    inv_rel = max(inv) / abs(I) if I != 0 else max(inv)
    k1 = k1_feasibility(V, vp.body)
    report["vector"] = {
        "reduced_stats": st.to_dict(),
        "energy_vector": I,
        "energy_scalar_j1": J,
        "energy_identity_relative": ident,
        "invariance_relative_max": inv_rel,
        "k1_assembled": k1,
    }
    contracts["reduced_converged"] = st.converged
    contracts["energy_identity"] = ident <= 1e-10
    contracts["invariance"] = inv_rel <= 1e-10
    contracts["k1_assembled"] = k1["max"] <= 1 + 10 * h
    fields["u_scalar"] = u
    fields["v_assembled"] = V
    if isinstance(vp.body, EuclideanBall):
        with timer("direct"):
            D, dst = direct_vector_solve(vp, opts.admm_tol, opts.max_iters, opts.rho)
        g = D.grid
        sup = float(np.max(np.abs(D.values - V.values)[g.interior], initial=0.0))
        ang = collinearity_angles(D, vp.eta)
        k1d = k1_feasibility(D, vp.body)
        report["vector"]["direct"] = {
            "stats": dst.to_dict(),
            "sup_diff": sup,
            "tolerance": EQUIVALENCE_FACTOR * h,
            "max_angle": float(ang.max(initial=0.0)),
            "k1_direct": k1d,
        }
        contracts["direct_converged"] = dst.converged
        contracts["direct_agreement"] = sup <= EQUIVALENCE_FACTOR * h
        contracts["collinearity"] = float(ang.max(initial=0.0)) <= 10 * h
        contracts["k1_direct"] = k1d["max"] <= 1 + 10 * opts.admm_tol
        fields["v_direct"] = D
        logs["direct_residuals"] = dst.history
    params = bound_params(red.body, red.k, 0.0, red.eta, seed=spec.seed)
    reg = bound_profile(u, red.distance, params)
    report["regularity"] = {"params": params.to_dict(), **reg.to_dict()}
    fields["regularity_ratio"] = reg.ratio


def run(spec: ProblemSpec, out: str | Path | None = None) -> RunResult:
    """Solve ``spec``, evaluate every contract and (if ``out``) write artifacts."""
    timer = _Timer()
    t0 = time.perf_counter()
    key = spec_hash(spec)
    g = spec.grid
    report = {"spec": spec.to_dict(), "hash": key,
              "grid": {"dims": list(g.dims), "h": g.h, "n_interior": g.n_interior}}
    contracts, fields, logs = {}, {}, {}
    if spec.formulation == "vector":
        _vector_run(spec, report, contracts, fields, logs, timer)
    else:
        _scalar_run(spec, report, contracts, fields, logs, timer)
    contracts = {k: bool(v) for k, v in contracts.items()}
    report["contracts"] = contracts
    report["ok"] = all(contracts.values())
    timer.times["total"] = time.perf_counter() - t0
    directory = None
    if out is not None:
        directory = Path(out) / key
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "spec.json").write_text(_dump(spec.to_dict()))
        (directory / "report.json").write_text(_dump(report))
        for name, f in fields.items():
            export_field(f, directory / f"{name}.csv")
        for name, hist in logs.items():
            (directory / f"{name}.csv").write_text(_residual_csv(hist))
        (directory / "timing.json").write_text(_dump({"wall_clock_seconds": timer.times}))
    return RunResult(_clean(report), report["ok"], directory, timer.times)


def regularity_study(spec: ProblemSpec, h_list, out: str | Path | None = None) -> RunResult:
    """Refinement table of the interior second-difference ratio.

    Scalar specs use the obstacle solver; vector specs use the reduced
    scalar problem.  The contract is a relative change of the interior
    maximum ratio of at most 15% per refinement step.
    """
    rows = []
    params = None
    for h in h_list:
        s = spec.with_h(h)
        if spec.formulation == "vector":
            s = reduce_to_scalar(s.vector_problem(), s)
        if params is None:
            params = bound_params(s.body, s.k, s.c, s.eta, seed=spec.seed)
        u, st = psor_solve(s.obstacle_problem(), s.solver.omega, s.solver.tol, s.solver.max_sweeps)
        rep = bound_profile(u, s.distance, params).to_dict()
        rep["converged"] = st.converged
        rep["inv_h2"] = 1.0 / h**2
        rows.append(rep)
    for a, b in zip(rows, rows[1:]):
        prev = a["max_ratio_interior"]
        b["relative_change"] = abs(b["max_ratio_interior"] - prev) / prev if prev > 0 else 0.0
    ok = all(r["converged"] for r in rows) and all(
        r.get("relative_change", 0.0) <= REGULARITY_STEP_CHANGE for r in rows)
    report = {"spec": spec.to_dict(), "hash": spec_hash(spec), "params": params.to_dict(),
              "table": rows, "ok": ok}
    directory = None
    if out is not None:
        directory = Path(out) / spec_hash(spec)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "regularity.json").write_text(_dump(report))
    return RunResult(_clean(report), ok, directory)


def distance_only(spec: ProblemSpec, out: str | Path | None = None) -> RunResult:
    dist = spec.distance
    vals = dist.values[spec.grid.interior]
    report = {"spec": spec.to_dict(), "hash": spec_hash(spec),
              "max_distance": float(vals.max(initial=0.0)), "n_interior": int(vals.size), "ok": True}
    directory = None
    if out is not None:
        directory = Path(out) / spec_hash(spec)
        directory.mkdir(parents=True, exist_ok=True)
        export_field(dist, directory / "distance.csv")
        (directory / "distance.json").write_text(_dump(report))
    return RunResult(_clean(report), True, directory)

