"""One test per acceptance criterion, at the stated tolerances.

Each test prints a single PASS/FAIL line (collected in the terminal summary)
before asserting.  Expensive solves are shared through module fixtures.
"""
import time

import numpy as np
import pytest

from gradvi.config import spec_from_dict
from gradvi.domain import Disk, Interval, Rectangle
from gradvi.gauge import (Box, CrossPolytope, EuclideanBall, PNormBall, Polytope, duality_gap,
                          pnorm_B_constant, polar, second_difference_gauge)
from gradvi.gradient import admm_solve, feasibility_profile, lipschitz_excess
from gradvi.obstacle import active_sets, psor_solve
from gradvi.problem import ProblemSpec
from gradvi.projections import project_onto
from gradvi.runner import distance_only, regularity_study, run
from gradvi.vector import (VectorProblem, assemble_vector, collinearity_angles, direct_vector_solve,
                           invariance_check, k1_feasibility, random_orthogonal_fixing,
                           reduce_to_scalar, scalar_energy_j1, vector_energy)

import oracles

SHAPES = {"interval": Interval(-1.0, 1.0), "square": Rectangle((0.0, 0.0), (1.0, 1.0)),
          "disk": Disk((0.5, 0.5), 0.5)}


def body_family(name, n):
    return {"ball": EuclideanBall(1.0, n), "box": Box((1.0,) * n), "pball3": PNormBall(3.0, 1.0, n)}[name]


@pytest.fixture(scope="module")
def equivalence_runs():
    """The 9-case matrix at h = 1/128, eta = 4, solved by both formulations."""
    out = {}
    t0 = time.perf_counter()
    for sname, shape in SHAPES.items():
        for bname in ("ball", "box", "pball3"):
            spec = ProblemSpec(shape, body_family(bname, shape.dimension), "both", eta=4.0, h=1 / 128)
            o = spec.solver
            u_o, st_o = psor_solve(spec.obstacle_problem(), o.omega, o.tol, o.max_sweeps)
            u_g, st_g = admm_solve(spec.gradient_problem(), o.rho, o.admm_tol, o.max_iters)
            out[(sname, bname)] = (spec, u_o, st_o, u_g, st_g)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def vector_run():
    spec = ProblemSpec(SHAPES["square"], EuclideanBall(1.0, 2), "vector", eta=(3.0, 4.0), h=1 / 64)
    vp = spec.vector_problem()
    red = reduce_to_scalar(vp, spec)
    u, st_u = psor_solve(red.obstacle_problem(), red.solver.omega, red.solver.tol, red.solver.max_sweeps)
    v, st_v = direct_vector_solve(vp, spec.solver.admm_tol, spec.solver.max_iters, spec.solver.rho)
    return spec, vp, u, st_u, v, st_v


def test_criterion_1_torsion_free_boundary(acceptance_line):
    h = 1 / 512
    spec = ProblemSpec(Interval(-1.0, 1.0), Box((1.0,)), "obstacle", eta=4.0, h=h)
    psor_solve(ProblemSpec(Interval(-1.0, 1.0), Box((1.0,)), "obstacle", eta=4.0, h=1 / 16)
               .obstacle_problem())  # compile before timing
    t0 = time.perf_counter()
    problem = spec.obstacle_problem()
    u, stats = psor_solve(problem)
    elapsed = time.perf_counter() - t0
    x = spec.grid.coordinates()[..., 0]
    inside = spec.grid.interior
    err = float(np.max(np.abs(u.values - oracles.torsion_1d(x, 4.0))[inside]))
    plastic = active_sets(u, problem).upper & (x > 0)
    x_free = float(x[plastic].min())
    passed = stats.converged and err <= 2e-3 and abs(x_free - 0.25) <= 2 * h and elapsed < 5.0
    acceptance_line(1, "1-D torsion vs analytic", passed,
                    f"sup err {err:.2e} (<=2e-3), free boundary {x_free:.5f} "
                    f"(|x-0.25|={abs(x_free - 0.25):.2e} <= {2 * h:.2e}), u(0)={u.values[x == 0][0]:.5f}, "
                    f"{elapsed:.2f}s (<5s)")
    assert passed


def test_criterion_2_scalar_equivalence(acceptance_line, equivalence_runs):
    runs, elapsed = equivalence_runs
    worst = 0.0
    failures = []
    for key, (spec, u_o, st_o, u_g, st_g) in runs.items():
        diff = float(np.max(np.abs(u_o.values - u_g.values)[spec.grid.interior]))
        worst = max(worst, diff / spec.h)
        if not (st_o.converged and st_g.converged and diff <= 5 * spec.h):
            failures.append("/".join(key))
    passed = not failures and elapsed < 600
    acceptance_line(2, "scalar equivalence, 9 cases", passed,
                    f"max sup diff {worst:.2e}*h (<=5h), all converged={not failures}, "
                    f"{elapsed:.0f}s (<600s)" + (f", failing {failures}" if failures else ""))
    assert passed


def test_criterion_3_vector_reduction(acceptance_line, vector_run):
    spec, vp, u, st_u, v, st_v = vector_run
    h = spec.h
    assembled = assemble_vector(u, vp.eta)
    diff = float(np.max(np.abs(v.values - assembled.values)[spec.grid.interior]))
    angle = float(np.max(collinearity_angles(v, vp.eta, threshold=0.01)))
    I = vector_energy(assembled, vp.eta)
    J = scalar_energy_j1(u)
    rel = abs(I - float(vp.eta @ vp.eta) * J) / abs(I)
    passed = st_u.converged and st_v.converged and diff <= 5 * h and angle <= 10 * h and rel <= 1e-10
    acceptance_line(3, "vector reduction", passed,
                    f"sup diff {diff:.2e} (<={5 * h:.2e}), max angle {angle:.2e} rad (<={10 * h:.2e}), "
                    f"energy identity rel {rel:.1e} (<=1e-10)")
    assert passed


def test_criterion_4_orthogonal_invariance(acceptance_line, vector_run):
    spec, vp, u, _, v, _ = vector_run
    rng = np.random.default_rng(spec.seed)
    base = abs(vector_energy(v, vp.eta))
    worst = max(invariance_check(v, vp.eta, random_orthogonal_fixing(vp.eta, rng)) / base
                for _ in range(20))
    passed = worst <= 1e-10
    acceptance_line(4, "orthogonal invariance, 20 maps", passed, f"max relative change {worst:.1e} (<=1e-10)")
    assert passed


def test_criterion_5_regularity_refinement(acceptance_line):
    square = ProblemSpec(SHAPES["square"], EuclideanBall(1.0, 2), "obstacle", eta=8.0, h=1 / 64)
    torsion = ProblemSpec(Interval(-1.0, 1.0), EuclideanBall(1.0, 1), "obstacle", eta=4.0, h=1 / 64)
    cases = [("square/ball eta=8", square, [1 / 64, 1 / 128]),
             ("1-D torsion", torsion, [1 / 64, 1 / 128, 1 / 256])]
    details = []
    passed = True
    for label, spec, hs in cases:
        res = regularity_study(spec, hs)
        rows = res.report["table"]
        changes = [r["relative_change"] for r in rows[1:]]
        growth = [b["inv_h2"] / a["inv_h2"] for a, b in zip(rows, rows[1:])]
        passed &= res.ok and all(c <= 0.15 for c in changes) and all(g == 4.0 for g in growth)
        details.append(f"{label}: ratios " + "/".join(f"{r['max_ratio_interior']:.3f}" for r in rows)
                       + " changes " + "/".join(f"{c:.1%}" for c in changes))
    acceptance_line(5, "bounded second differences under refinement", passed,
                    "; ".join(details) + " (<=15%, h^-2 x4 per step)")
    assert passed


def test_criterion_6_pnorm_second_difference(acceptance_line):
    rng = np.random.default_rng(0)
    worst = -np.inf
    total = 0
    for p in (2.0, 3.0, 4.0, 6.0):
        for n in (2, 3):
            body = PNormBall(p, 1.0, n)
            m = 10_000
            x = rng.standard_normal((m, n)) * rng.uniform(0.1, 10.0, (m, 1))
            z = rng.standard_normal((m, n))
            z /= body.gauge(z)[:, None]
            gx = body.gauge(x)
            hs = gx * rng.uniform(1e-3, 1.0 - 1e-9, m)
            d2 = second_difference_gauge(body, x, z, hs)
            excess = d2 * (gx - hs) - pnorm_B_constant(p)
            worst = max(worst, float(excess.max()))
            total += int(np.sum(excess > 1e-9))
    passed = total == 0
    acceptance_line(6, "p-norm second-difference bound", passed,
                    f"{total} violations in 8x10^4 triples, max (gauge-h)*D2 - 2(p-1) = {worst:.2e}")
    assert passed


def test_criterion_7_gauge_layer(acceptance_line, frozen):
    families = {
        "ball": EuclideanBall(1.3, 2), "pball3": PNormBall(3.0, 0.8, 2), "pball1.5": PNormBall(1.5, 1.0, 2),
        "box": Box((1.0, 0.5)), "cross": CrossPolytope(2.0, 2), "hexagon": Polytope.regular(6, 1.0, 0.2),
        "skew_hexagon": Polytope.symmetric([[1.0, 0.0], [0.3, 1.0], [-0.6, 1.0]], [1.0, 0.8, 1.3]),
        "ball3d": EuclideanBall(1.0, 3), "pball4_3d": PNormBall(4.0, 1.0, 3),
    }
    rng = np.random.default_rng(0)
    dual = bip = idem = 0.0
    for b in families.values():
        x = rng.standard_normal((10_000, b.dimension))
        y = rng.standard_normal((10_000, b.dimension))
        dual = min(dual, float(duality_gap(b, x, y).min()))
        bip = max(bip, float(np.max(np.abs(polar(polar(b)).gauge(x) - b.gauge(x)) / b.gauge(x))))
        p = project_onto(3 * y, b)
        idem = max(idem, float(np.max(np.abs(project_onto(p, b) - p))))
    d = frozen["hexagon_projection"]
    hexagon = Polytope.symmetric(d["normals"], d["offsets"])
    dyk = float(np.max(np.abs(project_onto(np.array(d["points"]), hexagon, d["k"]) - np.array(d["projections"]))))
    passed = dual >= -1e-12 and bip <= 1e-10 and idem <= 1e-12 and dyk <= 1e-4
    acceptance_line(7, "gauge layer", passed,
                    f"min duality gap {dual:.1e} (>=0), bipolar {bip:.1e} (<=1e-10), "
                    f"idempotence {idem:.1e} (<=1e-12), Dykstra vs lattice oracle {dyk:.1e} (<=1e-4)")
    assert passed


def test_criterion_8_feasibility_and_lipschitz(acceptance_line, equivalence_runs, vector_run):
    runs, _ = equivalence_runs
    spec_v, vp, _, _, v, _ = vector_run
    cell_fail, lip_fail = [], []
    worst = {"obstacle": 0.0, "gradient": 0.0}
    for key, (spec, u_o, _, u_g, _) in runs.items():
        o = spec.solver
        for kind, u, tol in (("obstacle", u_o, o.tol), ("gradient", u_g, o.admm_tol)):
            ratio = feasibility_profile(u, spec.body, spec.k)["max_ratio"]
            worst[kind] = max(worst[kind], ratio * spec.k - spec.k)
            if ratio * spec.k > spec.k + 10 * tol:
                cell_fail.append(f"{kind}:{'/'.join(key)}({ratio - 1:+.1e})")
            if lipschitz_excess(u, spec.body.polar_body, spec.k) > 5 * spec.h**2:
                lip_fail.append(f"{kind}:{'/'.join(key)}")
    k1 = k1_feasibility(v, vp.body)["max"]
    if k1 > 1 + 10 * spec_v.solver.admm_tol:
        cell_fail.append(f"vector({k1 - 1:+.1e})")
    passed = not cell_fail and not lip_fail
    acceptance_line(8, "per-cell feasibility and neighbour Lipschitz bound", passed,
                    f"max cell excess: gradient {worst['gradient']:.1e}, obstacle {worst['obstacle']:.1e}, "
                    f"vector {k1 - 1:.1e} (<=10*tol); Lipschitz failures {lip_fail or 'none'}"
                    + (f"; cell failures {cell_fail}" if cell_fail else ""))
    assert passed


def test_criterion_9_determinism(acceptance_line, tmp_path):
    base = {"domain": {"kind": "disk", "center": [0.5, 0.5], "radius": 0.5},
            "body": {"family": "pball", "p": 3}, "h": "1/32"}
    specs = [spec_from_dict({**base, "eta": 6.0}),
             spec_from_dict({**base, "eta": 4.0, "zero_order": {"kind": "power", "coefficient": 1, "exponent": 2}}),
             spec_from_dict({**base, "body": {"family": "ball"}, "eta": [1.0, -2.0, 0.5]}),
             spec_from_dict({**base, "domain": {"kind": "interval", "a": -1, "b": 1},
                             "body": {"family": "ball"}, "eta": 4.0})]
    mismatched = []
    n_files = 0
    for i, spec in enumerate(specs):
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / rep
            dirs.append(run(spec, out).directory)
            distance_only(spec, out)
            if spec.domain.dimension == 1:
                regularity_study(spec, [1 / 32, 1 / 64], out)
        a, b = dirs
        names = sorted(p.name for p in a.iterdir() if p.name != "timing.json")
        if names != sorted(p.name for p in b.iterdir() if p.name != "timing.json"):
            mismatched.append(f"spec{i}: file sets differ")
        for name in names:
            n_files += 1
            if (a / name).read_bytes() != (b / name).read_bytes():
                mismatched.append(f"spec{i}:{name}")
    passed = not mismatched
    acceptance_line(9, "byte-identical artifacts", passed,
                    f"{n_files} artifacts over {len(specs)} specs compared"
                    + (f"; differing {mismatched}" if mismatched else ", all identical"))
    assert passed
