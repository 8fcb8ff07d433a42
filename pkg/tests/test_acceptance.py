"""Acceptance criteria, each at its stated scale and tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line per
criterion as it completes; the lines are repeated in the terminal summary.
The desk-scale Monte Carlo work (1000 loops of 2e5 points, both geometries)
is shared by criteria 3 to 5.
"""
import math

import numpy as np
import pytest
from scipy import integrate

from worldline_casimir.cli import main
from worldline_casimir.estimator import (compute_observables, fit_power_law,
                                         results_from_observables)
from worldline_casimir.geometry import GeometryKind
from worldline_casimir.loopgen import LoopEnsemble, generate_unit_loop, loop_rng
from worldline_casimir.reference import (ZETA3, parallel_ratio_analytic, room_temperature_aT)
from worldline_casimir.thermal import g3, g5_2, winding_sum

pytestmark = pytest.mark.slow

DESK_LOOPS, DESK_POINTS, DESK_XI, DESK_SEED = 1000, 200_000, 128, 1234
FIT_GRID = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]


# --- 1. loop measure ---------------------------------------------------------------

@pytest.fixture(scope="module")
def measure_samples():
    n_loops, n_points = 10_000, 200_000
    taus = [0.25, 0.5, 0.75]
    idx = [round(t * n_points) for t in taus]
    ext = np.empty(n_loops)
    disp = np.empty((n_loops, len(idx)))
    for k in range(n_loops):
        z = generate_unit_loop(n_points, loop_rng(7, k)).points[:, 2]
        ext[k] = z.max() - z.min()
        disp[k] = z[idx] - z[0]
    return ext, disp


def test_c1_loop_measure(measure_samples, acceptance):
    ext, disp = measure_samples
    n = ext.size
    details, ok = [], True

    mean_l, se_l = ext.mean(), ext.std(ddof=1) / math.sqrt(n)
    target = math.sqrt(math.pi)
    good = abs(mean_l - target) <= max(3 * se_l, 0.01 * target)
    ok &= good
    details.append(f"<l>={mean_l:.5f} (target {target:.5f})")

    l4 = ext**4
    mean_l4, se_l4 = l4.mean(), l4.std(ddof=1) / math.sqrt(n)
    target4 = 2 * math.pi**4 / 15
    good = abs(mean_l4 - target4) <= max(3 * se_l4, 0.02 * target4)
    ok &= good
    details.append(f"<l^4>={mean_l4:.4f} (target {target4:.4f})")

    # displacements from the first point form a bridge with variance 2 per unit time
    for i, j, t1, t2 in [(0, 1, 0.25, 0.5), (1, 2, 0.5, 0.75)]:
        a, b = disp[:, i], disp[:, j]
        prod = (a - a.mean()) * (b - b.mean())
        cov, se = prod.mean(), prod.std(ddof=1) / math.sqrt(n)
        good = abs(cov - 2 * t1 * (1 - t2)) <= 3 * se
        ok &= good
        details.append(f"cov({t1},{t2})={cov:.4f}+-{se:.4f} (target {2 * t1 * (1 - t2):.4f})")
    acceptance("C1 loop measure", ok, "; ".join(details))


# --- 2. kernel oracles ---------------------------------------------------------------

def _quad(power, c, l):
    f = lambda t: t**-power * math.exp(-c / t)
    return integrate.quad(f, 1.0 / l**2, np.inf, epsabs=0, epsrel=1e-13, limit=400)[0]


def test_c2_kernel_oracles(acceptance):
    worst = 0.0
    for l in [0.5, 1.0, 2.0, 4.0]:
        for c in [0.01, 1.0, 100.0]:
            worst = max(worst, abs(g3(c, l) / _quad(3, c, l) - 1),
                        abs(g5_2(c, l) / _quad(2.5, c, l) - 1))
    jacobi = max(abs(winding_sum(c) - math.sqrt(math.pi / c) * winding_sum(math.pi**2 / c))
                 for c in (0.1, 1.0, 10.0))
    acceptance("C2 kernel oracles", worst <= 1e-10 and jacobi <= 1e-12,
               f"max rel quadrature error {worst:.2e} (limit 1e-10), "
               f"Jacobi residual {jacobi:.2e} (limit 1e-12)")


# --- 3 to 5. desk-scale Monte Carlo ----------------------------------------------------

@pytest.fixture(scope="module")
def desk_observables():
    ens = LoopEnsemble(count=DESK_LOOPS, n_points=DESK_POINTS, seed=DESK_SEED)
    return compute_observables(ens, list(GeometryKind), DESK_XI)


def test_c3_parallel_curve(desk_observables, acceptance):
    grid = [0.1, 0.25, 0.5, 0.75, 1.0]
    res = results_from_observables(desk_observables[GeometryKind.PARALLEL], grid)
    pulls = [(r.ratio.mean - parallel_ratio_analytic(r.aT)) / r.ratio.stderr for r in res]
    worst = max(abs(p) for p in pulls)
    acceptance("C3 parallel-plate curve", worst <= 3,
               "pulls " + ", ".join(f"{t}:{p:+.2f}" for t, p in zip(grid, pulls))
               + f"; max |pull| {worst:.2f} (limit 3)")


def test_c4_low_temperature_laws(desk_observables, acceptance):
    perp = results_from_observables(desk_observables[GeometryKind.PERPENDICULAR], FIT_GRID)
    par = results_from_observables(desk_observables[GeometryKind.PARALLEL], FIT_GRID)
    c_perp, a_perp = fit_power_law(FIT_GRID, [r.shift for r in perp])
    c_par, a_par = fit_power_law(FIT_GRID, [r.shift for r in par])
    c_perp_ref, c_par_ref = ZETA3 / (4 * math.pi), math.pi**2 / 90
    ok = (abs(a_perp - 3) <= 0.3 and abs(c_perp / c_perp_ref - 1) <= 0.15
          and abs(a_par - 4) <= 0.3 and abs(c_par / c_par_ref - 1) <= 0.15)
    acceptance("C4 low-temperature power laws", ok,
               f"perpendicular alpha={a_perp:.3f} C={c_perp:.5f} ({c_perp / c_perp_ref - 1:+.1%}); "
               f"parallel alpha={a_par:.3f} C={c_par:.5f} ({c_par / c_par_ref - 1:+.1%})")


def test_c5_open_vs_closed(desk_observables, acceptance):
    aT = room_temperature_aT(1.5e-6, 300.0)
    (perp,) = results_from_observables(desk_observables[GeometryKind.PERPENDICULAR], [aT])
    (par,) = results_from_observables(desk_observables[GeometryKind.PARALLEL], [aT])
    d_perp, d_par = perp.ratio.mean - 1, par.ratio.mean - 1
    ok = abs(d_perp - 0.06) <= 0.02 and abs(d_par - 0.007) <= 0.003 and d_perp >= 5 * d_par
    acceptance("C5 open vs closed geometry", ok,
               f"aT={aT:.4f}: perpendicular {d_perp:.4f}, parallel {d_par:.4f}, "
               f"factor {d_perp / d_par:.1f}")


# --- 6. determinism ---------------------------------------------------------------------

def test_c6_determinism(tmp_path, acceptance):
    common = ["--loops", "24", "--points", "5000", "--seed", "99"]
    ens = tmp_path / "e.wlge"
    gen = [main(["gen", *common, "--out", str(p)]) for p in (ens, tmp_path / "e2.wlge")]
    outputs = []
    for name, workers in [("a", "1"), ("b", "1"), ("c", "2"), ("d", "4")]:
        out = tmp_path / f"{name}.csv"
        rc = main(["run", "--geometry", "both", "--ensemble", str(ens), "--at-list",
                   "0,0.1,0.196,0.5", "--workers", workers, "--out", str(out)])
        outputs.append((rc, out.read_bytes()))
    lazy = tmp_path / "lazy.csv"
    main(["run", "--geometry", "both", *common, "--at-list", "0,0.1,0.196,0.5",
          "--out", str(lazy)])
    ok = (gen == [0, 0] and ens.read_bytes() == (tmp_path / "e2.wlge").read_bytes()
          and all(rc == 0 and data == outputs[0][1] for rc, data in outputs)
          and lazy.read_bytes() == outputs[0][1])
    acceptance("C6 determinism", ok,
               "gen twice, run with 1/1/2/4 workers and from lazy generation: byte-identical")
