"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Tolerances and budgets are pinned here; nothing is deferred to calibration.
Run as `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import time
import warnings

import numpy as np
import pytest

from spdelab import constants as renorm
from spdelab.bony import bony_decompose, grid_product
from spdelab.experiments import (
    Burgers1DSpec,
    ExperimentSpec,
    exp_burgers,
    exp_linear_convergence,
    exp_second_chaos,
    exp_sum_bound,
)
from spdelab.fields import NoiseSpec, mc_covariance
from spdelab.hierarchy import (
    OperatorSet,
    SolverConfig,
    Trajectory,
    energy,
    mild_residual,
    run_hierarchy,
    sample_linear_trajectory,
    solve_K,
    solve_level2,
    solve_level3,
    taylor_green,
)
from spdelab.schemes import SchemeSpec, leray_project
from spdelab.torus import (
    ModeLattice,
    VectorField,
    dft_forward,
    dft_inverse,
    random_scalar_field,
    random_vector_field,
)


def report(num: int, label: str, ok: bool, detail: str, elapsed: float, budget: float):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"[{status}] criterion {num}: {label} ({detail}; {elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"criterion {num} failed: {detail}"
    assert elapsed < budget, f"criterion {num} exceeded runtime budget ({elapsed:.1f}s)"


def test_criterion_1_spectral_identities():
    t0 = time.perf_counter()
    lat = ModeLattice(8)
    part_defect = lat.partition().unity_defect()

    rng = np.random.default_rng(101)
    u = random_scalar_field(lat, rng)
    f = random_scalar_field(lat, rng)
    tri = bony_decompose(u, f)
    prod = grid_product(u, f)
    bony_defect = float(np.max(np.abs(tri.total().coeff - prod.coeff)))

    v = random_vector_field(lat, rng)
    p1 = leray_project(v)
    p2 = leray_project(p1)
    leray_defect = float(np.max(np.abs(p2.coeff - p1.coeff)))

    g = u.to_grid()
    back = dft_forward(lat, g)
    rt = float(np.max(np.abs(back - u.coeff)) / np.max(np.abs(u.coeff)))

    ok = part_defect < 1e-12 and bony_defect < 1e-10 and leray_defect < 1e-14 and rt < 1e-10
    detail = (
        f"partition {part_defect:.1e}, bony {bony_defect:.1e}, "
        f"leray {leray_defect:.1e}, roundtrip {rt:.1e}"
    )
    report(1, "spectral identities", ok, detail, time.perf_counter() - t0, 10.0)


def test_criterion_2_covariance_reproduction():
    t0 = time.perf_counter()
    lattice = ModeLattice(8)
    scheme = SchemeSpec(eps=1 / 8).finalize()
    spec = NoiseSpec(seed=2202, dt=0.05, T=1.0, lattice=lattice, scheme=scheme)
    modes = [
        (1, 0, 0), (0, 1, 0), (1, 1, 0), (2, 0, 0), (2, 1, 0), (2, 2, 1),
        (3, 0, 0), (0, 3, 3), (4, 2, 1), (5, 0, 0), (4, 4, 4), (6, 3, 0),
        (7, 1, 1), (8, 0, 0), (0, 8, 8), (8, 8, 8),
    ]
    n_ok = n_tot = 0
    for k in modes:
        for pair in ("uu", "ub", "bb"):
            for kind in ("approx", "cont", "cross"):
                est = mc_covariance(spec, k, pair, kind, samples=10_000)
                gap = np.abs(est.estimate - est.closed_form)
                within = gap <= 3.0 * np.maximum(est.stderr, 1e-300)
                n_ok += int(np.sum(within))
                n_tot += within.size
    frac = n_ok / n_tot
    report(
        2, "covariance reproduction", frac >= 0.95,
        f"{frac:.2%} of {n_tot} (k, entry) pairs within 3 sigma",
        time.perf_counter() - t0, 120.0,
    )


def test_criterion_3_constant_algebra():
    t0 = time.perf_counter()
    scheme = SchemeSpec(eps=1 / 8, a=1.0, b=0.0).finalize()
    N_sat = int(np.ceil(scheme.L0 / (2 * scheme.eps)))
    lat = ModeLattice(N_sat)
    t = 1.0
    rel_gap = 0.0
    for (a, b) in (((1, "u"), (4, "b")), ((1, "b"), (4, "u")),
                   ((2, "u"), (3, "b")), ((3, "u"), (2, "b"))):
        va = renorm.ck(a[0], a[1], t, scheme, lat)
        vb = renorm.ck(b[0], b[1], t, scheme, lat)
        rel_gap = max(rel_gap, float(np.max(np.abs(va - vb))))
    for (a, b, s) in (((1, "u"), (4, "b"), -1.0), ((2, "u"), (3, "b"), -1.0),
                      ((1, "b"), (2, "b"), 1.0), ((3, "u"), (4, "u"), 1.0)):
        va = renorm.ck_tilde(a[0], a[1], t, scheme, lat)
        vb = renorm.ck_tilde(b[0], b[1], t, scheme, lat)
        rel_gap = max(rel_gap, float(np.max(np.abs(va - s * vb))))

    bar_worst = imag_worst = 0.0
    for k in (1, 2, 3, 4):
        for fl in ("u", "b"):
            bar_worst = max(
                bar_worst,
                float(np.max(np.abs(renorm.ck(k, fl, t, scheme, lat, bar=True)))),
                float(np.max(np.abs(renorm.ck_tilde(k, fl, t, scheme, lat, bar=True)))),
            )
            imag_worst = max(
                imag_worst,
                renorm.imag_residue(renorm.ck(k, fl, t, scheme, lat)),
                renorm.imag_residue(renorm.ck_tilde(k, fl, t, scheme, lat)),
            )
    sat_gap = float(
        np.max(
            np.abs(
                renorm.ck(2, "u", t, scheme, lat)
                - renorm.ck(2, "u", t, scheme, ModeLattice(N_sat + 2))
            )
        )
    )
    ok = rel_gap < 1e-12 and bar_worst < 1e-12 and imag_worst < 1e-10 and sat_gap < 1e-12
    detail = (
        f"relations {rel_gap:.1e}, barred {bar_worst:.1e}, "
        f"imag {imag_worst:.1e}, saturation {sat_gap:.1e}"
    )
    report(3, "constant algebra", ok, detail, time.perf_counter() - t0, 60.0)


def test_criterion_4_limit_reproduction():
    t0 = time.perf_counter()
    # finite-difference profile with its companion indicator cutoff
    scheme = SchemeSpec(
        eps=1 / 32, a=1.0, b=0.0, h_kind_u="indicator", h_kind_b="indicator"
    ).finalize()
    lat = ModeLattice(96)
    gaps = {}
    for flavor in ("u", "b"):
        limit, err = renorm.ck2_limit(flavor, False, scheme, rtol=1e-4)
        lattice_val = renorm.ck(2, flavor, 1.0, scheme, lat).real
        gaps[flavor] = float(
            np.linalg.norm(lattice_val - limit) / np.linalg.norm(limit)
        )
    ok = all(g < 0.02 for g in gaps.values())
    detail = f"relative gaps C2u {gaps['u']:.3%}, C2b {gaps['b']:.3%}"
    report(4, "limit reproduction", ok, detail, time.perf_counter() - t0, 300.0)


def test_criterion_5_resonant_block_identity():
    t0 = time.perf_counter()
    lat = ModeLattice(4)
    scheme = SchemeSpec(eps=1.0, a=1.0, b=0.0).finalize()
    worst = 0.0
    for block in (1, 2, 3, 4):
        blk = renorm.c13_block(block, 1.0, scheme, lat)
        worst = max(worst, blk.identity_residual())
    report(
        5, "resonant-block identity", worst < 1e-10,
        f"max residual {worst:.2e}", time.perf_counter() - t0, 180.0,
    )


def test_criterion_6_linear_level_convergence():
    t0 = time.perf_counter()
    spec = ExperimentSpec(
        name="acc6",
        eps_schedule=(1 / 4, 1 / 8, 1 / 16),
        N=16,
        samples=512,
        seed=606,
        scheme=SchemeSpec(),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = exp_linear_convergence(spec)
    ok = fit.decreasing_pairwise(2.0) and fit.slope >= 0.2
    detail = (
        f"values {np.round(fit.values, 5).tolist()}, "
        f"sigmas {np.round(fit.sigmas, 6).tolist()}, slope {fit.slope:.3f}"
    )
    report(6, "linear-level convergence", ok, detail, time.perf_counter() - t0, 600.0)


def test_criterion_7_second_chaos_convergence():
    t0 = time.perf_counter()
    spec = ExperimentSpec(
        name="acc7",
        eps_schedule=(1 / 4, 1 / 8, 1 / 16),
        N=16,
        samples=512,
        seed=707,
        scheme=SchemeSpec(),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = exp_second_chaos(spec)
    ok = (
        res.wick.slope >= 0.2
        and res.wick.decreasing_endpoints(2.0)
        and res.ablation.slope < 0.05
    )
    detail = (
        f"wick {np.round(res.wick.values, 5).tolist()} slope {res.wick.slope:.3f}, "
        f"ablation slope {res.ablation.slope:.3f}"
    )
    report(7, "second-chaos convergence", ok, detail, time.perf_counter() - t0, 900.0)


def test_criterion_8_burgers_example():
    t0 = time.perf_counter()
    one = exp_burgers(Burgers1DSpec(scheme="one_sided"))
    cen = exp_burgers(Burgers1DSpec(scheme="central"))
    dec = all(a > b for a, b in zip(one.fit.values, one.fit.values[1:]))
    dec_c = all(a > b for a, b in zip(cen.fit.values, cen.fit.values[1:]))
    ok = dec and dec_c and 0.8 <= one.fit.slope <= 1.3 and 1.7 <= cen.fit.slope <= 2.3
    detail = f"one-sided order {one.fit.slope:.3f}, central order {cen.fit.slope:.3f}"
    report(8, "burgers example", ok, detail, time.perf_counter() - t0, 60.0)


def test_criterion_9_hierarchy_sanity():
    t0 = time.perf_counter()
    lat = ModeLattice(4)
    # deterministic zero-noise limit
    det_scheme = SchemeSpec(eps=0.5).finalize()
    cfg = SolverConfig(dt=1e-3, T=0.05, tol=1e-9)
    u0 = taylor_green(lat, 1.0)
    run = run_hierarchy(None, lat, det_scheme, cfg, "cont", u0, np.zeros_like(u0))
    y = run.assembled()
    div = max(VectorField(lat, y.u[n]).divergence_defect() for n in range(len(y.times)))
    es = [energy(y.u[n], y.b[n]) for n in range(len(y.times))]
    noninc = all(a >= b - 1e-12 for a, b in zip(es, es[1:]))
    picard_ok = run.report.converged and run.report.contracting()

    # mild residuals halve under dt halving (stochastic levels, shared noise)
    mixed = SchemeSpec(eps=1.0, a=1.0, b=0.0,
                       h_kind_u="smooth_bump", h_kind_b="indicator").finalize()
    fine = SolverConfig(dt=1e-3, T=0.02)
    coarse = SolverConfig(dt=2e-3, T=0.02)
    noise = NoiseSpec(seed=909, dt=fine.dt, T=fine.T, lattice=lat, scheme=mixed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        t1f = sample_linear_trajectory(noise, fine, "cont")
    t1c = Trajectory(t1f.times[::2], t1f.u[::2], t1f.b[::2])
    ops = OperatorSet("cont", mixed, lat)
    ratios = []
    for solver in ("level2", "level3", "K"):
        res = {}
        for tag, c, tr1 in (("fine", fine, t1f), ("coarse", coarse, t1c)):
            forcing = []
            if solver == "level2":
                traj = solve_level2(tr1, ops, c, forcing_out=forcing)
            elif solver == "level3":
                t2 = solve_level2(tr1, ops, c)
                traj = solve_level3(tr1, t2, ops, c, forcing_out=forcing)
            else:
                traj = solve_K(tr1, ops, c, forcing_out=forcing)
            res[tag] = mild_residual(traj, ops, forcing)
        ratios.append(res["coarse"] / res["fine"])
    resid_ok = all(1.4 <= r <= 2.6 for r in ratios)

    ok = div < 1e-12 and noninc and picard_ok and resid_ok
    detail = (
        f"div {div:.1e}, energy nonincreasing {noninc}, picard increments "
        f"{['%.1e' % x for x in run.report.increments]}, residual ratios "
        f"{np.round(ratios, 2).tolist()}"
    )
    report(9, "hierarchy sanity", ok, detail, time.perf_counter() - t0, 300.0)


def test_criterion_10_sum_bounds():
    t0 = time.perf_counter()
    rep = exp_sum_bound(l=2.0, m=2.0, N=24)
    rejected = False
    try:
        exp_sum_bound(l=1.0, m=1.5)
    except ValueError:
        rejected = True
    pair = rep.ratios["(4, 0, 0)"] / rep.ratios["(1, 0, 0)"]
    ok = rep.ratio_spread < 2.0 and rep.key_estimate_gap < 1e-6 and rejected and pair < 2.0
    detail = (
        f"ratio spread {rep.ratio_spread:.3f}, key-estimate gap "
        f"{rep.key_estimate_gap:.1e}, precondition rejected {rejected}"
    )
    report(10, "summation bounds", ok, detail, time.perf_counter() - t0, 30.0)
