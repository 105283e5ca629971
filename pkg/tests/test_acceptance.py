"""Acceptance criteria 1-11, each with its stated tolerance and runtime budget.

Every test carries a ``criterion`` marker; the conftest prints one PASS/FAIL
line per criterion at the end of the session.
"""
import time

import numpy as np
import pytest

from ecodyn.analysis import CYCLE, EQUILIBRIUM, Verdict, bifurcation_grid, detect_attractor, qssa_compare, relaxation_time
from ecodyn.equilibria import (
    Kind,
    coexistence_coefficients,
    delta_stab_closed_form,
    delta_stab_jacobian,
    equilibria_all,
    lambda_bounds,
    lambda_star,
    pf_coefficients,
    pf_discriminant,
    pf_eval,
    threshold_n,
)
from ecodyn.integrate import REGION_EXIT, IntegrationConfig, integrate
from ecodyn.model import Formulation, beta_star, region_bounds, rhs_full

from helpers import QSSA_SET, baseline, draw_coexisting, draw_params, interior_start


class Budget:
    """Wall-clock check against a criterion's runtime limit."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def note(request, text):
    request.node.user_properties.append(("detail", text))


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    # compile the numba kernels before any timed section
    p = baseline(immigration=1.0)
    for form, y in (("full", (10, 10, 10)), ("reduced", (10, 10)), ("compet", (10, -10, -10))):
        integrate(p, form, y, IntegrationConfig(t_end=1.0))
        integrate(p, form, y, IntegrationConfig(t_end=1.0, log_fauna=True))


def term_scale(p, y):
    """Sum of absolute terms of each full-system equation, the natural scale of its residual."""
    hd, fw, hw = y
    one_a = 1 - p.anthropisation
    return np.array(
        [
            p.immigration
            + abs(p.diet_fraction * p.hunting_rate * fw * hw)
            + abs((p.food_production - p.mortality) * hd)
            + p.mig_to_wild * hd
            + p.mig_to_domestic * hw,
            p.fauna_growth * one_a * (1 + p.human_boost * hw) * fw * (1 + fw / (one_a * p.carrying_capacity))
            + p.hunting_rate * fw * hw,
            p.mig_to_wild * hd + p.mig_to_domestic * hw,
        ]
    )


@pytest.mark.criterion(1, "equilibrium residuals below 1e-9 relative on 1000 draws")
def test_equilibrium_residuals(request):
    rng = np.random.default_rng(1001)
    worst = 0.0
    with Budget(5) as b:
        for _ in range(1000):
            p = draw_params(rng)
            for eq in equilibria_all(p):
                y = np.asarray(eq.state, dtype=float)
                scale = np.linalg.norm(term_scale(p, y))
                res = np.linalg.norm(rhs_full(p, y))
                worst = max(worst, res / scale if scale > 0 else res)
    note(request, f"worst {worst:.2e}, {b.elapsed:.2f} s")
    assert worst < 1e-9
    assert b.elapsed < b.seconds


@pytest.mark.criterion(2, "closed-form Hopf discriminant equals a2*a1 - a0 of the Jacobian on 500 draws")
def test_delta_stab_oracle(request):
    rng = np.random.default_rng(1002)
    worst = 0.0
    with Budget(5) as b:
        for p in draw_coexisting(rng, 500):
            closed, jac = delta_stab_closed_form(p), delta_stab_jacobian(p)
            worst = max(worst, abs(closed - jac) / abs(jac))
    note(request, f"worst relative gap {worst:.2e}, {b.elapsed:.2f} s")
    assert worst < 1e-8
    assert b.elapsed < b.seconds


@pytest.mark.criterion(3, "sign of the Hopf discriminant equals sign of (critical rate - rate) at 4 probes, 50 draws")
def test_critical_rate_equivalence(request):
    rng = np.random.default_rng(1003)
    probes = (0.5, 0.99, 1.01, 2.0)
    checked = mismatches = 0
    while checked < 50:
        p = draw_params(rng, immigration=0.0, beta_zero=True)
        ls = lambda_star(p)
        # every probe needs a coexistence equilibrium, i.e. N > 1
        if not threshold_n(p.replace(hunting_rate=probes[0] * ls)) > 1 + 1e-9:
            continue
        checked += 1
        for k in probes:
            q = p.replace(hunting_rate=k * ls)
            if np.sign(delta_stab_jacobian(q)) != np.sign(ls - q.hunting_rate):
                mismatches += 1
    note(request, f"{mismatches} sign mismatches over {4 * checked} probes")
    assert mismatches == 0


@pytest.mark.criterion(4, "beta* is 1.3e-4 at alpha = 0 and 1.3 at alpha = 0.99 within 1%")
def test_beta_star_values(request):
    low = beta_star(baseline(anthropisation=0.0))
    high = beta_star(baseline(anthropisation=0.99))
    note(request, f"beta*(0) = {low:.6g}, beta*(0.99) = {high:.6g}")
    assert low == pytest.approx(1.3e-4, rel=0.01)
    assert high == pytest.approx(1.3, rel=0.01)


@pytest.mark.criterion(5, "fauna polynomial equals -I at the fauna capacity and its discriminant is positive, 500 draws")
def test_fauna_polynomial_identity(request):
    rng = np.random.default_rng(1005)
    worst = 0.0
    smallest_disc = np.inf
    for _ in range(500):
        p = draw_params(rng)
        x = (1 - p.anthropisation) * p.carrying_capacity
        a, b, c = pf_coefficients(p)
        # relative to the largest term of the polynomial evaluated there
        scale = max(abs(a) * x * x, abs(b) * x, abs(c))
        worst = max(worst, abs(pf_eval(p, x) + p.immigration) / scale)
        smallest_disc = min(smallest_disc, pf_discriminant(p))
    note(request, f"worst relative gap {worst:.2e}, smallest discriminant {smallest_disc:.3g}")
    assert worst < 1e-10
    assert smallest_disc > 0


@pytest.mark.criterion(6, "fast-migration figure: cycles at eps 0.1 and 1/365, coexistence at 1e-4 and for the reduced system")
def test_fast_migration_figure(request):
    p = baseline(**QSSA_SET)
    start = (100.0, 5000.0, 10.0)
    horizon = 10000.0
    results = {}
    with Budget(60) as b:
        for eps in (0.1, 1 / 365, 1e-4):
            results[eps] = detect_attractor(p.with_time_scale(eps), start, horizon)
        reduced = detect_attractor(p, start[:2], horizon, formulation=Formulation.REDUCED)
    n = threshold_n(p)
    note(
        request,
        f"N = {n:.4g}; eps 0.1 -> {results[0.1].kind}, 1/365 -> {results[1 / 365].kind}, "
        f"1e-4 -> {results[1e-4].kind}, reduced -> {reduced.kind}; {b.elapsed:.1f} s",
    )
    assert n > 1
    assert results[0.1].kind == CYCLE
    assert results[1 / 365].kind == CYCLE
    assert results[1e-4].kind == EQUILIBRIUM and results[1e-4].equilibrium.kind is Kind.COEXISTENCE
    assert reduced.kind == EQUILIBRIUM and reduced.equilibrium.kind is Kind.COEXISTENCE
    assert b.elapsed < b.seconds


@pytest.mark.criterion(7, "cycle figures: amplitude grows with hunting, immigration shortens and damps, strong immigration settles")
def test_cycle_figures(request):
    start = (100.0, 7000.0, 20.0)
    horizon = 60000.0
    with Budget(120) as b:
        low = detect_attractor(baseline(hunting_rate=0.0116), start, horizon)
        high = detect_attractor(baseline(hunting_rate=0.01425), start, horizon)
        some = detect_attractor(baseline(hunting_rate=0.01425, immigration=0.1), start, horizon)
        strong = detect_attractor(baseline(hunting_rate=0.01425, immigration=1.0), start, horizon)
    assert low.kind == CYCLE and high.kind == CYCLE and some.kind == CYCLE
    amp = {k: a.cycle.amplitude[1] for k, a in (("low", low), ("high", high), ("some", some))}
    note(
        request,
        f"amplitudes {amp['low']:.1f} / {amp['high']:.1f} / {amp['some']:.1f}, "
        f"periods {low.cycle.period:.1f} / {high.cycle.period:.1f} / {some.cycle.period:.1f}; {b.elapsed:.1f} s",
    )
    assert amp["high"] > amp["low"]
    assert some.cycle.period < high.cycle.period
    assert amp["some"] < amp["high"]
    assert strong.kind == EQUILIBRIUM and strong.equilibrium.kind is Kind.COEXISTENCE
    assert b.elapsed < b.seconds


COEXIST = (Verdict.COEXISTENCE_GAS, Verdict.LIMIT_CYCLE)


@pytest.mark.criterion(8, "bifurcation grids 50x50: structure across immigration levels and the boost")
def test_bifurcation_structure(request):
    lam_range, alpha_range, res = (0.001, 0.05), (0.0, 0.99), (50, 50)
    with Budget(600) as b:
        grids = {i: bifurcation_grid(baseline(immigration=i), lam_range, alpha_range, res, workers=1) for i in (0.0, 0.1, 1.0)}
        boosted = bifurcation_grid(baseline(immigration=1.0), lam_range, alpha_range, res, beta_fraction=0.9, workers=1)

    # (a) no human-only cells without immigration
    assert grids[0.0].count(Verdict.HUMAN_ONLY_GAS) == 0

    # (b) on each scanline the human-only frontier sits within one cell of the upper hunting bound
    g = grids[1.0]
    lam = g.lambda_axis
    v = g.verdicts()
    for row, alpha in enumerate(g.alpha_axis):
        lam_max = lambda_bounds(baseline(immigration=1.0, anthropisation=alpha))
        human = np.array([x is Verdict.HUMAN_ONLY_GAS for x in v[row]])
        coexist = np.array([x in COEXIST for x in v[row]])
        edges = np.flatnonzero(coexist[:-1] & human[1:])
        if lam[0] < lam_max < lam[-1]:
            assert edges.size == 1, f"alpha {alpha}: {edges}"
            j = edges[0] + 1
            assert lam[j - 1] <= lam_max <= lam[j]
        else:
            assert edges.size == 0
        # no coexistence beyond the bound
        assert not np.any(coexist & (lam > lam_max))

    # (c) coexistence plus cycle area shrinks as immigration grows
    areas = [grids[i].count(*COEXIST) for i in (0.0, 0.1, 1.0)]
    assert areas[0] > areas[1] > areas[2]

    # (d) the boost opens coexistence at alpha >= 0.95 where the plain grid has human-only cells
    gained = [
        c.alpha >= 0.95 and a.verdict is Verdict.HUMAN_ONLY_GAS and c.verdict in COEXIST
        for a, c in zip(grids[1.0].cells, boosted.cells)
    ]
    plain_high = [c.verdict in COEXIST for c in grids[1.0].cells if c.alpha >= 0.95]
    note(request, f"areas {areas}, {sum(gained)} cells gained at alpha >= 0.95 ({sum(plain_high)} already coexisting); {b.elapsed:.1f} s")
    assert any(gained)
    assert b.elapsed < b.seconds


@pytest.mark.criterion(9, "no region exits over t = 200 from 500 random starts in the invariant region")
def test_invariant_region(request):
    rng = np.random.default_rng(1009)
    exits = 0
    with Budget(60) as b:
        for k in range(500):
            p = draw_params(rng, beta_zero=True)
            if k % 2:
                p = p.replace(human_boost=0.9 * beta_star(p))
            bounds = region_bounds(p)
            while True:
                y0 = rng.uniform(0, 1, 3) * np.array([bounds.s_max, bounds.fauna_max, bounds.h_wild_max])
                if bounds.contains(y0):
                    break
            tr = integrate(p, Formulation.FULL, y0, IntegrationConfig(t_end=200.0), equilibria=[])
            exits += len(tr.events_of(REGION_EXIT))
    note(request, f"{exits} exits; {b.elapsed:.1f} s")
    assert exits == 0
    assert b.elapsed < b.seconds


@pytest.mark.criterion(10, "100 random reduced-system runs all settle on an equilibrium")
def test_reduced_no_cycles(request):
    rng = np.random.default_rng(1010)
    kinds = []
    with Budget(30) as b:
        while len(kinds) < 100:
            p = draw_params(rng)
            if abs(threshold_n(p) - 1) < 1e-6:
                continue
            tau = relaxation_time(p, Formulation.REDUCED)
            # the horizon must cover the slowest relaxation many times over
            if tau > 5000:
                continue
            start = interior_start(rng, p, "reduced")
            out = detect_attractor(p, start, max(2000.0, 60 * tau), formulation=Formulation.REDUCED)
            kinds.append(out.kind)
    counts = {k: kinds.count(k) for k in set(kinds)}
    note(request, f"{counts}; {b.elapsed:.1f} s")
    assert kinds.count(EQUILIBRIUM) == 100
    assert b.elapsed < b.seconds


@pytest.mark.criterion(11, "fast-migration sup gaps decrease strictly from eps 1e-2 to 1e-4, T = 50")
def test_reduction_trend(request):
    p = baseline(**QSSA_SET)
    with Budget(60) as b:
        gaps = qssa_compare(p, (1e-2, 1e-3, 1e-4), (100.0, 5000.0, p.m * 100.0), horizon=50.0)
    cols = np.array([[g.sup_gap_hd, g.sup_gap_fw, g.sup_gap_hw] for g in gaps])
    note(request, "H_D gaps " + ", ".join(f"{x:.3g}" for x in cols[:, 0]) + f"; {b.elapsed:.1f} s")
    assert np.all(np.diff(cols, axis=0) < 0)
    assert b.elapsed < b.seconds
