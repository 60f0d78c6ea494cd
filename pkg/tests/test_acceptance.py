"""End-to-end acceptance checks, one test per published criterion.

Every test runs the relevant experiment (or calls the compute helper with
the experiment's own fixture), re-derives the pass/fail verdict from the
measured numbers at the stated tolerance, prints a single summary line, and
enforces the runtime budget.  Assertions read the emitted CSV artifacts
where they exist, so the checks see exactly what a user of the CLI would.
"""

import csv
import math
import time

import pytest

from scatterkit.estimate import make_ensemble
from scatterkit.experiments import (
    gaussian_packet,
    run_experiment,
    uniformity_fixtures,
    uniformity_scan,
    conjugation_gap,
    resolvent_gaps,
)
from scatterkit.grids import GridSpec, lp_norm
from scatterkit.interaction import QuadratureSpec
from scatterkit.nls import Hartree, HartreeKernel, linf_monitor
from scatterkit.potentials import GaussianWell, PlaneWaveSum
from scatterkit.series import born_terms, born_vs_direct, partial_sums

CATALOG_LABELS = (
    "plane_waves",
    "gaussian_well",
    "tanh_switch",
    "sharp_quench",
    "log_osc",
    "inverse_power",
    "moving_bounded",
    "moving_drift",
    "self_similar",
    "well_plus_waves",
)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name, cfg=None, tag=None):
        key = tag or name
        if key not in cache:
            t0 = time.perf_counter()
            rep = run_experiment(name, dict(cfg or {}), str(root / key), seed=0)
            cache[key] = (rep, root / key, time.perf_counter() - t0)
        return cache[key]

    return get


def audit_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def announce(num, name, ok, detail):
    print(f"criterion {num:2d} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_01_cancellation_bound(runs):
    rep, out, elapsed = runs("cancellation-check")
    rows = [
        r
        for r in audit_rows(out / "cancellation_audit.csv")
        if r["bound"] and not r["label"].startswith("conjugation")
    ]
    worst = min(float(r["margin"]) for r in rows)
    covered = all(
        any(r["label"].startswith(lab) and tag in r["label"] for r in rows)
        for lab in CATALOG_LABELS
        for tag in (" dense", " 1d", " 3d")
    )
    ok = worst >= -1e-8 and covered and elapsed < 30.0
    announce(1, "cancellation bound", ok,
             f"worst margin {worst:.3e} over {len(rows)} rows, {elapsed:.1f}s")
    assert worst >= -1e-8
    assert covered
    assert elapsed < 30.0


def test_criterion_02_conjugation_identity():
    grid = GridSpec(1, 64, 8.0)
    dq = grid.freq_step
    waves = PlaneWaveSum(
        (
            (0.3, (dq,)),
            (0.2 + 0.1j, (-2 * dq,)),
            (0.2 - 0.1j, (2 * dq,)),
            (0.25, (-dq,)),
            (0.1, (3 * dq,)),
        )
    )
    t0 = time.perf_counter()
    gap = conjugation_gap(grid, waves, (0.5, 2.0), count=20, seed=0)
    elapsed = time.perf_counter() - t0
    ok = gap <= 1e-10 and elapsed < 5.0
    announce(2, "conjugation identity", ok,
             f"worst relative gap {gap:.3e}, {elapsed:.1f}s")
    assert gap <= 1e-10
    assert elapsed < 5.0


def test_criterion_03_resolvent_vs_quadrature():
    grid = GridSpec(1, 16, 8.0)
    dq = grid.freq_step
    waves = PlaneWaveSum(
        ((0.3, (dq,)), (0.2 + 0.1j, (-2 * dq,)), (0.2 - 0.1j, (2 * dq,)))
    )
    t0 = time.perf_counter()
    gaps = resolvent_gaps(grid, waves, (0.5, 0.1), count=2, seed=0)
    elapsed = time.perf_counter() - t0
    worst = max(g for _, g, _ in gaps)
    ok = (
        worst <= 1e-6
        and {e for e, _, _ in gaps} == {0.5, 0.1}
        and elapsed < 10.0
    )
    announce(3, "resolvent vs quadrature", ok,
             f"worst relative gap {worst:.3e}, {elapsed:.1f}s")
    assert worst <= 1e-6
    assert {e for e, _, _ in gaps} == {0.5, 0.1}
    assert elapsed < 10.0


def test_criterion_04_born_series_vs_direct():
    grid = GridSpec(1, 16, 4.0)
    spec = GaussianWell(amplitude=-0.5, sigma=1.0)
    horizon, orders = 2.9, 8
    quad = QuadratureSpec("simpson", 1025)
    psi = make_ensemble(grid, "gaussian_random", count=1, seed=0).members[0]

    t0 = time.perf_counter()
    ledger = born_vs_direct(
        spec, psi, horizon, orders, quad=quad, reference="oracle"
    )
    terms = born_terms(spec, psi, horizon, orders, quad=quad)
    c = ledger.mass_accumulated
    rel_resid = ledger.residuals[-1] / ledger.reference_norm
    majorant_ok, exp_ok = True, True
    tail = partial_sums(terms)[-1]
    for p in (1, 2, math.inf):
        base = lp_norm(psi, p)
        norms = terms.term_norms(p)
        for k in range(1, orders + 1):
            majorant_ok &= norms[k] <= 1.2 * c**k / math.factorial(k) * base
        exp_ok &= lp_norm(tail, p) <= math.exp(c) * 1.2 * base
    elapsed = time.perf_counter() - t0

    ok = c <= 1.5 and rel_resid <= 1e-3 and majorant_ok and exp_ok and elapsed < 60.0
    announce(4, "interaction series vs direct", ok,
             f"mass {c:.4f}, residual {rel_resid:.2e}, {elapsed:.1f}s")
    assert c <= 1.5
    assert rel_resid <= 1e-3
    assert majorant_ok
    assert exp_ok
    assert elapsed < 60.0


def test_criterion_05_highfreq_smallness(runs):
    rep, out, elapsed = runs("highfreq-scan")
    drops = [
        r for r in audit_rows(out / "highfreq_audit.csv") if " drop " in r["label"]
    ]
    assert len(drops) == 8  # 2 fixtures x k in {1,2} x 2 doublings
    worst = min(float(r["bound"]) for r in drops)
    covered = all(
        any(f"{lab} k={k} drop {a}->{b}" == r["label"] for r in drops)
        for lab in ("gaussian_pair", "log_osc")
        for k in (1, 2)
        for a, b in ((2, 4), (4, 8))
    )
    ok = worst >= 1.5 and covered and elapsed < 120.0
    announce(5, "high-frequency smallness", ok,
             f"worst per-doubling factor {worst:.3f}, {elapsed:.1f}s")
    assert worst >= 1.5
    assert covered
    assert elapsed < 120.0


def test_criterion_06_damping_uniformity():
    grid = GridSpec(1, 64, 8.0)
    t0 = time.perf_counter()
    results = uniformity_scan(
        grid, uniformity_fixtures(), (1.0, 0.3, 0.1, 0.03, 0.01), 8, 0
    )
    elapsed = time.perf_counter() - t0
    worst_ratio = max(ratio for _, _, ratio, _, _ in results)
    all_monotone = all(mono for _, _, _, _, mono in results)
    ok = worst_ratio <= 10.0 and all_monotone and elapsed < 60.0
    announce(6, "damping uniformity", ok,
             f"worst ratio {worst_ratio:.2f}, monotone {all_monotone}, {elapsed:.1f}s")
    assert worst_ratio <= 10.0
    assert all_monotone
    assert elapsed < 60.0


def test_criterion_07_free_decay_exponents(runs):
    rep, out, elapsed = runs("decay-scan")
    fits = audit_rows(out / "decay_fits.csv")
    errs = {}
    for r in fits:
        target = float(r["exact"])
        errs[target] = abs(float(r["measured"]) - target) / abs(target)
    ok = (
        set(errs) == {-0.5, -1.0}
        and max(errs.values()) <= 0.05
        and elapsed < 30.0
    )
    announce(7, "free decay exponents", ok,
             f"relative errors {errs[-0.5]:.2%} (1d), {errs[-1.0]:.2%} (2d), "
             f"{elapsed:.1f}s")
    assert set(errs) == {-0.5, -1.0}
    assert max(errs.values()) <= 0.05
    assert elapsed < 30.0


def test_criterion_08_self_similar_bound(runs):
    rep, out, elapsed = runs("self-similar")
    rows = audit_rows(out / "self_similar_audit.csv")
    assert len(rows) == 9  # T in {4,8,16} x p in {1,2,inf}
    worst = min(float(r["margin"]) for r in rows)
    covered = all(
        any(r["label"].startswith(f"T={t} ") and r["p"] == p for r in rows)
        for t in (4, 8, 16)
        for p in ("1", "2", "inf")
    )
    ok = worst >= 0.0 and covered and elapsed < 60.0
    announce(8, "self-similar series bound", ok,
             f"worst margin {worst:.3f}, {elapsed:.1f}s")
    assert worst >= 0.0
    assert covered
    assert elapsed < 60.0


def test_criterion_09_moving_potential_decay(runs):
    rep, out, elapsed = runs("moving-potential")
    rows = audit_rows(out / "moving_audit.csv")
    fit = next(float(r["measured"]) for r in rows if r["label"] == "fitted exponent")
    times = [r for r in rows if r["label"].startswith("proxy t=")]
    ok = fit <= -0.4 and len(times) == 4 and elapsed < 120.0
    announce(9, "moving-potential decay", ok,
             f"fitted exponent {fit:.4f}, {elapsed:.1f}s")
    assert fit <= -0.4
    assert len(times) == 4
    assert elapsed < 120.0


def test_criterion_10_nls_suite(runs):
    total = 0.0

    rep, out, dt_run = runs("nls-run")
    total += dt_run
    masses = [float(r["mass"]) for r in audit_rows(out / "nls_trajectory.csv")]
    drift = max(abs(m - masses[0]) for m in masses)

    t0 = time.perf_counter()
    nl = Hartree(HartreeKernel("gaussian", sigma=1.0), coupling=0.5)
    psi0 = gaussian_packet(GridSpec(3, 32, 8.0), 1.0)
    times, sups = linf_monitor(nl, psi0, 4.0, 0.01, checks=17)
    window = [k for k, t in enumerate(times) if 1.0 - 1e-12 <= t <= 4.0 + 1e-12]
    ratio = max(sups[k] for k in window) / sups[window[0]]
    total += time.perf_counter() - t0

    rep, out, dt_run = runs("picard")
    total += dt_run
    rows = audit_rows(out / "picard_audit.csv")
    contraction = next(
        float(r["measured"]) for r in rows if r["label"] == "worst contraction ratio"
    )
    gap = next(
        float(r["measured"])
        for r in rows
        if r["label"] == "sup-in-time gap vs split-step"
    )

    rep, out, dt_run = runs("free-channel")
    total += dt_run
    incs = [
        float(r["measured"])
        for r in audit_rows(out / "free_channel_audit.csv")
        if r["label"].startswith("increment")
    ]
    decreasing = len(incs) == 3 and all(a > b for a, b in zip(incs, incs[1:]))

    ok = (
        drift <= 1e-8
        and ratio <= 3.0
        and contraction <= 5.0 / 6.0
        and gap <= 1e-5
        and decreasing
        and total < 300.0
    )
    announce(10, "nonlinear flow suite", ok,
             f"mass drift {drift:.1e}, monitor ratio {ratio:.2f}, contraction "
             f"{contraction:.3f}, gap {gap:.1e}, increments {incs[0]:.1e}>"
             f"{incs[1]:.1e}>{incs[2]:.1e}, {total:.1f}s")
    assert drift <= 1e-8
    assert ratio <= 3.0
    assert contraction <= 5.0 / 6.0
    assert gap <= 1e-5
    assert decreasing
    assert total < 300.0


def test_criterion_11_intertwining(runs):
    rep, out, elapsed = runs("intertwine")
    rows = audit_rows(out / "intertwine_audit.csv")
    resid = {}
    for r in rows:
        if r["label"].startswith("residual s=") :
            resid[float(r["label"].split("=")[1])] = float(r["measured"])
    final = resid[16.0]
    cauchy = abs(resid[16.0] - resid[8.0])
    ok = final <= 5e-2 and final <= 3.0 * cauchy and elapsed < 60.0
    announce(11, "intertwining residual", ok,
             f"residual {final:.3e} vs 3x Cauchy {3 * cauchy:.3e}, {elapsed:.1f}s")
    assert final <= 5e-2
    assert final <= 3.0 * cauchy
    assert elapsed < 60.0


def test_criterion_12_determinism(tmp_path, monkeypatch):
    import hashlib

    def digests(out):
        return {
            p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.glob("*.csv"))
        }

    run_experiment("born-series", {}, str(tmp_path / "b1"), seed=0)
    run_experiment("born-series", {}, str(tmp_path / "b2"), seed=0)
    same_plain = digests(tmp_path / "b1") == digests(tmp_path / "b2")

    # worker count must not leak into artifacts
    monkeypatch.setenv("SCATTERKIT_THREADS", "1")
    run_experiment("cancellation-check", {}, str(tmp_path / "c1"), seed=0)
    monkeypatch.setenv("SCATTERKIT_THREADS", "4")
    run_experiment("cancellation-check", {}, str(tmp_path / "c2"), seed=0)
    same_threads = digests(tmp_path / "c1") == digests(tmp_path / "c2")

    ok = same_plain and same_threads
    announce(12, "determinism", ok,
             f"seeded reruns identical {same_plain}, "
             f"thread-count invariant {same_threads}")
    assert same_plain
    assert same_threads
