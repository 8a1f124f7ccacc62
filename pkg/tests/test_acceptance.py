"""Acceptance gate: twelve end-to-end checks covering exact population
identities, Monte Carlo recovery on the synthetic oracle, arithmetic
consistency of the headline derived quantities, and runtime budgets.

Each check prints a single [PASS]/[FAIL] line (visible with ``pytest -s``
or in the captured output of a failing run).
"""

import time

import numpy as np
import pytest

from conftest import population_slice, scenario_grid
from test_covariates import adjusted_truth, covariate_world
from test_event_study import additive_spec, dense_lstsq_oracle

from ntdid.aggregation import normal_distribution, reference_reweight, theta_agg2
from ntdid.bias import (bias_corrected_gap, bias_factor, solve_apo_star,
                        td_decomposition)
from ntdid.covariates import (apo_with_covariates, nuisances_from_functions,
                              nuisances_from_oracle, td_with_covariates)
from ntdid.dgp import INF, DgpOracle, DgpSpec, generate, with_overrides
from ntdid.estimators import (CORE_ESTIMANDS, decompose_ratios, delta_apo,
                              delta_ate, ntd_alt, ntd_gap, relation_identity)
from ntdid.event_study import fit_event_study
from ntdid.inference import (cluster_bootstrap, cluster_se, estimate_grid,
                             influence_composite)
from ntdid.panel import build_two_by_two

PAIRS = ((25, 27), (26, 28))


def _report(num: int, label: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] acceptance {num:02d}: {label}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def constant_ratio_grid(n=40):
    """Seeded worlds with a constant gender ratio and non-parallel trends."""
    return [with_overrides(spec, rho_age_slope=0.0, rho_age_curve=0.0,
                           slope_gradient=120.0 + 7.0 * i)
            for i, spec in enumerate(scenario_grid(n))]


def test_acceptance_01_did_reconstruction_identities():
    """delta_APO equals the counterfactual level minus the trend violation,
    and delta_ATE equals the true effect plus it, on every oracle world."""
    t0 = time.perf_counter()
    worst = 0.0
    for spec in scenario_grid(40):
        o = DgpOracle(spec)
        for d, a in PAIRS:
            sl = population_slice(o, d, a)
            for g in "fm":
                gpt = o.gamma_pt(g, d, sl.dprime, a)
                worst = max(worst,
                            abs(delta_apo(sl, g) - (o.apo(g, d, INF, a) - gpt)),
                            abs(delta_ate(sl, g) - (o.ate(g, d, a) + gpt)))
    elapsed = time.perf_counter() - t0
    _report(1, "DID reconstruction identities on 40 oracle worlds",
            worst <= 1e-10 and elapsed < 10.0,
            f"max error {worst:.2e}, {elapsed:.1f}s")


def test_acceptance_02_normalized_gap_bias_structure():
    """Under a constant gender ratio the conventional normalized gap equals
    a gender-invariant bias factor times the true gap."""
    t0 = time.perf_counter()
    worst_id, worst_inv = 0.0, 0.0
    for spec in constant_ratio_grid(40):
        o = DgpOracle(spec)
        for d, a in PAIRS:
            sl = population_slice(o, d, a)
            dprime = sl.dprime
            assert abs(o.gamma_pt("f", d, dprime, a)) > 1e-6
            bias_f = bias_factor(o.apo("f", d, INF, a),
                                 o.gamma_pt("f", d, dprime, a))
            bias_m = bias_factor(o.apo("m", d, INF, a),
                                 o.gamma_pt("m", d, dprime, a))
            truth = o.theta("f", d, a) - o.theta("m", d, a)
            worst_inv = max(worst_inv, abs(bias_f - bias_m))
            worst_id = max(worst_id, abs(ntd_gap(sl) - bias_f * truth))
    elapsed = time.perf_counter() - t0
    _report(2, "normalized gap = gender-invariant bias x true gap",
            worst_id <= 1e-10 and worst_inv <= 1e-12 and elapsed < 10.0,
            f"identity {worst_id:.2e}, invariance {worst_inv:.2e}, "
            f"{elapsed:.1f}s")


def test_acceptance_03_pretrend_zero_iff_constant_ratio():
    """The normalized pre-trend vanishes exactly when the gender ratio is
    age-constant and is detectably nonzero when it drifts with age."""
    t0 = time.perf_counter()
    worst_null = 0.0
    for spec in constant_ratio_grid(10):
        o = DgpOracle(spec)
        for d in (25, 26, 27):
            sl = population_slice(o, d, d - 1, baseline_gap=2)
            worst_null = max(worst_null, abs(ntd_gap(sl)))
    smallest_alt = float("inf")
    for slope in (0.01, -0.008, 0.005):
        spec = with_overrides(constant_ratio_grid(1)[0], rho_age_slope=slope)
        o = DgpOracle(spec)
        for d in (25, 26, 27):
            sl = population_slice(o, d, d - 1, baseline_gap=2)
            smallest_alt = min(smallest_alt, abs(ntd_gap(sl)))
    elapsed = time.perf_counter() - t0
    _report(3, "normalized pre-trend: zero under constant ratio, "
               "nonzero under age drift",
            worst_null <= 1e-12 and smallest_alt > 1e-6 and elapsed < 10.0,
            f"null {worst_null:.2e}, alt {smallest_alt:.2e}, {elapsed:.1f}s")


def test_acceptance_04_bias_correction_recovers_true_gap():
    """Plugging the true fathers' effect into the corrected gap recovers the
    true gender gap: exactly at population level, and within 3 standard
    errors in at least 95% of seeded large-sample worlds."""
    t0 = time.perf_counter()
    grid = constant_ratio_grid(40)
    worst = 0.0
    for spec in grid:
        o = DgpOracle(spec)
        sl = population_slice(o, 26, 28)
        row = bias_corrected_gap(sl, o.theta("m", 26, 28))
        truth = o.theta("f", 26, 28) - o.theta("m", 26, 28)
        worst = max(worst, abs(row.corrected - truth))
    hits = 0
    for i, spec in enumerate(grid):
        big = with_overrides(spec, units_per_group=16_667, noise_sd=0.25,
                             noise_ar1=0.3, seed=7000 + i)
        data, o = generate(big)
        sl = build_two_by_two(data, 26, 28)
        row = bias_corrected_gap(sl, o.theta("m", 26, 28), data=data)
        truth = o.theta("f", 26, 28) - o.theta("m", 26, 28)
        hits += abs(row.corrected - truth) <= 3.0 * row.se
    elapsed = time.perf_counter() - t0
    _report(4, "corrected gap recovers the true gap (population + coverage)",
            worst <= 1e-10 and hits >= 38 and elapsed < 300.0,
            f"population {worst:.2e}, coverage {hits}/40, {elapsed:.0f}s")


def test_acceptance_05_ratio_effect_identification():
    """The alternative normalized contrast equals the true effect of
    parenthood on the gender earnings ratio, and matches the closed-form
    relation to the two normalized effects."""
    worst_alt, worst_rel = 0.0, 0.0
    for spec in constant_ratio_grid(40):
        o = DgpOracle(spec)
        for d, a in PAIRS:
            sl = population_slice(o, d, a)
            drho = o.delta_rho(d, a)
            worst_alt = max(worst_alt, abs(ntd_alt(sl) - drho))
            implied = relation_identity(o.theta("f", d, a),
                                        o.theta("m", d, a),
                                        o.rho(d, INF, a))
            worst_rel = max(worst_rel, abs(implied - drho))
    _report(5, "ratio-effect identification and closed-form relation",
            worst_alt <= 1e-10 and worst_rel <= 1e-12,
            f"contrast {worst_alt:.2e}, relation {worst_rel:.2e}")


def test_acceptance_06_headline_arithmetic():
    """Derived headline quantities are arithmetically consistent."""
    total, parenthood, _, share = decompose_ratios(0.726, 0.582)
    ok = (parenthood == pytest.approx(0.144, abs=1e-12)
          and 0.34 <= share <= 0.35)
    ok = ok and abs(-0.144 - (-0.200)) / 0.200 == pytest.approx(0.28,
                                                                abs=1e-12)
    ok = ok and 1.23 <= (-0.129 / -0.104) <= 1.25
    ok = ok and 1.50 <= (-0.157 / -0.104) <= 1.52
    _report(6, "headline arithmetic consistency", ok,
            f"parenthood {parenthood:.3f}, share {share:.4f}")


def test_acceptance_07_if_se_matches_cluster_bootstrap(constant_rho_spec):
    """Influence-function cluster SEs agree with a 2,000-rep cluster
    bootstrap within 5% for every estimand on a 20,000-unit noisy panel."""
    t0 = time.perf_counter()
    spec = with_overrides(constant_rho_spec, units_per_group=1667,
                          noise_sd=0.3, noise_ar1=0.4, seed=3)
    data, _ = generate(spec)
    assert data.n_units >= 20_000
    sl = build_two_by_two(data, 26, 28)
    worst = 0.0
    for est in CORE_ESTIMANDS:
        if_se = cluster_se(influence_composite(data, sl, est))
        boot = cluster_bootstrap(data, sl, est, reps=2000, seed=7)
        worst = max(worst, abs(if_se / boot.se - 1.0))
    elapsed = time.perf_counter() - t0
    _report(7, "IF cluster SE within 5% of 2,000-rep cluster bootstrap",
            worst <= 0.05 and elapsed < 900.0,
            f"max rel gap {worst:.3f}, {elapsed:.0f}s")


def test_acceptance_08_doubly_robust_estimation():
    """With true nuisances the three adjusted estimators coincide; with one
    nuisance misspecified the doubly robust one stays on target while the
    matching non-robust one drifts."""
    t0 = time.perf_counter()
    data, oracle = covariate_world()
    sl = build_two_by_two(data, 26, 28)
    nf = nuisances_from_oracle(data, sl, oracle)
    apos = [apo_with_covariates(data, sl, "f", nf, method=m).value
            for m in ("OR", "IPW", "DR")]
    tds = [td_with_covariates(data, sl, nf, method=m).value
           for m in ("OR", "IPW", "DR")]
    eq = max(max(apos) - min(apos), max(tds) - min(tds))
    truth_gap = max(abs(v - adjusted_truth(oracle, "f", 26, 29, 28, 25))
                    for v in apos)

    fr = {25: (0.4, 0.3, 0.3), 26: (0.7, 0.2, 0.1), 27: (0.4, 0.3, 0.3),
          28: (0.4, 0.3, 0.3), 29: (0.1, 0.2, 0.7)}
    errs = {k: [] for k in (("bad_q", "IPW"), ("bad_q", "DR"),
                            ("bad_mu", "OR"), ("bad_mu", "DR"))}
    truth = None
    for r in range(20):
        data, oracle = covariate_world(units=10_000, noise=0.15,
                                       seed=500 + r, fr=fr, x_slope=1000.0)
        sl = build_two_by_two(data, 26, 28)
        if truth is None:
            truth = adjusted_truth(oracle, "f", 26, 29, 28, 25)
        arms = [(g, grp) for g in "fm" for grp in (sl.d, sl.dprime)]

        def true_mu(g, grp, row):
            x = int(row[0]) if len(row) else 0
            return (oracle.cond_apo(g, grp, grp, sl.a, x)
                    - oracle.cond_apo(g, grp, grp, sl.b, x))

        def true_q(g, grp, row):
            x = int(row[0]) if len(row) else 0
            return oracle.arm_probability(arms, g, grp, x)

        nf_bad_q = nuisances_from_functions(data, sl,
                                            lambda g, grp, row: 0.25, true_mu)
        nf_bad_mu = nuisances_from_functions(data, sl, true_q,
                                             lambda g, grp, row: 0.0)
        for m in ("IPW", "DR"):
            errs[("bad_q", m)].append(
                apo_with_covariates(data, sl, "f", nf_bad_q, m).value - truth)
        for m in ("OR", "DR"):
            errs[("bad_mu", m)].append(
                apo_with_covariates(data, sl, "f", nf_bad_mu, m).value - truth)

    def bias_ratio(key):
        e = np.asarray(errs[key])
        return abs(e.mean()) / (e.std(ddof=1) / np.sqrt(len(e)))

    robust_ok = (bias_ratio(("bad_q", "DR")) < 3.0
                 and bias_ratio(("bad_mu", "DR")) < 3.0)
    naive_ok = (bias_ratio(("bad_q", "IPW")) > 5.0
                and bias_ratio(("bad_mu", "OR")) > 5.0)
    elapsed = time.perf_counter() - t0
    _report(8, "adjusted estimators: exact agreement + double robustness",
            eq <= 1e-10 and truth_gap <= 1e-6 and robust_ok and naive_ok
            and elapsed < 600.0,
            f"equality {eq:.2e}, DR |bias|/MCSE "
            f"{bias_ratio(('bad_q', 'DR')):.2f}/"
            f"{bias_ratio(('bad_mu', 'DR')):.2f}, {elapsed:.0f}s")


def test_acceptance_09_trend_gap_decomposition(constant_rho_oracle,
                                               varying_rho_oracle):
    """The four signed corner terms sum to the gender difference in trend
    violations; the break-even level solves the affine sum exactly; a
    constant ratio collapses the sum to (ratio - 1) x the male violation."""
    worst_sum, worst_const, worst_res = 0.0, 0.0, 0.0
    o = varying_rho_oracle
    for d, a in ((25, 27), (27, 29)):
        dprime, b = a + 1, d - 1
        corners = ((d, a), (d, b), (dprime, a), (dprime, b))
        rhos = [o.rho(grp, INF, age) for grp, age in corners]
        levels = [o.apo("m", grp, INF, age) for grp, age in corners]
        terms, total = td_decomposition(rhos, levels)
        truth = o.gamma_pt("f", d, dprime, a) - o.gamma_pt("m", d, dprime, a)
        worst_sum = max(worst_sum, abs(total - truth))
        star = solve_apo_star(rhos[0], terms[1:])
        residual = (rhos[0] - 1.0) * star + sum(terms[1:])
        worst_res = max(worst_res, abs(residual)
                        / (1e-8 * max(abs(t) for t in terms)))
    oc = constant_rho_oracle
    rho0 = oc.spec.rho_base
    for d, a in PAIRS:
        dprime, b = a + 1, d - 1
        corners = ((d, a), (d, b), (dprime, a), (dprime, b))
        levels = [oc.apo("m", grp, INF, age) for grp, age in corners]
        _, total = td_decomposition([rho0] * 4, levels)
        worst_const = max(worst_const,
                          abs(total - (rho0 - 1.0)
                              * oc.gamma_pt("m", d, dprime, a)))
    _report(9, "four-term trend-gap decomposition identities",
            worst_sum <= 1e-10 and worst_const <= 1e-10 and worst_res <= 1.0,
            f"sum {worst_sum:.2e}, constant {worst_const:.2e}")


def test_acceptance_10_aggregation_weights():
    """The ratio-of-averages aggregate equals the implied-weight average of
    per-group effects, and a common reference distribution equalizes strata
    with identical per-group effects."""
    rng = np.random.default_rng(5)
    groups = (25, 26, 27, 28, 29, 30)
    dist = normal_distribution(27.0, groups)
    worst = 0.0
    for _ in range(20):
        apos = {d: float(rng.uniform(15_000, 30_000)) for d in groups}
        thetas = {d: float(rng.uniform(-0.3, -0.1)) for d in groups}
        ates = {d: thetas[d] * apos[d] for d in groups}
        value, info = theta_agg2(ates, apos, dist, e=0, d_max=32)
        implied = sum(info["implied_weights"][d] * thetas[d] for d in groups)
        worst = max(worst, abs(value - implied))
    effects = {d: float(rng.uniform(-0.3, -0.1)) for d in groups}
    out = reference_reweight({"early": dict(effects), "late": dict(effects)},
                             dist)
    equal = out["early"]["value"] == out["late"]["value"]
    _report(10, "implied-weight identity and reference reweighting",
            worst <= 1e-12 and equal, f"identity {worst:.2e}")


def test_acceptance_11_event_study_recovery():
    """A planted additive effect path is recovered by the event-study fit
    (exactly without noise, within Monte Carlo error with noise), and the
    sparse solver matches a dense least-squares reference."""
    path = {0: -6000.0, 1: -5000.0, 2: -4000.0}
    spec = DgpSpec(treat_ages=(27,), units_per_group=40, n_cohorts=3,
                   base_slope=0.0, slope_gradient=0.0, curvature=0.0,
                   effect_f=path, effect_mode="additive", effect_m=0.0,
                   noise_sd=0.0, seed=5)
    data, _ = generate(spec)
    exact = fit_event_study(data, "f", event_window=(-3, 2))
    worst_exact = max(abs(b - path.get(e, 0.0)) for e, b in exact.beta.items())

    draws = {}
    reps = 30
    for r in range(reps):
        noisy, _ = generate(with_overrides(spec, noise_sd=0.3, seed=1000 + r))
        for e, b in fit_event_study(noisy, "f", event_window=(-3, 2)).beta.items():
            draws.setdefault(e, []).append(b)
    mc_ok = True
    for e, vals in draws.items():
        if e == -1:
            continue
        v = np.asarray(vals)
        mcse = v.std(ddof=1) / np.sqrt(reps)
        mc_ok = mc_ok and abs(v.mean() - path.get(e, 0.0)) <= 3.0 * mcse

    dense_spec = additive_spec(units_per_group=11, noise_sd=0.3, seed=17)
    ddata, _ = generate(dense_spec)
    window = (-3, 4)
    fit = fit_event_study(ddata, "f", event_window=window)
    ref_beta, rows = dense_lstsq_oracle(ddata, "f", window)
    scale = float(np.abs(ddata.earnings).mean())
    worst_dense = max(abs(fit.beta[e] - b) for e, b in ref_beta.items())
    _report(11, "event-study planted-path recovery and solver agreement",
            worst_exact <= 1e-6 and mc_ok and len(rows) >= 500
            and worst_dense <= 1e-8 * scale,
            f"exact {worst_exact:.2e}, dense {worst_dense:.2e} "
            f"on {len(rows)} rows")


def test_acceptance_12_pipeline_runtime_at_scale():
    """Generating a 13.7-million-row panel and estimating all fifteen
    estimands over 11 treatment groups x 6 event times, with influence-based
    SEs, finishes inside the runtime budget."""
    spec = DgpSpec(treat_ages=tuple(range(25, 42)), units_per_group=14_924,
                   age_min=20, age_max=46, noise_sd=0.3, noise_ar1=0.3,
                   slope_gradient=50.0, effect_f=-0.2, effect_m=-0.05, seed=1)
    t0 = time.perf_counter()
    data, _ = generate(spec)
    records, skipped = estimate_grid(data, range(25, 36), range(6))
    elapsed = time.perf_counter() - t0
    ok = (data.n_rows >= 13_500_000 and len(records) == 990 and not skipped
          and all(np.isfinite(r.value) and r.se > 0 for r in records)
          and elapsed < 60.0)
    _report(12, "full estimation pipeline at 13.7M rows under 60s",
            ok, f"{data.n_rows} rows, {len(records)} estimates, "
                f"{elapsed:.1f}s")
