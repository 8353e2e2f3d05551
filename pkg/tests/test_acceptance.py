"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary,
then asserts.
"""

import json
import time

import numpy as np

from pertqec.channels import Channel, tp_normalized, worst_case_fidelity
from pertqec.cli import main
from pertqec.correctability import (
    alpha_scaling,
    bounds_check,
    delta,
    delta_complementary,
    delta_expansion,
    fit_loglog,
    kl_check,
    kl_check_series,
    log_grid,
    petz_recovery,
    sample_code_states,
)
from pertqec.eigexpand import (
    build_s_series,
    closed_form_kernel_sum,
    closed_form_support_sum,
    delta_via_expansion,
    direct_s,
    eig_expansion,
)
from pertqec.matcore import CodeProjector, dag, embed, random_complex, random_density
from pertqec.scenario import bundled_dir, bundled_scenarios, load_scenario
from pertqec.series import (
    InteractionModel,
    evaluate,
    exact_interaction_channel,
    from_interaction,
    gauge_eliminate_e0,
)

from conftest import X, Y, Z, expansion_scenarios, repetition_code

GRID = log_grid(1e-3, 1e-1, 12)


def scenario(name):
    sc, diags = load_scenario(bundled_dir() / f"{name}.json")
    assert not diags, diags
    return sc


def sampled_coeffs(sc, series):
    states = sample_code_states(sc.code, sc.samples, np.random.default_rng(sc.seed))
    return [delta_expansion(series, rho, rho).second_order_coeff for rho in states]


def test_criterion_01_forward_direction(acceptance):
    parts, ok = [], True
    for name in ("a_repetition_bitflip", "d_interaction_normal"):
        start = time.perf_counter()
        sc = scenario(name)
        noise = sc.noise()
        kl = kl_check_series(sc.code, noise.first_order)
        coeffs = sampled_coeffs(sc, noise.series)
        fit = alpha_scaling(noise.series, sc.code, GRID, exact=noise.exact)
        elapsed = time.perf_counter() - start
        good = (kl.passed and len(coeffs) == 10 and max(abs(c) for c in coeffs) <= 1e-9
                and fit.slope >= 2.5 and elapsed <= 60)
        ok &= good
        parts.append(f"{name}: kl={kl.passed} max|coeff|={max(abs(c) for c in coeffs):.1e} "
                     f"slope={fit.slope:.2f} {elapsed:.1f}s")
    acceptance(1, ok, "; ".join(parts))
    assert ok


def test_criterion_02_converse(acceptance):
    parts, ok = [], True
    for name in ("b_repetition_dephasing", "e_interaction_non_normal"):
        sc = scenario(name)
        noise = sc.noise()
        kl = kl_check_series(sc.code, noise.first_order)
        coeffs = sampled_coeffs(sc, noise.series)
        fit = alpha_scaling(noise.series, sc.code, GRID, exact=noise.exact)
        good = (not kl.passed) and min(coeffs) <= -1e-8 and 1.8 <= fit.slope <= 2.2
        ok &= good
        parts.append(f"{name}: kl={kl.passed} min coeff={min(coeffs):.3g} slope={fit.slope:.2f}")
    acceptance(2, ok, "; ".join(parts))
    assert ok


def test_criterion_03_dual_form(acceptance):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(50):
        d_in, d_out = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        n_kraus = -(-d_in // d_out) + int(rng.integers(0, 3))  # enough operators for a channel
        n = tp_normalized(Channel(random_complex((n_kraus, d_out, d_in), rng)))
        rho, sigma = random_density(d_in, rng), random_density(d_in, rng)
        worst = max(worst, abs(delta(n, rho, sigma) - delta_complementary(n, rho, sigma)))
    ok = worst <= 1e-9
    acceptance(3, ok, f"50 channels, max difference {worst:.1e}")
    assert ok


def test_criterion_04_spectrum_and_delta_slope(acceptance):
    eps = 1e-2
    tol = max(1e-10, 10 * eps**3)
    worst_err, slopes = 0.0, []
    for series, rho, sigma in expansion_scenarios():
        ex = eig_expansion(series, rho, sigma)
        exact = np.sort(np.linalg.eigvalsh(direct_s(series, rho, sigma, eps)))[::-1]
        worst_err = max(worst_err, float(np.max(np.abs(exact - ex.predicted_spectrum(eps)))))
        coeff = delta_via_expansion(series, rho, sigma).second_order_coeff
        err = [abs(delta(evaluate(series, e), rho, sigma) - 1 - e**2 * coeff) for e in GRID]
        slopes.append(fit_loglog(GRID, err).slope)
    low = [i for i, sl in enumerate(slopes) if sl < 2.9]
    ok = worst_err <= tol and not low
    acceptance(4, ok, f"20 series, max eigenvalue error {worst_err:.1e} (tol {tol:.0e}); "
                      f"Delta slope >= 2.9 on {20 - len(low)}/20, min {min(slopes):.2f}, below at {low}")
    assert worst_err <= tol
    assert not low


def test_criterion_05_closed_forms(acceptance):
    worst = 0.0
    for series, rho, sigma in expansion_scenarios():
        via = delta_via_expansion(series, rho, sigma)
        worst = max(worst, abs(via.support_term - closed_form_support_sum(series, rho, sigma)),
                    abs(via.kernel_term - closed_form_kernel_sum(series, rho, sigma)))
    ok = worst <= 1e-9
    acceptance(5, ok, f"20 series, max difference {worst:.1e}")
    assert ok


def test_criterion_06_structural_zeros(acceptance):
    worst = 0.0
    for series, rho, sigma in expansion_scenarios():
        ex = eig_expansion(series, rho, sigma)
        s0 = build_s_series(series, rho, sigma)[0]
        worst = max(worst, max(ex.k2_kernel_block, ex.k3_kernel_block) / np.linalg.norm(s0, 2))
    ok = worst <= 1e-9
    acceptance(6, ok, f"20 series, max kernel block / |S0| = {worst:.1e}")
    assert ok


def test_criterion_07_bound_chain(acceptance):
    rng = np.random.default_rng(2024)
    tyson = lower = upper = 0
    for i in range(20):
        k = np.concatenate([np.eye(4)[None], 0.1 * random_complex((2, 4, 4), rng)])
        n = tp_normalized(Channel(k))
        code = CodeProjector(np.linalg.qr(random_complex((4, 2), rng))[0])
        rep = bounds_check(n, code, samples=10, seed=i)
        tyson += rep.tyson_ok
        lower += rep.worst_lower_ok
        upper += rep.worst_upper_ok
    ok = tyson == lower == upper == 20
    acceptance(7, ok, f"20 instances: Tyson {tyson}/20, worst-case lower {lower}/20, "
                      f"worst-case upper {upper}/20")
    assert tyson == 20
    assert lower == 20
    assert upper == 20


def test_criterion_08_bitflip_petz(acceptance):
    code = repetition_code()
    worst = np.inf
    for q in (0.01, 0.05, 0.2):
        ops = [np.sqrt(1 - 3 * q) * np.eye(8)] + [np.sqrt(q) * embed(X, k, [2, 2, 2]) for k in range(3)]
        n = Channel(np.stack(ops))
        rec = petz_recovery(n, code)
        wc = worst_case_fidelity(rec.compose(n), Channel.identity(8), code)
        worst = min(worst, wc.value)
    ok = worst >= 1 - 1e-8
    acceptance(8, ok, f"q in (0.01, 0.05, 0.2), min F_P^min = {worst:.12f}")
    assert ok


def test_criterion_09_interaction_series(acceptance):
    rng = np.random.default_rng(909)
    h = random_complex((2, 2), rng)
    models = [
        InteractionModel(1.0, [(X, X), (Y, np.array([[0.3, 0.5], [0.5, -0.3]]))], [1, 0]),
        InteractionModel(2.5, [(X, X), (Y, Y)], [1, 0]),
        InteractionModel(0.7, [(Z, h + dag(h)), (X, Y)], random_density(2, rng)),
    ]
    worst = np.inf
    for m in models:
        series = from_interaction(m)
        ts = GRID / m.lam
        diff = [np.linalg.norm(exact_interaction_channel(m, t).kraus - evaluate(series, t * m.lam).kraus)
                for t in ts]
        worst = min(worst, fit_loglog(ts, diff).slope)
    ok = worst >= 2.9
    acceptance(9, ok, f"3 interaction models, min Kraus-difference slope {worst:.2f}")
    assert ok


def test_criterion_10_gauge(acceptance):
    worst, verdicts_equal, names = 0.0, True, []
    for path in bundled_scenarios():
        sc = scenario(path.stem)
        noise = sc.noise()
        gauged = gauge_eliminate_e0(noise.series)
        verdicts_equal &= (kl_check_series(sc.code, noise.series).passed
                           == kl_check_series(sc.code, gauged).passed)
        before, after = sampled_coeffs(sc, noise.series), sampled_coeffs(sc, gauged)
        worst = max(worst, max(abs(a - b) for a, b in zip(before, after)))
        names.append(path.stem)
    ok = verdicts_equal and worst <= 1e-9
    acceptance(10, ok, f"{len(names)} scenarios, verdicts equal={verdicts_equal}, max coeff change {worst:.1e}")
    assert ok


def test_criterion_11_amplitude_damping(acceptance):
    sc = scenario("c4_amplitude_damping_four_qubit")
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    errors = [embed(lower, k, [2, 2, 2, 2]) for k in range(4)]
    four = kl_check(sc.code, errors)
    from_scenario = kl_check_series(sc.code, sc.noise().first_order)
    single = kl_check(CodeProjector(np.eye(2)), [lower])
    ok = four.passed and four.max_residual <= 1e-10 and from_scenario.passed and not single.passed
    acceptance(11, ok, f"four-qubit code residual {four.max_residual:.1e}, "
                       f"single-qubit residual {single.max_residual:.3g} (fails={not single.passed})")
    assert ok


def test_criterion_12_report_determinism(acceptance, tmp_path):
    same, codes = True, []
    for name in ("c1_amplitude_damping_qubit", "d_interaction_normal", "e_interaction_non_normal"):
        outs = []
        for run in range(2):
            path = tmp_path / f"{name}_{run}.json"
            codes.append(main(["report", "--scenario", name, "--seed", "11", "--out", str(path), "--quiet"]))
            outs.append(path.read_bytes())
        same &= outs[0] == outs[1]
        assert json.loads(outs[0])["command"] == "report"
    ok = same and all(c == 0 for c in codes)
    acceptance(12, ok, f"3 scenarios x 2 runs, byte-identical={same}, exit codes {sorted(set(codes))}")
    assert ok
