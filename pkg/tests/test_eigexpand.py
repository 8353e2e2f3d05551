import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pertqec.channels import amplitude_damping
from pertqec.correctability import delta, delta_expansion, fit_loglog, log_grid
from pertqec.eigexpand import (
    SeriesOrderError,
    StructuralZeroError,
    build_s_series,
    closed_form_kernel_sum,
    closed_form_support_sum,
    delta_via_expansion,
    direct_s,
    eig_expansion,
    k3_dual,
    kernel_operators,
    kernel_propagator,
    propagator,
    s0_eigdata,
    support_second_order,
    to_eigenbasis,
)
from pertqec.matcore import dag, embed, proj, ket, random_complex, random_density
from pertqec.series import (
    KrausSeries,
    LindbladData,
    amplitude_damping_series,
    complete_tp,
    evaluate,
    lindblad_to_series,
    random_series,
)

from conftest import X, expansion_scenarios, repetition_code


def code_state(dim, rank, rng):
    basis = np.linalg.qr(random_complex((dim, rank), rng))[0]
    return basis @ random_density(rank, rng) @ dag(basis)


def test_s0_and_s1(rng):
    s = random_series(4, 2, 3, rng)
    rho = code_state(4, 2, rng)
    sigma = code_state(4, 4, rng)
    terms = build_s_series(s, rho, sigma)
    assert len(terms) == 5
    assert np.allclose(terms[0], rho @ rho)
    e0 = s.e0
    assert np.allclose(terms[1], e0 @ rho @ rho - rho @ rho @ e0, atol=1e-12)
    for t in terms:
        assert np.allclose(t, dag(t))


def test_s1_vanishes_without_drift(rng):
    l = LindbladData(np.zeros((3, 3)), [random_complex((3, 3), rng)])
    s = lindblad_to_series(l, max_order=3)
    rho = random_density(3, rng)
    assert np.allclose(build_s_series(s, rho, rho)[1], 0)


def test_s_series_residual_slope(rng):
    s = random_series(4, 2, 3, rng)
    rho = code_state(4, 2, rng)
    sigma = code_state(4, 3, rng)
    terms = build_s_series(s, rho, sigma)
    grid = np.geomspace(1e-3, 1e-2, 6)
    res = [np.linalg.norm(terms.evaluate(e) - direct_s(s, rho, sigma, e)) for e in grid]
    assert fit_loglog(grid, res, floor=1e-17).slope >= 4.9


def test_s_series_refuses_low_order(rng):
    s = random_series(3, 1, 2, rng)
    rho = random_density(3, rng)
    with pytest.raises(SeriesOrderError):
        build_s_series(s, rho, rho)
    assert len(build_s_series(s, rho, rho, orders=2)) == 3


def test_propagator_diagonal_example():
    eig = s0_eigdata(np.diag([2.0, 1.0, 0.0]))
    assert np.allclose(eig.w, [4, 1, 0])
    assert np.allclose(propagator(eig, 2), np.diag([-0.25, -1.0, 0.0]))
    assert np.allclose(kernel_propagator(eig), np.diag([-0.25, -1.0, 0.0]))
    assert np.allclose(propagator(eig, 0), np.diag([0.0, 1 / 3, 1 / 4]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 6))
def test_propagator_pseudo_inverse(seed, dim):
    rng = np.random.default_rng(seed)
    rank = int(rng.integers(1, dim + 1))
    eig = s0_eigdata(code_state(dim, rank, rng))
    s0 = (eig.v * eig.w) @ dag(eig.v)
    for i in range(dim):
        d = propagator(eig, i)
        a = eig.w[i] * np.eye(dim) - s0
        pi = eig.projector(eig.cluster_of(i))
        scale = max(1.0, np.linalg.norm(d, 2))
        assert np.linalg.norm(d @ pi) <= 1e-12 * scale
        assert np.linalg.norm(a @ d @ a - a) <= 1e-12 * scale
        assert np.linalg.norm(d @ a - (np.eye(dim) - pi)) <= 1e-12 * scale


def test_support_second_order_identity_series():
    s = build_s_series(KrausSeries.identity(3, max_order=3), np.diag([0.5, 0.5, 0]), np.diag([0.5, 0.5, 0]))
    eig = s0_eigdata(np.diag([0.5, 0.5, 0]))
    _, lam2, _ = support_second_order(s, eig)
    assert np.allclose(lam2, 0)


def test_support_sum_amplitude_damping():
    half = np.eye(2) / 2
    s = amplitude_damping_series(1, max_order=3)
    via = delta_via_expansion(s, half, half)
    e1 = s.coeffs[1, 1]
    closed = -0.5 * np.trace((half + half) @ dag(e1) @ e1).real
    assert closed == pytest.approx(-0.5)
    assert via.support_term == pytest.approx(closed, abs=1e-10)
    assert closed_form_support_sum(s, half, half) == pytest.approx(closed, abs=1e-12)
    assert via.kernel_term == 0.0


def test_lambda2_against_finite_difference(rng):
    s = random_series(3, 2, 3, rng)
    rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
    ex = eig_expansion(s, rho, rho)
    for eps in (1e-2, 5e-3):
        exact = np.sort(np.linalg.eigvalsh(direct_s(s, rho, rho, eps)))[::-1]
        approx = (exact - ex.p**2) / eps**2
        assert np.allclose(approx, ex.lambda2, atol=50 * eps)


def test_kernel_block_diagonal_errors_vanish(rng):
    c = 0.4 * random_complex((3, 4, 3, 3), rng)
    c[:, :, :2, 2:] = 0
    c[:, :, 2:, :2] = 0
    c[0, 0] = np.eye(3)
    c[1:, 0] = 0
    s = KrausSeries(complete_tp(c))
    rho = np.diag([0.7, 0.3, 0.0]).astype(complex)
    ex = eig_expansion(s, rho, rho)
    assert np.allclose(ex.lambda4, 0)


@pytest.mark.parametrize("level, expected", [(0, 0.0), (1, 1.0)])
def test_kernel_amplitude_damping_single_state(level, expected):
    s = amplitude_damping_series(1, max_order=3)
    rho = proj(ket(level, 2))
    ex = eig_expansion(s, rho, rho)
    assert ex.lambda4 == pytest.approx([expected], abs=1e-12)
    assert closed_form_kernel_sum(s, rho, rho) == pytest.approx(expected, abs=1e-12)
    assert delta_via_expansion(s, rho, rho).second_order_coeff == pytest.approx(0.0, abs=1e-12)


def test_lambda4_against_diagonalisation(rng):
    s = random_series(4, 2, 3, rng)
    basis = np.linalg.qr(random_complex((4, 2), rng))[0]
    rho = basis @ random_density(2, rng) @ dag(basis)
    sigma = basis @ random_density(2, rng) @ dag(basis)
    ex = eig_expansion(s, rho, sigma)

    def ratio(eps):
        w = np.sort(np.linalg.eigvalsh(direct_s(s, rho, sigma, eps)))[::-1]
        return w[2:] / eps**4

    richardson = 2 * ratio(5e-3) - ratio(1e-2)
    assert np.allclose(richardson, ex.lambda4, rtol=1e-3, atol=1e-6)


def test_k3_dual_form(rng):
    for scenario in expansion_scenarios(5, seed=11):
        series, rho, sigma, _ = to_eigenbasis(*scenario)
        s = build_s_series(series, rho, sigma)
        eig = s0_eigdata(rho)
        _, k3, _ = kernel_operators(s, eig)
        assert np.linalg.norm(k3 - k3_dual(s, eig)) <= 1e-10


def test_structural_zeros_on_random_scenarios():
    for series, rho, sigma in expansion_scenarios():
        ex = eig_expansion(series, rho, sigma)
        scale = np.linalg.norm(rho @ rho, 2)
        assert ex.k2_kernel_block <= 1e-9 * scale and ex.k3_kernel_block <= 1e-9 * scale


def test_structural_zero_guard_on_hermitian_drift(rng):
    s = random_series(3, 2, 3, rng)
    c = s.coeffs.copy()
    h = random_complex((3, 3), rng)
    c[0, 1] += h + dag(h)
    rho = np.diag([0.6, 0.4, 0.0]).astype(complex)
    with pytest.raises(StructuralZeroError):
        eig_expansion(KrausSeries(c), rho, rho)


def test_spectrum_prediction_on_random_scenarios():
    eps = 1e-2
    for series, rho, sigma in expansion_scenarios():
        ex = eig_expansion(series, rho, sigma)
        exact = np.sort(np.linalg.eigvalsh(direct_s(series, rho, sigma, eps)))[::-1]
        tol = max(1e-10, 10 * eps**3)
        assert np.all(np.abs(exact - ex.predicted_spectrum(eps)) <= tol)


def test_closed_forms_on_random_scenarios():
    for series, rho, sigma in expansion_scenarios():
        via = delta_via_expansion(series, rho, sigma)
        assert abs(via.support_term - closed_form_support_sum(series, rho, sigma)) <= 1e-9
        assert abs(via.kernel_term - closed_form_kernel_sum(series, rho, sigma)) <= 1e-9


def test_degenerate_support_cluster(rng):
    s = random_series(4, 2, 3, rng)
    basis = np.linalg.qr(random_complex((4, 2), rng))[0]
    rho = basis @ dag(basis) / 2
    ex = eig_expansion(s, rho, rho)
    assert ex.p == pytest.approx([0.5, 0.5])
    eps = 1e-2
    exact = np.sort(np.linalg.eigvalsh(direct_s(s, rho, rho, eps)))[::-1]
    assert np.all(np.abs(exact - ex.predicted_spectrum(eps)) <= 10 * eps**3)
    assert delta_via_expansion(s, rho, rho).second_order_coeff == pytest.approx(
        delta_expansion(s, rho, rho).second_order_coeff, abs=1e-9)


def test_delta_via_expansion_examples(rng):
    rho = np.diag([0.5, 0.5, 0.0])
    assert delta_via_expansion(KrausSeries.identity(3, max_order=3), rho, rho).second_order_coeff == 0.0
    code = repetition_code()
    s = lindblad_to_series(LindbladData(np.zeros((8, 8)), [embed(X, k, [2, 2, 2]) for k in range(3)]), max_order=3)
    for _ in range(3):
        r = code.lift(random_density(2, rng))
        assert abs(delta_via_expansion(s, r, r).second_order_coeff) <= 1e-9


def test_delta_via_expansion_amplitude_damping_fit():
    half = np.eye(2) / 2
    coeff = delta_via_expansion(amplitude_damping_series(1), half, half).second_order_coeff
    grid = np.geomspace(1e-3, 1e-2, 6)
    vals = np.array([delta(amplitude_damping(e), half, half) - 1 for e in grid])
    fitted = np.sum(vals * grid**2) / np.sum(grid**4)
    assert fitted == pytest.approx(coeff, rel=0.02)


def test_two_path_rho_equals_sigma(rng):
    for series, rho, _ in expansion_scenarios(10, seed=3):
        a = delta_via_expansion(series, rho, rho).second_order_coeff
        b = delta_expansion(series, rho, rho).second_order_coeff
        assert abs(a - b) <= 1e-9


def test_delta_slope_against_expansion():
    grid = log_grid()
    for series, rho, sigma in expansion_scenarios(5, seed=5):
        coeff = delta_via_expansion(series, rho, sigma).second_order_coeff
        err = [abs(delta(evaluate(series, e), rho, sigma) - 1 - e**2 * coeff) for e in grid]
        assert fit_loglog(grid, err).slope >= 2.9


def test_delta_remainder_is_cubic_as_eps_shrinks():
    # |Delta - 1 - eps^2 coeff| / eps^3 must not grow as eps -> 0; a wrong
    # coefficient would make it grow like 1 / eps
    def scaled(series, rho, sigma, coeff, e):
        return abs(delta(evaluate(series, e), rho, sigma) - 1 - e**2 * coeff) / e**3

    for series, rho, sigma in expansion_scenarios():
        coeff = delta_via_expansion(series, rho, sigma).second_order_coeff
        ref = scaled(series, rho, sigma, coeff, 2e-3)
        small = scaled(series, rho, sigma, coeff, 5e-4)
        assert small <= 1.5 * ref + 1e-13 / 5e-4**3
