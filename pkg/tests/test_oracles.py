import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from twistor.beta import evaluate, leading_mode
from twistor.bds import _gram, boundary_map, jacobian_S
from twistor.geometry import DomainError, constant_curvature_metric
from twistor.oracles import (CCParams, beta_cc, beta_cc_inverse, image_membership, jacobi_closed_form,
                             jacobi_profile, lambda_min_bound, m_func, normal_kernel_euclidean, oracle_map,
                             oracle_resolution, resolved_oracle_map, scattering_cc, series_coefficients,
                             truncation_bound, vertex_cc)
from twistor.polar import PolarGrid


def interior_samples(n=20, R=1.0, shrink=0.98):
    """n x n x n tensor sample of (|z|, arg z, mu) strictly inside D_R x D."""
    r = shrink * R * (np.arange(n) + 0.5) / n
    phi = 2 * np.pi * np.arange(n) / n
    z = (r[:, None] * np.exp(1j * phi)[None, :]).ravel()
    mu = shrink * np.sqrt((np.arange(n) + 0.5) / n) * np.exp(2.4j * np.arange(n))
    Z, M = np.meshgrid(z, mu, indexing="ij")
    return Z.ravel(), M.ravel()


# ------------------------------------------------------------------ CCParams
def test_params_validation():
    CCParams(0.99, 1.0)
    with pytest.raises(DomainError):
        CCParams(1.0, 1.0)
    with pytest.raises(DomainError):
        CCParams(-0.3, 2.0)
    with pytest.raises(DomainError):
        CCParams(0.0, 0.0)


# ------------------------------------------------------------------ beta_cc
def test_beta_cc_euclidean_reduction():
    z, mu = 0.3 - 0.2j, 0.5 + 0.1j
    w, xi = beta_cc(CCParams(0.0), z, mu)
    assert w == pytest.approx(z - mu ** 2 * np.conj(z), abs=1e-15)
    assert xi == pytest.approx(mu, abs=1e-15)


def test_beta_cc_zero_fibre_and_hand_value():
    w, xi = beta_cc(CCParams(0.5), 0.37 + 0.1j, 0.0)
    assert (w, xi) == (0.37 + 0.1j, 0)
    w, xi = beta_cc(CCParams(0.5), 0.6, 0.5j)
    assert w == pytest.approx(0.75 / 0.955, abs=1e-12)
    assert xi == pytest.approx(0.5j * 1.18 / 0.955, abs=1e-12)
    assert abs(w - 0.78534) < 1e-5 and abs(xi - 0.61780j) < 1e-5


# ------------------------------------------------------------------ m_func
def test_m_func_examples():
    assert m_func(0.0) == 1.0
    assert m_func(2.0) == pytest.approx(0.5, abs=1e-15)
    assert m_func(-0.25 + 1e-14) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(DomainError):
        m_func(-0.25)


@given(st.floats(-0.2499, 50.0))
def test_m_func_solves_defining_relation(y):
    x = 1 - m_func(y)
    assert x / (1 - x) ** 2 == pytest.approx(y, abs=1e-9 * max(1.0, abs(y)))
    assert 0 < m_func(y) < 2


# ------------------------------------------------------------------ inverse
def test_inverse_euclidean_formula_and_hand_roundtrip():
    p = CCParams(0.0)
    w, xi = beta_cc(p, 0.3, 0.4)
    assert (w, xi) == (pytest.approx(0.252), pytest.approx(0.4))
    z, mu = beta_cc_inverse(p, w, xi)
    assert z == pytest.approx(0.3, abs=1e-14) and mu == pytest.approx(0.4, abs=1e-14)
    w, xi = 0.2 - 0.1j, 0.3 + 0.4j
    z, mu = beta_cc_inverse(p, w, xi)
    assert z == pytest.approx((w + xi ** 2 * np.conj(w)) / (1 - abs(xi) ** 4), abs=1e-14)
    assert mu == xi


def test_inverse_fixes_center():
    for kappa in (-0.5, 0.3, 0.7):
        z, mu = beta_cc_inverse(CCParams(kappa), 0.0, 0.4 - 0.2j)
        assert abs(z) < 1e-15 and mu == pytest.approx(0.4 - 0.2j, abs=1e-15)


@pytest.mark.parametrize("kappa", [-0.5, 0.0, 0.3, 0.7])
def test_inverse_roundtrip_tensor_sample(kappa):
    p = CCParams(kappa)
    z, mu = interior_samples()
    assert z.size == 8000
    z2, mu2 = beta_cc_inverse(p, *beta_cc(p, z, mu))
    assert np.max(np.abs(z2 - z)) < 1e-10 and np.max(np.abs(mu2 - mu)) < 1e-10


@pytest.mark.parametrize("kappa", [-0.5, 0.3])
def test_inverse_rejects_outside_image(kappa):
    with pytest.raises(DomainError):
        beta_cc_inverse(CCParams(kappa), 0.0, 1.2)


# ------------------------------------------------------------------ membership
def test_membership_examples():
    z, mu = interior_samples(8)
    for kappa in (-0.5, 0.0, 0.3, 0.7):
        assert np.all(image_membership(kappa, 1.0, *beta_cc(CCParams(kappa), z, mu)))
        assert image_membership(kappa, 1.0, 0.0, 0.0)
    assert not image_membership(0.0, 1.0, 0.0, 1.0)
    assert not image_membership(0.0, 1.0, 0.0, np.exp(0.7j))
    assert not image_membership(0.3, 1.0, 3.0, 0.0)


# ------------------------------------------------------------------ constants
def test_lambda_min_bound_values():
    assert lambda_min_bound(CCParams(0.0)) == pytest.approx(1 / 14, abs=1e-15)
    assert lambda_min_bound(CCParams(0.3)) == pytest.approx(0.035, abs=1e-15)
    assert lambda_min_bound(CCParams(-0.3)) == pytest.approx(0.035, abs=1e-15)
    assert lambda_min_bound(CCParams(1 - 1e-9)) < 1e-17


def test_scattering_cc_examples():
    a = np.linspace(-1.5, 1.5, 13)
    assert np.allclose(scattering_cc(CCParams(0.0), a), a, atol=1e-15)
    assert scattering_cc(CCParams(0.7), 0.0) == 0.0
    assert scattering_cc(CCParams(0.5), np.pi / 4) == pytest.approx(np.arctan(1 / 3), abs=1e-15)
    assert scattering_cc(CCParams(0.5), np.pi / 4) == pytest.approx(0.32175, abs=1e-5)
    with pytest.raises(DomainError):
        scattering_cc(CCParams(0.5), np.pi / 2)


def test_vertex_examples():
    om = np.linspace(0, 2 * np.pi, 7)
    for kappa in (-0.5, 0.3):
        w, xi = vertex_cc(CCParams(kappa), om, 0.0)
        assert np.allclose(w, 0, atol=1e-15) and np.allclose(xi, -np.exp(1j * om), atol=1e-15)
    w, xi = vertex_cc(CCParams(0.0, 0.8), om, np.pi / 2)
    assert np.allclose(w, 2 * 0.8 * np.exp(1j * om), atol=1e-14)
    assert np.allclose(xi, np.exp(1j * (om + 1.5 * np.pi)), atol=1e-14)


@given(kappa=st.floats(-0.9, 0.9), R=st.floats(0.5, 1.0), omega=st.floats(0, 6.28), alpha=st.floats(-1.5, 1.5))
def test_vertex_ratio_determines_alpha(kappa, R, omega, alpha):
    p = CCParams(kappa, R)
    w, xi = vertex_cc(p, omega, alpha)
    kR = p.kappa * R ** 2
    assert w / xi == pytest.approx(2j * R * np.sin(alpha) / (1 + kR), abs=1e-12)


@pytest.mark.parametrize("kappa", [-0.5, 0.0, 0.3, 0.7])
def test_vertex_matches_oracle_map_on_boundary(kappa):
    p = CCParams(kappa)
    tm = resolved_oracle_map(p)
    om = np.linspace(0, 2 * np.pi, 9)[:, None] * np.ones((1, 7))
    al = np.linspace(-1.4, 1.4, 7)[None, :] * np.ones((9, 1))
    w, xi = vertex_cc(p, om, al)
    b1, b2 = boundary_map(tm, om, al)
    # beta_cc at the same phase point (same formula path)
    w2, xi2 = beta_cc(p, np.exp(1j * om), np.exp(1j * (om + al + np.pi)))
    assert np.max(np.abs(w - w2)) < 1e-12 and np.max(np.abs(xi - xi2)) < 1e-12
    assert np.max(np.abs(b1 - w)) < 1e-12 and np.max(np.abs(b2 - xi)) < 1e-12


# ------------------------------------------------------------------ kernel
def test_normal_kernel_examples():
    assert normal_kernel_euclidean(-1.0, 1.0) == 1.0
    assert normal_kernel_euclidean(0.25j, -0.25j) == 4.0
    with pytest.raises(DomainError):
        normal_kernel_euclidean(0.3, 0.3)


def test_normal_kernel_integral_at_center():
    # polar integration in y around x = 0 cancels the 1/r singularity exactly
    val, _ = dblquad(lambda r, ph: normal_kernel_euclidean(0.0, r * np.exp(1j * ph)) * r, 0, 2 * np.pi, 0, 1)
    assert val == pytest.approx(4 * np.pi, abs=1e-10)


# ------------------------------------------------------------------ series
@pytest.mark.parametrize("kappa", [-0.5, 0.3, 0.7])
def test_series_coefficients_resum_to_closed_form(kappa):
    p = CCParams(kappa)
    z, mu = interior_samples(6, shrink=0.9)
    even, odd = series_coefficients(p, z, 120)
    w = sum(c * mu ** k for k, c in even.items())
    xi = sum(c * mu ** k for k, c in odd.items())
    w0, xi0 = beta_cc(p, z, mu)
    assert np.max(np.abs(w - w0)) < 1e-12 and np.max(np.abs(xi - xi0)) < 1e-12


def test_series_first_odd_coefficient():
    z = np.array([0.0, 0.4, 0.3 - 0.5j])
    _, odd = series_coefficients(CCParams(0.3), z, 5)
    assert np.allclose(odd[1], 1 + 0.3 * np.abs(z) ** 2, atol=1e-15)


@pytest.mark.parametrize("kappa", [-0.5, 0.0, 0.3])
def test_series_matches_leading_mode_extraction(kappa):
    p = CCParams(kappa)
    g = PolarGrid(1.0, 20, 72)
    tm = oracle_map(p, g, 32)
    pts = np.array([0.1 + 0.2j, -0.55j, 0.7 * np.exp(2.1j), 0.93])
    even, odd = series_coefficients(p, pts, 32)
    for k in range(0, 33):
        ref = even[k] if k % 2 == 0 else odd[k]
        f = leading_mode(tm, k)
        assert np.max(np.abs(f.parts(pts)[0] - ref)) < 1e-12
        # the grid samples carry the same values
        assert np.max(np.abs(f.coeffs[0] - (series_coefficients(p, g.z, k)[k % 2][k]))) < 1e-12
    assert np.all(leading_mode(tm, 40).coeffs == 0)


def test_oracle_map_center_and_provenance():
    tm = oracle_map(CCParams(0.3), PolarGrid(1.0, 12, 48), 24)
    assert tm.provenance == "oracle_cc(0.3)"
    assert oracle_map(CCParams(0.0), PolarGrid(1.0, 12, 48), 24).provenance == "euclidean"
    mu = np.array([0.0, 0.5j, -0.9 + 0.1j])
    b1, b2 = evaluate(tm, 0.0, mu)
    assert np.allclose(b1, 0, atol=1e-15) and np.allclose(b2, mu, atol=1e-15)


@pytest.mark.parametrize("kappa", [-0.5, 0.3, 0.5, 0.7])
def test_oracle_mode_decay_envelope(kappa):
    g = PolarGrid(1.0, 24, 96)
    tm = oracle_map(CCParams(kappa), g, 32)
    for comp in (tm.component0, tm.component1):
        sup = {k: np.max(np.abs(c)) for k, c in zip(comp.k_values, comp.coeffs)}
        ks = [k for k in sorted(sup) if k >= 4]
        env = [sup[k] for k in ks]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(env, env[1:]))
        # consecutive same-parity modes shrink by the ratio |kappa| R^2
        assert all(b <= abs(kappa) * a * (1 + 1e-9) + 1e-300 for a, b in zip(env, env[1:]))


def test_truncation_bound_and_resolution():
    p = CCParams(0.5)
    assert truncation_bound(p, 32) == pytest.approx(0.5 ** 16 / 0.5, rel=1e-15)
    assert truncation_bound(CCParams(0.0), 32) == 0.0
    n_r, n_t, k = oracle_resolution(p)
    assert k * truncation_bound(p, k) <= 1e-12 and n_t % 8 == 0 and n_t >= 2 * k + 4
    assert oracle_resolution(CCParams(0.0)) == (6, 24, 8)


@pytest.mark.parametrize("kappa", [-0.5, 0.3, 0.7])
def test_det_and_trace_of_pullback_closed_forms(kappa):
    p = CCParams(kappa)
    tm = resolved_oracle_map(p)
    m = constant_curvature_metric(kappa)
    z, mu = interior_samples(8, shrink=0.95)
    H = _gram(jacobian_S(m, tm, z, mu).S)
    det = np.real(np.linalg.det(H))
    tr = np.real(np.trace(H, axis1=-2, axis2=-1))
    E = 1 + kappa * np.abs(z) ** 2
    D = np.abs(1 + kappa * np.conj(z) ** 2 * mu ** 2)
    assert np.max(np.abs(det * D ** 4 / E ** 4 - 1)) < 1e-8
    # trace from symbolic differentiation of beta_cc
    tr_ref = 2 * E ** 2 / D ** 4 * (np.abs(1 - kappa * np.conj(z) ** 2 * mu ** 2) ** 2
                                    + 2 * np.abs(np.conj(z) * mu) ** 2 * (1 + kappa ** 2))
    assert np.max(np.abs(tr / tr_ref - 1)) < 1e-8


# ------------------------------------------------------------------ Jacobi
def test_jacobi_flat_is_exact():
    prof = jacobi_profile(lambda s, t: 0.0 * s, 0.3)
    assert prof.defect < 1e-14
    assert np.allclose(prof.values, prof.s[None, :], atol=1e-14)


@pytest.mark.parametrize("kappa", [0.3, -0.5])
def test_jacobi_matches_closed_form(kappa):
    for eps in (0.2, 0.1, 0.05):
        prof = jacobi_profile(lambda s, t: 4 * kappa + 0 * s, eps)
        ref = jacobi_closed_form(kappa, eps, prof.s)
        assert np.max(np.abs(prof.values - ref[None, :])) < 1e-10
        assert prof.defect == pytest.approx(np.max(np.abs(ref - prof.s)), abs=1e-8)


def test_jacobi_second_order_convergence():
    eps = [0.2, 0.1, 0.05]
    # variable curvature: the limit profile is still s and the defect is O(eps^2)
    d = [jacobi_profile(lambda s, t: 1.2 + 0.4 * np.cos(t) + s, e).defect for e in eps]
    orders = np.log2(np.array(d[:-1]) / np.array(d[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.1)


def test_jacobi_rejects_nonpositive_eps():
    with pytest.raises(DomainError):
        jacobi_profile(lambda s, t: 0 * s, 0.0)
