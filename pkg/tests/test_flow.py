import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from twistor.flow import (BoundaryPoint, PhasePoint, backward_exit, backward_exits, boundary_to_phase,
                          chord_samples, exit_time, flow_for, flow_ode, integrate, scattering, shoot, upsilon,
                          wrap)
from twistor.geometry import DomainError, constant_curvature_metric, euclidean_metric, perturbed_metric
from twistor.oracles import CCParams, scattering_cc

E = euclidean_metric()
KAPPAS = [-0.5, 0.0, 0.3, 0.7]
omegas = st.floats(0, 2 * np.pi)
alphas = st.floats(-1.3, 1.3)


def test_flow_ode_examples():
    dz, dth = flow_ode(E, PhasePoint(0j, 0.0))
    assert dz == pytest.approx(1.0) and dth == 0.0
    for th in (0.3, 2.0):
        dz, dth = flow_ode(constant_curvature_metric(0.7), PhasePoint(0j, th))
        assert dz == pytest.approx(np.exp(1j * th), abs=1e-15) and dth == pytest.approx(0.0, abs=1e-15)
    # -2 e^{-sigma} Im(e^{i theta} d_z sigma) with e^{-sigma} = 1.08 and d_z sigma = -0.2/1.08
    _, dth = flow_ode(constant_curvature_metric(0.5), PhasePoint(0.4 + 0j, np.pi / 2))
    assert dth == pytest.approx(-2 * 1.08 * np.imag(1j * (-0.5 * 0.4 / 1.08)), abs=1e-14)
    assert dth == pytest.approx(0.4, abs=1e-14)


def test_integrate_exit_times():
    assert integrate(E, PhasePoint(-1 + 0j, 0.0), 5.0).exit_time == pytest.approx(2.0, abs=1e-10)
    assert integrate(E, PhasePoint(0.5 + 0j, 0.0), 5.0).exit_time == pytest.approx(0.5, abs=1e-10)
    m = constant_curvature_metric(0.3)
    radial = quad(lambda r: 1 / (1 + 0.3 * r * r), 0, 1, epsabs=1e-14)[0]
    assert radial == pytest.approx(np.arctan(np.sqrt(0.3)) / np.sqrt(0.3), abs=1e-14)
    assert integrate(m, PhasePoint(0j, 1.0), 5.0).exit_time == pytest.approx(radial, abs=1e-9)


def test_record_invariants():
    rec = integrate(constant_curvature_metric(-0.5), PhasePoint(0.2 + 0.1j, 0.7), 10.0)
    assert np.all(np.diff(rec.t) > 0)
    assert abs(abs(rec.z[-1]) - 1.0) <= 1e-10
    assert rec.states[0][1] == PhasePoint(0.2 + 0.1j, 0.7)
    short = integrate(E, PhasePoint(0j, 0.0), 0.3)
    assert short.exit_time is None and short.t[-1] == pytest.approx(0.3)
    with pytest.raises(DomainError):
        integrate(E, PhasePoint(0j, 0.0), -1.0)


def test_exit_time_directions():
    p = PhasePoint(0.5 + 0j, 0.0)
    assert exit_time(E, p, "forward") == pytest.approx(0.5, abs=1e-10)
    assert exit_time(E, p, "backward") == pytest.approx(1.5, abs=1e-10)


def test_bulk_shoot_matches_scipy_reference():
    m = constant_curvature_metric(0.7)
    z = np.array([0.1 + 0.2j, -0.4 + 0j, 0.3 - 0.6j])
    th = np.array([0.3, 2.0, -1.1])
    tau, ze, _ = shoot(m, z, th)
    for i in range(3):
        rec = integrate(m, PhasePoint(z[i], th[i]), 10.0, tol=1e-12)
        assert tau[i] == pytest.approx(rec.exit_time, abs=1e-9)
        assert ze[i] == pytest.approx(rec.z[-1], abs=1e-9)


def test_boundary_to_phase_examples():
    assert boundary_to_phase(1.0, BoundaryPoint(0.0, 0.0)) == PhasePoint(1 + 0j, np.pi)
    p = boundary_to_phase(2.0, BoundaryPoint(np.pi / 2, 0.0))
    assert p.z == pytest.approx(2j) and p.theta == pytest.approx(3 * np.pi / 2)
    g = BoundaryPoint(0.0, np.pi / 2)
    assert g.glancing and boundary_to_phase(1.0, g).theta == pytest.approx(3 * np.pi / 2)


def test_scattering_examples():
    e = scattering(E, BoundaryPoint(0.0, 0.0))
    assert wrap(e.omega - np.pi) == pytest.approx(0.0, abs=1e-9) and e.alpha == pytest.approx(np.pi, abs=1e-9)
    e = scattering(E, BoundaryPoint(0.4, 0.7))
    assert wrap(e.omega - (0.4 + np.pi + 1.4)) == pytest.approx(0.0, abs=1e-9)
    assert e.alpha == pytest.approx(np.pi - 0.7, abs=1e-9)
    kR = 0.3
    e = scattering(constant_curvature_metric(kR), BoundaryPoint(0.0, 0.5))
    expect = np.pi + 2 * np.arctan((1 - kR) / (1 + kR) * np.tan(0.5))
    assert wrap(e.omega - expect) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        scattering(E, BoundaryPoint(0.0, np.pi / 2))


@pytest.mark.parametrize("kappa", KAPPAS)
@given(omega=omegas, alpha=alphas)
def test_scattering_matches_closed_form(kappa, omega, alpha):
    e = scattering(constant_curvature_metric(kappa), BoundaryPoint(omega, alpha))
    s = scattering_cc(CCParams(kappa), alpha)
    assert abs(wrap(e.omega - omega - np.pi - 2 * s)) <= 2e-6
    assert abs(e.alpha - (np.pi - alpha)) <= 1e-6


def test_upsilon_examples():
    b = BoundaryPoint(0.0, 0.0)
    p = upsilon(E, b, 0.0)
    assert p.z == pytest.approx(1.0) and p.theta == pytest.approx(np.pi)
    p = upsilon(E, b, 0.5)
    assert abs(p.z) < 1e-10 and p.theta == pytest.approx(np.pi)
    p = upsilon(E, b, 0.25)
    assert p.z == pytest.approx(0.5, abs=1e-10) and p.theta == pytest.approx(np.pi)
    g = BoundaryPoint(1.0, -np.pi / 2)
    for u in (0.0, 0.4, 1.0):
        assert upsilon(E, g, u).z == pytest.approx(np.exp(1j))
    with pytest.raises(DomainError):
        upsilon(E, b, 1.5)


def test_backward_exit_examples():
    b = backward_exit(E, PhasePoint(0j, 0.0))
    assert wrap(b.omega - np.pi) == pytest.approx(0.0, abs=1e-10) and b.alpha == pytest.approx(0.0, abs=1e-10)
    b = backward_exit(E, PhasePoint(0.5 + 0j, np.pi / 2))
    assert wrap(b.omega) == pytest.approx(-np.arctan2(np.sqrt(0.75), 0.5), abs=1e-10)
    b0 = BoundaryPoint(0.8, 0.3)
    b = backward_exit(constant_curvature_metric(0.3), boundary_to_phase(1.0, b0))
    assert b.omega == pytest.approx(0.8, abs=1e-12) and b.alpha == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("kappa", [-0.5, 0.7])
@given(omega=omegas, alpha=alphas, t=st.floats(0.05, 0.5))
def test_unit_speed(kappa, omega, alpha, t):
    m = constant_curvature_metric(kappa)
    p = boundary_to_phase(1.0, BoundaryPoint(omega, alpha))
    tau = exit_time(m, p)
    times = np.linspace(0, min(t, 0.99) * tau, 7)[None, :]
    z, th = flow_for(m, np.array([p.z]), np.array([p.theta]), times)
    for zi, ti in zip(z[0], th[0]):
        dz, _ = flow_ode(m, PhasePoint(zi, ti))
        assert abs(np.exp(m.sigma(zi)) * abs(dz) - 1) <= 1e-8
    # speed along the integrated path by differencing positions
    zz, _ = flow_for(m, np.array([z[0, 3]]), np.array([th[0, 3]]), np.array([[1e-4, 2e-4]]))
    seg = abs(zz[0, 1] - zz[0, 0]) * np.exp(m.sigma(zz[0, 0]))
    assert seg == pytest.approx(1e-4, rel=1e-3)


@given(z=st.complex_numbers(max_magnitude=0.5), th=st.floats(0, 6.28), t=st.floats(0.0, 0.2),
       s=st.floats(0.0, 0.2))
def test_group_property(z, th, t, s):
    m = perturbed_metric(constant_curvature_metric(0.3), 0.05)
    z1, th1 = flow_for(m, np.array([z]), np.array([th]), np.array([[t]]))
    z2, th2 = flow_for(m, z1[:, 0], th1[:, 0], np.array([[s]]))
    z3, th3 = flow_for(m, np.array([z]), np.array([th]), np.array([[t + s]]))
    assert abs(z2[0, 0] - z3[0, 0]) <= 1e-8 and abs(th2[0, 0] - th3[0, 0]) <= 1e-8


@pytest.mark.parametrize("kappa", KAPPAS)
@given(omega=omegas, alpha=alphas, u=st.floats(0.02, 0.98))
def test_upsilon_endpoint_and_reversibility(kappa, omega, alpha, u):
    m = constant_curvature_metric(kappa)
    b = BoundaryPoint(omega, alpha)
    end = upsilon(m, b, 1.0)
    e = scattering(m, b)
    assert abs(end.z - np.exp(1j * e.omega)) <= 1e-8
    back = backward_exit(m, upsilon(m, b, u))
    assert abs(wrap(back.omega - omega)) <= 1e-6 and abs(back.alpha - alpha) <= 1e-6


def test_backward_fraction_recovers_upsilon():
    m = constant_curvature_metric(-0.5)
    p = PhasePoint(0.3 - 0.2j, 2.2)
    om, al, tb = backward_exits(m, np.array([p.z]), np.array([p.theta]))
    tau, _, _ = chord_samples(m, om, al, [0.0])
    q = upsilon(m, BoundaryPoint(float(om[0]), float(al[0])), float(tb[0] / tau[0]))
    assert abs(q.z - p.z) < 1e-8 and abs(wrap(q.theta - p.theta)) < 1e-8
