"""Closed-form ground truth for constant curvature disks.

All formulas are for the metric (1 + kappa|z|^2)^{-2}|dz|^2 on |z| <= R, whose
Gauss curvature is 4 kappa.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import DomainError, constant_curvature_metric


@dataclass(frozen=True)
class CCParams:
    kappa: float
    R: float = 1.0

    def __post_init__(self):
        if self.R <= 0:
            raise DomainError("R must be positive")
        if abs(self.kappa) * self.R ** 2 >= 1:
            raise DomainError("|kappa| R^2 must be < 1")


def beta_cc(p: CCParams, z, mu):
    """The constant curvature blow-down map (w, xi)."""
    z = np.asarray(z, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    zb = np.conj(z)
    den = 1 + p.kappa * zb ** 2 * mu ** 2
    w = (z - mu ** 2 * zb) / den
    xi = mu * (1 + p.kappa * z * zb) / den
    return w, xi


def m_func(y):
    """m(y) = (1/2 + sqrt(y + 1/4))^{-1}; solves y = x/(1-x)^2 with x = 1 - m."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= -0.25):
        raise DomainError("m(y) requires y > -1/4")
    out = 1.0 / (0.5 + np.sqrt(y + 0.25))
    return out if out.ndim else float(out)


def image_membership(kappa: float, R: float, w, xi, strict: bool = True, tol: float = 0.0):
    """Whether (w, xi) lies in the image of the open twistor space under beta_kappa.

    Tests |kappa w^2 + xi^2| < 1 and |a| < R/(1 - kappa R^2) with
    a = (w + wbar (kappa w^2 + xi^2)) / (1 - |kappa w^2 + xi^2|^2).  With
    ``strict=False`` the closures (up to ``tol``) are accepted.
    """
    w = np.asarray(w, complex)
    xi = np.asarray(xi, complex)
    s = kappa * w ** 2 + xi ** 2
    den = 1 - np.abs(s) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.abs((w + np.conj(w) * s) / den)
    a = np.where(den > 0, a, 0.0)
    lim = R / (1 - kappa * R ** 2)
    if strict:
        ok = (np.abs(s) < 1) & (a < lim)
    else:
        # on |s| = 1 (|mu| = 1) a is not defined; only the first condition is testable there
        ok = (np.abs(s) <= 1 + tol) & ((a <= lim * (1 + tol)) | (den <= tol))
    return bool(ok) if ok.ndim == 0 else ok


def beta_cc_inverse(p: CCParams, w, xi):
    """Invert beta_cc through a = (w + wbar(kappa w^2 + xi^2))/(1 - |kappa w^2 + xi^2|^2)."""
    w = np.asarray(w, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if not np.all(image_membership(p.kappa, p.R, w, xi, strict=False, tol=1e-9)):
        raise DomainError("point not in the image of beta_cc")
    s = p.kappa * w ** 2 + xi ** 2
    a = (w + np.conj(w) * s) / (1 - np.abs(s) ** 2)
    z = a * m_func(p.kappa * np.abs(a) ** 2)
    mu = xi / (1 + p.kappa * w * np.conj(z))
    if z.ndim == 0:
        return complex(z), complex(mu)
    return z, mu


def lambda_min_bound(p: CCParams) -> float:
    """Lower bound (1 - |kappa|R^2)^2 / (10 + 4R^2) on the smallest eigenvalue of H."""
    return (1 - abs(p.kappa) * p.R ** 2) ** 2 / (10 + 4 * p.R ** 2)


def scattering_cc(p: CCParams, alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(np.abs(alpha) >= np.pi / 2):
        raise DomainError("glancing incidence has no scattering angle")
    c = (1 - p.kappa * p.R ** 2) / (1 + p.kappa * p.R ** 2)
    out = np.arctan(c * np.tan(alpha))
    return out if out.ndim else float(out)


def vertex_cc(p: CCParams, omega, alpha):
    """beta_cc at the inward boundary phase point (R e^{i omega}, e^{i(omega + alpha + pi)})."""
    omega = np.asarray(omega, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    e2 = np.exp(2j * alpha)
    kR = p.kappa * p.R ** 2
    w = p.R * np.exp(1j * omega) * (1 - e2) / (1 + kR * e2)
    xi = np.exp(1j * (omega + alpha + np.pi)) * (1 + kR) / (1 + kR * e2)
    return w, xi


def normal_kernel_euclidean(x, y):
    """Schwartz kernel 2/|x - y| of N_0 on the Euclidean disk."""
    d = np.abs(np.asarray(x, dtype=complex) - np.asarray(y, dtype=complex))
    if np.any(d == 0):
        raise DomainError("kernel is singular on the diagonal")
    out = 2.0 / d
    return out if out.ndim else float(out)


def series_coefficients(p: CCParams, z, k_max: int):
    """mu-power coefficients of beta_cc: ({even k: u_k}, {odd k: u_k}) up to k_max.

    Expands 1/(1 + kappa zbar^2 mu^2) as a geometric series.
    """
    z = np.asarray(z, dtype=complex)
    E = 1 + p.kappa * np.abs(z) ** 2
    even = {k: _even_coefficient(p.kappa, z, k // 2) for k in range(0, k_max + 1, 2)}
    odd = {k: E * (-p.kappa) ** (k // 2) * np.conj(z) ** (k - 1) for k in range(1, k_max + 1, 2)}
    return even, odd


def _even_coefficient(kappa, z, j):
    zb = np.conj(z)
    out = (-kappa) ** j * zb ** (2 * j) * z
    if j >= 1:
        out = out - (-kappa) ** (j - 1) * zb ** (2 * j - 1)
    return out


def oracle_map(p: CCParams, grid, k_max: int = 32):
    """The constant curvature map as a TwistorMap with exact coefficient evaluators."""
    from .beta import TwistorMap
    from .transforms import ModeField

    ev = tuple(range(0, k_max + 1, 2))
    od = tuple(range(1, k_max + 1, 2))
    kappa = p.kappa

    def even_parts(z):
        return np.stack([_even_coefficient(kappa, z, k // 2) for k in ev], axis=-1)

    def odd_parts(z):
        zb = np.conj(z)
        E = 1 + kappa * np.abs(z) ** 2
        return np.stack([E * (-kappa) ** (k // 2) * zb ** (k - 1) for k in od], axis=-1)

    c0 = ModeField(grid, ev, np.moveaxis(even_parts(grid.z), -1, 0), expansion=even_parts)
    c1 = ModeField(grid, od, np.moveaxis(odd_parts(grid.z), -1, 0), expansion=odd_parts)
    tag = "euclidean" if kappa == 0 else f"oracle_cc({kappa:g})"
    return TwistorMap(c0, c1, k_max, metric_ref=constant_curvature_metric(kappa, p.R), provenance=tag)


def truncation_bound(p: CCParams, k_max: int) -> float:
    """Analytic tail bound (|kappa|R^2)^{k_max/2} / (1 - |kappa|R^2) for the mu-series."""
    r = abs(p.kappa) * p.R ** 2
    return r ** (k_max / 2) / (1 - r)


def oracle_resolution(p: CCParams, tol: float = 1e-12, k_min: int = 8) -> tuple[int, int, int]:
    """(n_r, n_theta, k_max) so that k_max times the series tail is below tol and every
    coefficient polynomial (total degree <= k_max + 1) is exact on the polar grid."""
    r = abs(p.kappa) * p.R ** 2
    k = k_min
    while r > 0 and k * truncation_bound(p, k) > tol:
        k += 2
    n_r = k // 2 + 2
    n_theta = 8 * int(np.ceil((2 * k + 4) / 8))
    return n_r, n_theta, k


def resolved_oracle_map(p: CCParams, tol: float = 1e-12):
    """oracle_map on a grid fine enough that truncation and interpolation errors stay below tol."""
    from .polar import PolarGrid

    n_r, n_theta, k = oracle_resolution(p, tol)
    return oracle_map(p, PolarGrid(p.R, n_r, n_theta), k)


@dataclass
class JacobiProfile:
    s: np.ndarray
    theta: np.ndarray
    values: np.ndarray  # [n_theta, n_s]
    defect: float


def jacobi_profile(K, eps: float, n_s: int = 65, n_theta: int = 16, rtol: float = 1e-11) -> JacobiProfile:
    """Rescaled Jacobi fields: f'' + eps^2 K(eps s, theta) f = 0, f(0) = 0, f'(0) = 1 on s in [0, 1].

    ``defect`` is sup |f_eps(s, theta) - s|.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    s = np.linspace(0.0, 1.0, n_s)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = np.empty((n_theta, n_s))
    for i, t in enumerate(th):
        def rhs(x, y, t=t):
            return [y[1], -eps ** 2 * K(eps * x, t) * y[0]]

        sol = solve_ivp(rhs, (0.0, 1.0), [0.0, 1.0], method="DOP853", t_eval=s, rtol=rtol, atol=1e-14)
        if not sol.success:
            raise RuntimeError(f"Jacobi ODE failed: {sol.message}")
        vals[i] = sol.y[0]
    return JacobiProfile(s, th, vals, float(np.max(np.abs(vals - s[None, :]))))


def jacobi_closed_form(kappa: float, eps: float, s):
    """f_eps for constant curvature 4 kappa (sinh continuation for kappa < 0)."""
    s = np.asarray(s, dtype=float)
    if kappa == 0:
        return s.copy()
    c = 2 * np.sqrt(abs(kappa)) * eps
    return np.sin(c * s) / c if kappa > 0 else np.sinh(c * s) / c
