"""Conformally Euclidean metrics e^{2 sigma}|dz|^2 on the disk of radius R."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]


class DomainError(ValueError):
    """Raised when an input lies outside the admissible parameter domain."""


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """The metric e^{2 sigma(z)} |dz|^2 on {|z| <= R}.

    ``sigma`` and ``dz_sigma`` are vectorized callables on complex arrays.
    ``radial`` marks metrics invariant under rotations z -> e^{it} z, which
    lets the transport code reuse one ray per rotation orbit.
    """

    R: float
    sigma: ArrayFn
    dz_sigma: ArrayFn
    kind: str = "custom"
    kappa: float | None = None
    radial: bool = False
    spec: dict = field(default_factory=dict)

    def ddbar_sigma(self, z) -> np.ndarray:
        """d_z d_zbar sigma; analytic for constant curvature, else central differences of dz_sigma."""
        z = np.asarray(z, dtype=complex)
        if self.kind in ("euclidean", "constant_curvature"):
            k = self.kappa or 0.0
            return -k / (1.0 + k * np.abs(z) ** 2) ** 2
        h = 1e-5 * self.R
        # d_zbar f = (f_x + i f_y) / 2; the result is real for real sigma
        fx = (self.dz_sigma(z + h) - self.dz_sigma(z - h)) / (2 * h)
        fy = (self.dz_sigma(z + 1j * h) - self.dz_sigma(z - 1j * h)) / (2 * h)
        return np.real(0.5 * (fx + 1j * fy))

    def conformal_factor(self, z) -> np.ndarray:
        return np.exp(self.sigma(np.asarray(z, dtype=complex)))


@dataclass(frozen=True)
class GridSpec:
    """Discretization sizes shared by the transport and beta modules.

    ``n_alpha`` (incidence nodes on the boundary grid) defaults to 2*n_r: the
    closest-approach radius R sin(alpha) of a chord plays the role of the
    radial coordinate, so both resolutions refine together.
    """

    n_r: int = 32
    n_theta: int = 128
    k_max: int = 32
    quad_nodes: int = 48
    n_alpha: int | None = None

    def __post_init__(self):
        if self.n_r < 4:
            raise DomainError("n_r must be >= 4")
        if self.n_theta < 8 or self.n_theta % 2:
            raise DomainError("n_theta must be even and >= 8")
        if self.k_max < 2:
            raise DomainError("k_max must be >= 2")
        if self.k_max > self.n_theta // 2 - 1:
            raise DomainError("k_max must not exceed n_theta/2 - 1")
        if self.quad_nodes < 8:
            raise DomainError("quad_nodes must be >= 8")
        if self.n_alpha is not None and self.n_alpha < 4:
            raise DomainError("n_alpha must be >= 4")

    @property
    def boundary_alpha(self) -> int:
        return self.n_alpha if self.n_alpha is not None else 2 * self.n_r


def euclidean_metric(R: float = 1.0) -> ConformalMetric:
    if R <= 0:
        raise DomainError("R must be positive")
    zero = lambda z: np.zeros(np.shape(z))  # noqa: E731
    zeroc = lambda z: np.zeros(np.shape(z), dtype=complex)  # noqa: E731
    return ConformalMetric(R=float(R), sigma=zero, dz_sigma=zeroc, kind="euclidean",
                           kappa=0.0, radial=True, spec={"kind": "cc", "kappa": 0.0, "R": float(R)})


def constant_curvature_metric(kappa: float, R: float = 1.0) -> ConformalMetric:
    """sigma = -log(1 + kappa|z|^2); Gauss curvature 4*kappa. Requires |kappa| R^2 < 1."""
    if R <= 0:
        raise DomainError("R must be positive")
    if abs(kappa) * R * R >= 1.0:
        raise DomainError(f"|kappa| R^2 = {abs(kappa) * R * R:g} >= 1: disk is not simple")
    if kappa == 0:
        return euclidean_metric(R)
    k = float(kappa)

    def sigma(z):
        return -np.log1p(k * np.abs(z) ** 2)

    def dz_sigma(z):
        z = np.asarray(z, dtype=complex)
        return -k * np.conj(z) / (1.0 + k * np.abs(z) ** 2)

    return ConformalMetric(R=float(R), sigma=sigma, dz_sigma=dz_sigma, kind="constant_curvature",
                           kappa=k, radial=True, spec={"kind": "cc", "kappa": k, "R": float(R)})


def custom_metric(sigma: ArrayFn, dz_sigma: ArrayFn, R: float = 1.0, radial: bool = False,
                  spec: dict | None = None) -> ConformalMetric:
    if R <= 0:
        raise DomainError("R must be positive")
    return ConformalMetric(R=float(R), sigma=sigma, dz_sigma=dz_sigma, kind="custom",
                           radial=radial, spec=dict(spec or {"kind": "custom", "R": float(R)}))


def perturbed_metric(base: ConformalMetric, delta: float, center: complex = 0.3 + 0.2j,
                     width: float = 0.35) -> ConformalMetric:
    """base sigma plus delta * exp(-|z - c|^2 / width^2), with its exact z-derivative."""
    c = complex(center)
    w2 = width * width

    def bump(z):
        return np.exp(-np.abs(z - c) ** 2 / w2)

    def sigma(z):
        z = np.asarray(z, dtype=complex)
        return base.sigma(z) + delta * bump(z)

    def dz_sigma(z):
        z = np.asarray(z, dtype=complex)
        # d_z |z-c|^2 = conj(z-c)
        return base.dz_sigma(z) - delta * np.conj(z - c) / w2 * bump(z)

    spec = {"kind": "perturbed", "base": dict(base.spec), "delta": float(delta),
            "center": [c.real, c.imag], "width": float(width), "R": base.R}
    return custom_metric(sigma, dz_sigma, base.R, radial=(delta == 0 or c == 0) and base.radial, spec=spec)


_ALLOWED = re.compile(r"^[0-9zZ+\-*/^().,|\s eEaxpmlogRIsqrtcn]*$")


def metric_from_expression(sigma_expr: str, R: float = 1.0) -> ConformalMetric:
    """Parse sigma from a small grammar: + - * / ^, exp, log, |z|^2, Re(z), Im(z).

    The z-derivative is taken symbolically as (d_x - i d_y)/2.
    """
    import sympy as sp

    if not _ALLOWED.match(sigma_expr):
        raise DomainError(f"unsupported characters in sigma expression: {sigma_expr!r}")
    x, y = sp.symbols("x y", real=True)
    text = sigma_expr.replace("^", "**")
    text = re.sub(r"\|\s*z\s*\|", "Abs(z)", text)
    local = {"z": x + sp.I * y, "Re": sp.re, "Im": sp.im, "exp": sp.exp, "log": sp.log,
             "Abs": sp.Abs, "sqrt": sp.sqrt}
    try:
        expr = sp.sympify(text, locals=local)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise DomainError(f"cannot parse sigma expression {sigma_expr!r}: {exc}") from exc
    expr = sp.simplify(expr)
    if expr.free_symbols - {x, y}:
        raise DomainError(f"sigma expression has unknown symbols: {expr.free_symbols - {x, y}}")
    dz = (sp.diff(expr, x) - sp.I * sp.diff(expr, y)) / 2
    f_sig = sp.lambdify((x, y), expr, "numpy")
    f_dz = sp.lambdify((x, y), dz, "numpy")

    def sigma(z):
        z = np.asarray(z, dtype=complex)
        return np.real(np.broadcast_to(f_sig(z.real, z.imag), z.shape)).astype(float)

    def dz_sigma(z):
        z = np.asarray(z, dtype=complex)
        return np.broadcast_to(f_dz(z.real, z.imag), z.shape).astype(complex)

    r = sp.symbols("r", positive=True)
    t = sp.symbols("t", real=True)
    polar = sp.simplify(expr.subs({x: r * sp.cos(t), y: r * sp.sin(t)}))
    radial = t not in polar.free_symbols
    metric = custom_metric(sigma, dz_sigma, R, radial=radial,
                           spec={"kind": "custom", "sigma_expr": sigma_expr, "R": float(R)})
    # fail early if sigma is singular somewhere on a coarse sample of the disk
    zz = R * np.sqrt(np.linspace(0, 1, 9))[:, None] * np.exp(1j * np.linspace(0, 2 * np.pi, 16))[None]
    if not np.all(np.isfinite(metric.sigma(zz))):
        raise DomainError("sigma is not finite on the disk")
    return metric


def metric_from_spec(spec: dict) -> ConformalMetric:
    kind = spec.get("kind", "cc")
    R = float(spec.get("R", 1.0))
    if kind in ("cc", "euclidean", "constant_curvature"):
        return constant_curvature_metric(float(spec.get("kappa", 0.0)), R)
    if kind == "custom":
        return metric_from_expression(str(spec["sigma_expr"]), R)
    if kind == "perturbed":
        base = metric_from_spec(spec["base"])
        c = spec.get("center", [0.3, 0.2])
        return perturbed_metric(base, float(spec["delta"]), complex(c[0], c[1]), float(spec.get("width", 0.35)))
    raise DomainError(f"unknown metric kind {kind!r}")


def _check_inside(metric: ConformalMetric, z: np.ndarray) -> None:
    if np.any(np.abs(z) > metric.R * (1 + 1e-12)):
        raise DomainError("point outside the disk")


def gauss_curvature(metric: ConformalMetric, z):
    """K = -4 e^{-2 sigma} d_z d_zbar sigma."""
    za = np.asarray(z, dtype=complex)
    _check_inside(metric, za)
    K = -4.0 * np.exp(-2.0 * metric.sigma(za)) * metric.ddbar_sigma(za)
    return float(K) if np.ndim(z) == 0 else K


def boundary_geodesic_curvature(metric: ConformalMetric, omega) -> np.ndarray:
    """Geodesic curvature of the circle |z| = R, positive when it bends toward the interior."""
    z = metric.R * np.exp(1j * np.asarray(omega, dtype=float))
    dr_sigma = 2.0 * np.real(np.exp(1j * np.angle(z)) * metric.dz_sigma(z))
    return np.exp(-metric.sigma(z)) * (1.0 / metric.R + dr_sigma)


def check_simple(metric: ConformalMetric, grid: GridSpec | None = None) -> dict:
    """Convexity of the boundary and absence of conjugate points along sampled chords."""
    from .flow import jacobi_along_chords

    grid = grid or GridSpec(n_r=8, n_theta=32, k_max=4, quad_nodes=8)
    omega = np.linspace(0.0, 2 * np.pi, grid.n_theta, endpoint=False)
    convex = bool(np.all(boundary_geodesic_curvature(metric, omega) > 0))
    n_alpha = max(8, grid.boundary_alpha)
    alpha = (np.pi / 2) * np.sin(-np.pi / 2 + (np.arange(n_alpha) + 0.5) * np.pi / n_alpha)
    if metric.radial:
        omega = omega[:1]
    try:
        min_ratio = jacobi_along_chords(metric, omega, alpha)
        no_conj = bool(min_ratio > 0)
    except RuntimeError:
        no_conj = False
        min_ratio = -math.inf
    return {"convex": convex, "no_conjugate": no_conj, "min_jacobi_ratio": float(min_ratio)}
