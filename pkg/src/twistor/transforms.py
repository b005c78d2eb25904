"""X-ray transforms on fibrewise modes, the invariant extension and normal operators.

Conventions
-----------
* A mode-k field is u(z, theta) = u_k(z) e^{i k theta}.  A field tagged
  ``rho_half`` stores b with u_k = b rho^{-1/2}, rho = R^2 - |z|^2.
* Boundary fields live on a tensor grid: omega uniform on [0, 2 pi) and
  alpha = (pi/2) sin(s) with s uniform on the open interval (-pi/2, pi/2).
  Nodes therefore cluster at glancing, and h(alpha(s)) is even about
  s = +-pi/2, which makes mirror ghost nodes exact for interpolation.
* N_k is normalized so that N_0 f(x) = 2 int_{S_x} int_0^tau f dt dv, i.e.
  2 pi times the fibre average of (I_k f)^#.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_legendre

from .flow import (BoundaryPoint, PhasePoint, backward_exits,
                   chord_samples, wrap)
from .geometry import ConformalMetric, DomainError, GridSpec
from .polar import PolarGrid
from .zernike import ZernikeBasis

NORMAL_SCALE = 2 * np.pi
INTERP_ORDER = 6


class IllConditionedError(RuntimeError):
    """The regularized normal solve did not reach the requested residual."""


# =============================================================== fields
@dataclass
class ModeField:
    """Per-mode coefficient fields on a polar grid.

    ``expansion`` optionally carries an exact evaluator z -> [..., K] of the
    stored (smooth) parts; when present it is used instead of grid
    interpolation.
    """

    grid: PolarGrid
    k_values: tuple
    coeffs: np.ndarray
    weight: str = "smooth"
    expansion: object = field(default=None, repr=False)

    def __post_init__(self):
        self.k_values = tuple(int(k) for k in self.k_values)
        self.coeffs = np.asarray(self.coeffs, dtype=complex).reshape(len(self.k_values), *self.grid.shape)
        if self.weight not in ("smooth", "rho_half"):
            raise ValueError("weight must be 'smooth' or 'rho_half'")

    @classmethod
    def from_function(cls, grid: PolarGrid, k: int, fn, weight: str = "smooth") -> "ModeField":
        vals = np.asarray(fn(grid.z), dtype=complex)
        return cls(grid, (k,), vals[None], weight, expansion=lambda z: np.asarray(fn(z), complex)[..., None])

    def parts(self, z) -> np.ndarray:
        """Stored parts at z, shape [K, *z.shape]."""
        z = np.asarray(z, dtype=complex)
        if self.expansion is not None:
            return np.moveaxis(np.asarray(self.expansion(z), dtype=complex).reshape(z.shape + (-1,)), -1, 0)
        return self.grid.interp(self.coeffs, z)

    def mode(self, k: int) -> np.ndarray:
        if k not in self.k_values:
            return np.zeros(self.grid.shape, dtype=complex)
        return self.coeffs[self.k_values.index(k)]

    def evaluate(self, z, theta) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        theta = np.asarray(theta, dtype=float)
        P = self.parts(z)
        out = sum(P[i] * np.exp(1j * k * theta) for i, k in enumerate(self.k_values))
        if self.weight == "rho_half":
            out = out / np.sqrt(np.maximum(self.grid.R ** 2 - np.abs(z) ** 2, 0.0))
        return out


@dataclass(frozen=True)
class BoundaryGrid:
    n_omega: int
    n_alpha: int

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_omega) / self.n_omega

    @property
    def s(self) -> np.ndarray:
        return -np.pi / 2 + (np.arange(self.n_alpha) + 0.5) * np.pi / self.n_alpha

    @property
    def alpha(self) -> np.ndarray:
        return (np.pi / 2) * np.sin(self.s)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.omega, self.alpha, indexing="ij")

    @property
    def size(self) -> int:
        return self.n_omega * self.n_alpha


@dataclass
class BoundaryField:
    bgrid: BoundaryGrid
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex).reshape(self.bgrid.n_omega, self.bgrid.n_alpha)

    def evaluate(self, omega, alpha, order: int = INTERP_ORDER) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        M = interpolation_matrix(self.bgrid, omega.ravel(), np.asarray(alpha, float).ravel(), order)
        return (M @ self.samples.ravel()).reshape(omega.shape)

    def __add__(self, other: "BoundaryField") -> "BoundaryField":
        return BoundaryField(self.bgrid, self.samples + other.samples)

    def __mul__(self, c) -> "BoundaryField":
        return BoundaryField(self.bgrid, self.samples * c)

    __rmul__ = __mul__


def boundary_field_from_function(bgrid: BoundaryGrid, fn) -> BoundaryField:
    Om, Al = bgrid.mesh()
    return BoundaryField(bgrid, np.broadcast_to(fn(Om, Al), Om.shape))


def _lagrange(x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Base index [P] and weights [P, p] of the p-point Lagrange stencil around x (index units)."""
    i0 = np.floor(x).astype(int) - (p // 2 - 1)
    t = x - i0
    w = np.ones((x.size, p))
    for j in range(p):
        for m in range(p):
            if m != j:
                w[:, j] *= (t - m) / (j - m)
    return i0, w


def interpolation_matrix(bgrid: BoundaryGrid, omega, alpha, order: int = INTERP_ORDER) -> sp.csr_matrix:
    """Sparse map from boundary samples to values at (omega, alpha) points.

    Local Lagrange interpolation of the given order in (omega, s): periodic in
    omega, mirror-even about s = +-pi/2.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    n_o, n_a = bgrid.n_omega, bgrid.n_alpha
    xo = (omega % (2 * np.pi)) / (2 * np.pi / n_o)
    s = np.arcsin(np.clip(2 * alpha / np.pi, -1.0, 1.0))
    xs = (s + np.pi / 2) / (np.pi / n_a) - 0.5
    io, wo = _lagrange(xo, order)
    is_, ws = _lagrange(xs, order)
    jo = (io[:, None] + np.arange(order)[None, :]) % n_o
    js = is_[:, None] + np.arange(order)[None, :]
    js = np.where(js < 0, -1 - js, js)
    js = np.where(js >= n_a, 2 * n_a - 1 - js, js)
    cols = (jo[:, :, None] * n_a + js[:, None, :]).reshape(omega.size, -1)
    vals = (wo[:, :, None] * ws[:, None, :]).reshape(omega.size, -1)
    rows = np.repeat(np.arange(omega.size), order * order)
    M = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(omega.size, bgrid.size))
    M.sum_duplicates()
    return M


# =========================================================== ray tables
@dataclass
class RayTable:
    """Chord lengths and phase points at quadrature fractions for every boundary node."""

    bgrid: BoundaryGrid
    rule: str
    u: np.ndarray
    w: np.ndarray
    tau: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    radial: bool
    R: float

    @property
    def rho_factor(self) -> np.ndarray:
        """sqrt(rho / (u (1-u))) at the samples (smooth by construction)."""
        rho = np.maximum(self.R ** 2 - np.abs(self.z) ** 2, 0.0)
        return np.sqrt(rho / (self.u * (1 - self.u)))


def quadrature_rule(rule: str, Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in (0, 1) and weights: 'chebyshev' integrates g du/sqrt(u(1-u)), 'legendre' g du."""
    if rule == "chebyshev":
        j = np.arange(1, Q + 1)
        u = 0.5 * (1 - np.cos((2 * j - 1) * np.pi / (2 * Q)))
        return u, np.full(Q, np.pi / Q)
    if rule == "legendre":
        x, w = roots_legendre(Q)
        return 0.5 * (x + 1), 0.5 * w
    raise ValueError(rule)


@lru_cache(maxsize=16)
def ray_table(metric: ConformalMetric, bgrid: BoundaryGrid, Q: int, rule: str) -> RayTable:
    u, w = quadrature_rule(rule, Q)
    om = bgrid.omega
    al = bgrid.alpha
    if metric.radial:
        tau0, z0, th0 = chord_samples(metric, np.zeros(al.size), al, u)
        rot = np.exp(1j * om)[:, None, None]
        z = rot * z0[None]
        th = th0[None] + om[:, None, None]
        tau = np.broadcast_to(tau0[None], (om.size, al.size)).copy()
    else:
        Om, Al = bgrid.mesh()
        tau, z, th = chord_samples(metric, Om.ravel(), Al.ravel(), u)
        tau = tau.reshape(bgrid.n_omega, bgrid.n_alpha)
        z = z.reshape(bgrid.n_omega, bgrid.n_alpha, Q)
        th = th.reshape(bgrid.n_omega, bgrid.n_alpha, Q)
    return RayTable(bgrid, rule, u, w, tau, z, th, metric.radial, metric.R)


def _field_xray(table: RayTable, values: np.ndarray, k: int, weight: str) -> np.ndarray:
    """Quadrature of values[..., Q] (stored parts at samples) along each chord."""
    phase = np.exp(1j * k * table.theta)
    if weight == "rho_half":
        integrand = values * phase / table.rho_factor
    else:
        integrand = values * phase
    return table.tau * np.tensordot(integrand, table.w, axes=([-1], [0]))


def _rule_for(weight: str) -> str:
    return "chebyshev" if weight == "rho_half" else "legendre"


def xray(metric: ConformalMetric, a: ModeField, bgrid: BoundaryGrid, Q: int = 48) -> BoundaryField:
    """I(a) on every node of bgrid, summed over the modes of a."""
    table = ray_table(metric, bgrid, Q, _rule_for(a.weight))
    P = a.parts(table.z)
    out = np.zeros(table.tau.shape, dtype=complex)
    for i, k in enumerate(a.k_values):
        out += _field_xray(table, P[i], k, a.weight)
    return BoundaryField(bgrid, out)


def xray_Ik(metric: ConformalMetric, a: ModeField, b: BoundaryPoint, Q: int = 48) -> complex:
    """I_k(a) along the chord entering at b."""
    if len(a.k_values) != 1:
        raise DomainError("xray_Ik expects a single-mode field")
    glancing = abs(abs(b.alpha) - np.pi / 2) <= 1e-9
    if abs(b.alpha) > np.pi / 2 + 1e-12:
        raise DomainError("alpha outside [-pi/2, pi/2]")
    if glancing:
        if a.weight == "rho_half":
            raise DomainError("glancing input for a rho_half field: use the boundary grid continuation")
        return 0j
    k = a.k_values[0]
    u, w = quadrature_rule(_rule_for(a.weight), Q)
    tau, z, th = chord_samples(metric, [b.omega], [b.alpha], u)
    table = RayTable(BoundaryGrid(1, 1), _rule_for(a.weight), u, w, tau, z, th, False, metric.R)
    return complex(_field_xray(table, a.parts(z)[0], k, a.weight)[0])


def fiber_modes(samples, k_max: int | None = None) -> dict:
    """Fourier coefficients (1/n) sum_l f(theta_l) e^{-i k theta_l} for |k| <= k_max."""
    samples = np.asarray(samples, dtype=complex)
    n = samples.shape[-1]
    k_max = n // 2 - 1 if k_max is None else int(k_max)
    if k_max > n // 2 - 1:
        raise DomainError("k_max must be <= n_theta/2 - 1")
    c = np.fft.fft(samples, axis=-1) / n
    return {k: c[..., k % n] for k in range(-k_max, k_max + 1)}


def symplectic_weights(metric: ConformalMetric, bgrid: BoundaryGrid) -> np.ndarray:
    """cos(alpha) R e^{sigma(R e^{i omega})} d omega d alpha on the boundary grid."""
    om, s = bgrid.omega, bgrid.s
    al = bgrid.alpha
    dal = (np.pi / 2) * np.cos(s) * (np.pi / bgrid.n_alpha)
    dom = 2 * np.pi / bgrid.n_omega
    edge = metric.R * np.exp(metric.sigma(metric.R * np.exp(1j * om)))
    return edge[:, None] * dom * (np.cos(al) * dal)[None, :]


def symplectic_norm(metric: ConformalMetric, h: BoundaryField) -> float:
    W = symplectic_weights(metric, h.bgrid)
    return float(np.sqrt(np.sum(W * np.abs(h.samples) ** 2)))


# ======================================================== discretization
class Transport:
    """Cached discretization of I_k, # and N_k for one metric and grid."""

    def __init__(self, metric: ConformalMetric, spec: GridSpec, order: int = INTERP_ORDER):
        self.metric = metric
        self.spec = spec
        self.order = order
        self.polar = PolarGrid(metric.R, spec.n_r, spec.n_theta)
        self.bgrid = BoundaryGrid(spec.n_theta, spec.boundary_alpha)
        self.n_dir = spec.n_theta
        self.directions = 2 * np.pi * np.arange(self.n_dir) / self.n_dir
        self._exits = None

    def table(self, weight: str) -> RayTable:
        return ray_table(self.metric, self.bgrid, self.spec.quad_nodes, _rule_for(weight))

    # ------------------------------------------------------------ exits
    def exits(self) -> tuple[np.ndarray, np.ndarray]:
        """Backward exits (omega, alpha) for all nodes and directions, shape [n_r, n_theta, n_dir]."""
        if self._exits is None:
            g = self.polar
            if self.metric.radial and self.n_dir == g.n_theta:
                r = np.repeat(g.r[:, None], self.n_dir, axis=1)
                th = np.repeat(self.directions[None, :], g.n_r, axis=0)
                om0, al0, _ = backward_exits(self.metric, r.astype(complex), th)
                n = g.n_theta
                j = np.arange(n)[:, None]
                l = np.arange(self.n_dir)[None, :]
                rel = (l - j) % n
                om = om0[:, rel] + g.phi[None, :, None]
                al = al0[:, rel]
            else:
                Z = np.repeat(g.z[:, :, None], self.n_dir, axis=2)
                TH = np.broadcast_to(self.directions, Z.shape)
                om, al, _ = backward_exits(self.metric, Z, TH)
            self._exits = (wrap(om, 0.0), al)
        return self._exits

    def _chunks(self, rows: int = 1 << 16):
        """Node ranges whose (node, direction) interpolation rows fit in one sparse block."""
        step = max(1, rows // self.n_dir)
        for s0 in range(0, self.polar.size, step):
            yield s0, min(s0 + step, self.polar.size)

    def _sharp_block(self, n0, n1=None) -> sp.csr_matrix:
        """Interpolation rows for nodes n0:n1, or for the node index array n0."""
        om, al = self.exits()
        sel = slice(n0, n1) if n1 is not None else np.asarray(n0)
        om = om.reshape(-1, self.n_dir)[sel]
        al = al.reshape(-1, self.n_dir)[sel]
        return interpolation_matrix(self.bgrid, om.ravel(), al.ravel(), self.order)

    def sharp_matrix(self) -> sp.csr_matrix:
        """Rows (i, j, l): interpolation of a boundary field at the backward exit of (z_ij, theta_l)."""
        return sp.vstack([self._sharp_block(n0, n1) for n0, n1 in self._chunks()]).tocsr()

    def _project_rows(self, k: int, nodes: np.ndarray, H: np.ndarray) -> np.ndarray:
        phase = np.exp(-1j * k * self.directions) * (NORMAL_SCALE / self.n_dir)
        S = self._sharp_block(nodes).tocoo()
        P = sp.csr_matrix((S.data * phase[S.row % self.n_dir], (S.row // self.n_dir, S.col)),
                          shape=(len(nodes), self.bgrid.size))
        return P @ H

    def project_basis(self, k: int, basis, H: np.ndarray | None = None) -> np.ndarray:
        """The matrix P_k I_k of the rho_half basis, shape [n_nodes, len(basis)].

        For rotationally symmetric metrics and a Zernike basis the row of node
        (r_i, phi_j) equals e^{i m phi_j} times the row of (r_i, 0), so only one
        angular column of nodes is computed.
        """
        if H is None:
            H = self.basis_xray(k, basis)
        if not (isinstance(basis, ZernikeBasis) and self.metric.radial):
            return self.project(k, H)
        g = self.polar
        nodes = np.arange(g.n_r) * g.n_theta
        A0 = self._project_rows(k, nodes, H)
        return (np.exp(1j * np.outer(g.phi, basis.m))[None, :, :] * A0[:, None, :]).reshape(g.size, -1)

    def project(self, k: int, H: np.ndarray) -> np.ndarray:
        """P_k H: 2 pi times the mode-k fibre average of the extensions of the columns of H."""
        H = np.asarray(H)
        squeeze = H.ndim == 1
        H = H.reshape(self.bgrid.size, -1)
        out = np.empty((self.polar.size, H.shape[1]), dtype=complex)
        phase = np.exp(-1j * k * self.directions) * (NORMAL_SCALE / self.n_dir)
        for n0, n1 in self._chunks():
            S = self._sharp_block(n0, n1).tocoo()
            P = sp.csr_matrix((S.data * phase[S.row % self.n_dir], (S.row // self.n_dir, S.col)),
                              shape=(n1 - n0, self.bgrid.size))
            out[n0:n1] = P @ H
        return out[:, 0] if squeeze else out

    def projector(self, k: int) -> sp.csr_matrix:
        """P_k as an explicit sparse matrix (small grids only)."""
        S = self.sharp_matrix().tocoo()
        phase = np.exp(-1j * k * self.directions) * (NORMAL_SCALE / self.n_dir)
        P = sp.csr_matrix((S.data * phase[S.row % self.n_dir], (S.row // self.n_dir, S.col)),
                          shape=(self.polar.size, self.bgrid.size))
        P.sum_duplicates()
        return P

    # ------------------------------------------------------- operators
    def xray(self, a: ModeField) -> BoundaryField:
        return xray(self.metric, a, self.bgrid, self.spec.quad_nodes)

    def sharp_on_grid(self, h: BoundaryField) -> np.ndarray:
        """h^# at all (z_ij, theta_l): shape [n_r, n_theta, n_dir]."""
        flat = h.samples.ravel()
        out = np.empty((self.polar.size, self.n_dir), dtype=complex)
        for n0, n1 in self._chunks():
            out[n0:n1] = (self._sharp_block(n0, n1) @ flat).reshape(n1 - n0, self.n_dir)
        return out.reshape(self.polar.n_r, self.polar.n_theta, self.n_dir)

    def normal(self, a: ModeField, k: int) -> ModeField:
        h = self.xray(a)
        vals = self.project(k, h.samples.ravel())
        return ModeField(self.polar, (k,), vals.reshape(1, *self.polar.shape), "smooth")

    def basis_xray(self, k: int, basis) -> np.ndarray:
        """Columns I_k(rho^{-1/2} phi_n e^{ik theta}) on the boundary grid, shape [n_bdry, M]."""
        table = self.table("rho_half")
        if isinstance(basis, ZernikeBasis) and table.radial:
            z0 = table.z[0]
            base = np.exp(1j * k * table.theta[0]) / table.rho_factor[0]  # [n_alpha, Q]
            vals = basis(z0)  # [n_alpha, Q, M]
            H0 = table.tau[0][:, None] * np.einsum("aq,aqm,q->am", base, vals, table.w)
            phase = np.exp(1j * np.outer(self.bgrid.omega, basis.m + k))  # [n_omega, M]
            return (phase[:, None, :] * H0[None, :, :]).reshape(self.bgrid.size, -1)
        weight = np.exp(1j * k * table.theta) / table.rho_factor * table.w  # [o, a, q]
        flat_z = table.z.reshape(-1, table.u.size)
        flat_w = weight.reshape(-1, table.u.size)
        tau = table.tau.ravel()
        cols = []
        step = 2048
        for s0 in range(0, flat_z.shape[0], step):
            vals = basis(flat_z[s0:s0 + step])  # [c, q, M]
            cols.append(tau[s0:s0 + step, None] * np.einsum("cq,cqm->cm", flat_w[s0:s0 + step], vals))
        return np.concatenate(cols, axis=0)


class NodalBasis:
    """Cardinal functions of the polar grid (value 1 at one node, 0 at the others)."""

    def __init__(self, grid: PolarGrid):
        self.grid = grid
        self.m = None

    def __len__(self) -> int:
        return self.grid.size

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.grid.cardinal_matrix(z).reshape(z.shape + (self.grid.size,)).astype(complex)


@lru_cache(maxsize=8)
def transport(metric: ConformalMetric, spec: GridSpec, order: int = INTERP_ORDER) -> Transport:
    return Transport(metric, spec, order)


def default_spec_for(grid: PolarGrid, quad_nodes: int = 48) -> GridSpec:
    return GridSpec(n_r=grid.n_r, n_theta=grid.n_theta, k_max=min(32, grid.n_theta // 2 - 1),
                    quad_nodes=quad_nodes)


# ================================================================ public ops
def sharp_extend(metric: ConformalMetric, h: BoundaryField, p: PhasePoint, order: int = INTERP_ORDER) -> complex:
    om, al, _ = backward_exits(metric, np.array([p.z]), np.array([p.theta]))
    return complex(h.evaluate(om, al, order)[0])


def sharp_values(metric: ConformalMetric, h: BoundaryField, z, theta, order: int = INTERP_ORDER) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    om, al, _ = backward_exits(metric, z, np.broadcast_to(theta, z.shape))
    return h.evaluate(om, al, order)


def normal_Nk(metric: ConformalMetric, k: int, a: ModeField, spec: GridSpec | None = None) -> ModeField:
    """N_k a on the nodes of a.grid: 2 pi times the k-th fibre coefficient of (I_k a)^#."""
    if len(a.k_values) != 1 or a.k_values[0] != k:
        raise DomainError("normal_Nk expects a single-mode field of mode k")
    spec = spec or default_spec_for(a.grid)
    T = transport(metric, spec)
    if T.polar != a.grid:
        raise DomainError("field grid does not match the discretization")
    return T.normal(a, k)


def normal_Nk_at(metric: ConformalMetric, k: int, a: ModeField, points, n_dir: int = 128,
                 spec: GridSpec | None = None) -> np.ndarray:
    """N_k a at arbitrary interior points by boundary interpolation of I_k a."""
    spec = spec or default_spec_for(a.grid)
    T = transport(metric, spec)
    h = T.xray(a)
    pts = np.asarray(points, dtype=complex).ravel()
    th = 2 * np.pi * np.arange(n_dir) / n_dir
    Z = np.repeat(pts[:, None], n_dir, axis=1)
    vals = sharp_values(metric, h, Z, np.broadcast_to(th, Z.shape), T.order)
    return NORMAL_SCALE * np.mean(vals * np.exp(-1j * k * th)[None, :], axis=1)


def _basis_for(spec: GridSpec, R: float, basis: str, degree: int | None):
    if basis == "nodal":
        return NodalBasis(PolarGrid(R, spec.n_r, spec.n_theta))
    if basis == "zernike":
        return ZernikeBasis(R, degree if degree is not None else zernike_degree(spec))
    raise DomainError(f"unknown basis {basis!r}")


def zernike_degree(spec: GridSpec) -> int:
    return int(min(spec.n_r, spec.n_theta // 4, 36))


def assemble_normal_matrix(metric: ConformalMetric, k: int, spec: GridSpec, basis: str = "nodal",
                           degree: int | None = None) -> np.ndarray:
    """Matrix of b -> N_k(rho^{-1/2} b e^{ik theta}) at the grid nodes.

    With ``basis='nodal'`` the columns are the cardinal functions of the polar
    grid, so the matrix is square and acts on nodal values of b.
    """
    T = transport(metric, spec)
    B = _basis_for(spec, metric.R, basis, degree)
    return T.project_basis(k, B)


@dataclass
class NormalSolution:
    field: ModeField
    coeffs: np.ndarray
    basis: object
    residual: float
    reg: float
    boundary: BoundaryField


_GRADIENT_CACHE: dict = {}


def _gradient_operator(grid: PolarGrid, basis) -> np.ndarray:
    key = (grid.R, grid.n_r, grid.n_theta, type(basis).__name__, getattr(basis, "degree", None))
    if key not in _GRADIENT_CACHE:
        if len(_GRADIENT_CACHE) > 4:
            _GRADIENT_CACHE.clear()
        _GRADIENT_CACHE[key] = _gradient_matrix(grid, basis)
    return _GRADIENT_CACHE[key]


def _gradient_matrix(grid: PolarGrid, basis) -> np.ndarray:
    vals = basis(grid.z)  # [n_r, n_theta, M]
    F = np.moveaxis(vals, -1, 0)
    w = np.sqrt(grid.area_weights).ravel()
    dz, dzb = grid.wirtinger(F)
    Dz = dz.reshape(F.shape[0], -1).T * w[:, None]
    Dzb = dzb.reshape(F.shape[0], -1).T * w[:, None]
    return np.vstack([Dz, Dzb])


def solve_normal_system(metric: ConformalMetric, k: int, rhs: ModeField, spec: GridSpec | None = None,
                        reg: float = 1e-8, basis: str = "zernike", degree: int | None = None,
                        max_residual: float = 1e-3) -> NormalSolution:
    """Tikhonov-regularized least squares for N_k(rho^{-1/2} b e^{ik theta}) = rhs."""
    if len(rhs.k_values) != 1 or rhs.k_values[0] != k:
        raise DomainError("rhs must be a single-mode field of mode k")
    spec = spec or default_spec_for(rhs.grid)
    T = transport(metric, spec)
    g = T.polar
    B = _basis_for(spec, metric.R, basis, degree)
    H = T.basis_xray(k, B)
    A = T.project_basis(k, B, H)
    f = rhs.mode(k).ravel() if rhs.grid == g else rhs.parts(g.z)[0].ravel()
    w = np.sqrt(g.area_weights).ravel()
    Aw = A * w[:, None]
    fw = f * w
    fnorm = np.linalg.norm(fw)
    if fnorm == 0:
        coeffs = np.zeros(len(B), dtype=complex)
        return _package(T, B, coeffs, k, H, 0.0, reg)
    L = _gradient_operator(g, B)
    a_norm = np.linalg.norm(Aw, 2)
    l_norm = np.linalg.norm(L, 2)
    lam = reg
    while True:
        mu = np.sqrt(lam) * a_norm / l_norm
        M = np.vstack([Aw, mu * L])
        rhs_vec = np.concatenate([fw, np.zeros(L.shape[0])])
        coeffs = np.linalg.lstsq(M, rhs_vec, rcond=None)[0]
        res = np.linalg.norm(Aw @ coeffs - fw) / fnorm
        if res <= max_residual or lam < 1e-16:
            break
        lam *= 1e-2
    if res > max_residual:
        raise IllConditionedError(f"normal solve residual {res:.3e} exceeds {max_residual:g}")
    return _package(T, B, coeffs, k, H, res, lam)


def _package(T: Transport, B, coeffs, k, H, res, lam) -> NormalSolution:
    g = T.polar
    if isinstance(B, NodalBasis):
        vals = coeffs.reshape(g.shape)
        fld = ModeField(g, (k,), vals[None], "rho_half")
    else:
        fn = B.combine(coeffs)
        fld = ModeField(g, (k,), fn(g.z)[None], "rho_half", expansion=lambda z, fn=fn: fn(z)[..., None])
    h = BoundaryField(T.bgrid, (H @ coeffs).reshape(T.bgrid.n_omega, T.bgrid.n_alpha))
    return NormalSolution(fld, coeffs, B, float(res), float(lam), h)


def solve_normal(metric: ConformalMetric, k: int, rhs: ModeField, reg: float = 1e-8,
                 spec: GridSpec | None = None, basis: str = "zernike") -> ModeField:
    return solve_normal_system(metric, k, rhs, spec, reg, basis).field


def range_projection(metric: ConformalMetric, k: int, spec: GridSpec, q: BoundaryField,
                     degree: int | None = None) -> BoundaryField:
    """Symplectic-orthogonal projection of q onto the span of I_k(rho^{-1/2} Z e^{ik theta})."""
    T = transport(metric, spec)
    B = ZernikeBasis(metric.R, degree if degree is not None else zernike_degree(spec))
    H = T.basis_xray(k, B)
    W = symplectic_weights(metric, T.bgrid).ravel()
    sw = np.sqrt(W)
    c = np.linalg.lstsq(H * sw[:, None], q.samples.ravel() * sw, rcond=None)[0]
    return BoundaryField(T.bgrid, (H @ c).reshape(q.samples.shape))


def orthogonal_perturbation(metric: ConformalMetric, k: int, spec: GridSpec, q: BoundaryField,
                            degree: int | None = None) -> BoundaryField:
    """q minus its range projection: symplectic-orthogonal to every I_k(rho^{-1/2} b e^{ik theta}),
    so adding it to a trace leaves the mode-k part of the extension unchanged."""
    P = range_projection(metric, k, spec, q, degree)
    return BoundaryField(q.bgrid, q.samples - P.samples)


def minimality_gap(metric: ConformalMetric, k: int, f: ModeField, u_alt: BoundaryField,
                   spec: GridSpec | None = None, canonical: BoundaryField | None = None) -> float:
    """||u_alt||_sym - ||canonical trace||_sym for the mode-k datum f."""
    if canonical is None:
        sol = solve_normal_system(metric, k, f, spec)
        canonical = sol.boundary
    return symplectic_norm(metric, u_alt) - symplectic_norm(metric, canonical)


__all__ = [
    "ModeField", "BoundaryGrid", "BoundaryField", "RayTable", "Transport", "NodalBasis",
    "xray", "xray_Ik", "fiber_modes", "sharp_extend", "sharp_values", "normal_Nk", "normal_Nk_at",
    "assemble_normal_matrix", "solve_normal", "solve_normal_system", "symplectic_norm",
    "symplectic_weights", "minimality_gap", "range_projection", "orthogonal_perturbation",
    "transport", "boundary_field_from_function", "interpolation_matrix", "NORMAL_SCALE",
    "IllConditionedError",
]
