"""Numerical certificates for holomorphic blow-down structures.

The frame is eta_1 = e^sigma (dz - mu^2 dzbar), eta_2 = dmu + mu (d_z sigma dz - d_zbar sigma dzbar),
which is orthonormal for the reference Hermitian form.  For a fibrewise
holomorphic beta, d beta_j = S_1j eta_1 + S_2j eta_2 with

    S_1j = e^{-sigma} (d_z beta_j - mu d_z sigma d_mu beta_j),    S_2j = d_mu beta_j.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .beta import TwistorMap, evaluate
from .geometry import ConformalMetric, DomainError, gauss_curvature
from .oracles import CCParams, image_membership, lambda_min_bound
from .transforms import ModeField

FD_STEP = 1e-4
INTERIOR_DELTA = 0.02


@dataclass
class FrameJacobian:
    S: np.ndarray  # [..., 2, 2]
    z: np.ndarray
    mu: np.ndarray

    @property
    def det(self) -> np.ndarray:
        S = self.S
        return S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]


@dataclass
class BdsReport:
    min_abs_det_S: float
    min_lambda_min: float
    min_injectivity_ratio: float
    min_tr_embed_det: float
    holomorphy_residual: float
    thresholds: dict
    flags: dict
    pass_: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("pass_")
        return d


# ------------------------------------------------------------- derivatives
def _dz_fields(fld: ModeField) -> tuple[ModeField, ModeField]:
    """Spectral d_z and d_zbar of every stored coefficient field (cached on the field)."""
    cached = getattr(fld, "_dz_cache", None)
    if cached is None:
        g = fld.grid
        dz, dzb = g.wirtinger(fld.coeffs)
        cached = (ModeField(g, fld.k_values, dz), ModeField(g, fld.k_values, dzb))
        fld._dz_cache = cached
    return cached


def _fd_parts(fld: ModeField, z: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Richardson-extrapolated central-difference d_z and d_zbar of the coefficient fields at z (points kept inside the disk)."""
    R = fld.grid.R
    zc = np.where(np.abs(z) > R - h, z * (R - h) / np.maximum(np.abs(z), 1e-300), z)

    def central(e):
        return (fld.parts(zc + e) - fld.parts(zc - e)) / (2 * abs(e))

    # one Richardson step: O(h^4)
    fx = (4 * central(h / 2) - central(h)) / 3
    fy = (4 * central(0.5j * h) - central(1j * h)) / 3
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def _component_parts(fld: ModeField, z, method: str, nodes=None):
    """(u_k, d_z u_k, d_zbar u_k) stacked over k at points z, or at grid nodes (i, j) if given."""
    if nodes is not None:
        i, j = nodes
        if method != "spectral":
            raise ValueError("node evaluation uses spectral derivatives")
        fz, fzb = _dz_fields(fld)
        return fld.coeffs[:, i, j], fz.coeffs[:, i, j], fzb.coeffs[:, i, j]
    if method == "spectral":
        fz, fzb = _dz_fields(fld)
        return fld.parts(z), fz.parts(z), fzb.parts(z)
    if method == "fd":
        return (fld.parts(z),) + _fd_parts(fld, z, FD_STEP * fld.grid.R)
    raise ValueError("method must be 'spectral' or 'fd'")


def _series(P: np.ndarray, ks, mu: np.ndarray, deriv: bool = False) -> np.ndarray:
    out = 0j
    for i, k in enumerate(ks):
        if deriv:
            if k:
                out = out + k * P[i] * mu ** (k - 1)
        else:
            out = out + P[i] * mu ** k
    return out


def _partials(tm: TwistorMap, z, mu, method: str, nodes=None):
    """Per component: (d_z beta, d_zbar beta, d_mu beta), broadcast over z and mu."""
    out = []
    for fld in (tm.component0, tm.component1):
        P, Pz, Pzb = _component_parts(fld, z, method, nodes)
        ks = fld.k_values
        out.append((_series(Pz, ks, mu), _series(Pzb, ks, mu), _series(P, ks, mu, deriv=True)))
    return out


def _assemble_S(metric: ConformalMetric, z, mu, parts) -> np.ndarray:
    es = np.exp(-metric.sigma(z))
    dsig = metric.dz_sigma(z)
    shape = np.broadcast_shapes(np.shape(z), np.shape(mu))
    S = np.empty(shape + (2, 2), dtype=complex)
    for j, (dz, _, dmu) in enumerate(parts):
        S[..., 0, j] = es * (dz - mu * dsig * dmu)
        S[..., 1, j] = dmu
    return S


def jacobian_S(metric: ConformalMetric, tm: TwistorMap, z, mu, method: str = "spectral") -> FrameJacobian:
    """Jacobian of beta in the orthonormal (1,0)-frame {eta_1, eta_2}."""
    z, mu = np.broadcast_arrays(np.asarray(z, complex), np.asarray(mu, complex))
    if np.any(np.abs(z) > metric.R * (1 + 1e-12)) or np.any(np.abs(mu) > 1 + 1e-12):
        raise DomainError("point outside D_R x closed unit disk")
    return FrameJacobian(_assemble_S(metric, z, mu, _partials(tm, z, mu, method)), z, mu)


def _node_subset(g, stride: int | None, last_radius: bool = True, max_nodes: int = 4096):
    """Strided node indices (I, J); the automatic stride keeps quarter-turn angles and r = R."""
    if stride is None:
        stride = 1
        while (g.n_r // stride) * (g.n_theta // stride) > max_nodes and (g.n_theta // (2 * stride)) % 4 == 0:
            stride *= 2
    n_rad = g.n_r if last_radius else g.n_r - 1
    ri = np.arange(0, n_rad, stride)
    if last_radius and ri[-1] != g.n_r - 1:
        ri = np.append(ri, g.n_r - 1)
    I, J = np.meshgrid(ri, np.arange(0, g.n_theta, stride), indexing="ij")
    return I.ravel(), J.ravel()


def _scan_S(metric: ConformalMetric, tm: TwistorMap, n_mu_r: int, n_mu_t: int, stride: int | None):
    """S on (grid nodes) x (mu lattice) using node values directly; returns (S[nz, nmu], z, mu)."""
    g = tm.grid
    I, J = _node_subset(g, stride)
    z = g.z[I, J][:, None]
    mu = mu_lattice(n_mu_r, n_mu_t)[None, :]
    S = _assemble_S(metric, z, mu, _partials(tm, None, mu, "spectral", nodes=(I[:, None], J[:, None])))
    return S, np.broadcast_to(z, S.shape[:2]), np.broadcast_to(mu, S.shape[:2])


def wedge_consistency(metric: ConformalMetric, tm: TwistorMap, z, mu, method: str = "spectral") -> float:
    """Compare det S with the dz^dmu and dzbar^dmu coefficients of d beta_1 ^ d beta_2.

    Those coefficients are e^sigma det S and -mu^2 e^sigma det S; both are
    formed from raw partials here, independently of the frame.
    """
    z, mu = np.broadcast_arrays(np.asarray(z, complex), np.asarray(mu, complex))
    parts = _partials(tm, z, mu, method)
    S = _assemble_S(metric, z, mu, parts)
    det = S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    (z1, zb1, m1), (z2, zb2, m2) = parts
    e = np.exp(metric.sigma(z))
    c_zmu = z1 * m2 - m1 * z2
    c_zbmu = zb1 * m2 - m1 * zb2
    return float(max(np.max(np.abs(c_zmu - e * det)), np.max(np.abs(c_zbmu + mu ** 2 * e * det))))


def hermitian_pullback(metric: ConformalMetric, tm: TwistorMap, z, mu, method: str = "spectral"):
    """H = S S^* and its smallest eigenvalue tr/2 - sqrt((tr/2)^2 - det)."""
    S = jacobian_S(metric, tm, z, mu, method).S
    H = _gram(S)
    return H, lambda_min_2x2(H)


def _gram(S: np.ndarray) -> np.ndarray:
    return S @ np.conj(np.swapaxes(S, -1, -2))


def lambda_min_2x2(H: np.ndarray) -> np.ndarray:
    tr = np.real(H[..., 0, 0] + H[..., 1, 1])
    det = np.real(H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0])
    disc = np.sqrt(np.maximum((tr / 2) ** 2 - det, 0.0))
    # the product form avoids cancellation when det << tr^2
    den = tr / 2 + disc
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, det / np.where(den > 0, den, 1.0), 0.0)


# ------------------------------------------------------------------- scans
def mu_lattice(n_mu_r: int = 9, n_mu_t: int = 16) -> np.ndarray:
    """Polar sample of the closed unit mu-disk, including mu = 0 and |mu| = 1."""
    rho = np.linspace(0.0, 1.0, n_mu_r)[1:]
    ring = np.exp(2j * np.pi * np.arange(n_mu_t) / n_mu_t)
    return np.concatenate([[0j], (rho[:, None] * ring[None, :]).ravel()])


def det_scan(metric: ConformalMetric, tm: TwistorMap, n_mu_r: int = 9, n_mu_t: int = 16,
             stride: int | None = None):
    """min |det S| over grid nodes (through r = R) times a mu lattice, and its location (z, mu)."""
    S, z, mu = _scan_S(metric, tm, n_mu_r, n_mu_t, stride)
    d = np.abs(S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0])
    i = np.unravel_index(np.argmin(d), d.shape)
    return float(d[i]), (complex(z[i]), complex(mu[i]))


def lambda_scan(metric: ConformalMetric, tm: TwistorMap, n_mu_r: int = 9, n_mu_t: int = 16,
                stride: int | None = None):
    S, z, mu = _scan_S(metric, tm, n_mu_r, n_mu_t, stride)
    H = _gram(S)
    lam = lambda_min_2x2(H)
    tr = np.real(H[..., 0, 0] + H[..., 1, 1])
    det = np.real(H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0])
    i = np.unravel_index(np.argmin(lam), lam.shape)
    return {"min": float(lam[i]), "at": (complex(z[i]), complex(mu[i])),
            "min_det_over_tr_gap": float(np.min(lam - det / tr)),
            "max_norm_S": float(np.sqrt(np.max(tr - lam)))}


def cc_det_minimum(p: CCParams) -> float:
    """Closed-form infimum of |det S| = (1 + kappa|z|^2)^2 / |1 + kappa zbar^2 mu^2|^2 over Z."""
    if p.kappa >= 0:
        return 1.0
    a = abs(p.kappa) * p.R ** 2
    return ((1 - a) / (1 + a)) ** 2


def cc_embed_minimum(p: CCParams) -> float:
    """Closed-form minimum of the rescaled totally-real determinant."""
    kR = p.kappa * p.R ** 2
    return 16 * p.R ** 2 * (1 + kR) ** 2 / (1 + abs(kR)) ** 4


def _frame_norm(metric: ConformalMetric, z, mu, dz, dmu):
    e = np.exp(metric.sigma(z))
    s = metric.dz_sigma(z)
    e1 = e * (dz - mu ** 2 * np.conj(dz))
    e2 = dmu + mu * (s * dz - np.conj(s) * np.conj(dz))
    return np.sqrt(np.abs(e1) ** 2 + np.abs(e2) ** 2)


def injectivity_scan(metric: ConformalMetric, tm: TwistorMap, n_pairs: int = 200, seed: int = 0,
                     n_lattice: int = 9, delta: float = INTERIOR_DELTA) -> dict:
    """min |beta(p) - beta(q)| / d(p, q) over random lattice pairs.

    d is the shortest-path distance on a (z, mu) lattice restricted to
    |z| <= (1 - delta) R, |mu| <= 1 - delta, with edges to all 80 neighbours
    weighted by the reference Hermitian norm at the edge midpoint.
    """
    R = metric.R
    t = np.linspace(-1.0, 1.0, n_lattice)
    X, Y, U, V = np.meshgrid(t * (1 - delta) * R, t * (1 - delta) * R, t * (1 - delta), t * (1 - delta),
                             indexing="ij")
    z = (X + 1j * Y).ravel()
    mu = (U + 1j * V).ravel()
    inside = (np.abs(z) <= (1 - delta) * R + 1e-12) & (np.abs(mu) <= (1 - delta) + 1e-12)
    idx = -np.ones(z.size, dtype=int)
    idx[inside] = np.arange(inside.sum())
    idx4 = idx.reshape((n_lattice,) * 4)
    zs, ms = z[inside], mu[inside]
    rows, cols = [], []
    n = n_lattice
    for off in np.ndindex(3, 3, 3):
        for o4 in range(3):
            o = np.array(off + (o4,)) - 1
            if not np.any(o) or tuple(o) < (0, 0, 0, 0):
                continue
            sl_a = tuple(slice(max(0, -d), n - max(0, d)) for d in o)
            sl_b = tuple(slice(max(0, d), n - max(0, -d)) for d in o)
            a = idx4[sl_a].ravel()
            b = idx4[sl_b].ravel()
            ok = (a >= 0) & (b >= 0)
            rows.append(a[ok])
            cols.append(b[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    zm = 0.5 * (zs[rows] + zs[cols])
    mm = 0.5 * (ms[rows] + ms[cols])
    w = _frame_norm(metric, zm, mm, zs[cols] - zs[rows], ms[cols] - ms[rows])
    N = zs.size
    G = coo_matrix((w, (rows, cols)), shape=(N, N)).tocsr()
    rng = np.random.default_rng(seed)
    src = rng.integers(0, N, n_pairs)
    dst = rng.integers(0, N, n_pairs)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    usrc, inv = np.unique(src, return_inverse=True)
    D = dijkstra(G, directed=False, indices=usrc)
    d = D[inv, dst]
    b1, b2 = evaluate(tm, zs, ms)
    diff = np.sqrt(np.abs(b1[src] - b1[dst]) ** 2 + np.abs(b2[src] - b2[dst]) ** 2)
    ratio = diff / d
    # nearest-neighbour quotients probe the local (short range) constant
    local = np.sqrt(np.abs(b1[rows] - b1[cols]) ** 2 + np.abs(b2[rows] - b2[cols]) ** 2) / w
    i = int(np.argmin(ratio))
    return {"min_ratio": float(ratio[i]), "max_ratio": float(np.max(ratio)),
            "min_local_ratio": float(np.min(local)), "max_local_ratio": float(np.max(local)),
            "pair": (complex(zs[src[i]]), complex(ms[src[i]]), complex(zs[dst[i]]), complex(ms[dst[i]])),
            "n_pairs": int(src.size), "subdomain_delta": delta}


def boundary_map(tm: TwistorMap, omega, alpha):
    """beta on the influx boundary: (omega, alpha) -> beta(R e^{i omega}, e^{i(omega + alpha + pi)})."""
    omega = np.asarray(omega, float)
    alpha = np.asarray(alpha, float)
    z = tm.R * np.exp(1j * omega)
    mu = np.exp(1j * (omega + alpha + np.pi))
    return evaluate(tm, z, mu)


def _boundary_complex(tm, om, al):
    b1, b2 = boundary_map(tm, om, al)
    return np.stack([b1, b2], axis=-1)


def _embed_det(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """det(dx, dy, J dx, J dy) in the coordinates (w, xi, wbar, xibar).

    A real tangent vector v has components (v, conj v) there, and J v is i v;
    the result is -4 |det_C(dx, dy)|^2, i.e. 4 times the determinant in real
    (Re, Im) coordinates.
    """
    cols = [np.concatenate([v, np.conj(v)], axis=-1) for v in (dx, dy, 1j * dx, 1j * dy)]
    return np.linalg.det(np.stack(cols, axis=-1))


def _fold_map(tm, u2, v, sheet):
    """beta at the boundary point with cos^2 alpha = v, omega + alpha = u2 (Euclidean fold chart)."""
    a = sheet * np.arccos(np.sqrt(np.clip(v, 0.0, 1.0)))
    return _boundary_complex(tm, u2 - a, a)


def totally_real_check(metric: ConformalMetric, tm: TwistorMap, n_omega: int = 32, n_alpha: int = 33,
                       eps_g: float = 1e-3, h: float = FD_STEP, n_pairs: int = 2000, seed: int = 0,
                       chart: str = "alpha", alpha_min: float = 0.0) -> dict:
    """min over the boundary grid of |det(d b, d b, J d b, J d b)|, rescaled to be finite at glancing.

    ``chart='alpha'`` differentiates in (omega, alpha) and divides by
    cos^2 alpha.  ``chart='fold'`` differentiates in (u_2, u_1^2) =
    (omega + alpha, cos^2 alpha), the fold chart of the Euclidean scattering
    relation, with no rescaling; it needs |alpha| >= alpha_min > 0.
    Derivatives are central differences with one Richardson step and alpha
    stays within pi/2 - eps_g of glancing.  Random boundary pairs probe
    injectivity of the boundary restriction.
    """
    om = 2 * np.pi * np.arange(n_omega) / n_omega
    al = np.linspace(-np.pi / 2 + eps_g, np.pi / 2 - eps_g, n_alpha)
    al = al[np.abs(al) >= alpha_min]
    Om, Al = np.meshgrid(om, al, indexing="ij")

    def richardson(F, X, Y, hy=h):
        def central(ex, ey, step):
            num = F(X + ex * step, Y + ey * step) - F(X - ex * step, Y - ey * step)
            return num / (2 * np.asarray(step)[..., None])
        return ((4 * central(1, 0, h / 2) - central(1, 0, h)) / 3,
                (4 * central(0, 1, hy / 2) - central(0, 1, hy)) / 3)

    if chart == "alpha":
        dx, dy = richardson(lambda a, b: _boundary_complex(tm, a, b), Om, Al)
        det = np.abs(_embed_det(dx, dy)) / np.cos(Al) ** 2
    elif chart == "fold":
        if alpha_min <= 0:
            raise ValueError("the fold chart is singular at alpha = 0; pass alpha_min > 0")
        sheet = np.sign(Al)
        v = np.cos(Al) ** 2
        # the v-step shrinks with v so the stencil stays on the sheet near glancing
        dx, dy = richardson(lambda u2, vv: _fold_map(tm, u2, vv, sheet), Om + Al, v, hy=np.minimum(h, 0.25 * v))
        det = np.abs(_embed_det(dx, dy))
    else:
        raise ValueError("chart must be 'alpha' or 'fold'")
    i = np.unravel_index(np.argmin(det), det.shape)
    rng = np.random.default_rng(seed)
    p = rng.uniform([0, -np.pi / 2], [2 * np.pi, np.pi / 2], size=(n_pairs, 2))
    q = rng.uniform([0, -np.pi / 2], [2 * np.pi, np.pi / 2], size=(n_pairs, 2))
    bp = _boundary_complex(tm, p[:, 0], p[:, 1])
    bq = _boundary_complex(tm, q[:, 0], q[:, 1])
    dist = np.hypot(np.abs(np.exp(1j * p[:, 0]) - np.exp(1j * q[:, 0])), p[:, 1] - q[:, 1])
    inj = np.linalg.norm(bp - bq, axis=1) / dist
    return {"min": float(det[i]), "at": (float(Om[i]), float(Al[i])), "values": det,
            "real_coordinate_min": float(det[i]) / 4, "omega": om, "alpha": al,
            "boundary_injectivity": float(np.min(inj))}


def holomorphy_coefficients(metric: ConformalMetric, tm: TwistorMap, z, method: str = "spectral",
                            nodes=None) -> dict:
    """mu^k coefficients (k <= k_max) of Xi_sigma applied to each component.

    c_k = e^{-sigma} [d_z u_{k-2} + d_zbar u_k - (k-2) d_z sigma u_{k-2} + k d_zbar sigma u_k];
    the terms of order above k_max only see the truncation tail and are excluded.
    """
    z = np.asarray(z, complex)
    es = np.exp(-metric.sigma(z))
    s = metric.dz_sigma(z)
    sb = np.conj(s)
    out = {}
    for name, fld in (("component0", tm.component0), ("component1", tm.component1)):
        P, Pz, Pzb = _component_parts(fld, z, method, nodes)
        ks = list(fld.k_values)
        get = lambda arr, k: arr[ks.index(k)] if k in ks else 0.0
        coeffs = {}
        for k in range(0, tm.k_max + 1):
            if k % 2 != (0 if name == "component0" else 1):
                continue
            c = get(Pz, k - 2) + get(Pzb, k) - (k - 2) * s * get(P, k - 2) + k * sb * get(P, k)
            coeffs[k] = es * c
        out[name] = coeffs
    return out


def holomorphy_residual(metric: ConformalMetric, tm: TwistorMap, method: str = "spectral",
                        points=None, stride: int | None = None) -> float:
    """sup_z sum_k |c_k(z)|, a bound for sup_{|mu| <= 1} |Xi_sigma beta| without the truncation tail.

    ``spectral`` differentiates the coefficient grids spectrally; ``fd`` uses
    central differences (step 1e-4 R) of the interpolated coefficients.
    Points default to the interior grid nodes (r < R).
    """
    nodes = None
    if points is None:
        g = tm.grid
        I, J = _node_subset(g, stride, last_radius=False)
        points = g.z[I, J]
        if method == "spectral":
            nodes = (I, J)
    co = holomorphy_coefficients(metric, tm, points, method, nodes)
    total = 0.0
    for comp in co.values():
        acc = sum(np.abs(c) for c in comp.values())
        total = max(total, float(np.max(acc)))
    return total


# ------------------------------------------------------------------ verify
def reference_kappa(metric: ConformalMetric) -> float:
    """kappa of the nearest constant curvature model (used to set default thresholds)."""
    if metric.kappa is not None:
        return float(metric.kappa)
    spec = metric.spec or {}
    if spec.get("kind") == "perturbed":
        return float(spec["base"].get("kappa", 0.0))
    K0 = float(gauss_curvature(metric, 0.0))
    lim = 0.99 / metric.R ** 2
    return float(np.clip(K0 / 4, -lim, lim))


def default_thresholds(metric: ConformalMetric, tm_oracle: TwistorMap | None = None, fraction: float = 0.5,
                       seed: int = 0) -> dict:
    """Thresholds at a fraction of the constant curvature oracle constants for the nearest kappa."""
    from .oracles import oracle_map
    from .geometry import constant_curvature_metric

    p = CCParams(reference_kappa(metric), metric.R)
    if tm_oracle is None:
        from .polar import PolarGrid
        tm_oracle = oracle_map(p, PolarGrid(metric.R, 12, 32), 24)
    inj = injectivity_scan(constant_curvature_metric(p.kappa, p.R), tm_oracle, seed=seed)["min_ratio"]
    return {"det_S": fraction * cc_det_minimum(p), "lambda_min": fraction * lambda_min_bound(p),
            "injectivity": fraction * inj, "embed_det": fraction * cc_embed_minimum(p),
            "holomorphy": 5e-3, "reference_kappa": p.kappa}


def verify(metric: ConformalMetric, tm: TwistorMap, thresholds: dict | None = None, seed: int = 0,
           n_pairs: int = 200, stride: int | None = None) -> BdsReport:
    th = dict(default_thresholds(metric, seed=seed))
    th.update(thresholds or {})
    dmin, dloc = det_scan(metric, tm, stride=stride)
    lam = lambda_scan(metric, tm, stride=stride)
    inj = injectivity_scan(metric, tm, n_pairs=n_pairs, seed=seed)
    tr = totally_real_check(metric, tm)
    hol = holomorphy_residual(metric, tm, stride=stride)
    flags = {
        "det_S": dmin > th["det_S"],
        "lambda_min": lam["min"] > th["lambda_min"],
        "injectivity": inj["min_ratio"] > th["injectivity"],
        "embed_det": tr["min"] > th["embed_det"] and tr["boundary_injectivity"] > 0,
        "holomorphy": hol < th["holomorphy"],
    }
    details = {"det_location": dloc, "lambda": lam, "injectivity": {k: v for k, v in inj.items()},
               "embed_location": tr["at"], "boundary_injectivity": tr["boundary_injectivity"],
               "note": f"injectivity certified on |z| <= {1 - INTERIOR_DELTA:g} R, |mu| <= {1 - INTERIOR_DELTA:g}"}
    return BdsReport(dmin, lam["min"], inj["min_ratio"], tr["min"], hol, th, flags, all(flags.values()), details)


__all__ = ["FrameJacobian", "BdsReport", "jacobian_S", "hermitian_pullback", "lambda_min_2x2", "det_scan",
           "lambda_scan", "injectivity_scan", "totally_real_check", "holomorphy_residual",
           "holomorphy_coefficients", "image_membership", "verify", "wedge_consistency", "boundary_map",
           "cc_det_minimum", "mu_lattice", "cc_embed_minimum", "default_thresholds", "reference_kappa"]
