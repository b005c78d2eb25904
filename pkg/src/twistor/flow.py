"""Geodesic flow on the unit circle bundle in the (z, theta) trivialization.

A phase point (z, theta) stands for the unit vector e^{-sigma(z)}(cos theta, sin theta).
The flow is

    dz/dt = e^{-sigma} e^{i theta},   dtheta/dt = -2 e^{-sigma} Im(e^{i theta} d_z sigma).

Two integrators live here: ``integrate`` wraps scipy's DOP853 for single
trajectories with full records, and ``_march`` is a vectorized Dormand-Prince
5(4) scheme that advances many rays at once with per-ray adaptive steps,
boundary events and prescribed stop times.  Bulk transport code uses the
latter; the former serves as the independent reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import ConformalMetric, DomainError

TWO_PI = 2 * np.pi
GLANCING_TOL = 1e-9
DEFAULT_TOL = 1e-11


class TrappedOrbitError(RuntimeError):
    """No boundary hit before the time cap: the input is probably not simple."""


class IntegrationError(RuntimeError):
    """Step size underflow or non-finite state."""


@dataclass(frozen=True)
class PhasePoint:
    z: complex
    theta: float


@dataclass(frozen=True)
class BoundaryPoint:
    """Boundary position angle omega and incidence alpha.

    Influx points have alpha in [-pi/2, pi/2]; outgoing points returned by
    ``scattering`` carry alpha' in [pi/2, 3pi/2] so that theta = omega + alpha + pi
    holds for both.
    """

    omega: float
    alpha: float

    @property
    def glancing(self) -> bool:
        return abs(abs(self.alpha) - np.pi / 2) <= GLANCING_TOL


@dataclass
class GeodesicRecord:
    t: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    exit_time: float | None

    @property
    def states(self) -> list[tuple[float, PhasePoint]]:
        return [(float(t), PhasePoint(complex(z), float(th))) for t, z, th in zip(self.t, self.z, self.theta)]


def wrap(angle, lo: float = -np.pi):
    return (np.asarray(angle) - lo) % TWO_PI + lo


# ---------------------------------------------------------------- vector field
def flow_ode(metric: ConformalMetric, p: PhasePoint) -> tuple[complex, float]:
    z = complex(p.z)
    if abs(z) > metric.R * (1 + 1e-12):
        raise DomainError("phase point outside the disk")
    es = math.exp(-float(metric.sigma(np.asarray(z))))
    e = complex(math.cos(p.theta), math.sin(p.theta))
    dth = -2.0 * es * (e * complex(metric.dz_sigma(np.asarray(z)))).imag
    return es * e, dth


def _vector_field(metric: ConformalMetric, sign: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Right-hand side on packed real states [x, y, theta]; sign=-1 flows backward."""

    def f(Y):
        z = Y[:, 0] + 1j * Y[:, 1]
        es = np.exp(-metric.sigma(z))
        e = np.exp(1j * Y[:, 2])
        v = es * e
        out = np.empty_like(Y)
        out[:, 0] = sign * v.real
        out[:, 1] = sign * v.imag
        out[:, 2] = sign * (-2.0) * es * np.imag(e * metric.dz_sigma(z))
        return out

    return f


def _jacobi_field(metric: ConformalMetric) -> Callable[[np.ndarray], np.ndarray]:
    """Geodesic flow augmented with y'' + K y = 0 on packed [x, y, theta, j, j']."""
    base = _vector_field(metric)

    def f(Y):
        out = np.empty_like(Y)
        out[:, :3] = base(Y[:, :3])
        z = Y[:, 0] + 1j * Y[:, 1]
        K = -4.0 * np.exp(-2.0 * metric.sigma(z)) * metric.ddbar_sigma(z)
        out[:, 3] = Y[:, 4]
        out[:, 4] = -K * Y[:, 3]
        return out

    return f


# ------------------------------------------------------- Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def _dp_step(f, y, h, k1):
    """One Dormand-Prince step from y with per-row step h; returns (y5, err, f(y5))."""
    hh = h[:, None]
    K = [k1]
    for i in range(1, 7):
        acc = y.copy()
        for j, a in enumerate(_A[i]):
            if a:
                acc += hh * a * K[j]
        K.append(f(acc))
    y5 = acc  # stage 7 argument is the 5th order solution (FSAL)
    err = hh * sum(e * k for e, k in zip(_E, K) if e)
    return y5, err, K[6]


def _march(f, y0, *, stops=None, event=None, boundary_start=None, rtol=DEFAULT_TOL,
           atol=DEFAULT_TOL, h_init=1e-2, h_max=0.1, t_cap=1e3):
    """Advance rays y0[N, d] with per-ray adaptive steps.

    stops: optional [N, Q] nondecreasing times; states are recorded there and the
        ray finishes at its last stop.
    event: optional g(Y) -> [N]; the ray finishes at the first root of g going
        from negative to positive.  Rays flagged in boundary_start begin with
        g = 0 and use g(t)/t on their first step so the start is not mistaken for
        a crossing.
    Returns (t_final, y_final, recorded) with recorded [N, Q, d] or None.
    """
    y0 = np.asarray(y0, dtype=float)
    N, d = y0.shape
    y = y0.copy()
    t = np.zeros(N)
    h = np.broadcast_to(np.asarray(h_init, dtype=float), (N,)).copy()
    h = np.minimum(h, h_max)
    active = np.ones(N, dtype=bool)
    t_fin = np.full(N, np.nan)
    y_fin = y0.copy()
    rec = None
    if stops is not None:
        stops = np.asarray(stops, dtype=float)
        Q = stops.shape[1]
        rec = np.empty((N, Q, d))
        ptr = np.zeros(N, dtype=int)
        # stops at t = 0 are recorded immediately
        while True:
            m = active & (stops[np.arange(N), np.minimum(ptr, Q - 1)] <= 0.0) & (ptr < Q)
            if not m.any():
                break
            rec[m, ptr[m]] = y[m]
            ptr[m] += 1
            done = m & (ptr == Q)
            t_fin[done] = 0.0
            y_fin[done] = y[done]
            active &= ~done
    bstart = np.zeros(N, dtype=bool) if boundary_start is None else np.asarray(boundary_start, dtype=bool).copy()
    if event is not None and bstart.any():
        # a boundary start whose direction does not point inward exits at once
        fz = f(y[bstart])
        slope = 2.0 * (y[bstart, 0] * fz[:, 0] + y[bstart, 1] * fz[:, 1])
        out_now = np.zeros(N, dtype=bool)
        out_now[np.nonzero(bstart)[0][slope >= 0]] = True
        t_fin[out_now] = 0.0
        active &= ~out_now
    fy = np.empty_like(y)
    if active.any():
        fy[active] = f(y[active])
    it = 0
    while active.any():
        it += 1
        if it > 200000:
            raise IntegrationError("too many steps")
        idx = np.nonzero(active)[0]
        yi, ti, hprop = y[idx], t[idx], h[idx]
        hi = hprop.copy()
        if stops is not None:
            target = stops[idx, ptr[idx]]
            hi = np.minimum(hi, target - ti)
            at_stop = hi >= target - ti
        y5, err, f5 = _dp_step(f, yi, hi, fy[idx])
        scale = atol + rtol * np.maximum(np.abs(yi), np.abs(y5))
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        en = np.where(np.isfinite(en) & np.all(np.isfinite(y5), axis=1), en, np.inf)
        acc = en <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(en == 0, 5.0, 0.9 * en ** -0.2)
        fac = np.where(acc, np.clip(fac, 0.2, 5.0), np.clip(fac, 0.1, 0.9))
        hnew = np.minimum(hi * fac, h_max)
        if stops is not None:
            # a step shortened to hit a stop should not shrink the proposal
            hnew = np.where(acc & at_stop, np.maximum(hnew, np.minimum(hprop, h_max)), hnew)
        if np.any(hnew < 1e-14 * np.maximum(1.0, np.abs(ti))):
            raise IntegrationError("step size underflow")
        h[idx] = hnew
        a_idx = idx[acc]
        if a_idx.size == 0:
            continue
        ya, y5a, f5a, ha = yi[acc], y5[acc], f5[acc], hi[acc]
        finished = np.zeros(a_idx.size, dtype=bool)
        if event is not None:
            g_new = event(y5a)
            cross = g_new > 0
            if cross.any():
                c_idx = a_idx[cross]
                first = bstart[c_idx] & (t[c_idx] == 0.0)
                s, ys = _locate_root(f, event, ya[cross], ha[cross], fy[c_idx], first)
                t_fin[c_idx] = t[c_idx] + s
                y_fin[c_idx] = ys
                finished[cross] = True
        keep = ~finished
        k_idx = a_idx[keep]
        y[k_idx] = y5a[keep]
        t[k_idx] += ha[keep]
        fy[k_idx] = f5a[keep]
        if stops is not None and k_idx.size:
            hit = at_stop[acc][keep]
            h_idx = k_idx[hit]
            if h_idx.size:
                t[h_idx] = stops[h_idx, ptr[h_idx]]
                rec[h_idx, ptr[h_idx]] = y[h_idx]
                ptr[h_idx] += 1
                # consecutive equal stops
                while True:
                    more = h_idx[(ptr[h_idx] < Q)]
                    more = more[stops[more, ptr[more]] <= t[more]]
                    if more.size == 0:
                        break
                    rec[more, ptr[more]] = y[more]
                    ptr[more] += 1
                done = h_idx[ptr[h_idx] == Q]
                t_fin[done] = t[done]
                y_fin[done] = y[done]
                finished[np.isin(a_idx, done)] = True
        active[a_idx[finished]] = False
        over = active & (t > t_cap)
        if over.any():
            raise TrappedOrbitError(f"{int(over.sum())} rays did not exit before t = {t_cap:g}")
    return t_fin, y_fin, rec


def _locate_root(f, event, y, h, fy, first, tol=1e-13, maxit=100):
    """Find s in (0, h] with event(step(y, s)) = 0 by the Illinois method."""
    n = y.shape[0]

    def G(s, sel):
        ys, _, _ = _dp_step(f, y[sel], s, fy[sel])
        g = event(ys)
        g = np.where(first[sel], g / np.maximum(s, 1e-300), g)
        return g, ys

    a = np.zeros(n)
    b = h.copy()
    ga = event(y)
    if first.any():
        slope = 2.0 * (y[first, 0] * fy[first, 0] + y[first, 1] * fy[first, 1])
        ga[first] = slope
    gb, yb = G(b, np.arange(n))
    s_best = b.copy()
    y_best = yb
    side = np.zeros(n, dtype=int)
    todo = np.arange(n)
    for _ in range(maxit):
        if todo.size == 0:
            break
        aa, bb, fa, fb = a[todo], b[todo], ga[todo], gb[todo]
        s = (aa * fb - bb * fa) / (fb - fa)
        bad = ~np.isfinite(s) | (s <= aa) | (s >= bb)
        s = np.where(bad, 0.5 * (aa + bb), s)
        gs, ys = G(s, todo)
        s_best[todo] = s
        y_best[todo] = ys
        raw = event(ys)
        conv = (np.abs(raw) <= tol) | ((bb - aa) <= 4e-16 * np.maximum(1.0, bb))
        left = gs < 0
        # Illinois: halve the stale endpoint when the same side repeats
        a[todo] = np.where(left, s, aa)
        ga[todo] = np.where(left, gs, np.where(side[todo] == 1, fa * 0.5, fa))
        b[todo] = np.where(left, bb, s)
        gb[todo] = np.where(left, np.where(side[todo] == -1, fb * 0.5, fb), gs)
        side[todo] = np.where(left, -1, 1)
        todo = todo[~conv]
    return s_best, y_best


# --------------------------------------------------------- batch interfaces
def _pack(z, theta) -> np.ndarray:
    z = np.asarray(z, dtype=complex).ravel()
    th = np.asarray(theta, dtype=float).ravel()
    return np.stack([z.real, z.imag, th], axis=1)


def _time_cap(metric: ConformalMetric) -> float:
    zz = metric.R * np.sqrt(np.linspace(0, 1, 6))[:, None] * np.exp(1j * np.linspace(0, TWO_PI, 12))[None]
    return 60.0 * metric.R * float(np.exp(np.max(metric.sigma(zz))))


def _boundary_event(R: float):
    R2 = R * R

    def g(Y):
        return Y[:, 0] ** 2 + Y[:, 1] ** 2 - R2

    return g


def shoot(metric: ConformalMetric, z, theta, direction: int = 1, tol: float = DEFAULT_TOL):
    """Flow each (z, theta) until it leaves the disk (direction=-1 flows backward).

    Returns (tau, z_exit, theta_exit) with theta the forward direction angle.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    Y = _pack(z, np.broadcast_to(theta, shape))
    R = metric.R
    on_bdry = np.abs(np.abs(Y[:, 0] + 1j * Y[:, 1]) - R) <= 1e-12 * R
    # nudge boundary starts exactly onto the circle so that g(0) = 0
    zb = Y[on_bdry, 0] + 1j * Y[on_bdry, 1]
    zb = R * np.exp(1j * np.angle(zb))
    Y[on_bdry, 0], Y[on_bdry, 1] = zb.real, zb.imag
    f = _vector_field(metric, float(np.sign(direction) or 1))
    t, Yf, _ = _march(f, Y, event=_boundary_event(R), boundary_start=on_bdry, rtol=tol, atol=tol,
                      h_init=1e-2 * R, h_max=0.05 * R, t_cap=_time_cap(metric))
    zf = Yf[:, 0] + 1j * Yf[:, 1]
    return t.reshape(shape), zf.reshape(shape), Yf[:, 2].reshape(shape)


def flow_for(metric: ConformalMetric, z, theta, times, tol: float = DEFAULT_TOL):
    """States at the given times [N, Q] (nondecreasing per row) along each trajectory."""
    Y = _pack(z, theta)
    times = np.asarray(times, dtype=float).reshape(Y.shape[0], -1)
    R = metric.R
    f = _vector_field(metric)
    _, _, rec = _march(f, Y, stops=times, rtol=tol, atol=tol, h_init=1e-2 * R, h_max=0.05 * R,
                       t_cap=np.inf)
    return rec[..., 0] + 1j * rec[..., 1], rec[..., 2]


def boundary_to_phase_arrays(R: float, omega, alpha):
    omega = np.asarray(omega, dtype=float)
    return R * np.exp(1j * omega), omega + np.asarray(alpha, dtype=float) + np.pi


def phase_to_boundary_arrays(z, theta, outgoing: bool = False):
    omega = np.angle(z)
    lo = -np.pi / 2 if outgoing else -np.pi
    return wrap(omega, 0.0), wrap(np.asarray(theta) - omega - np.pi, lo)


def chord_samples(metric: ConformalMetric, omega, alpha, u, tol: float = DEFAULT_TOL):
    """Chord lengths tau[N] and phase points at fractions u[Q] of each chord.

    omega and alpha are flattened and paired.  Glancing rays (|alpha| within
    1e-9 of pi/2) have tau = 0 and constant samples.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    z0, th0 = boundary_to_phase_arrays(metric.R, omega, alpha)
    tau = np.zeros(omega.size)
    live = np.abs(np.abs(alpha) - np.pi / 2) > GLANCING_TOL
    if live.any():
        tau[live], _, _ = shoot(metric, z0[live], th0[live], tol=tol)
    zs = np.repeat(z0[:, None], u.size, axis=1)
    ths = np.repeat(th0[:, None], u.size, axis=1)
    live &= tau > 0
    if live.any():
        zz, tt = flow_for(metric, z0[live], th0[live], tau[live, None] * u[None, :], tol=tol)
        zs[live] = zz
        ths[live] = tt
    return tau, zs, ths


def backward_exits(metric: ConformalMetric, z, theta, tol: float = DEFAULT_TOL):
    """Influx boundary points (omega, alpha) and backward times for phase points."""
    z = np.asarray(z, dtype=complex)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), z.shape)
    tb, zb, thb = shoot(metric, z, theta, direction=-1, tol=tol)
    omega, alpha = phase_to_boundary_arrays(zb, thb)
    alpha = np.clip(alpha, -np.pi / 2, np.pi / 2)
    return omega, alpha, tb


def jacobi_along_chords(metric: ConformalMetric, omega, alpha, n_samples: int = 32,
                        tol: float = 1e-9) -> float:
    """Minimum over chords and samples of J(t)/t for the Jacobi field J(0)=0, J'(0)=1."""
    Om, Al = np.meshgrid(np.asarray(omega, float), np.asarray(alpha, float), indexing="ij")
    Om, Al = Om.ravel(), Al.ravel()
    z0, th0 = boundary_to_phase_arrays(metric.R, Om, Al)
    tau, _, _ = shoot(metric, z0, th0, tol=tol)
    u = np.arange(1, n_samples + 1) / n_samples
    Y = np.concatenate([_pack(z0, th0), np.zeros((Om.size, 1)), np.ones((Om.size, 1))], axis=1)
    _, _, rec = _march(_jacobi_field(metric), Y, stops=tau[:, None] * u[None, :], rtol=tol, atol=tol,
                       h_init=1e-2 * metric.R, h_max=0.05 * metric.R, t_cap=np.inf)
    ratio = rec[:, :, 3] / (tau[:, None] * u[None, :])
    return float(np.min(ratio))


# ----------------------------------------------------------- scalar interfaces
def integrate(metric: ConformalMetric, p: PhasePoint, t_max: float, tol: float = 1e-10,
              direction: int = 1) -> GeodesicRecord:
    """Trajectory from p until the boundary is reached or t_max elapses (scipy DOP853)."""
    if t_max <= 0:
        raise DomainError("t_max must be positive")
    R = metric.R
    z0 = complex(p.z)
    if abs(z0) > R * (1 + 1e-12):
        raise DomainError("phase point outside the disk")
    on_bdry = abs(abs(z0) - R) <= 1e-12 * R
    if on_bdry:
        z0 = R * np.exp(1j * np.angle(z0))
    sgn = 1.0 if direction >= 0 else -1.0
    f = _vector_field(metric, sgn)

    def rhs(t, y):
        return f(y[None, :])[0]

    y0 = np.array([z0.real, z0.imag, float(p.theta)])
    slope0 = 2.0 * float(np.dot(y0[:2], rhs(0.0, y0)[:2]))
    if on_bdry and slope0 >= 0:
        return GeodesicRecord(np.array([0.0]), np.array([z0]), np.array([p.theta]), 0.0)

    def hit(t, y):
        g = y[0] ** 2 + y[1] ** 2 - R * R
        if on_bdry:
            return slope0 if t == 0 else g / t
        return g

    hit.terminal = True
    hit.direction = 1
    sol = solve_ivp(rhs, (0.0, t_max), y0, method="DOP853", rtol=tol, atol=tol, events=hit,
                    max_step=0.1 * R)
    if sol.status == -1:
        raise IntegrationError(sol.message)
    t = sol.t
    Y = sol.y
    exit_time = None
    if sol.t_events[0].size:
        exit_time = float(sol.t_events[0][0])
        ye = sol.y_events[0][0]
        t = np.append(t[t < exit_time], exit_time)
        Y = np.concatenate([Y[:, : t.size - 1], ye[:, None]], axis=1)
    return GeodesicRecord(t, Y[0] + 1j * Y[1], Y[2], exit_time)


def exit_time(metric: ConformalMetric, p: PhasePoint, direction: str = "forward",
              tol: float = DEFAULT_TOL) -> float:
    """tau_+ (forward) or the time to reach the boundary flowing backward."""
    sgn = 1 if direction == "forward" else -1
    tau, _, _ = shoot(metric, np.array([p.z]), np.array([p.theta]), direction=sgn, tol=tol)
    return float(tau[0])


def boundary_to_phase(R: float, b: BoundaryPoint) -> PhasePoint:
    return PhasePoint(complex(R * np.exp(1j * b.omega)), float(b.omega + b.alpha + np.pi))


def phase_to_boundary(p: PhasePoint, outgoing: bool = False) -> BoundaryPoint:
    om, al = phase_to_boundary_arrays(np.asarray(p.z), np.asarray(p.theta), outgoing)
    return BoundaryPoint(float(om), float(al))


def scattering(metric: ConformalMetric, b: BoundaryPoint, tol: float = DEFAULT_TOL) -> BoundaryPoint:
    """Exit point of the chord entering at b, as (omega', alpha') with alpha' in [pi/2, 3pi/2]."""
    if b.glancing or abs(b.alpha) > np.pi / 2:
        raise DomainError("scattering needs a non-glancing influx point")
    p = boundary_to_phase(metric.R, b)
    _, ze, the = shoot(metric, np.array([p.z]), np.array([p.theta]), tol=tol)
    om, al = phase_to_boundary_arrays(ze, the, outgoing=True)
    return BoundaryPoint(float(om[0]), float(al[0]))


def upsilon(metric: ConformalMetric, b: BoundaryPoint, u: float, tol: float = DEFAULT_TOL) -> PhasePoint:
    """The phase point a fraction u of the way along the chord from b."""
    if not 0.0 <= u <= 1.0:
        raise DomainError("u must lie in [0, 1]")
    _, zs, ths = chord_samples(metric, [b.omega], [b.alpha], [u], tol=tol)
    return PhasePoint(complex(zs[0, 0]), float(ths[0, 0]))


def backward_exit(metric: ConformalMetric, p: PhasePoint, tol: float = DEFAULT_TOL) -> BoundaryPoint:
    if abs(p.z) > metric.R * (1 + 1e-12):
        raise DomainError("phase point outside the disk")
    om, al, _ = backward_exits(metric, np.array([p.z]), np.array([p.theta]), tol=tol)
    return BoundaryPoint(float(om[0]), float(al[0]))
