"""Canonical beta-extensions and truncated fibre power series on D_R x D."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConformalMetric, DomainError, GridSpec
from .transforms import ModeField, NORMAL_SCALE, solve_normal_system, transport


@dataclass
class TwistorMap:
    """beta = (sum_{k even} u_k mu^k, sum_{k odd} u_k mu^k) with u_k fields on a polar grid."""

    component0: ModeField
    component1: ModeField
    k_max: int
    metric_ref: ConformalMetric | None = None
    provenance: str = "pipeline"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(k % 2 or k < 0 for k in self.component0.k_values):
            raise ValueError("component0 must carry nonnegative even modes only")
        if any(k % 2 == 0 or k < 0 for k in self.component1.k_values):
            raise ValueError("component1 must carry nonnegative odd modes only")

    @property
    def grid(self):
        return self.component0.grid

    @property
    def R(self) -> float:
        return self.grid.R


def szego(modes: dict, parity: str) -> dict:
    """Keep the nonnegative modes of the requested parity."""
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    r = 0 if parity == "even" else 1
    return {k: v for k, v in modes.items() if k >= 0 and k % 2 == r}


def _series(fld: ModeField, z, mu) -> np.ndarray:
    P = fld.parts(z)
    out = np.zeros(np.shape(z), dtype=complex)
    # Horner in mu over the stored (sparse) k list
    for i in np.argsort(fld.k_values)[::-1]:
        out = out + P[i] * mu ** fld.k_values[i]
    return out


def _check_domain(R, z, mu):
    if np.any(np.abs(z) > R * (1 + 1e-12)) or np.any(np.abs(mu) > 1 + 1e-12):
        raise DomainError("evaluation point outside D_R x closed unit disk")


def evaluate(tm: TwistorMap, z, mu):
    """(beta_1, beta_2) at (z, mu); coefficients interpolated spectrally in z."""
    z = np.asarray(z, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    z, mu = np.broadcast_arrays(z, mu)
    _check_domain(tm.R, z, mu)
    b1 = _series(tm.component0, z, mu)
    b2 = _series(tm.component1, z, mu)
    if b1.ndim == 0:
        return complex(b1), complex(b2)
    return b1, b2


def evaluate_mu_derivative(tm: TwistorMap, z, mu):
    """(d beta_1/d mu, d beta_2/d mu)."""
    z, mu = np.broadcast_arrays(np.asarray(z, complex), np.asarray(mu, complex))
    out = []
    for fld in (tm.component0, tm.component1):
        P = fld.parts(z)
        acc = np.zeros(z.shape, dtype=complex)
        for i, k in enumerate(fld.k_values):
            if k:
                acc = acc + k * P[i] * mu ** (k - 1)
        out.append(acc)
    return tuple(out)


def leading_mode(tm: TwistorMap, m: int) -> ModeField:
    """The mu^m coefficient field (zero beyond the truncation)."""
    if m < 0:
        raise DomainError("m must be nonnegative")
    fld = tm.component0 if m % 2 == 0 else tm.component1
    g = fld.grid
    if m not in fld.k_values:
        return ModeField(g, (m,), np.zeros((1,) + g.shape), "smooth", expansion=lambda z: np.zeros(np.shape(z) + (1,), complex))
    i = fld.k_values.index(m)
    exp = None
    if fld.expansion is not None:
        exp = lambda z, f=fld.expansion, i=i: np.asarray(f(z))[..., i:i + 1]
    return ModeField(g, (m,), fld.coeffs[i:i + 1], "smooth", expansion=exp)


def equivariance_defect(tm: TwistorMap, p: int = 1, n_samples: int = 200, seed: int = 0) -> float:
    """sup |beta(e^{it} z, e^{it} mu) - e^{ipt} beta(z, mu)| over random samples, both components."""
    metric = tm.metric_ref
    if metric is not None and not metric.radial:
        raise DomainError("equivariance is only defined for rotationally symmetric metrics")
    rng = np.random.default_rng(seed)
    R = tm.R
    z = R * np.sqrt(rng.uniform(0, 1, n_samples)) * np.exp(2j * np.pi * rng.uniform(0, 1, n_samples))
    mu = np.sqrt(rng.uniform(0, 1, n_samples)) * np.exp(2j * np.pi * rng.uniform(0, 1, n_samples))
    t = rng.uniform(0, 2 * np.pi, n_samples)
    rot = np.exp(1j * t)
    a1, a2 = evaluate(tm, z, mu)
    b1, b2 = evaluate(tm, rot * z, rot * mu)
    ph = np.exp(1j * p * t)
    return float(max(np.max(np.abs(b1 - ph * a1)), np.max(np.abs(b2 - ph * a2))))


def _first_integral_modes(T, h, k_max: int) -> dict:
    vals = T.sharp_on_grid(h)  # [n_r, n_theta, n_dir]
    c = np.fft.fft(vals, axis=-1) / T.n_dir
    return {k: c[..., k] for k in range(0, k_max + 1)}


def beta_extension(metric: ConformalMetric, grid: GridSpec | None = None, reg: float = 1e-8,
                   symmetrize: bool = False) -> TwistorMap:
    """Canonical beta-extension of the datum (z, dz).

    Solves N_k a_k = rhs_k for k = 0 (rhs z) and k = 1 (rhs e^{-sigma}, the
    pullback of dz), extends I_k a_k invariantly, and keeps the Szego parts.
    The right-hand sides are scaled by 2 pi so that the inverse is taken for
    the plain fibre projection ((I_k .)^#)_k, which is the operator for which
    the mode-k part of the extension reproduces the datum.

    With ``symmetrize`` (rotationally symmetric metrics only) every u_k is
    projected onto its forced angular frequency 1 - k.
    """
    spec = grid or GridSpec()
    if spec.k_max > spec.n_theta // 2 - 1:
        raise DomainError("k_max must be <= n_theta/2 - 1")
    if symmetrize and not metric.radial:
        raise DomainError("symmetrize requires a rotationally symmetric metric")
    T = transport(metric, spec)
    g = T.polar
    rhs = {
        0: ModeField(g, (0,), NORMAL_SCALE * g.z[None]),
        1: ModeField(g, (1,), NORMAL_SCALE * np.exp(-metric.sigma(g.z))[None]),
    }
    fields, info = {}, {}
    for j, parity in ((0, "even"), (1, "odd")):
        sol = solve_normal_system(metric, j, rhs[j], spec, reg=reg)
        modes = szego(_first_integral_modes(T, sol.boundary, spec.k_max), parity)
        ks = tuple(sorted(modes))
        coeffs = np.stack([modes[k] for k in ks])
        if symmetrize:
            coeffs = _project_equivariant(coeffs, ks, g.n_theta)
        fields[j] = ModeField(g, ks, coeffs)
        info[f"residual{j}"] = sol.residual
        info[f"reg{j}"] = sol.reg
        info[f"boundary{j}"] = sol.boundary
        info[f"solution{j}"] = sol
    return TwistorMap(fields[0], fields[1], spec.k_max, metric_ref=metric, provenance="pipeline", info=info)


def _project_equivariant(coeffs: np.ndarray, ks, n_theta: int) -> np.ndarray:
    out = np.zeros_like(coeffs)
    c = np.fft.fft(coeffs, axis=-1)
    for i, k in enumerate(ks):
        q = (1 - k) % n_theta
        keep = np.zeros(n_theta)
        keep[q] = 1.0
        out[i] = np.fft.ifft(c[i] * keep, axis=-1)
    return out


__all__ = ["TwistorMap", "szego", "beta_extension", "evaluate", "evaluate_mu_derivative",
           "leading_mode", "equivariance_defect"]
