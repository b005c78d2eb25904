"""Chebyshev-Fourier polar grid on the disk.

The radial direction uses Chebyshev-Lobatto points on the full diameter
[-R, R] with an odd number of intervals, so no node sits at the origin and the
outer node is r = R.  A value at (-r, phi) is the value at (r, phi + pi); this
folding gives spectral interpolation and differentiation that stay regular at
z = 0.  Only the n_r positive radii are stored.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi


def cheb_diff(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Lobatto points cos(pi j/N) and the differentiation matrix."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def trig_cardinal(x: np.ndarray, n: int) -> np.ndarray:
    """Cardinal function of trigonometric interpolation on n (even) equispaced nodes.

    Uses the symmetric Nyquist convention sin(n x/2) cot(x/2)/n, which keeps
    real data real.
    """
    half = 0.5 * np.asarray(x)
    s = np.sin(half)
    small = np.abs(s) < 1e-13
    out = np.empty_like(half)
    out[~small] = np.sin(n * half[~small]) * np.cos(half[~small]) / (n * s[~small])
    # at multiples of 2 pi the limit is exactly 1 for even n
    out[small] = 1.0
    return out


class PolarGrid:
    """Nodes z_ij = r_i e^{i phi_j}, r ascending in (0, R], phi_j = 2 pi j / n_theta."""

    def __init__(self, R: float, n_r: int, n_theta: int):
        if n_theta % 2:
            raise ValueError("n_theta must be even")
        self.R = float(R)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.N = 2 * self.n_r - 1
        x, D = cheb_diff(self.N)
        self.x_full = self.R * x
        self.D_full = D / self.R
        self.r = self.x_full[: self.n_r][::-1].copy()
        self.phi = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        bw = (-1.0) ** np.arange(self.N + 1)
        bw[0] *= 0.5
        bw[-1] *= 0.5
        self.bary = bw

    def __eq__(self, other):
        return (isinstance(other, PolarGrid) and self.R == other.R and self.n_r == other.n_r
                and self.n_theta == other.n_theta)

    def __hash__(self):
        return hash((self.R, self.n_r, self.n_theta))

    @cached_property
    def z(self) -> np.ndarray:
        return self.r[:, None] * np.exp(1j * self.phi)[None, :]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    # ---------------------------------------------------------------- folding
    def full_diameter(self, F: np.ndarray) -> np.ndarray:
        """Values on the 2 n_r full-diameter nodes x_j (descending) for every phi_l."""
        F = np.asarray(F)
        pos = F[..., ::-1, :]
        neg = np.roll(F, -self.n_theta // 2, axis=-1)
        return np.concatenate([pos, neg], axis=-2)

    # ---------------------------------------------------------- interpolation
    def _radial_weights(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float).ravel()
        diff = r[:, None] - self.x_full[None, :]
        exact = np.abs(diff) < 1e-15 * max(self.R, 1.0)
        diff = np.where(exact, 1.0, diff)
        L = self.bary[None, :] / diff
        L /= L.sum(axis=1, keepdims=True)
        hit = exact.any(axis=1)
        if hit.any():
            L[hit] = exact[hit].astype(float)
        n = self.n_r
        L_pos = L[:, :n][:, ::-1]
        L_neg = L[:, n:]
        return L_pos, L_neg

    def _angular_weights(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phi = np.asarray(phi, dtype=float).ravel()
        d = phi[:, None] - self.phi[None, :]
        return trig_cardinal(d, self.n_theta), trig_cardinal(d + np.pi, self.n_theta)

    def interp(self, F: np.ndarray, z, chunk: int | None = None) -> np.ndarray:
        """Evaluate grid data F[..., n_r, n_theta] at points z; returns [..., *z.shape]."""
        F = np.asarray(F)
        zs = np.asarray(z, dtype=complex)
        lead = F.shape[:-2]
        Ff = F.reshape(-1, self.n_r, self.n_theta)
        K = Ff.shape[0]
        if chunk is None:
            # keep the [chunk, K * n_r] intermediates around 32 MB
            chunk = int(np.clip(2_000_000 // (K * self.n_r), 64, 16384))
        flat = zs.ravel()
        out = np.empty((K, flat.size), dtype=np.result_type(F.dtype, float))
        Fmat = Ff.transpose(2, 0, 1).reshape(self.n_theta, K * self.n_r)
        for s in range(0, flat.size, chunk):
            zz = flat[s:s + chunk]
            Lp, Ln = self._radial_weights(np.abs(zz))
            Tp, Tn = self._angular_weights(np.angle(zz))
            Ap = (Tp @ Fmat).reshape(-1, K, self.n_r)
            An = (Tn @ Fmat).reshape(-1, K, self.n_r)
            out[:, s:s + chunk] = (np.einsum("pkr,pr->kp", Ap, Lp) + np.einsum("pkr,pr->kp", An, Ln))
        return out.reshape(lead + zs.shape)

    def cardinal_matrix(self, z) -> np.ndarray:
        """E[p, i*n_theta + j] = value at z_p of the cardinal function of node (i, j)."""
        zs = np.asarray(z, dtype=complex).ravel()
        Lp, Ln = self._radial_weights(np.abs(zs))
        Tp, Tn = self._angular_weights(np.angle(zs))
        E = Lp[:, :, None] * Tp[:, None, :] + Ln[:, :, None] * Tn[:, None, :]
        return E.reshape(zs.size, self.size)

    # ---------------------------------------------------------- derivatives
    @cached_property
    def _wavenumbers(self) -> np.ndarray:
        k = np.fft.fftfreq(self.n_theta, 1.0 / self.n_theta)
        k[self.n_theta // 2] = 0.0
        return k

    def d_dr(self, F: np.ndarray) -> np.ndarray:
        full = self.full_diameter(F)
        lead = full.shape[:-2]
        # one 2-D product with the radial axis first keeps this on BLAS
        M = np.moveaxis(full, -2, 0).reshape(2 * self.n_r, -1)
        D = self.D_full.astype(M.dtype) if np.iscomplexobj(M) else self.D_full
        dF = np.moveaxis((D @ M).reshape((2 * self.n_r,) + lead + (self.n_theta,)), 0, -2)
        return dF[..., : self.n_r, :][..., ::-1, :]

    def d_dphi(self, F: np.ndarray) -> np.ndarray:
        Fh = np.fft.fft(F, axis=-1)
        out = np.fft.ifft(1j * self._wavenumbers * Fh, axis=-1)
        return out if np.iscomplexobj(F) else out.real

    def d_dz(self, F: np.ndarray) -> np.ndarray:
        """d_z = e^{-i phi}/2 (d_r - (i/r) d_phi), spectrally on the grid."""
        return self.wirtinger(F)[0]

    def d_dzbar(self, F: np.ndarray) -> np.ndarray:
        return self.wirtinger(F)[1]

    def wirtinger(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(d_z F, d_zbar F) sharing one radial and one angular derivative."""
        dr = self.d_dr(F)
        dphi = self.d_dphi(F) / self.r[:, None]
        return (0.5 * np.exp(-1j * self.phi) * (dr - 1j * dphi),
                0.5 * np.exp(1j * self.phi) * (dr + 1j * dphi))

    # ----------------------------------------------------------- quadrature
    def _radial_quadrature(self, moments: np.ndarray) -> np.ndarray:
        # nodes in t = r^2 mapped to s in [-1, 1]; Chebyshev moment matching
        s = 2.0 * (self.r / self.R) ** 2 - 1.0
        m = np.arange(self.n_r)
        V = np.cos(m[:, None] * np.arccos(np.clip(s, -1, 1))[None, :])
        return np.linalg.solve(V, moments)

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Weights for integral of F dA over the disk (F smooth)."""
        m = np.arange(self.n_r)
        mom = np.zeros(self.n_r)
        mom[::2] = 2.0 / (1.0 - m[::2].astype(float) ** 2)
        v = self._radial_quadrature(mom) * (self.R ** 2 / 4.0)
        return np.repeat(v[:, None], self.n_theta, axis=1) * (2 * np.pi / self.n_theta)

    @cached_property
    def rho_half_weights(self) -> np.ndarray:
        """Weights for integral of F (R^2 - |z|^2)^{-1/2} dA over the disk (F smooth)."""
        xg, wg = roots_jacobi(self.n_r + 8, -0.5, 0.0)
        m = np.arange(self.n_r)
        mom = np.cos(m[:, None] * np.arccos(xg)[None, :]) @ wg
        v = self._radial_quadrature(mom) * (self.R / (2.0 * np.sqrt(2.0)))
        return np.repeat(v[:, None], self.n_theta, axis=1) * (2 * np.pi / self.n_theta)
