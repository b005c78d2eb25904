"""Complex Zernike polynomials on the disk of radius R.

Z_{n,m}(z) = (z/R)^m P_j^{(m,0)}(1 - 2|z/R|^2) for m >= 0 and the conjugate
for m < 0, with j = (n - |m|)/2.  They span the polynomials in z, zbar of
total degree <= n_max and are orthogonal on the disk.
"""
from __future__ import annotations

import numpy as np
from scipy.special import eval_jacobi


class ZernikeBasis:
    def __init__(self, R: float, degree: int):
        self.R = float(R)
        self.degree = int(degree)
        self.index = [(n, m) for n in range(self.degree + 1) for m in range(-n, n + 1, 2)]
        self.m = np.array([m for _, m in self.index])
        # L2(disk) norm of each element, used to normalize columns
        self._norm = np.array([np.sqrt(np.pi * self.R ** 2 / (n + 1)) for n, _ in self.index])

    def __len__(self) -> int:
        return len(self.index)

    def __call__(self, z) -> np.ndarray:
        """Values [..., M] at points z (normalized to unit L2 norm on the disk)."""
        w = np.asarray(z, dtype=complex) / self.R
        x = 1.0 - 2.0 * np.abs(w) ** 2
        out = np.empty(w.shape + (len(self.index),), dtype=complex)
        pw = [np.ones_like(w)]
        for _ in range(self.degree):
            pw.append(pw[-1] * w)
        for c, (n, m) in enumerate(self.index):
            am = abs(m)
            ang = pw[am] if m >= 0 else np.conj(pw[am])
            out[..., c] = ang * eval_jacobi((n - am) // 2, am, 0, x) / self._norm[c]
        return out

    def combine(self, coeffs: np.ndarray):
        """Callable z -> sum_c coeffs[c] Z_c(z)."""
        coeffs = np.asarray(coeffs)

        def f(z):
            return self(z) @ coeffs

        return f
