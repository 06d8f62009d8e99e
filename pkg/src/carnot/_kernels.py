"""Fused integrand kernels for the sampling hot paths.

The generic jet/field machinery stays the reference implementation; these
kernels recompute the same quantities in one pass per sample for the bump
Rayleigh-quotient integrands, and the test suite asserts pointwise agreement
with the generic route.  Falls back to None when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    _HAVE_NUMBA = False


def _build():
    @njit(cache=True, nogil=True)
    def hardy_pair(X, m, step2, center_coeff, C, alpha, center, radius, edge, tilt, out):
        B, n = X.shape
        k = n - m
        inv_r2 = 1.0 / (radius * radius)
        inv_w = 1.0 / edge
        cu = -2.0 * inv_r2 * inv_w
        d = np.empty(n)
        gz = np.empty(k if k > 0 else 1)
        for b in range(B):
            r2 = 0.0
            p = 1.0
            for i in range(n):
                di = X[b, i] - center[i]
                d[i] = di
                r2 += di * di
                p += tilt[i] * di
            u = (1.0 - r2 * inv_r2) * inv_w
            if u <= 0.0:
                out[0, b] = 0.0
                out[1, b] = 0.0
                continue
            if u >= 1.0:
                S = 1.0
                S1 = 0.0
            else:
                a = np.exp(-1.0 / u)
                bb = np.exp(-1.0 / (1.0 - u))
                D = a + bb
                S = a / D
                S1 = a * bb * (u ** -2.0 + (1.0 - u) ** -2.0) / (D * D)
            phi = p * S
            bc = p * S1 * cu
            q = 0.0
            for i in range(m):
                q += X[b, i] * X[b, i]
            if step2:
                s2 = 0.0
                for i in range(m, n):
                    s2 += X[b, i] * X[b, i]
                N = (q * q + center_coeff * s2) ** 0.25
                W = q / (N * N)
            else:
                N = np.sqrt(q)
                W = 1.0
            for i in range(k):
                gz[i] = bc * d[m + i] + S * tilt[m + i]
            hsq = 0.0
            for j in range(m):
                h = bc * d[j] + S * tilt[j]
                for i in range(k):
                    cv = 0.0
                    for l in range(m):
                        cv += C[i, j, l] * X[b, l]
                    h += gz[i] * cv
                hsq += h * h
            if alpha == 0.0:
                Na = 1.0
            else:
                Na = N ** alpha
            out[0, b] = Na * hsq
            out[1, b] = Na / (N * N) * W * phi * phi
        return out

    return hardy_pair


hardy_pair_kernel = _build() if _HAVE_NUMBA else None


def frame_coefficient_stack(g) -> tuple[np.ndarray, float, bool]:
    """(C, center_coeff, step2) such that X_j phi = d_j phi + sum_i (C_i x)_j d_{m+i} phi
    and N^4 = |v|^4 + center_coeff * |z|^2 for the built-in step-2 norms."""
    m = g.m
    if g.kind == "abelian":
        return np.zeros((0, m, m)), 0.0, False
    if g.kind == "heisenberg":
        nc = m // 2
        C = np.zeros((1, m, m))
        for j in range(nc):
            C[0, j, nc + j] = 2.0
            C[0, nc + j, j] = -2.0
        return C, 1.0, True
    if g.kind == "htype":
        C = 0.5 * np.stack([J for J in g.htype.J])
        return C, 16.0, True
    raise ValueError(f"no fused kernel for group kind {g.kind!r}")
