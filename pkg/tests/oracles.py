"""Independent numerical oracles used by the test suite.

Everything here deliberately avoids the library's own differentiation and
integration machinery: central finite differences for jets, scipy quadrature
for integrals, mpmath for special functions, and direct complex arithmetic
for the Heisenberg group law.
"""

import numpy as np


def fd_gradient(f, x, h=1e-5):
    """Central-difference ambient gradient of a scalar callable, O(h^2)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej)
                       - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h)
    return H


def heisenberg_product_complex(nc, x, y):
    """The H^n law evaluated through complex arithmetic: (z,t)(z',t') =
    (z+z', t+t'+2 sum Im(z_j conj(z'_j)))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zx = x[:nc] + 1j * x[nc:2 * nc]
    zy = y[:nc] + 1j * y[nc:2 * nc]
    z = zx + zy
    t = x[2 * nc] + y[2 * nc] + 2.0 * np.sum(np.imag(zx * np.conj(zy)))
    return np.concatenate([np.real(z), np.imag(z), [t]])


def gamma_oracle(x):
    """Independent high-precision gamma via mpmath."""
    import mpmath

    with mpmath.workdps(40):
        return float(mpmath.gamma(x))


def folland_constant_oracle(Q):
    """c_Q = 2^{(Q-2)/2} Gamma((Q-2)/4)^2 / pi^{Q/2} via the mpmath gamma."""
    import mpmath

    with mpmath.workdps(40):
        val = (mpmath.mpf(2) ** (mpmath.mpf(Q - 2) / 2)
               * mpmath.gamma(mpmath.mpf(Q - 2) / 4) ** 2
               / mpmath.pi ** (mpmath.mpf(Q) / 2))
        return float(val)


def quad_1d(fn, a, b):
    from scipy.integrate import quad

    val, _ = quad(fn, a, b, limit=400)
    return val
