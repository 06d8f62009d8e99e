"""Horizontal differential operators driven by exact second-order jets.

Scalar fields evaluate to jets (value, ambient gradient, ambient Hessian)
through closed-form chain rules, so the horizontal gradient and the
sub-Laplacian carry no truncation error beyond floating point.  Finite
differences appear only in the test suite as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .groups import CheckResult, GroupSpec, Poly, VectorField, dilate, \
    homogeneous_norm, left_translation_affine, multiply

__all__ = [
    "Jet2",
    "ScalarField",
    "RadialProfile",
    "NormField",
    "PowerField",
    "ProductField",
    "PolynomialField",
    "ComposedField",
    "AffineImageField",
    "BumpField",
    "dilated_field",
    "translated_field",
    "sin_log_bump",
    "power_log_profile",
    "power_profile",
    "horizontal_gradient",
    "horizontal_gradient_sq",
    "sub_laplacian",
    "norm_gradient_sq_closed",
    "delta_norm_power",
    "radial_apply",
    "expand_gradient_identity",
    "sample_annulus_points",
    "run_identity_battery",
]


# ---------------------------------------------------------------------------
# second-order jets
# ---------------------------------------------------------------------------

@dataclass
class Jet2:
    """Value, ambient gradient, and ambient Hessian at a batch of points.

    ``value`` has shape (...,), ``gradient`` (..., n); ``hessian`` is
    (..., n, n) or None for first-order-only evaluation.  Arithmetic follows
    the exact Leibniz/chain rules, and the Hessian stays symmetric by
    construction.
    """

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray | None = None

    @property
    def order(self) -> int:
        return 2 if self.hessian is not None else 1

    @staticmethod
    def constant(c: float, like: "Jet2") -> "Jet2":
        v = np.full_like(like.value, c)
        grad = np.zeros_like(like.gradient)
        hess = None if like.hessian is None else np.zeros_like(like.hessian)
        return Jet2(v, grad, hess)

    def __add__(self, other):
        if isinstance(other, Jet2):
            hess = None
            if self.hessian is not None and other.hessian is not None:
                hess = self.hessian + other.hessian
            return Jet2(self.value + other.value, self.gradient + other.gradient, hess)
        return Jet2(self.value + other, self.gradient, self.hessian)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            hess = None
            if self.hessian is not None and other.hessian is not None:
                hess = self.hessian - other.hessian
            return Jet2(self.value - other.value, self.gradient - other.gradient, hess)
        return Jet2(self.value - other, self.gradient, self.hessian)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            v = self.value * other.value
            grad = self.value[..., None] * other.gradient + other.value[..., None] * self.gradient
            hess = None
            if self.hessian is not None and other.hessian is not None:
                outer = self.gradient[..., :, None] * other.gradient[..., None, :]
                hess = (
                    self.value[..., None, None] * other.hessian
                    + other.value[..., None, None] * self.hessian
                    + outer
                    + np.swapaxes(outer, -1, -2)
                )
            return Jet2(v, grad, hess)
        return Jet2(self.value * other, self.gradient * other,
                    None if self.hessian is None else self.hessian * other)

    __rmul__ = __mul__

    def chain(self, f0: np.ndarray, f1: np.ndarray, f2: np.ndarray | None) -> "Jet2":
        """Jet of f(self) given f, f', f'' evaluated at self.value."""
        grad = f1[..., None] * self.gradient
        hess = None
        if self.hessian is not None:
            if f2 is None:
                raise ValueError("second derivative needed for an order-2 chain")
            outer = self.gradient[..., :, None] * self.gradient[..., None, :]
            hess = f1[..., None, None] * self.hessian + f2[..., None, None] * outer
        return Jet2(f0, grad, hess)

    def power(self, s: float) -> "Jet2":
        v = self.value
        return self.chain(
            v ** s,
            s * v ** (s - 1.0),
            None if self.hessian is None else s * (s - 1.0) * v ** (s - 2.0),
        )


def poly_jet(poly: Poly, X: np.ndarray, order: int = 2) -> Jet2:
    """Exact jet of a polynomial: partials come from the stored exponents."""
    X = np.asarray(X, dtype=float)
    n = poly.nvars
    value = poly(X)
    grad = np.zeros(X.shape[:-1] + (n,))
    partials = [poly.partial(i) for i in range(n)]
    for i, p in enumerate(partials):
        if not p.is_zero:
            grad[..., i] = p(X)
    hess = None
    if order >= 2:
        hess = np.zeros(X.shape[:-1] + (n, n))
        for i, p in enumerate(partials):
            if p.is_zero:
                continue
            for j in range(i, n):
                q = p.partial(j)
                if not q.is_zero:
                    vals = q(X)
                    hess[..., i, j] = vals
                    if i != j:
                        hess[..., j, i] = vals
    return Jet2(value, grad, hess)


# ---------------------------------------------------------------------------
# scalar fields
# ---------------------------------------------------------------------------

class ScalarField:
    """Evaluable scalar function on a group, carrying exact jets.

    Subclasses implement ``_jet(X, order)``; ``pole_at_origin`` marks fields
    whose smoothness domain excludes 0 (evaluating such a field at the exact
    origin raises).
    """

    n: int
    pole_at_origin: bool = False

    def _jet(self, X: np.ndarray, order: int) -> Jet2:
        raise NotImplementedError

    def _check_domain(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n:
            raise ValueError(f"expected points of dimension {self.n}")
        if self.pole_at_origin and np.any(np.all(X == 0.0, axis=-1)):
            raise ValueError("point lies outside the smoothness domain (pole at 0)")
        return X

    def jet2(self, X) -> Jet2:
        return self._jet(self._check_domain(X), 2)

    def jet1(self, X) -> Jet2:
        return self._jet(self._check_domain(X), 1)

    def values(self, X) -> np.ndarray:
        return self._jet(self._check_domain(X), 0).value


class NormField(ScalarField):
    """The group's homogeneous norm with hand-coded exact jets."""

    def __init__(self, group: GroupSpec):
        if group.norm_kind == "user_supplied":
            raise ValueError("user-supplied norms are already fields")
        self.group = group
        self.n = group.n
        self.pole_at_origin = True

    def _jet(self, X: np.ndarray, order: int) -> Jet2:
        g = self.group
        n = g.n
        want2 = order >= 2
        if not want2:
            return self._jet_fast(X, order)
        if g.norm_kind == "euclidean":
            w = np.sum(X * X, axis=-1)
            grad = 2.0 * X
            hess = None
            if want2:
                hess = np.broadcast_to(2.0 * np.eye(n), X.shape[:-1] + (n, n)).copy()
            return Jet2(w, grad, hess).power(0.5)
        if g.norm_kind == "heisenberg_rho":
            m = g.m
            z = X[..., :m]
            t = X[..., m]
            q = np.sum(z * z, axis=-1)
            w = q * q + t * t
            grad = np.zeros_like(X)
            grad[..., :m] = 4.0 * q[..., None] * z
            grad[..., m] = 2.0 * t
            hess = None
            if want2:
                hess = np.zeros(X.shape[:-1] + (n, n))
                zz = 8.0 * z[..., :, None] * z[..., None, :]
                zz[..., range(m), range(m)] += 4.0 * q[..., None]
                hess[..., :m, :m] = zz
                hess[..., m, m] = 2.0
            return Jet2(w, grad, hess).power(0.25)
        if g.norm_kind == "htype_K":
            m = g.m
            v = X[..., :m]
            zc = X[..., m:]
            q = np.sum(v * v, axis=-1)
            w = q * q + 16.0 * np.sum(zc * zc, axis=-1)
            grad = np.zeros_like(X)
            grad[..., :m] = 4.0 * q[..., None] * v
            grad[..., m:] = 32.0 * zc
            hess = None
            if want2:
                hess = np.zeros(X.shape[:-1] + (n, n))
                vv = 8.0 * v[..., :, None] * v[..., None, :]
                vv[..., range(m), range(m)] += 4.0 * q[..., None]
                hess[..., :m, :m] = vv
                hess[..., range(m, n), range(m, n)] = 32.0
            return Jet2(w, grad, hess).power(0.25)
        raise ValueError(f"no jet rule for norm kind {g.norm_kind!r}")

    def _jet_fast(self, X: np.ndarray, order: int) -> Jet2:
        # first-order closed forms (hot path for sampling integrands)
        g = self.group
        if g.norm_kind == "euclidean":
            N = np.sqrt(np.sum(X * X, axis=-1))
            if order == 0:
                return Jet2(N, np.empty(0))
            return Jet2(N, X / N[..., None])
        m = g.m
        if g.norm_kind == "heisenberg_rho":
            z = X[..., :m]
            t = X[..., m]
            q = np.sum(z * z, axis=-1)
            N = (q * q + t * t) ** 0.25
            if order == 0:
                return Jet2(N, np.empty(0))
            inv3 = N ** -3.0
            grad = np.empty_like(X)
            grad[..., :m] = (q * inv3)[..., None] * z
            grad[..., m] = 0.5 * t * inv3
            return Jet2(N, grad)
        if g.norm_kind == "htype_K":
            v = X[..., :m]
            zc = X[..., m:]
            q = np.sum(v * v, axis=-1)
            N = (q * q + 16.0 * np.sum(zc * zc, axis=-1)) ** 0.25
            if order == 0:
                return Jet2(N, np.empty(0))
            inv3 = N ** -3.0
            grad = np.empty_like(X)
            grad[..., :m] = (q * inv3)[..., None] * v
            grad[..., m:] = 8.0 * inv3[..., None] * zc
            return Jet2(N, grad)
        raise ValueError(f"no jet rule for norm kind {g.norm_kind!r}")


class PowerField(ScalarField):
    """base(x)^s, smooth wherever the base is positive."""

    def __init__(self, base: ScalarField, exponent: float):
        self.base = base
        self.exponent = float(exponent)
        self.n = base.n
        self.pole_at_origin = True

    def _jet(self, X, order):
        return self.base._jet(X, order).power(self.exponent)


class ProductField(ScalarField):
    def __init__(self, a: ScalarField, b: ScalarField):
        if a.n != b.n:
            raise ValueError("factor dimensions differ")
        self.a, self.b = a, b
        self.n = a.n
        self.pole_at_origin = a.pole_at_origin or b.pole_at_origin

    def _jet(self, X, order):
        return self.a._jet(X, order) * self.b._jet(X, order)


class PolynomialField(ScalarField):
    def __init__(self, poly: Poly):
        self.poly = poly
        self.n = poly.nvars

    def _jet(self, X, order):
        return poly_jet(self.poly, X, order)


@dataclass(frozen=True)
class RadialProfile:
    """Profile f with derivatives f', f'' on a support interval.

    Outside the support the composite field is identically zero; the
    callables are only ever evaluated strictly inside."""

    f: Callable
    df: Callable
    d2f: Callable
    support: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise ValueError("empty profile support")


class ComposedField(ScalarField):
    """f(base(x)) for a RadialProfile f, vanishing outside the support."""

    def __init__(self, base: ScalarField, profile: RadialProfile):
        self.base = base
        self.profile = profile
        self.n = base.n
        self.pole_at_origin = base.pole_at_origin

    def _jet(self, X, order):
        b = self.base._jet(X, max(order, 1))
        r = b.value
        lo, hi = self.profile.support
        inside = (r > lo) & (r < hi)
        f0 = np.zeros_like(r)
        f1 = np.zeros_like(r)
        f2 = np.zeros_like(r) if order >= 2 else None
        if np.any(inside):
            ri = r[inside]
            f0[inside] = self.profile.f(ri)
            f1[inside] = self.profile.df(ri)
            if order >= 2:
                f2[inside] = self.profile.d2f(ri)
        return b.chain(f0, f1, f2)


class AffineImageField(ScalarField):
    """x -> base(M x + b): exact pullback of jets through an affine map."""

    def __init__(self, base: ScalarField, M: np.ndarray, b: np.ndarray,
                 pole_at_origin: bool | None = None):
        self.base = base
        self.M = np.asarray(M, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n = base.n
        self.pole_at_origin = base.pole_at_origin if pole_at_origin is None else pole_at_origin

    def _jet(self, X, order):
        Y = X @ self.M.T + self.b
        inner = self.base._jet(Y, order)
        grad = inner.gradient @ self.M
        hess = None
        if inner.hessian is not None:
            hess = np.einsum("...pq,pi,qj->...ij", inner.hessian, self.M, self.M)
        return Jet2(inner.value, grad, hess)


def dilated_field(field: ScalarField, g: GroupSpec, lam: float) -> ScalarField:
    """The field x -> field(delta_lam(x))."""
    M = np.diag(float(lam) ** g.weights.as_array())
    return AffineImageField(field, M, np.zeros(g.n))


def translated_field(field: ScalarField, g: GroupSpec, a) -> ScalarField:
    """The field x -> field(a * x) (left translation pullback)."""
    M, b = left_translation_affine(g, a)
    pole = field.pole_at_origin and not np.any(np.asarray(a, dtype=float) != 0)
    return AffineImageField(field, M, b, pole_at_origin=pole)


# ---------------------------------------------------------------------------
# smooth bumps
# ---------------------------------------------------------------------------

def _smoothstep(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, with S', S''."""
    S = np.zeros_like(u)
    S1 = np.zeros_like(u)
    S2 = np.zeros_like(u)
    S[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        a = np.exp(-1.0 / um)
        bb = np.exp(-1.0 / (1.0 - um))
        D = a + bb
        iu2 = um ** -2.0
        iv2 = (1.0 - um) ** -2.0
        g1 = iu2 + iv2
        g2 = iu2 - iv2
        g3 = -2.0 * um ** -3.0 + 2.0 * (1.0 - um) ** -3.0
        Dp = a * iu2 - bb * iv2
        ab = a * bb
        S[mid] = a / D
        S1[mid] = ab * g1 / D ** 2
        S2[mid] = ab * (g2 * g1 + g3) / D ** 2 - 2.0 * ab * g1 * Dp / D ** 3
    return S, S1, S2


class BumpField(ScalarField):
    """Smooth compactly supported bump: affine tilt times a plateau profile.

    phi(x) = (1 + tilt . (x - c)) * S((1 - |x - c|^2/R^2) / w) with S the
    C-infinity step; supported exactly on the Euclidean ball B(c, R)."""

    def __init__(self, center, radius: float, edge_width: float = 0.5, tilt=None):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.edge_width = float(edge_width)
        self.n = self.center.shape[0]
        self.tilt = np.zeros(self.n) if tilt is None else np.asarray(tilt, dtype=float)
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        if not 0 < self.edge_width <= 1.0:
            raise ValueError("edge width must lie in (0, 1]")
        if np.linalg.norm(self.tilt) * self.radius >= 1.0:
            raise ValueError("tilt too strong: profile would change sign")

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.center - self.radius, self.center + self.radius

    def _jet(self, X, order):
        d = X - self.center
        r2 = np.einsum("...i,...i->...", d, d) / self.radius ** 2
        u = (1.0 - r2) / self.edge_width
        S, S1, S2 = _smoothstep(u)
        p = 1.0 + d @ self.tilt
        value = p * S
        if order == 0:
            return Jet2(value, np.empty(0))
        cu = -2.0 / (self.radius ** 2 * self.edge_width)
        grad = (p * S1 * cu)[..., None] * d
        grad += S[..., None] * self.tilt
        if order == 1:
            return Jet2(value, grad)
        du = cu * d                                   # ambient gradient of u
        hess = None
        if order >= 2:
            n = self.n
            outer_uu = du[..., :, None] * du[..., None, :]
            outer_tu = self.tilt[:, None] * du[..., None, :]
            hess = (
                (p * S2)[..., None, None] * outer_uu
                + S1[..., None, None] * (outer_tu + np.swapaxes(outer_tu, -1, -2))
            )
            hess[..., range(n), range(n)] += (p * S1 * cu)[..., None]
        return Jet2(value, grad, hess)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def sin_log_bump(L: float) -> RadialProfile:
    """g(s) = sin(pi s / L) on the log-radius window [0, L]."""
    if L <= 0:
        raise ValueError("window length must be positive")
    w = math.pi / L
    return RadialProfile(
        f=lambda s: np.sin(w * s),
        df=lambda s: w * np.cos(w * s),
        d2f=lambda s: -w * w * np.sin(w * s),
        support=(0.0, L),
    )


def power_profile(s: float, support: tuple[float, float] = (0.0, math.inf)) -> RadialProfile:
    """f(r) = r^s on the given radial support."""
    return RadialProfile(
        f=lambda r: r ** s,
        df=lambda r: s * r ** (s - 1.0),
        d2f=lambda r: s * (s - 1.0) * r ** (s - 2.0),
        support=support,
    )


def power_log_profile(beta: float, g: RadialProfile, r_in: float = 1.0) -> RadialProfile:
    """Radius-domain profile of r^beta * g(ln(r / r_in)).

    ``g`` lives in the log-radius variable; the result is supported on
    (r_in * exp(s_lo), r_in * exp(s_hi))."""
    if r_in <= 0:
        raise ValueError("inner radius must be positive")
    s_lo, s_hi = g.support

    def f(r):
        s = np.log(r / r_in)
        return r ** beta * g.f(s)

    def df(r):
        s = np.log(r / r_in)
        return r ** (beta - 1.0) * (beta * g.f(s) + g.df(s))

    def d2f(r):
        s = np.log(r / r_in)
        return r ** (beta - 2.0) * (
            beta * (beta - 1.0) * g.f(s) + (2.0 * beta - 1.0) * g.df(s) + g.d2f(s)
        )

    return RadialProfile(f, df, d2f, (r_in * math.exp(s_lo), r_in * math.exp(s_hi)))


# ---------------------------------------------------------------------------
# horizontal operators
# ---------------------------------------------------------------------------

def _as_jet(g: GroupSpec, phi, X, order: int) -> tuple[np.ndarray, Jet2]:
    X = np.asarray(X, dtype=float)
    jet = phi.jet2(X) if order >= 2 else phi.jet1(X)
    return X, jet


def horizontal_from_gradient(g: GroupSpec, X: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Project an ambient gradient onto the frame: component j is X_j phi.

    The built-in frames take closed-form fast paths; custom frames fall back
    to the generic polynomial evaluation (the two agree, see the batteries).
    """
    if g.kind == "abelian":
        return grad.copy()
    if g.kind == "heisenberg":
        nc = g.m // 2
        gt = grad[..., 2 * nc]
        out = np.empty(grad.shape[:-1] + (g.m,))
        out[..., :nc] = grad[..., :nc] + 2.0 * X[..., nc : 2 * nc] * gt[..., None]
        out[..., nc:] = grad[..., nc : 2 * nc] - 2.0 * X[..., :nc] * gt[..., None]
        return out
    if g.kind == "htype":
        m = g.m
        v = X[..., :m]
        out = grad[..., :m].copy()
        for i, J in enumerate(g.htype.J):
            out += 0.5 * grad[..., m + i, None] * (v @ J.T)
        return out
    out = np.empty(grad.shape[:-1] + (g.m,))
    for j, vf in enumerate(g.frame):
        out[..., j] = vf.apply_gradient(X, grad)
    return out


def horizontal_gradient(g: GroupSpec, phi: ScalarField, x) -> np.ndarray:
    """Horizontal gradient (X_1 phi, ..., X_m phi), exact from the field's jet."""
    X, jet = _as_jet(g, phi, x, 1)
    return horizontal_from_gradient(g, X, jet.gradient)


def horizontal_gradient_sq(g: GroupSpec, phi: ScalarField, x) -> np.ndarray:
    h = horizontal_gradient(g, phi, x)
    return np.sum(h * h, axis=-1)


def sub_laplacian(g: GroupSpec, phi: ScalarField, x) -> np.ndarray:
    """Sum of squares sum_j X_j(X_j phi), expanded through the order-2 jet.

    First-order contributions of the coefficient polynomials are evaluated
    from their exact symbolic partials (precomputed on the group spec)."""
    X, jet = _as_jet(g, phi, x, 2)
    H = jet.hessian
    out = np.zeros(X.shape[:-1])
    for vf in g.frame:
        c = vf.coefficient_matrix(X)
        w = np.einsum("...p,...pq->...q", c, H)
        out += np.einsum("...q,...q->...", w, c)
    drift = g.sublap_drift
    if any(not p.is_zero for p in drift.coeffs):
        out += drift.apply_gradient(X, jet.gradient)
    return out


def norm_gradient_sq_closed(g: GroupSpec, x) -> np.ndarray:
    """Literal closed form of |grad_G N|^2 for the built-in norms.

    Heisenberg: |z|^2 / rho^2; H-type: |v|^2 / K^2; Euclidean: 1.  Kept
    independent of the jet machinery so the two routes cross-validate."""
    X = np.asarray(x, dtype=float)
    if g.norm_kind == "euclidean":
        return np.ones(X.shape[:-1])
    if g.norm_kind == "heisenberg_rho":
        z2 = np.sum(X[..., : g.m] ** 2, axis=-1)
        t = X[..., g.m]
        return z2 / np.sqrt(z2 * z2 + t * t)
    if g.norm_kind == "htype_K":
        v2 = np.sum(X[..., : g.m] ** 2, axis=-1)
        z2 = np.sum(X[..., g.m :] ** 2, axis=-1)
        return v2 / np.sqrt(v2 * v2 + 16.0 * z2)
    raise ValueError(f"no closed form for norm kind {g.norm_kind!r}")


def delta_norm_power(g: GroupSpec, s: float, x) -> np.ndarray:
    """Closed-form Heisenberg identity Delta(rho^s) = s(s+Q-2) |z|^2 rho^{s-4}."""
    if g.kind != "heisenberg":
        raise ValueError("delta_norm_power applies to Heisenberg groups")
    X = np.asarray(x, dtype=float)
    rho = homogeneous_norm(g, X)
    if np.any(rho == 0.0):
        raise ValueError("pole at the origin")
    z2 = np.sum(X[..., : g.m] ** 2, axis=-1)
    return s * (s + g.Q - 2.0) * z2 * rho ** (s - 4.0)


def radial_apply(g: GroupSpec, f: RadialProfile, x) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form gradient square and sub-Laplacian of the radial field f(N).

    |grad_G f(N)|^2 = |grad_G N|^2 f'(N)^2 and
    Delta_G f(N) = |grad_G N|^2 (f''(N) + (Q-1) f'(N) / N),
    using the literal closed form of |grad_G N|^2."""
    X = np.asarray(x, dtype=float)
    r = homogeneous_norm(g, X)
    lo, hi = f.support
    if np.any((r <= lo) | (r >= hi)):
        raise ValueError("point outside the profile support")
    W = norm_gradient_sq_closed(g, X)
    d1 = f.df(r)
    d2 = f.d2f(r)
    grad_sq = W * d1 * d1
    lap = W * (d2 + (g.Q - 1.0) / r * d1)
    return grad_sq, lap


def expand_gradient_identity(g: GroupSpec, beta: float, psi: ScalarField, x) -> np.ndarray:
    """Residual of the product-expansion identity for |grad_G(N^beta psi)|^2.

    The left side differentiates the composite field; the right side sums
    beta^2 N^{2b-2}|grad N|^2 psi^2 + 2b N^{2b-1} psi (grad N . grad psi)
    + N^{2b}|grad psi|^2.  Returns |LHS - RHS| pointwise."""
    X = np.asarray(x, dtype=float)
    norm = NormField(g)
    composite = ProductField(PowerField(norm, beta), psi)
    lhs = horizontal_gradient_sq(g, composite, X)

    N = norm.jet1(X)
    P = psi.jet1(X)
    hn = horizontal_from_gradient(g, X, N.gradient)
    hp = horizontal_from_gradient(g, X, P.gradient)
    gn2 = np.sum(hn * hn, axis=-1)
    gp2 = np.sum(hp * hp, axis=-1)
    dot = np.sum(hn * hp, axis=-1)
    Nv, Pv = N.value, P.value
    rhs = (
        beta ** 2 * Nv ** (2 * beta - 2.0) * gn2 * Pv ** 2
        + 2.0 * beta * Nv ** (2 * beta - 1.0) * Pv * dot
        + Nv ** (2 * beta) * gp2
    )
    return np.abs(lhs - rhs)


# ---------------------------------------------------------------------------
# identity battery
# ---------------------------------------------------------------------------

def sample_annulus_points(g: GroupSpec, n_points: int, seed: int,
                          annulus: tuple[float, float] = (0.1, 10.0)) -> np.ndarray:
    """Deterministic points with N(x) log-uniform in the annulus.

    Directions come from box samples pushed to norm 1 by a dilation, so the
    construction works for any homogeneous norm."""
    lo, hi = annulus
    if not 0 < lo < hi:
        raise ValueError("annulus bounds must satisfy 0 < lo < hi")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xD1], dtype=np.uint64)))
    pts = np.empty((0, g.n))
    while pts.shape[0] < n_points:
        raw = rng.uniform(-1.0, 1.0, (2 * n_points + 16, g.n))
        N0 = homogeneous_norm(g, raw)
        raw = raw[N0 > 1e-3]
        N0 = homogeneous_norm(g, raw)
        r = np.exp(rng.uniform(math.log(lo), math.log(hi), raw.shape[0]))
        lam = r / N0
        X = raw * lam[:, None] ** g.weights.as_array()
        pts = np.concatenate([pts, X], axis=0)
    return pts[:n_points]


def _rel_residual(lhs: np.ndarray, rhs: np.ndarray, scale: np.ndarray | float = 0.0) -> float:
    """Max |lhs-rhs| normalized by the larger of the term magnitudes and an
    optional extra scale (guards loci where both sides nearly cancel)."""
    denom = np.maximum(np.abs(lhs) + np.abs(rhs) + np.abs(scale), 1e-300)
    return float((np.abs(lhs - rhs) / denom).max())


def _battery_bump(g: GroupSpec, rng: np.random.Generator) -> BumpField:
    while True:
        c = rng.uniform(-1.5, 1.5, g.n)
        Nc = float(homogeneous_norm(g, c))
        if 0.8 <= Nc <= 2.5:
            break
    tilt = rng.uniform(-0.3, 0.3, g.n)
    radius = 0.45
    tilt = tilt / max(1.0, np.linalg.norm(tilt) * radius / 0.5)
    return BumpField(c, radius, edge_width=rng.uniform(0.4, 0.8), tilt=tilt)


def _points_in_bump(bump: BumpField, rng: np.random.Generator, n: int) -> np.ndarray:
    dirs = rng.normal(size=(n, bump.n))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    rad = bump.radius * 0.92 * rng.uniform(0.0, 1.0, n) ** (1.0 / bump.n)
    return bump.center + dirs * rad[:, None]


def run_identity_battery(g: GroupSpec, n_points: int = 1000, seed: int = 0,
                         annulus: tuple[float, float] = (0.1, 10.0)) -> list[CheckResult]:
    """Exercise the differential identities at random annulus points.

    Jet-exact paths are gated at 1e-10 relative residual; comparisons of a
    jet route against an independent closed form are gated at 1e-8."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xB2], dtype=np.uint64)))
    X = sample_annulus_points(g, n_points, seed, annulus)
    N = homogeneous_norm(g, X)
    Q = float(g.Q)
    norm = NormField(g)
    out: list[CheckResult] = []

    def record(name, residual, tol, samples=n_points):
        out.append(CheckResult(name, samples, float(residual), tol))

    # |grad_G N|^2: jet route vs literal closed form
    W_jet = horizontal_gradient_sq(g, norm, X)
    W_closed = norm_gradient_sq_closed(g, X)
    record("norm-gradient-closed-form", _rel_residual(W_jet, W_closed, 1.0), 1e-10)

    # gradient expansion of N^beta * psi
    bump = _battery_bump(g, rng)
    Xb = _points_in_bump(bump, rng, n_points)
    Xb = Xb[homogeneous_norm(g, Xb) > 1e-3]
    worst = 0.0
    for beta in (-1.0, 0.0, 1.7):
        res = expand_gradient_identity(g, beta, bump, Xb)
        Nb = homogeneous_norm(g, Xb)
        Pb = bump.jet1(Xb)
        hp = horizontal_from_gradient(g, Xb, Pb.gradient)
        scale = (
            Nb ** (2 * beta - 2.0) * (beta ** 2 + 1.0) * (Pb.value ** 2 + 1e-30)
            + Nb ** (2 * beta) * np.sum(hp * hp, axis=-1)
        )
        worst = max(worst, float((res / np.maximum(scale, 1e-300)).max()))
    record("gradient-expansion", worst, 1e-10, samples=Xb.shape[0])

    # Delta(N^s) = s (s+Q-2) N^{s-2} |grad N|^2 at random exponents (both the
    # plain power form and the -beta/(alpha+2*beta) scaling of it)
    worst = 0.0
    for s in (-2.0, -1.0, 1.0, 2.0, 2.0 - Q, 3.7):
        lhs = sub_laplacian(g, PowerField(norm, s), X)
        rhs = s * (s + Q - 2.0) * N ** (s - 2.0) * W_closed
        scale = (abs(s) * (abs(s) + Q) + 1.0) * N ** (s - 2.0)
        worst = max(worst, _rel_residual(lhs, rhs, scale))
    for _ in range(4):
        alpha = float(rng.uniform(-2.0, 2.5))
        beta = float(rng.uniform(-3.0, 3.0))
        if abs(alpha + 2 * beta) < 0.2:
            beta += 0.5
        s = alpha + 2 * beta
        lhs = -(beta / s) * sub_laplacian(g, PowerField(norm, s), X)
        rhs = -beta * (s + Q - 2.0) * N ** (s - 2.0) * W_closed
        scale = (abs(beta) * (abs(s) + Q) + 1.0) * N ** (s - 2.0)
        worst = max(worst, _rel_residual(lhs, rhs, scale))
    record("power-laplacian", worst, 1e-8)

    if g.kind == "heisenberg":
        worst = 0.0
        for s in (-2.0, -1.0, 1.0, 2.0, 2.0 - Q, 3.7):
            lhs = sub_laplacian(g, PowerField(norm, s), X)
            rhs = delta_norm_power(g, s, X)
            scale = (abs(s) * (abs(s) + Q) + 1.0) * N ** (s - 2.0)
            worst = max(worst, _rel_residual(lhs, rhs, scale))
        record("heisenberg-power-laplacian", worst, 1e-8)

    # radial closed forms vs jet operators
    profiles = [
        power_profile(2.0, (1e-6, math.inf)),
        power_profile(-1.5, (1e-6, math.inf)),
        power_log_profile(-1.0, sin_log_bump(3.0), r_in=annulus[0] / 2),
    ]
    worst = 0.0
    for prof in profiles:
        lo, hi = prof.support
        mask = (N > lo * 1.01) & (N < hi)
        if not np.any(mask):
            continue
        Xp = X[mask]
        gs_cf, lap_cf = radial_apply(g, prof, Xp)
        fld = ComposedField(norm, prof)
        gs_jet = horizontal_gradient_sq(g, fld, Xp)
        lap_jet = sub_laplacian(g, fld, Xp)
        r = homogeneous_norm(g, Xp)
        scale = np.abs(prof.d2f(r)) + np.abs(prof.df(r)) * Q / r
        worst = max(worst, _rel_residual(gs_cf, gs_jet, 1e-30))
        worst = max(worst, _rel_residual(lap_cf, lap_jet, scale))
    record("radial-formulas", worst, 1e-8)

    # harmonicity of N^{2-Q} away from the pole, scale-normalized by N^Q
    lap = sub_laplacian(g, PowerField(norm, 2.0 - Q), X)
    record("harmonicity", float(np.abs(lap * N ** Q).max() / ((Q - 2.0) * Q)), 1e-8)

    # dilation covariance and left invariance of the horizontal operators
    worst = 0.0
    for _ in range(3):
        lam = float(np.exp(rng.uniform(math.log(0.3), math.log(3.0))))
        pulled = dilated_field(bump, g, lam)
        h_direct = horizontal_gradient(g, bump, dilate(g, lam, Xb))
        h_pulled = horizontal_gradient(g, pulled, Xb)
        worst = max(worst, _rel_residual(h_pulled, lam * h_direct, 1.0))
        l_direct = sub_laplacian(g, bump, dilate(g, lam, Xb))
        l_pulled = sub_laplacian(g, pulled, Xb)
        worst = max(worst, _rel_residual(l_pulled, lam ** 2 * l_direct, 1.0))
    record("dilation-covariance", worst, 1e-10, samples=Xb.shape[0])
    if g.kind != "custom":
        a = rng.uniform(-1.0, 1.0, g.n)
        h_direct = horizontal_gradient(g, bump, multiply(g, a, Xb))
        h_pulled = horizontal_gradient(g, translated_field(bump, g, a), Xb)
        record("left-invariance", _rel_residual(h_pulled, h_direct, 1.0), 1e-10,
               samples=Xb.shape[0])

    if g.kind == "heisenberg":
        nc = g.m // 2
        terms = {}
        for _ in range(6):
            i = int(rng.integers(0, g.n))
            j = int(rng.integers(0, g.n))
            expo = [0] * g.n
            expo[i] += 1
            expo[j] += 1
            terms[tuple(expo)] = terms.get(tuple(expo), 0.0) + float(rng.uniform(-1, 1))
        quad = PolynomialField(Poly.from_terms(g.n, terms))
        jet = quad.jet1(X)
        worst = 0.0
        for j in range(nc):
            comm = g.frame[j].commutator(g.frame[nc + j])
            lhs = comm.apply_gradient(X, jet.gradient)
            rhs = -4.0 * jet.gradient[..., 2 * nc]
            worst = max(worst, float(np.abs(lhs - rhs).max()))
        record("commutators", worst, 1e-10)

    return out
