"""Carnot group structures: dilations, group laws, frames, homogeneous norms.

Built-in families are the Heisenberg groups H^n, H-type groups constructed
from J-matrix data, and the Abelian groups R^n.  A group lives on R^n in
exponential coordinates, so Haar measure is Lebesgue measure and every
operation here is a pure function of immutable spec objects.  Coordinate
arguments are numpy arrays of shape (..., n); all operations broadcast over
leading axes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Poly",
    "VectorField",
    "DilationWeights",
    "HTypeStructure",
    "HTypeValidation",
    "GroupSpec",
    "Point",
    "CheckResult",
    "heisenberg",
    "htype_group",
    "abelian",
    "quaternionic_h1",
    "builtin_group",
    "builtin_names",
    "load_group",
    "multiply",
    "inverse",
    "dilate",
    "homogeneous_norm",
    "folland_constant",
    "fundamental_solution",
    "validate_htype",
    "ball_volume",
    "norm_ball_box",
    "norm_annulus_domain",
    "left_translation_affine",
    "run_group_axiom_battery",
]


# ---------------------------------------------------------------------------
# polynomials and polynomial vector fields
# ---------------------------------------------------------------------------

def _canonical_terms(nvars: int, terms) -> tuple:
    acc: dict[tuple, float] = {}
    for expo, coef in dict(terms).items() if isinstance(terms, dict) else terms:
        expo = tuple(int(e) for e in expo)
        if len(expo) != nvars:
            raise ValueError("exponent tuple length does not match nvars")
        if any(e < 0 for e in expo):
            raise ValueError("negative exponent in polynomial term")
        acc[expo] = acc.get(expo, 0.0) + float(coef)
    return tuple(sorted((e, c) for e, c in acc.items() if c != 0.0))


@dataclass(frozen=True)
class Poly:
    """Sparse multivariate polynomial sum_k c_k * x^{e_k} in nvars variables."""

    nvars: int
    terms: tuple = ()

    @staticmethod
    def from_terms(nvars: int, terms) -> "Poly":
        return Poly(nvars, _canonical_terms(nvars, terms))

    @staticmethod
    def zero(nvars: int) -> "Poly":
        return Poly(nvars, ())

    @staticmethod
    def constant(nvars: int, c: float) -> "Poly":
        return Poly.from_terms(nvars, {(0,) * nvars: c})

    @staticmethod
    def coordinate(nvars: int, i: int, coef: float = 1.0) -> "Poly":
        expo = [0] * nvars
        expo[i] = 1
        return Poly.from_terms(nvars, {tuple(expo): coef})

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_constant(self) -> bool:
        return all(all(e == 0 for e in expo) for expo, _ in self.terms)

    def constant_value(self) -> float:
        for expo, coef in self.terms:
            if all(e == 0 for e in expo):
                return coef
        return 0.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1])
        for expo, coef in self.terms:
            term = np.full(X.shape[:-1], coef)
            for i, e in enumerate(expo):
                if e == 1:
                    term = term * X[..., i]
                elif e > 1:
                    term = term * X[..., i] ** e
            out = out + term
        return out

    def partial(self, i: int) -> "Poly":
        terms = {}
        for expo, coef in self.terms:
            if expo[i] == 0:
                continue
            new = list(expo)
            new[i] -= 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coef * expo[i]
        return Poly.from_terms(self.nvars, terms)

    def weighted_degrees(self, weights: Sequence[int]) -> set[int]:
        """Set of dilation-weighted degrees appearing among the monomials."""
        return {sum(e * w for e, w in zip(expo, weights)) for expo, _ in self.terms}

    def __add__(self, other: "Poly") -> "Poly":
        return Poly.from_terms(self.nvars, list(self.terms) + list(other.terms))

    def __sub__(self, other: "Poly") -> "Poly":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "Poly":
        return Poly.from_terms(self.nvars, [(e, c * k) for e, k in self.terms])

    def __mul__(self, other: "Poly") -> "Poly":
        terms: dict[tuple, float] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Poly.from_terms(self.nvars, terms)


@dataclass(frozen=True)
class VectorField:
    """First-order operator sum_p c_p(x) d/dx_p with polynomial coefficients."""

    coeffs: tuple[Poly, ...]

    @property
    def nvars(self) -> int:
        return len(self.coeffs)

    def coefficient_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1] + (self.nvars,))
        for p, poly in enumerate(self.coeffs):
            if not poly.is_zero:
                out[..., p] = poly(X)
        return out

    def apply_gradient(self, X: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Evaluate (V phi)(x) = sum_p c_p(x) * dphi/dx_p from an ambient gradient."""
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[:-1])
        for p, poly in enumerate(self.coeffs):
            if poly.is_zero:
                continue
            if poly.is_constant:
                out = out + poly.constant_value() * grad[..., p]
            else:
                out = out + poly(X) * grad[..., p]
        return out

    def applied_to_poly(self, p: Poly) -> Poly:
        out = Poly.zero(self.nvars)
        for q, poly in enumerate(self.coeffs):
            if not poly.is_zero:
                out = out + poly * p.partial(q)
        return out

    def commutator(self, other: "VectorField") -> "VectorField":
        """[V, W] as a first-order polynomial vector field (exact algebra)."""
        coeffs = tuple(
            self.applied_to_poly(other.coeffs[p]) - other.applied_to_poly(self.coeffs[p])
            for p in range(self.nvars)
        )
        return VectorField(coeffs)


# ---------------------------------------------------------------------------
# spec types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DilationWeights:
    """Dilation exponents (a_1, ..., a_n); delta_l scales coordinate i by l^a_i."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        ex = tuple(int(a) for a in self.exponents)
        object.__setattr__(self, "exponents", ex)
        if not ex or any(a < 1 for a in ex):
            raise ValueError("dilation exponents must be positive integers")
        if any(b < a for a, b in zip(ex, ex[1:])):
            raise ValueError("dilation exponents must be nondecreasing")

    @property
    def Q(self) -> int:
        """Homogeneous dimension: sum of the exponents."""
        return int(sum(self.exponents))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.exponents, dtype=float)


@dataclass(frozen=True, eq=False)
class HTypeStructure:
    """Skew J-matrices J^(1..k) defining the bracket map z -> J_z on V_1."""

    J: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = []
        for M in self.J:
            M = np.array(M, dtype=float)
            M.setflags(write=False)
            mats.append(M)
        object.__setattr__(self, "J", tuple(mats))

    @property
    def m(self) -> int:
        return self.J[0].shape[0]

    @property
    def k(self) -> int:
        return len(self.J)

    def J_z(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return sum(z[..., i, None, None] * self.J[i] for i in range(self.k))


@dataclass
class HTypeValidation:
    """Axiom residuals for a candidate H-type structure."""

    skew_residual: float
    anticommutator_residual: float
    violations: list[str]
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "skew_residual": self.skew_residual,
            "anticommutator_residual": self.anticommutator_residual,
            "violations": list(self.violations),
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def validate_htype(J: "HTypeStructure | Iterable", m: int | None = None,
                   k: int | None = None) -> HTypeValidation:
    """Check skew-symmetry and the Clifford relations J_i J_j + J_j J_i = -2 delta_ij Id.

    Returns a report ranking each violated axiom with its max residual norm;
    the structure passes iff all residuals are at most 1e-12.
    """
    if not isinstance(J, HTypeStructure):
        J = HTypeStructure(tuple(np.asarray(M, dtype=float) for M in J))
    mats = J.J
    if k is not None and len(mats) != k:
        raise ValueError(f"expected {k} matrices, got {len(mats)}")
    for M in mats:
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("J matrices must be square")
        if M.shape != mats[0].shape:
            raise ValueError("J matrices must share one shape")
    if m is not None and mats[0].shape[0] != m:
        raise ValueError(f"expected {m}x{m} matrices, got {mats[0].shape}")

    tol = 1e-12
    skew = max(float(np.abs(M + M.T).max()) for M in mats)
    ident = np.eye(mats[0].shape[0])
    anti = 0.0
    for i, Mi in enumerate(mats):
        for j, Mj in enumerate(mats):
            if j < i:
                continue
            target = -2.0 * ident if i == j else 0.0 * ident
            anti = max(anti, float(np.abs(Mi @ Mj + Mj @ Mi - target).max()))
    violations = []
    if skew > tol:
        violations.append(f"non-skew matrix (residual {skew:.3e})")
    if anti > tol:
        violations.append(f"anticommutation failure (residual {anti:.3e})")
    return HTypeValidation(skew, anti, violations, tol)


_KINDS = ("abelian", "heisenberg", "htype", "custom")
_NORM_KINDS = ("euclidean", "heisenberg_rho", "htype_K", "user_supplied")


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Immutable description of a Carnot group in exponential coordinates.

    ``frame`` holds the m generating left-invariant vector fields; each is a
    polynomial-coefficient operator reducing to d/dx_j at the origin.  The
    spec and all contained polynomials never mutate, so instances are safe to
    share across concurrent workers.
    """

    name: str
    kind: str
    layer_dims: tuple[int, ...]
    weights: DilationWeights
    frame: tuple[VectorField, ...]
    norm_kind: str
    htype: HTypeStructure | None = None
    user_norm: object | None = None
    sublap_drift: VectorField = field(init=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.norm_kind not in _NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        layer_dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", layer_dims)
        if any(d < 1 for d in layer_dims):
            raise ValueError("layer dimensions must be positive")
        n = sum(layer_dims)
        ex = self.weights.exponents
        if len(ex) != n:
            raise ValueError("dilation weights must have one exponent per coordinate")
        expected = tuple(j + 1 for j, d in enumerate(layer_dims) for _ in range(d))
        if ex != expected:
            raise ValueError("dilation weights must equal the layer indices")
        m = layer_dims[0]
        if len(self.frame) != m:
            raise ValueError("frame must contain dim(V_1) vector fields")
        origin = np.zeros(n)
        for j, vf in enumerate(self.frame):
            if vf.nvars != n:
                raise ValueError("frame coefficient count does not match dimension")
            at0 = vf.coefficient_matrix(origin)
            target = np.zeros(n)
            target[j] = 1.0
            if not np.array_equal(at0, target):
                raise ValueError(f"frame field {j} does not reduce to d/dx_{j} at 0")
            for p, poly in enumerate(vf.coeffs):
                degs = poly.weighted_degrees(ex)
                if degs and degs != {ex[p] - ex[j]}:
                    raise ValueError(
                        f"coefficient a[{p},{j}] is not homogeneous of weighted "
                        f"degree {ex[p] - ex[j]}"
                    )
        if self.kind == "heisenberg":
            if len(layer_dims) != 2 or layer_dims[1] != 1 or layer_dims[0] % 2:
                raise ValueError("Heisenberg layers must be (2n, 1)")
        if self.kind == "htype":
            if self.htype is None:
                raise ValueError("htype groups need an HTypeStructure")
            rep = validate_htype(self.htype)
            if not rep.passed:
                raise ValueError("invalid H-type structure: " + "; ".join(rep.violations))
            if len(layer_dims) != 2 or (self.htype.m, self.htype.k) != layer_dims:
                raise ValueError("layer dims must equal (m, k) of the J structure")
        if self.norm_kind == "user_supplied" and self.user_norm is None:
            raise ValueError("norm_kind user_supplied needs a norm field attached")
        # second-order expansion of sum X_j^2 needs X_j applied to each of its
        # own coefficients; precompute that drift term exactly from the polynomials
        drift = [Poly.zero(n) for _ in range(n)]
        for vf in self.frame:
            for p in range(n):
                drift[p] = drift[p] + vf.applied_to_poly(vf.coeffs[p])
        object.__setattr__(self, "sublap_drift", VectorField(tuple(drift)))

    # -- derived structure ---------------------------------------------------
    @property
    def n(self) -> int:
        """Ambient (topological) dimension."""
        return sum(self.layer_dims)

    @property
    def m(self) -> int:
        """Dimension of the horizontal layer V_1."""
        return self.layer_dims[0]

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def Q(self) -> int:
        """Homogeneous dimension sum_j j*dim(V_j)."""
        return self.weights.Q

    def point(self, coords) -> "Point":
        return Point(np.asarray(coords, dtype=float), self.layer_dims)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "n": self.n,
            "m": self.m,
            "k": self.layer_dims[1] if self.step > 1 else 0,
            "step": self.step,
            "Q": self.Q,
            "layer_dims": list(self.layer_dims),
            "weights": list(self.weights.exponents),
            "norm_kind": self.norm_kind,
        }


@dataclass(frozen=True)
class Point:
    """Coordinates of a group element, partitioned by stratification layer."""

    coords: np.ndarray
    layer_dims: tuple[int, ...]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape[-1] != sum(self.layer_dims):
            raise ValueError("coordinate length does not match layer dimensions")
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    @property
    def v(self) -> np.ndarray:
        """First-layer (horizontal) part."""
        return self.coords[..., : self.layer_dims[0]]

    @property
    def z(self) -> np.ndarray:
        """Second-layer part (step-2 groups)."""
        if len(self.layer_dims) < 2:
            return self.coords[..., self.layer_dims[0]:]
        m = self.layer_dims[0]
        return self.coords[..., m : m + self.layer_dims[1]]


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def heisenberg(n: int) -> GroupSpec:
    """Heisenberg group H^n on R^{2n+1} with coordinates (x_1..x_n, y_1..y_n, t).

    Frame convention: X_j = d/dx_j + 2 y_j d/dt and Y_j = d/dy_j - 2 x_j d/dt,
    so [X_j, Y_j] = -4 d/dt.  The homogeneous norm is (|z|^4 + t^2)^{1/4}.
    """
    if n < 1:
        raise ValueError("Heisenberg index must be >= 1")
    dim = 2 * n + 1
    t_idx = 2 * n
    frame = []
    for j in range(n):
        coeffs = [Poly.zero(dim) for _ in range(dim)]
        coeffs[j] = Poly.constant(dim, 1.0)
        coeffs[t_idx] = Poly.coordinate(dim, n + j, 2.0)
        frame.append(VectorField(tuple(coeffs)))
    for j in range(n):
        coeffs = [Poly.zero(dim) for _ in range(dim)]
        coeffs[n + j] = Poly.constant(dim, 1.0)
        coeffs[t_idx] = Poly.coordinate(dim, j, -2.0)
        frame.append(VectorField(tuple(coeffs)))
    return GroupSpec(
        name=f"h{n}",
        kind="heisenberg",
        layer_dims=(2 * n, 1),
        weights=DilationWeights((1,) * (2 * n) + (2,)),
        frame=tuple(frame),
        norm_kind="heisenberg_rho",
    )


def htype_group(J_matrices, name: str = "htype") -> GroupSpec:
    """H-type group from J-matrix data, with the step-2 exponential group law
    x*y = (v+v', z+z'+[v,v']/2) and norm K = (|v|^4 + 16|z|^2)^{1/4}."""
    structure = HTypeStructure(tuple(np.asarray(M, dtype=float) for M in J_matrices))
    rep = validate_htype(structure)
    if not rep.passed:
        raise ValueError("invalid H-type structure: " + "; ".join(rep.violations))
    m, k = structure.m, structure.k
    dim = m + k
    frame = []
    for j in range(m):
        coeffs = [Poly.zero(dim) for _ in range(dim)]
        coeffs[j] = Poly.constant(dim, 1.0)
        for i in range(k):
            terms = {}
            for l in range(m):
                c = structure.J[i][j, l]
                if c != 0.0:
                    expo = [0] * dim
                    expo[l] = 1
                    terms[tuple(expo)] = 0.5 * c
            coeffs[m + i] = Poly.from_terms(dim, terms)
        frame.append(VectorField(tuple(coeffs)))
    return GroupSpec(
        name=name,
        kind="htype",
        layer_dims=(m, k),
        weights=DilationWeights((1,) * m + (2,) * k),
        frame=tuple(frame),
        norm_kind="htype_K",
        htype=structure,
    )


def abelian(n: int) -> GroupSpec:
    """R^n with vector addition, unit dilation weights, and the Euclidean norm."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    frame = []
    for j in range(n):
        coeffs = [Poly.zero(n) for _ in range(n)]
        coeffs[j] = Poly.constant(n, 1.0)
        frame.append(VectorField(tuple(coeffs)))
    return GroupSpec(
        name=f"abelian-{n}",
        kind="abelian",
        layer_dims=(n,),
        weights=DilationWeights((1,) * n),
        frame=tuple(frame),
        norm_kind="euclidean",
    )


def _quaternion_J() -> list[np.ndarray]:
    # left multiplication by i, j, k on R^4 with basis (1, i, j, k)
    Li = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
    Lj = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    Lk = np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)
    return [Li, Lj, Lk]


def quaternionic_h1() -> GroupSpec:
    """The quaternionic H-type group: m = 4, k = 3, Q = 10."""
    return htype_group(_quaternion_J(), name="quaternionic-h1")


_BUILTIN_FIXED = {"quaternionic-h1": quaternionic_h1}


def builtin_names() -> list[str]:
    return ["h1", "h2", "h3", "quaternionic-h1", "abelian-3"]


def builtin_group(name: str) -> GroupSpec:
    """Resolve a built-in group name: h<n>, abelian-<n>, quaternionic-h1."""
    if name in _BUILTIN_FIXED:
        return _BUILTIN_FIXED[name]()
    m = re.fullmatch(r"h(\d+)", name)
    if m:
        return heisenberg(int(m.group(1)))
    m = re.fullmatch(r"abelian-(\d+)", name)
    if m:
        return abelian(int(m.group(1)))
    raise KeyError(f"unknown built-in group {name!r}")


def load_group(source: str) -> GroupSpec:
    """Load a group from a built-in name or a JSON spec file.

    The file schema is {"name", "kind", "n"?, "m"?, "k"?, "layer_dims"?,
    "weights"?, "J_matrices"?}; kind is one of abelian | heisenberg | htype.
    """
    try:
        return builtin_group(source)
    except KeyError:
        pass
    with open(source, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    kind = data.get("kind")
    name = data.get("name")
    if kind == "abelian":
        g = abelian(int(data["n"]))
    elif kind == "heisenberg":
        g = heisenberg(int(data["n"]))
    elif kind == "htype":
        g = htype_group(data["J_matrices"], name=name or "htype")
    else:
        raise ValueError(f"unsupported group kind in spec file: {kind!r}")
    for key, actual in (("n", g.n), ("m", g.m)):
        if key in data and int(data[key]) != actual:
            raise ValueError(f"spec file field {key}={data[key]} inconsistent with {actual}")
    if "k" in data and g.step > 1 and int(data["k"]) != g.layer_dims[1]:
        raise ValueError("spec file field k inconsistent with the J structure")
    if "layer_dims" in data and tuple(data["layer_dims"]) != g.layer_dims:
        raise ValueError("spec file layer_dims inconsistent")
    if "weights" in data and tuple(data["weights"]) != g.weights.exponents:
        raise ValueError("spec file weights inconsistent")
    if name and name != g.name:
        g = GroupSpec(name, g.kind, g.layer_dims, g.weights, g.frame, g.norm_kind, g.htype)
    return g


# ---------------------------------------------------------------------------
# group operations
# ---------------------------------------------------------------------------

def _coords(g: GroupSpec, x) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.shape[-1] != g.n:
        raise ValueError(f"expected coordinates of dimension {g.n}, got {X.shape[-1]}")
    return X


def multiply(g: GroupSpec, x, y) -> np.ndarray:
    """Group product x * y.  The first m coordinates always add."""
    X, Y = _coords(g, x), _coords(g, y)
    if g.kind == "abelian":
        return X + Y
    if g.kind == "heisenberg":
        nc = g.m // 2
        out = X + Y
        a, b = X[..., :nc], X[..., nc : 2 * nc]
        ap, bp = Y[..., :nc], Y[..., nc : 2 * nc]
        out[..., 2 * nc] += 2.0 * np.sum(b * ap - a * bp, axis=-1)
        return out
    if g.kind == "htype":
        m = g.m
        out = X + Y
        v, vp = X[..., :m], Y[..., :m]
        for i, J in enumerate(g.htype.J):
            out[..., m + i] += 0.5 * np.sum((v @ J.T) * vp, axis=-1)
        return out
    raise NotImplementedError("custom groups carry no product polynomials")


def inverse(g: GroupSpec, x) -> np.ndarray:
    """Group inverse; in exponential coordinates this is -x."""
    return -_coords(g, x)


def dilate(g: GroupSpec, lam, x) -> np.ndarray:
    """Anisotropic dilation: coordinate i is scaled by lam**a_i."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("dilation parameter must be positive")
    X = _coords(g, x)
    return X * lam[..., None] ** g.weights.as_array()


def homogeneous_norm(g: GroupSpec, x) -> np.ndarray:
    """Evaluate the group's homogeneous norm N(x) (batched)."""
    X = _coords(g, x)
    if g.norm_kind == "euclidean":
        return np.sqrt(np.sum(X * X, axis=-1))
    if g.norm_kind == "heisenberg_rho":
        m = g.m
        z2 = np.sum(X[..., :m] ** 2, axis=-1)
        t = X[..., m]
        return (z2 * z2 + t * t) ** 0.25
    if g.norm_kind == "htype_K":
        m = g.m
        v2 = np.sum(X[..., :m] ** 2, axis=-1)
        z2 = np.sum(X[..., m:] ** 2, axis=-1)
        return (v2 * v2 + 16.0 * z2) ** 0.25
    if g.user_norm is None:
        raise ValueError("user_supplied norm kind with no norm attached")
    return np.asarray(g.user_norm.values(X))


def folland_constant(Q: float) -> float:
    """Classical normalizing constant 2^{(Q-2)/2} Gamma((Q-2)/4)^2 / pi^{Q/2}
    attached to the Kohn-Laplacian fundamental solution on Heisenberg groups."""
    if Q <= 2:
        raise ValueError("requires homogeneous dimension Q > 2")
    return math.exp(
        0.5 * (Q - 2) * math.log(2.0)
        + 2.0 * math.lgamma((Q - 2) / 4.0)
        - 0.5 * Q * math.log(math.pi)
    )


def fundamental_solution(g: GroupSpec, x) -> np.ndarray:
    """c * N(x)^{2-Q}: the norm power solving -Delta_G u = delta_0 up to scale.

    Heisenberg groups carry the classical closed-form constant
    (``folland_constant``); H-type and Abelian groups are returned
    unnormalized (c = 1).  An empirically normalized constant is available
    from :func:`carnot.hardy.fundamental_normalization`.
    """
    if g.Q < 3:
        raise ValueError("fundamental solution needs Q >= 3")
    N = homogeneous_norm(g, x)
    if np.any(N == 0.0):
        raise ValueError("fundamental solution has a pole at the origin")
    c = folland_constant(g.Q) if g.kind == "heisenberg" else 1.0
    return c * N ** (2.0 - g.Q)


def left_translation_affine(g: GroupSpec, a) -> tuple[np.ndarray, np.ndarray]:
    """Matrix/offset (M, b) with a*x = M x + b, valid for the built-in step-2 laws."""
    a = _coords(g, a)
    n = g.n
    M = np.eye(n)
    b = a.copy()
    if g.kind == "abelian":
        return M, b
    if g.kind == "heisenberg":
        nc = g.m // 2
        t = 2 * nc
        M[t, :nc] = 2.0 * a[nc : 2 * nc]
        M[t, nc : 2 * nc] = -2.0 * a[:nc]
        return M, b
    if g.kind == "htype":
        m = g.m
        for i, J in enumerate(g.htype.J):
            M[m + i, :m] = 0.5 * (J @ a[:m])
        return M, b
    raise NotImplementedError("custom groups carry no product polynomials")


# ---------------------------------------------------------------------------
# norm balls and volumes
# ---------------------------------------------------------------------------

def norm_ball_box(g: GroupSpec, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box containing {N < R}: half-width R**a_i on axis i."""
    if R <= 0:
        raise ValueError("radius must be positive")
    half = float(R) ** g.weights.as_array()
    return -half, half


def norm_annulus_domain(g: GroupSpec, r_in: float, r_out: float):
    """Integration domain for {r_in <= N(x) <= r_out} (box plus indicator)."""
    from .integrate import Domain

    if not 0 <= r_in < r_out:
        raise ValueError("need 0 <= r_in < r_out")
    lo, hi = norm_ball_box(g, r_out)

    def indicator(X):
        N = homogeneous_norm(g, X)
        return (N >= r_in) & (N <= r_out)

    return Domain(lo=lo, hi=hi, indicator=indicator, kind="norm_annulus")


def ball_volume(g: GroupSpec, R: float, cfg):
    """Monte-Carlo estimate of the Lebesgue volume of {x : N(x) < R}.

    Returns an IntegrationResult whose error_estimate is the standard error
    of the sampled indicator.  Requires a sampling method (MC or QMC).
    """
    from .integrate import Domain, integrate

    if cfg.method == "adaptive_tensor":
        raise ValueError("ball_volume requires a sampling quadrature method")
    lo, hi = norm_ball_box(g, R)
    domain = Domain(lo=lo, hi=hi)

    def indicator(X):
        return (homogeneous_norm(g, X) < R).astype(float)

    return integrate(indicator, domain, cfg)


# ---------------------------------------------------------------------------
# axiom battery
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    """One verified identity: its worst residual over the sampled points."""

    name: str
    samples: int
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _battery_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, tag], dtype=np.uint64)))


def run_group_axiom_battery(g: GroupSpec, n_samples: int = 1000, seed: int = 0) -> list[CheckResult]:
    """Verify the group axioms, dilation properties, and norm axioms at random
    points.  Residuals are absolute for the algebra (coordinates are O(1))
    and relative for the norm identities."""
    rng = _battery_rng(seed, 0xA0)
    X = rng.uniform(-2.0, 2.0, (n_samples, g.n))
    Y = rng.uniform(-2.0, 2.0, (n_samples, g.n))
    Z = rng.uniform(-2.0, 2.0, (n_samples, g.n))
    lam = rng.uniform(0.2, 5.0, n_samples)
    mu = rng.uniform(0.2, 5.0, n_samples)
    out: list[CheckResult] = []

    def record(name, residual, tol):
        out.append(CheckResult(name, n_samples, float(residual), tol))

    if g.kind != "custom":
        assoc = np.abs(multiply(g, multiply(g, X, Y), Z) - multiply(g, X, multiply(g, Y, Z)))
        record("associativity", assoc.max(), 1e-12)
        e = np.zeros(g.n)
        ident = max(
            np.abs(multiply(g, X, e) - X).max(),
            np.abs(multiply(g, e, X) - X).max(),
        )
        record("identity-element", ident, 1e-12)
        inv = max(
            np.abs(multiply(g, X, inverse(g, X))).max(),
            np.abs(multiply(g, inverse(g, X), X)).max(),
        )
        record("inverse", inv, 1e-12)
        auto = np.abs(
            dilate(g, lam, multiply(g, X, Y))
            - multiply(g, dilate(g, lam, X), dilate(g, lam, Y))
        )
        record("dilation-automorphism", auto.max(), 1e-12)

    semi = np.abs(dilate(g, lam, dilate(g, mu, X)) - dilate(g, lam * mu, X))
    record("dilation-semigroup", semi.max(), 1e-12)

    N = homogeneous_norm(g, X)
    hom = np.abs(homogeneous_norm(g, dilate(g, lam, X)) - lam * N) / np.maximum(lam * N, 1e-300)
    record("norm-homogeneity", hom.max(), 1e-12)
    sym = np.abs(homogeneous_norm(g, -X) - N) / np.maximum(N, 1e-300)
    record("norm-symmetry", sym.max(), 1e-12)
    record("norm-positivity", 0.0 if np.all(N[np.any(X != 0, axis=-1)] > 0) else 1.0, 0.0)

    ex = g.weights.as_array()
    worst = 0.0
    Xl = dilate(g, lam, X)
    for j, vf in enumerate(g.frame):
        for p, poly in enumerate(vf.coeffs):
            if poly.is_zero or poly.is_constant:
                continue
            scaled = poly(Xl)
            direct = lam ** (ex[p] - ex[j]) * poly(X)
            scale = np.maximum(np.abs(scaled) + np.abs(direct), 1e-300)
            worst = max(worst, float((np.abs(scaled - direct) / scale).max()))
    record("frame-coefficient-homogeneity", worst, 1e-12)
    return out
