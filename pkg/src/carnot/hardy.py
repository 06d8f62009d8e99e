"""Weighted Hardy quotients, sharpness sweeps, and norm certification.

The central object is the Rayleigh quotient

    R(phi) = int N^a |grad_G phi|^2 dx  /  int N^a (|grad_G N|^2 / N^2) phi^2 dx

whose infimum over test functions supported away from the pole is the sharp
constant ((Q + a - 2)/2)^2.  Quotients can be evaluated in full dimension by
(quasi-)Monte-Carlo sampling or, for radial test functions, by an exact
one-dimensional reduction; a family of shrinking log-window profiles drives
the quotient to the constant and demonstrates sharpness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._version import __version__
from .diffops import (
    BumpField,
    ComposedField,
    NormField,
    PolynomialField,
    PowerField,
    RadialProfile,
    ScalarField,
    horizontal_from_gradient,
    power_log_profile,
    sin_log_bump,
    sub_laplacian,
)
from .groups import (
    CheckResult,
    GroupSpec,
    Poly,
    dilate,
    folland_constant,
    homogeneous_norm,
    norm_ball_box,
)
from .integrate import (
    Domain,
    IntegrationResult,
    QuadratureConfig,
    RadialGrid,
    integrate_many,
    radial_reduce,
)

__all__ = [
    "HardyProblem",
    "TestFunction",
    "HardyReport",
    "SweepRow",
    "SweepResult",
    "UncertaintyReport",
    "NormCertification",
    "DiracNormalization",
    "BatteryRow",
    "BatteryReport",
    "DegenerateTestFunctionError",
    "InequalityViolation",
    "sharp_constant",
    "optimal_beta",
    "sin_test_function",
    "random_bump",
    "rayleigh_quotient",
    "sharpness_sweep",
    "uncertainty_check",
    "certify_norm",
    "dirac_normalization",
    "fundamental_normalization",
    "run_inequality_battery",
    "mixed_quadratic_norm",
    "skewed_quartic_norm",
]


class DegenerateTestFunctionError(ValueError):
    """Denominator indistinguishable from zero for the given test function."""


class InequalityViolation(RuntimeError):
    """A quotient fell below the sharp constant beyond the error budget."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def sharp_constant(Q: float, alpha: float) -> float:
    """The sharp Hardy constant ((Q + alpha - 2) / 2)^2, valid for Q+alpha-2 > 0."""
    if Q + alpha - 2.0 <= 0.0:
        raise ValueError("sharp constant requires Q + alpha - 2 > 0")
    return ((Q + alpha - 2.0) / 2.0) ** 2


def optimal_beta(Q: float, alpha: float) -> float:
    """Exponent (2 - Q - alpha)/2 maximizing -b^2 - b(alpha + Q - 2); the
    maximum value equals the sharp constant."""
    return (2.0 - Q - alpha) / 2.0


def _mix_seed(seed: int, salt: int) -> int:
    return (seed * 0x9E3779B97F4A7C15 + salt + 1) & 0xFFFFFFFFFFFFFFFF


def _config_echo(cfg: QuadratureConfig | None, group: GroupSpec | None,
                 alpha: float | None, method: str) -> dict:
    echo = {"method": method, "version": __version__}
    if group is not None:
        echo["group"] = group.name
    if alpha is not None:
        echo["alpha"] = alpha
    if cfg is not None:
        echo.update(seed=cfg.seed, budget=cfg.budget, quadrature=cfg.method,
                    target_rel_tol=cfg.target_rel_tol)
    return echo


# ---------------------------------------------------------------------------
# problems and test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HardyProblem:
    """A group together with the weight exponent alpha.

    Weight: w = N^alpha.  Potential: q = N^alpha |grad_G N|^2 / N^2, always
    evaluated through the norm's horizontal gradient (the Heisenberg
    |z|^2/rho^4 and H-type |v|^2/K^4 expressions are derived identities and
    are asserted equal in the test batteries, not hard-coded here)."""

    group: GroupSpec
    alpha: float

    def __post_init__(self):
        if self.group.Q + self.alpha - 2.0 <= 0.0:
            raise ValueError("Hardy problem requires Q + alpha - 2 > 0")

    @property
    def Q(self) -> int:
        return self.group.Q

    @property
    def sharp_constant(self) -> float:
        return sharp_constant(self.Q, self.alpha)

    @property
    def optimal_beta(self) -> float:
        return optimal_beta(self.Q, self.alpha)

    def weight_values(self, X) -> np.ndarray:
        return homogeneous_norm(self.group, X) ** self.alpha

    def potential_values(self, X) -> np.ndarray:
        g = self.group
        X = np.asarray(X, dtype=float)
        jet = NormField(g).jet1(X)
        hn = horizontal_from_gradient(g, X, jet.gradient)
        return jet.value ** (self.alpha - 2.0) * np.sum(hn * hn, axis=-1)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Admissible test function: radial log-window profile or smooth bump.

    Both kinds are compactly supported away from the origin.  The radial
    kind realizes N^beta * g(ln(N / r_in)) for a log-radius cutoff g."""

    kind: str
    beta: float | None = None
    log_profile: RadialProfile | None = None
    r_in: float = 1.0
    center: np.ndarray | None = None
    radius: float | None = None
    edge_width: float = 0.5
    tilt: np.ndarray | None = None

    @staticmethod
    def radial(beta: float, log_profile: RadialProfile, r_in: float = 1.0) -> "TestFunction":
        if r_in <= 0:
            raise ValueError("inner radius must be positive")
        return TestFunction(kind="radial", beta=float(beta),
                            log_profile=log_profile, r_in=float(r_in))

    @staticmethod
    def bump(center, radius: float, edge_width: float = 0.5, tilt=None) -> "TestFunction":
        return TestFunction(kind="bump", center=np.asarray(center, dtype=float),
                            radius=float(radius), edge_width=float(edge_width),
                            tilt=None if tilt is None else np.asarray(tilt, dtype=float))

    def radius_profile(self) -> RadialProfile:
        if self.kind != "radial":
            raise ValueError("not a radial test function")
        return power_log_profile(self.beta, self.log_profile, self.r_in)

    def to_field(self, g: GroupSpec) -> ScalarField:
        if self.kind == "radial":
            return ComposedField(NormField(g), self.radius_profile())
        return BumpField(self.center, self.radius, self.edge_width, self.tilt)

    def support_domain(self, g: GroupSpec) -> Domain:
        if self.kind == "radial":
            lo, hi = norm_ball_box(g, self.radius_profile().support[1])
            return Domain(lo=lo, hi=hi)
        return Domain(lo=self.center - self.radius, hi=self.center + self.radius)

    def support_annulus(self, g: GroupSpec, probes: int = 4096, seed: int = 0) -> tuple[float, float]:
        """Observed range of N over the support (exact for radial kind)."""
        if self.kind == "radial":
            return self.radius_profile().support
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0xA7], np.uint64)))
        dirs = rng.normal(size=(probes, self.center.shape[0]))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        rad = self.radius * rng.uniform(0.0, 1.0, probes) ** (1.0 / self.center.shape[0])
        N = homogeneous_norm(g, self.center + dirs * rad[:, None])
        return float(N.min()), float(N.max())

    def describe(self) -> dict:
        if self.kind == "radial":
            lo, hi = self.log_profile.support
            return {"kind": "radial", "beta": self.beta, "r_in": self.r_in,
                    "log_support": [lo, hi]}
        return {"kind": "bump", "center": list(map(float, self.center)),
                "radius": self.radius, "edge_width": self.edge_width,
                "tilt": list(map(float, self.tilt)) if self.tilt is not None else None}


def sin_test_function(Q: float, alpha: float, L: float, r_in: float = 1.0,
                      beta: float | None = None) -> TestFunction:
    """Minimizing-family member N^{beta*} sin(pi ln(N/r_in) / L) on [r_in, r_in e^L].

    With beta* = (2-Q-alpha)/2 the quotient has the closed form
    sharp_constant + pi^2 / L^2, which the sweep uses as its oracle."""
    b = optimal_beta(Q, alpha) if beta is None else float(beta)
    return TestFunction.radial(b, sin_log_bump(L), r_in)


def random_bump(g: GroupSpec, seed: int, annulus: tuple[float, float] = (0.2, 5.0)) -> TestFunction:
    """Seed-controlled smooth bump supported inside the norm annulus.

    The center lands in a conservative sub-annulus and the Euclidean radius
    shrinks until probe points keep N(x) inside the requested band, so the
    support provably avoids the pole."""
    lo, hi = annulus
    rng = np.random.Generator(np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF,
                                                             0xBF], np.uint64)))
    half = (0.8 * hi) ** g.weights.as_array()
    while True:
        c = rng.uniform(-half, half)
        Nc = float(homogeneous_norm(g, c))
        if 2.5 * lo <= Nc <= 0.8 * hi:
            break
    radius = float(rng.uniform(0.15, 0.5)) * min(1.0, Nc)
    dirs = rng.normal(size=(512, g.n))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    u = rng.uniform(0.0, 1.0, 512) ** (1.0 / g.n)
    for _ in range(60):
        probes = c + dirs * (radius * u)[:, None]
        N = homogeneous_norm(g, probes)
        if N.min() >= 1.25 * lo and N.max() <= 0.96 * hi:
            break
        radius *= 0.6
    radius *= 0.95
    tilt_dir = rng.normal(size=g.n)
    tilt_dir /= np.linalg.norm(tilt_dir)
    tilt = tilt_dir * rng.uniform(0.0, 0.35) / radius
    return TestFunction.bump(c, radius, edge_width=float(rng.uniform(0.35, 0.75)), tilt=tilt)


# ---------------------------------------------------------------------------
# Rayleigh quotients
# ---------------------------------------------------------------------------

@dataclass
class HardyReport:
    """Numerator/denominator integrals, their quotient, and the sharp-constant gap."""

    numerator: IntegrationResult
    denominator: IntegrationResult
    quotient: float
    quotient_error: float
    sharp_constant: float
    method: str
    config: dict

    @property
    def relative_gap(self) -> float:
        return self.quotient / self.sharp_constant - 1.0

    def to_dict(self) -> dict:
        return {
            "numerator": self.numerator.to_dict(),
            "denominator": self.denominator.to_dict(),
            "quotient": self.quotient,
            "quotient_error": self.quotient_error,
            "sharp_constant": self.sharp_constant,
            "relative_gap": self.relative_gap,
            "method": self.method,
            "config": dict(self.config),
        }


def _quotient_sigma(num: float, den: float, cov: np.ndarray) -> float:
    var = (cov[0, 0] / den ** 2 + num ** 2 * cov[1, 1] / den ** 4
           - 2.0 * num * cov[0, 1] / den ** 3)
    return math.sqrt(max(var, 0.0))


def _full_dim_integrands(problem: HardyProblem, field: ScalarField):
    g = problem.group
    alpha = problem.alpha
    norm = NormField(g)

    from ._kernels import frame_coefficient_stack, hardy_pair_kernel

    if (hardy_pair_kernel is not None and isinstance(field, BumpField)
            and g.kind in ("abelian", "heisenberg", "htype")):
        # fused one-pass kernel; agrees with the generic route below to
        # floating-point accuracy (asserted in the test suite)
        C, center_coeff, step2 = frame_coefficient_stack(g)
        center = np.ascontiguousarray(field.center)
        tilt = np.ascontiguousarray(field.tilt)

        def both_fused(X):
            out = np.empty((2, X.shape[0]))
            hardy_pair_kernel(np.ascontiguousarray(X), g.m, step2, center_coeff,
                              C, float(alpha), center, field.radius,
                              field.edge_width, tilt, out)
            return out

        return both_fused

    def both(X):
        pj = field.jet1(X)
        nj = norm.jet1(X)
        hphi = horizontal_from_gradient(g, X, pj.gradient)
        hnorm = horizontal_from_gradient(g, X, nj.gradient)
        N = nj.value
        Na = np.ones_like(N) if alpha == 0.0 else N ** alpha
        num = Na * np.sum(hphi * hphi, axis=-1)
        den = Na / (N * N) * np.sum(hnorm * hnorm, axis=-1) * pj.value ** 2
        return np.stack([num, den])

    return both


def rayleigh_quotient(problem: HardyProblem, phi: TestFunction,
                      cfg: QuadratureConfig | None = None,
                      method: str = "full_dim",
                      grid: RadialGrid = RadialGrid()) -> HardyReport:
    """Evaluate the weighted Hardy quotient of a test function.

    ``full_dim`` samples both integrals over the support box with a shared
    stream and propagates the quotient error through the delta method with
    the sampled covariance.  ``radial_1d`` (radial test functions only)
    uses the exact one-dimensional reduction.
    """
    g = problem.group
    C = problem.sharp_constant
    if method == "radial_1d":
        red = radial_reduce(g.Q, problem.alpha, phi.radius_profile(), grid)
        num, den = red.numerator, red.denominator
        if den.value <= 0:
            raise DegenerateTestFunctionError("denominator vanished in radial reduction")
        q = red.quotient
        sigma = q * (num.error_estimate / max(abs(num.value), 1e-300)
                     + den.error_estimate / max(den.value, 1e-300))
        return HardyReport(num, den, q, sigma, C, "radial_1d",
                           _config_echo(cfg, g, problem.alpha, "radial_1d"))
    if method != "full_dim":
        raise ValueError(f"unknown quotient method {method!r}")
    if cfg is None:
        raise ValueError("full_dim quotients need a QuadratureConfig")
    field = phi.to_field(g)
    domain = phi.support_domain(g)
    res = integrate_many(_full_dim_integrands(problem, field), domain, cfg, k=2)
    num, den = res.results
    if den.value <= 0 or den.value <= 5.0 * den.error_estimate:
        raise DegenerateTestFunctionError(
            f"denominator {den.value:.3e} indistinguishable from zero "
            f"(stderr {den.error_estimate:.3e})"
        )
    q = num.value / den.value
    sigma = _quotient_sigma(num.value, den.value, res.covariance)
    return HardyReport(num, den, q, sigma, C, "full_dim",
                       _config_echo(cfg, g, problem.alpha, "full_dim"))


# ---------------------------------------------------------------------------
# sharpness sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    L: float
    quotient: float
    predicted: float
    deviation: float

    def to_dict(self) -> dict:
        return {"L": self.L, "quotient": self.quotient,
                "predicted": self.predicted, "deviation": self.deviation}


@dataclass
class SweepResult:
    """Quotients of the shrinking log-window family against C + pi^2/L^2."""

    rows: list[SweepRow]
    sharp_constant: float
    config: dict

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows],
                "sharp_constant": self.sharp_constant, "config": dict(self.config)}


def sharpness_sweep(problem: HardyProblem, L_grid: Sequence[float],
                    cfg: QuadratureConfig | None = None, r_in: float = 1.0,
                    grid: RadialGrid = RadialGrid()) -> SweepResult:
    """Drive the quotient to the sharp constant along increasing log-widths L.

    Each row evaluates the minimizing family by the exact radial reduction;
    the predicted column is the analytic value sharp_constant + pi^2/L^2."""
    L_grid = [float(L) for L in L_grid]
    if any(b <= a for a, b in zip(L_grid, L_grid[1:])):
        raise ValueError("L grid must be increasing")
    C = problem.sharp_constant
    rows = []
    for L in L_grid:
        phi = sin_test_function(problem.Q, problem.alpha, L, r_in)
        rep = rayleigh_quotient(problem, phi, cfg, method="radial_1d", grid=grid)
        predicted = C + math.pi ** 2 / L ** 2
        rows.append(SweepRow(L, rep.quotient, predicted, abs(rep.quotient - predicted)))
    return SweepResult(rows, C, _config_echo(cfg, problem.group, problem.alpha, "radial_1d"))


# ---------------------------------------------------------------------------
# uncertainty principle
# ---------------------------------------------------------------------------

@dataclass
class UncertaintyReport:
    lhs: float
    rhs: float
    lhs_error: float
    rhs_error: float
    margin_sigmas: float
    ok: bool
    config: dict

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "lhs_error": self.lhs_error,
                "rhs_error": self.rhs_error, "margin_sigmas": self.margin_sigmas,
                "ok": self.ok, "config": dict(self.config)}


def uncertainty_check(g: GroupSpec, phi: TestFunction, cfg: QuadratureConfig) -> UncertaintyReport:
    """Check (int N^2 |grad N|^2 phi^2)(int |grad phi|^2) >= ((Q-2)/2)^2 (int |grad N|^2 phi^2)^2.

    All three integrals share one sample stream; the comparison uses a
    3-sigma error budget from the full delta-method covariance."""
    if g.Q < 3:
        raise ValueError("uncertainty principle needs Q >= 3")
    C0 = ((g.Q - 2.0) / 2.0) ** 2
    field = phi.to_field(g)
    norm = NormField(g)

    def three(X):
        pj = field.jet1(X)
        nj = norm.jet1(X)
        hphi = horizontal_from_gradient(g, X, pj.gradient)
        hnorm = horizontal_from_gradient(g, X, nj.gradient)
        W = np.sum(hnorm * hnorm, axis=-1)
        p2 = pj.value ** 2
        return np.stack([nj.value ** 2 * W * p2,
                         np.sum(hphi * hphi, axis=-1),
                         W * p2])

    res = integrate_many(three, phi.support_domain(g), cfg, k=3)
    I1, I2, I3 = res.values
    S = res.covariance
    lhs = I1 * I2
    rhs = C0 * I3 ** 2
    grad = np.array([I2, I1, -2.0 * C0 * I3])
    sigma = math.sqrt(max(float(grad @ S @ grad), 0.0))
    lhs_err = math.sqrt(max(I2 ** 2 * S[0, 0] + I1 ** 2 * S[1, 1] + 2 * I1 * I2 * S[0, 1], 0.0))
    rhs_err = abs(2.0 * C0 * I3) * math.sqrt(max(S[2, 2], 0.0))
    margin = (lhs - rhs) / sigma if sigma > 0 else math.inf
    ok = lhs >= rhs - 3.0 * sigma
    return UncertaintyReport(float(lhs), float(rhs), lhs_err, rhs_err, float(margin),
                             bool(ok), _config_echo(cfg, g, None, "uncertainty"))


# ---------------------------------------------------------------------------
# norm certification
# ---------------------------------------------------------------------------

def mixed_quadratic_norm(g: GroupSpec) -> ScalarField:
    """(|z|^2 + t^2)^{1/2} on a Heisenberg group: not dilation-homogeneous."""
    if g.kind != "heisenberg":
        raise ValueError("candidate defined for Heisenberg groups")
    terms = {}
    for i in range(g.m):
        expo = [0] * g.n
        expo[i] = 2
        terms[tuple(expo)] = 1.0
    expo = [0] * g.n
    expo[g.m] = 2
    terms[tuple(expo)] = 1.0
    return PowerField(PolynomialField(Poly.from_terms(g.n, terms)), 0.5)


def skewed_quartic_norm(g: GroupSpec) -> ScalarField:
    """(|z|^4 + 4 t^2)^{1/4} on a Heisenberg group: homogeneous and symmetric
    but not the fundamental-solution norm (its 2-Q power is not harmonic)."""
    if g.kind != "heisenberg":
        raise ValueError("candidate defined for Heisenberg groups")
    z2 = Poly.zero(g.n)
    for i in range(g.m):
        expo = [0] * g.n
        expo[i] = 2
        z2 = z2 + Poly.from_terms(g.n, {tuple(expo): 1.0})
    expo = [0] * g.n
    expo[g.m] = 2
    quartic = z2 * z2 + Poly.from_terms(g.n, {tuple(expo): 4.0})
    return PowerField(PolynomialField(quartic), 0.25)


@dataclass
class NormCertification:
    """Residual gates for a candidate homogeneous norm."""

    checks: list[CheckResult]
    config: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"checks": [c.to_dict() for c in self.checks],
                "passed": self.passed, "config": dict(self.config)}


def certify_norm(g: GroupSpec, candidate: ScalarField, cfg: QuadratureConfig,
                 annulus: tuple[float, float] = (0.25, 4.0)) -> NormCertification:
    """Certify a candidate norm: homogeneity, symmetry, positivity, and
    harmonicity of its 2-Q power, each as a worst-case residual over random
    annulus points.  Algebraic gates pass at 1e-9, harmonicity at 1e-6
    (scale-normalized by N^Q)."""
    from .diffops import sample_annulus_points

    if g.Q < 3:
        raise ValueError("certification needs Q >= 3")
    n = int(min(cfg.budget, 4000))
    X = sample_annulus_points(g, n, cfg.seed, annulus)
    rng = np.random.Generator(np.random.Philox(key=np.array([cfg.seed, 0xCE], np.uint64)))
    lam = np.exp(rng.uniform(math.log(0.25), math.log(4.0), n))
    N = np.asarray(candidate.values(X), dtype=float)
    checks = []

    scaled = np.asarray(candidate.values(dilate(g, lam, X)), dtype=float)
    hom = np.abs(scaled - lam * N) / np.maximum(np.abs(lam * N), 1e-300)
    checks.append(CheckResult("homogeneity", n, float(hom.max()), 1e-9))

    sym = np.abs(np.asarray(candidate.values(-X), dtype=float) - N) / np.maximum(np.abs(N), 1e-300)
    checks.append(CheckResult("symmetry", n, float(sym.max()), 1e-9))

    min_val = float(N.min())
    checks.append(CheckResult("positivity", n,
                              0.0 if min_val > 0.0 else 1.0 + abs(min_val), 0.0))

    Q = float(g.Q)
    lap = sub_laplacian(g, PowerField(candidate, 2.0 - Q), X)
    harm = np.abs(lap) * N ** Q / ((Q - 2.0) * Q)
    checks.append(CheckResult("harmonicity", n, float(harm.max()), 1e-6))
    return NormCertification(checks, _config_echo(cfg, g, None, "certify_norm"))


# ---------------------------------------------------------------------------
# Dirac normalization of the fundamental solution
# ---------------------------------------------------------------------------

@dataclass
class DiracNormalization:
    """Pairing int <grad_G Psi, grad_G phi> dx for Psi = c N^{2-Q}.

    Equals phi(0) exactly when c is the true normalizing constant of the
    fundamental solution."""

    value: float
    error_estimate: float
    evals: int
    constant: float
    config: dict

    def to_dict(self) -> dict:
        return {"value": self.value, "error_estimate": self.error_estimate,
                "evals": self.evals, "constant": self.constant,
                "config": dict(self.config)}


def _shell_budgets(budget: int, shells: int) -> list[int]:
    outer = budget // 2
    rest = budget - outer
    raw = np.array([2.0 ** -j for j in range(1, shells + 1)])
    alloc = np.maximum((rest * raw / raw.sum()).astype(int), 1024)
    while alloc.sum() > rest and alloc.max() > 1024:
        alloc[np.argmax(alloc)] -= int(alloc.sum() - rest)
        alloc = np.maximum(alloc, 1024)
        if alloc.sum() <= rest:
            break
        alloc[np.argmax(alloc)] = 1024
    return [outer] + list(alloc)


def dirac_normalization(g: GroupSpec, phi: TestFunction | ScalarField,
                        cfg: QuadratureConfig, constant: float | None = None) -> DiracNormalization:
    """Evaluate int <grad_G Psi, grad_G phi> dx against a centered test function.

    The integrand behaves like N^{1-Q} near the pole, so the support is
    stratified into dyadic norm shells, each sampled in its own bounding box
    with a deterministic slice of the budget; shell errors combine in
    quadrature.  With ``constant=None`` the group's default constant is used
    (the classical closed form on Heisenberg groups, 1 otherwise)."""
    if g.Q < 3:
        raise ValueError("needs Q >= 3")
    if cfg.method == "adaptive_tensor":
        raise ValueError("dirac_normalization requires a sampling method")
    c = constant
    if c is None:
        c = folland_constant(g.Q) if g.kind == "heisenberg" else 1.0
    field = phi.to_field(g) if isinstance(phi, TestFunction) else phi
    if isinstance(phi, TestFunction):
        dom = phi.support_domain(g)
        lo_box, hi_box = dom.lo, dom.hi
    elif isinstance(field, BumpField):
        lo_box, hi_box = field.support_box()
    else:
        raise ValueError("need a test function with a known support box")
    corners = np.stack(np.meshgrid(*zip(lo_box, hi_box), indexing="ij"), axis=-1).reshape(-1, g.n)
    R_top = float(homogeneous_norm(g, corners).max())
    norm = NormField(g)
    Q = float(g.Q)

    def pairing(X):
        nj = norm.jet1(X)
        pj = field.jet1(X)
        hn = horizontal_from_gradient(g, X, nj.gradient)
        hp = horizontal_from_gradient(g, X, pj.gradient)
        psi_scale = c * (2.0 - Q) * nj.value ** (1.0 - Q)
        return psi_scale * np.sum(hn * hp, axis=-1)

    shells = 24
    budgets = _shell_budgets(cfg.budget, shells)
    radii = [R_top * 2.0 ** -j for j in range(shells + 1)]
    total = 0.0
    var = 0.0
    evals = 0
    for j, nb in enumerate(budgets):
        r_hi = radii[j]
        r_lo = radii[j + 1] if j < shells else 0.0
        if j == 0:
            lo, hi = lo_box, hi_box
            r_hi = math.inf
        else:
            half_lo, half_hi = norm_ball_box(g, r_hi)
            lo = np.maximum(lo_box, half_lo)
            hi = np.minimum(hi_box, half_hi)
            if np.any(hi <= lo):
                continue

        def indicator(X, r_lo=r_lo, r_hi=r_hi):
            N = homogeneous_norm(g, X)
            return (N >= r_lo) & (N < r_hi)

        shell_cfg = replace(cfg, budget=max(int(nb), 1000), seed=_mix_seed(cfg.seed, j))
        res = integrate_many(pairing, Domain(lo=lo, hi=hi, indicator=indicator),
                             shell_cfg, k=1)
        total += res.results[0].value
        var += res.results[0].error_estimate ** 2
        evals += res.evals
    return DiracNormalization(total, math.sqrt(var), evals, float(c),
                              _config_echo(cfg, g, None, "dirac_normalization"))


def fundamental_normalization(g: GroupSpec, cfg: QuadratureConfig) -> DiracNormalization:
    """Flux-oracle normalization: the constant c with -Delta_G (c N^{2-Q}) = delta_0,
    measured empirically from the Dirac pairing of the unnormalized power."""
    probe = TestFunction.bump(np.zeros(g.n), radius=1.0, edge_width=0.6)
    raw = dirac_normalization(g, probe, cfg, constant=1.0)
    value = 1.0 / raw.value
    err = raw.error_estimate / raw.value ** 2
    return DiracNormalization(value, err, raw.evals, 1.0,
                              _config_echo(cfg, g, None, "fundamental_normalization"))


# ---------------------------------------------------------------------------
# inequality battery
# ---------------------------------------------------------------------------

@dataclass
class BatteryRow:
    alpha: float
    index: int
    quotient: float
    quotient_error: float
    sharp_constant: float
    gap_sigmas: float
    ok: bool

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "index": self.index, "quotient": self.quotient,
                "quotient_error": self.quotient_error,
                "sharp_constant": self.sharp_constant,
                "gap_sigmas": self.gap_sigmas, "ok": self.ok}


@dataclass
class BatteryReport:
    rows: list[BatteryRow]
    config: dict

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "passed": self.passed,
                "config": dict(self.config)}


def run_inequality_battery(g: GroupSpec, alphas: Sequence[float], n_bumps: int,
                           cfg: QuadratureConfig,
                           annulus: tuple[float, float] = (0.2, 5.0)) -> BatteryReport:
    """Randomized test of the Hardy inequality: every full-dimensional quotient
    must clear the sharp constant minus three combined sigmas.

    Violations abort with a diagnostic dump; the sampled point set is fully
    reproducible from the recorded seeds."""
    rows = []
    for alpha in alphas:
        if g.Q + alpha - 2.0 <= 0.0:
            continue
        problem = HardyProblem(g, alpha)
        C = problem.sharp_constant
        for i in range(n_bumps):
            bump_seed = _mix_seed(cfg.seed, hash((round(alpha * 16), i)) & 0xFFFF)
            phi = random_bump(g, bump_seed, annulus)
            run_cfg = replace(cfg, seed=_mix_seed(bump_seed, 0x51))
            rep = rayleigh_quotient(problem, phi, run_cfg, method="full_dim")
            sigma = max(rep.quotient_error, 1e-300)
            gap_sigmas = (rep.quotient - C) / sigma
            ok = rep.quotient >= C - 3.0 * sigma
            rows.append(BatteryRow(alpha, i, rep.quotient, rep.quotient_error,
                                   C, float(gap_sigmas), bool(ok)))
            if not ok:
                raise InequalityViolation(
                    f"quotient {rep.quotient:.6f} fell {-gap_sigmas:.2f} sigma below "
                    f"the sharp constant {C} (group {g.name}, alpha {alpha})",
                    diagnostics={
                        "group": g.name,
                        "alpha": alpha,
                        "bump": phi.describe(),
                        "bump_seed": bump_seed,
                        "integration_seed": run_cfg.seed,
                        "numerator": rep.numerator.to_dict(),
                        "denominator": rep.denominator.to_dict(),
                        "quotient": rep.quotient,
                        "quotient_error": rep.quotient_error,
                        "note": "sample stream is a pure function of the recorded "
                                "seed/budget/method; rerun to reproduce the point set",
                    },
                )
    return BatteryReport(rows, _config_echo(cfg, g, None, "inequality_battery"))
