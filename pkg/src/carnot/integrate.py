"""Deterministic numerical integration over group domains.

Monte-Carlo sampling uses a counter-based generator keyed by (seed, chunk),
so the sample stream is a pure function of the configuration and cannot be
perturbed by parallel partitioning; accumulation is pairwise and ordered.
Quasi-Monte-Carlo uses scrambled Sobol points with replicate-based error
bars.  A tensor Gauss rule with panel doubling covers smooth low-dimensional
integrands, and a one-dimensional log-radius reduction provides cheap
high-precision Hardy quotients for radial test functions.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .groups import GroupSpec

__all__ = [
    "Domain",
    "QuadratureConfig",
    "IntegrationResult",
    "MultiResult",
    "RadialGrid",
    "RadialReduction",
    "integrate",
    "integrate_many",
    "radial_reduce",
]

_CHUNK = 1 << 16
_QMC_REPLICATES = 16

METHODS = ("adaptive_tensor", "quasi_monte_carlo", "monte_carlo")


@dataclass(frozen=True, eq=False)
class Domain:
    """Axis-aligned box, optionally restricted by an indicator predicate."""

    lo: np.ndarray
    hi: np.ndarray
    indicator: Callable | None = None
    kind: str = "box"

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("domain box must have lo < hi per axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @staticmethod
    def box(lo, hi) -> "Domain":
        return Domain(lo=np.asarray(lo, dtype=float), hi=np.asarray(hi, dtype=float))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.hi - self.lo))


@dataclass(frozen=True)
class QuadratureConfig:
    """Integration request: method, evaluation budget, seed, and tolerance."""

    method: str = "monte_carlo"
    budget: int = 1_000_000
    seed: int = 0
    target_rel_tol: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.budget < 1000:
            raise ValueError("budget must be at least 1000 evaluations")
        if not self.target_rel_tol > 0:
            raise ValueError("target_rel_tol must be positive")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "budget": self.budget,
            "seed": self.seed,
            "target_rel_tol": self.target_rel_tol,
        }


@dataclass
class IntegrationResult:
    """Estimate with an error bar: standard error for sampling methods,
    refinement delta for the adaptive rule."""

    value: float
    error_estimate: float
    evals: int
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "evals": self.evals,
            "converged": self.converged,
        }


@dataclass
class MultiResult:
    """Joint result for several integrands sharing one sample stream."""

    values: np.ndarray
    covariance: np.ndarray
    evals: int
    results: list[IntegrationResult]


def _n_threads() -> int:
    for var in ("CARNOT_THREADS", "THREADS"):
        raw = os.environ.get(var)
        if raw:
            try:
                return max(1, int(raw))
            except ValueError:
                pass
    return 1


def _as_multi(f, k: int | None):
    """Normalize integrands to a callable X -> (k, B) plus the count k."""
    if isinstance(f, (list, tuple)):
        fns = [(fi.values if hasattr(fi, "values") else fi) for fi in f]

        def multi(X):
            return np.stack([np.asarray(fn(X), dtype=float) for fn in fns])

        return multi, len(fns)
    fn = f.values if hasattr(f, "values") else f
    if k is None or k == 1:
        def single(X):
            return np.asarray(fn(X), dtype=float)[None, :]

        return single, 1
    return fn, k


def _pairwise_total(parts: list):
    """Associate partial sums pairwise in index order (scheduler-independent)."""
    if not parts:
        raise ValueError("no partial results")
    items = list(parts)
    while len(items) > 1:
        merged = []
        for i in range(0, len(items) - 1, 2):
            merged.append(items[i] + items[i + 1])
        if len(items) % 2:
            merged.append(items[-1])
        items = merged
    return items[0]


def _check_finite(vals: np.ndarray, X: np.ndarray):
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))
        i = int(bad[0][-1])
        raise ValueError(f"non-finite sample value at point {X[i]}")


def _eval_masked(multi, k: int, domain: Domain, X: np.ndarray) -> np.ndarray:
    if domain.indicator is None:
        vals = np.asarray(multi(X), dtype=float)
        _check_finite(vals, X)
        return vals
    mask = np.asarray(domain.indicator(X), dtype=bool)
    vals = np.zeros((k, X.shape[0]))
    if mask.any():
        sub = np.asarray(multi(X[mask]), dtype=float)
        _check_finite(sub, X[mask])
        vals[:, mask] = sub
    return vals


def _mc_chunk_stats(multi, k, domain, cfg, chunk_index, size):
    key = np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, chunk_index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    X = gen.random((size, domain.dim))
    X *= domain.hi - domain.lo
    X += domain.lo
    vals = _eval_masked(multi, k, domain, X)
    s1 = np.sum(vals, axis=1)
    s2 = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            s2[i, j] = s2[j, i] = np.sum(vals[i] * vals[j])
    return np.concatenate([[float(size)], s1, s2.ravel()])


def _moments_to_results(stats: np.ndarray, k: int, volume: float, cfg) -> MultiResult:
    n = stats[0]
    s1 = stats[1 : 1 + k]
    s2 = stats[1 + k :].reshape(k, k)
    means = s1 / n
    cov_samples = s2 / n - np.outer(means, means)
    cov_means = cov_samples * (n / max(n - 1.0, 1.0)) / n
    values = volume * means
    covariance = volume ** 2 * cov_means
    results = []
    for i in range(k):
        err = math.sqrt(max(covariance[i, i], 0.0))
        rel_ok = err <= cfg.target_rel_tol * abs(values[i]) if values[i] != 0.0 else err == 0.0
        results.append(IntegrationResult(float(values[i]), err, int(n), bool(rel_ok)))
    return MultiResult(values, covariance, int(n), results)


def _integrate_mc(multi, k, domain, cfg) -> MultiResult:
    total = cfg.budget
    sizes = []
    off = 0
    while off < total:
        sizes.append(min(_CHUNK, total - off))
        off += sizes[-1]
    workers = _n_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda ci: _mc_chunk_stats(multi, k, domain, cfg, ci, sizes[ci]),
                         range(len(sizes)))
            )
    else:
        parts = [_mc_chunk_stats(multi, k, domain, cfg, ci, sizes[ci])
                 for ci in range(len(sizes))]
    stats = _pairwise_total(parts)
    return _moments_to_results(stats, k, domain.box_volume, cfg)


def _integrate_qmc(multi, k, domain, cfg) -> MultiResult:
    replicates = _QMC_REPLICATES
    length = 1 << max(6, int(math.floor(math.log2(cfg.budget / replicates))))
    while replicates * length > cfg.budget and length > 64:
        length //= 2
    root = np.random.SeedSequence(cfg.seed)
    means = np.empty((replicates, k))
    vol = domain.box_volume
    children = root.spawn(replicates)

    def one_replicate(r):
        eng = qmc.Sobol(d=domain.dim, scramble=True, seed=np.random.default_rng(children[r]))
        X = eng.random(length)
        X *= domain.hi - domain.lo
        X += domain.lo
        vals = _eval_masked(multi, k, domain, X)
        return vol * np.sum(vals, axis=1) / length

    workers = _n_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for r, row in enumerate(pool.map(one_replicate, range(replicates))):
                means[r] = row
    else:
        for r in range(replicates):
            means[r] = one_replicate(r)
    values = np.sum(means, axis=0) / replicates
    dm = means - values
    covariance = (dm.T @ dm) / (replicates - 1.0) / replicates
    evals = replicates * length
    results = []
    for i in range(k):
        err = math.sqrt(max(covariance[i, i], 0.0))
        rel_ok = err <= cfg.target_rel_tol * abs(values[i]) if values[i] != 0.0 else err == 0.0
        results.append(IntegrationResult(float(values[i]), err, evals, bool(rel_ok)))
    return MultiResult(values, covariance, evals, results)


def _tensor_grid(domain: Domain, panels: int, order: int):
    nodes, weights = leggauss(order)
    axes_x, axes_w = [], []
    for a in range(domain.dim):
        edges = np.linspace(domain.lo[a], domain.hi[a], panels + 1)
        xs, ws = [], []
        for p in range(panels):
            h = edges[p + 1] - edges[p]
            xs.append(edges[p] + (nodes + 1.0) * 0.5 * h)
            ws.append(weights * 0.5 * h)
        axes_x.append(np.concatenate(xs))
        axes_w.append(np.concatenate(ws))
    mesh = np.meshgrid(*axes_x, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    w = axes_w[0]
    for a in range(1, domain.dim):
        w = np.multiply.outer(w, axes_w[a])
    return X, w.ravel()


def _integrate_adaptive(multi, k, domain, cfg) -> MultiResult:
    order = 8
    used = 0
    panels = 1
    prev = None
    current = None
    err = np.full(k, np.inf)
    while True:
        count = (order * panels) ** domain.dim
        if used + count > cfg.budget and current is not None:
            break
        X, w = _tensor_grid(domain, panels, order)
        level_vals = np.empty(k)
        for start in range(0, X.shape[0], _CHUNK):
            sl = slice(start, min(start + _CHUNK, X.shape[0]))
            vals = _eval_masked(multi, k, domain, X[sl])
            contrib = vals @ w[sl] if k > 1 else np.array([np.sum(vals[0] * w[sl])])
            level_vals = contrib if start == 0 else level_vals + contrib
        used += count
        prev, current = current, level_vals
        if prev is not None:
            err = np.abs(current - prev)
            scale = np.maximum(np.abs(current), 1e-300)
            if np.all(err <= cfg.target_rel_tol * scale):
                break
        panels *= 2
    results = []
    for i in range(k):
        e = float(err[i]) if np.isfinite(err[i]) else abs(float(current[i]))
        ok = e <= cfg.target_rel_tol * max(abs(float(current[i])), 1e-300)
        results.append(IntegrationResult(float(current[i]), e, used, ok))
    covariance = np.diag([r.error_estimate ** 2 for r in results])
    return MultiResult(np.asarray(current, dtype=float), covariance, used, results)


def integrate_many(f, domain: Domain, cfg: QuadratureConfig, k: int | None = None) -> MultiResult:
    """Integrate one or several integrands over a shared sample stream.

    ``f`` may be a callable X -> (B,), a list of such callables, an object
    with a ``values`` method, or (with ``k`` given) a callable X -> (k, B).
    The covariance of the estimates is reported so ratio statistics can
    propagate errors without assuming independence.
    """
    multi, k = _as_multi(f, k)
    if cfg.method == "monte_carlo":
        return _integrate_mc(multi, k, domain, cfg)
    if cfg.method == "quasi_monte_carlo":
        return _integrate_qmc(multi, k, domain, cfg)
    return _integrate_adaptive(multi, k, domain, cfg)


def integrate(f, domain: Domain, cfg: QuadratureConfig) -> IntegrationResult:
    """Integrate a scalar field or callable over the domain.

    Deterministic for a fixed (seed, budget, method) regardless of worker
    count.  When the budget cannot push the standard error below
    ``target_rel_tol`` the best estimate is returned flagged
    ``converged=False`` (tolerance not met)."""
    return integrate_many(f, domain, cfg).results[0]


# ---------------------------------------------------------------------------
# one-dimensional radial reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """Panelized Gauss rule in the log-radius variable with doubling refinement."""

    panels: int = 64
    order: int = 8
    max_panels: int = 4096
    rel_tol: float = 1e-12

    def __post_init__(self):
        if self.panels < 2 or self.max_panels < self.panels:
            raise ValueError("invalid panel counts")


@dataclass
class RadialReduction:
    """Reduced Hardy quotient integrals for a radial test function."""

    numerator: IntegrationResult
    denominator: IntegrationResult

    @property
    def quotient(self) -> float:
        return self.numerator.value / self.denominator.value


def _gauss_panels(lo: float, hi: float, panels: int, order: int):
    nodes, weights = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    h = (hi - lo) / panels
    x = (edges[:-1, None] + (nodes[None, :] + 1.0) * 0.5 * h).ravel()
    w = np.tile(weights * 0.5 * h, panels)
    return x, w


def radial_reduce(Q: float, alpha: float, f, grid: RadialGrid = RadialGrid()) -> RadialReduction:
    """Reduce the weighted Rayleigh quotient of the radial test function f(N).

    For any homogeneous norm the polar decomposition turns both integrals
    into one-dimensional ones against r^{Q-1}, with a single group constant
    that cancels in the ratio:

        num = int r^{alpha+Q-1} f'(r)^2 dr,   den = int r^{alpha+Q-3} f(r)^2 dr.

    Integration runs in s = ln r when the support stays away from 0, with a
    doubling Gauss rule and a Richardson-style error estimate.
    """
    if Q + alpha - 2.0 <= 0.0:
        raise ValueError("requires Q + alpha - 2 > 0")
    r_lo, r_hi = f.support
    if not math.isfinite(r_hi):
        raise ValueError("radial reduction needs a bounded support")
    if r_lo < 0:
        raise ValueError("support must lie in (0, inf)")

    if r_lo > 0:
        s_lo, s_hi = math.log(r_lo), math.log(r_hi)

        def num_integrand(s):
            r = np.exp(s)
            return np.exp((alpha + Q) * s) * f.df(r) ** 2

        def den_integrand(s):
            r = np.exp(s)
            return np.exp((alpha + Q - 2.0) * s) * f.f(r) ** 2

        bounds = (s_lo, s_hi)
    else:
        # support touches 0: integrate in r; the weight exponent must stay
        # integrable there
        if alpha + Q - 3.0 <= -1.0:
            raise ValueError("non-integrable radial exponent at 0")

        def num_integrand(r):
            return r ** (alpha + Q - 1.0) * f.df(r) ** 2

        def den_integrand(r):
            return r ** (alpha + Q - 3.0) * f.f(r) ** 2

        bounds = (r_lo, r_hi)

    def one(integrand) -> IntegrationResult:
        panels = grid.panels
        x, w = _gauss_panels(*bounds, panels // 2, grid.order)
        coarse = float(np.sum(integrand(x) * w))
        evals = x.size
        while True:
            x, w = _gauss_panels(*bounds, panels, grid.order)
            fine = float(np.sum(integrand(x) * w))
            evals += x.size
            err = abs(fine - coarse)
            if err <= grid.rel_tol * max(abs(fine), 1e-300) or panels >= grid.max_panels:
                return IntegrationResult(fine, err, evals,
                                         err <= grid.rel_tol * max(abs(fine), 1e-300))
            coarse = fine
            panels *= 2

    return RadialReduction(one(num_integrand), one(den_integrand))
