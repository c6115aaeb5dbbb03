"""Energy minimization with ε-continuation.

The minimizer starts from a negative-energy seed ``t* v`` found by
:func:`valley_scan`, then runs a descent method with Armijo backtracking on
the smoothed energy ``E_ε`` for a decreasing sequence of ``ε``, warm-starting
each stage from the previous one.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .energy import EnergyBreakdown, EnergyFunctional, laplacian_norm
from .exceptions import (
    HypothesisViolationError,
    InvalidFieldError,
    StageFailureError,
    ValleyNotFoundError,
)
from .exponent_field import ExponentTriple, ScalarField, check_theorem_hypotheses
from .validation import check_field

__all__ = [
    "ProblemSpec",
    "SolveResult",
    "StageTrace",
    "ValleyScan",
    "SweepTable",
    "bump_profile",
    "probe_basis",
    "valley_scan",
    "minimize",
    "stationarity_residual",
    "lambda_sweep",
    "NavierBiharmonicSolver",
]

METRICS = ("l2", "sobolev", "newton")
# relative resolution of an energy evaluation (summation of O(n) terms)
_ROUNDOFF = 1e-13


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Exponents, integrand, ``λ`` and every solver knob.

    ``metric`` selects the inner product the descent direction is computed
    in: ``"l2"`` (quadrature-weighted nodal), ``"sobolev"`` (``<Δu, Δv>``)
    or ``"newton"`` (positive-definite part of the Hessian, refreshed every
    iteration).
    """

    exponents: ExponentTriple
    phi: object
    lam: float = 1.0
    eps0: float = 1e-2
    eps_decay: float = 0.1
    eps_min: float = 1e-6
    gtol: float = 1e-8
    ftol: float = 1e-12
    window: int = 5
    max_iter: int = 500
    armijo: float = 1e-4
    backtrack: float = 0.5
    metric: str = "newton"
    init: str = "valley"
    residual_tol: float = 1e-6
    n_probes: int = 20
    t_grid: tuple = tuple(np.logspace(-6, 0, 25))

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not (self.eps0 > self.eps_min > 0):
            raise ValueError("need eps0 > eps_min > 0")
        if not (0 < self.eps_decay < 1):
            raise ValueError("eps_decay must lie in (0, 1)")
        if not (0 < self.armijo < 1 and 0 < self.backtrack < 1):
            raise ValueError("armijo and backtrack must lie in (0, 1)")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.init not in ("valley", "given"):
            raise ValueError("init must be 'valley' or 'given'")
        if self.max_iter < 1 or self.window < 1:
            raise ValueError("max_iter and window must be >= 1")
        if self.phi.grid != self.exponents.grid:
            raise InvalidFieldError("phi model and exponents live on different grids")
        if not np.allclose(self.phi.p_lower.values, self.exponents.p.values, rtol=0, atol=1e-12):
            raise InvalidFieldError("phi model exponent must equal the principal exponent p")
        report = check_theorem_hypotheses(self.exponents)
        if not report.passed:
            raise HypothesisViolationError(
                f"exponent hypotheses fail: {', '.join(report.failed_inequalities)}", report
            )

    @property
    def grid(self):
        return self.exponents.grid

    @cached_property
    def functional(self):
        return EnergyFunctional(self.exponents, self.phi, self.lam)

    @property
    def eps_schedule(self):
        out, e = [], self.eps0
        while e > self.eps_min * (1 + 1e-9):
            out.append(e)
            e *= self.eps_decay
        out.append(self.eps_min)
        return out

    def with_lambda(self, lam):
        return replace(self, lam=float(lam))


# -- test profiles ----------------------------------------------------------


def bump_profile(grid):
    """``[4 x (1-x)]²`` per axis (normalized coordinates), in ``[0, 1]``."""
    v = np.ones(grid.shape)
    for coord, ext in zip(grid.coordinates, grid.extents):
        s = coord / ext
        v = v * (4.0 * s * (1.0 - s)) ** 2
    v = np.clip(v, 0.0, 1.0)
    v[grid.boundary_mask] = 0.0
    return ScalarField(grid, v)


def probe_basis(grid, n=20):
    """``n`` smooth compactly supported bumps used as weak-form test fields."""
    if grid.dim == 1:
        centers = [(c,) for c in np.linspace(0, 1, n + 2)[1:-1]]
        width = (2.0 / (n + 1),)
    else:
        nx = int(np.ceil(np.sqrt(n)))
        ny = int(np.ceil(n / nx))
        cx = np.linspace(0, 1, nx + 2)[1:-1]
        cy = np.linspace(0, 1, ny + 2)[1:-1]
        centers = [(a, b) for a in cx for b in cy][:n]
        width = (2.0 / (nx + 1), 2.0 / (ny + 1))
    out = []
    for c in centers:
        v = np.ones(grid.shape)
        for coord, ext, ci, wi in zip(grid.coordinates, grid.extents, c, width):
            z = (coord / ext - ci) / wi
            v = v * np.clip(1.0 - z * z, 0.0, None) ** 4
        v[grid.boundary_mask] = 0.0
        out.append(ScalarField(grid, v))
    return out


# -- valley scan ------------------------------------------------------------


@dataclass(frozen=True)
class ValleyScan:
    t_star: float
    t_grid: tuple
    energies: tuple

    def to_rows(self):
        return list(zip(self.t_grid, self.energies))


def valley_scan(spec, v, t_grid=None):
    """Evaluate ``E(t v)`` (exact, ``ε = 0``) over ``t_grid``.

    Returns the largest ``t`` with negative energy and the full profile.
    """
    fn = spec.functional
    check_field(v, fn.grid, "v")
    t_grid = tuple(float(t) for t in (spec.t_grid if t_grid is None else t_grid))
    if not t_grid or min(t_grid) <= 0:
        raise ValueError("t_grid must be nonempty and positive")
    v_int = fn.restrict(v)
    energies = tuple(fn.value_int(t * v_int, 0.0) for t in t_grid)
    neg = [t for t, e in zip(t_grid, energies) if e < 0]
    if not neg:
        raise ValleyNotFoundError(
            "no negative energy on the t grid; widen or refine it "
            f"(min E = {min(energies):.3e} at t = {t_grid[int(np.argmin(energies))]:.3e})"
        )
    return ValleyScan(max(neg), t_grid, energies)


# -- descent ----------------------------------------------------------------


@dataclass
class StageTrace:
    eps: float
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def iterations(self):
        return len(self.steps)


@dataclass
class SolveResult:
    u0: ScalarField
    breakdown_eps: EnergyBreakdown
    breakdown_exact: EnergyBreakdown
    m_hat: float
    residual: float
    norm: float
    stages: list
    success: bool
    status: str
    lam: float
    duration: float = 0.0

    def to_dict(self, timing=False):
        d = {
            "lambda": self.lam,
            "m_hat": self.m_hat,
            "norm": self.norm,
            "residual": self.residual,
            "success": self.success,
            "status": self.status,
            "energy_eps_min": self.breakdown_eps.to_dict(),
            "energy_exact": self.breakdown_exact.to_dict(),
            "stages": [
                {
                    "eps": s.eps,
                    "iterations": s.iterations,
                    "converged": s.converged,
                    "reason": s.reason,
                    "final_energy": s.energies[-1] if s.energies else None,
                    "final_grad_norm": s.grad_norms[-1] if s.grad_norms else None,
                }
                for s in self.stages
            ],
        }
        if timing:
            d["duration_s"] = self.duration
        return d

    def trace_rows(self):
        """``(iter, eps, E, grad_norm, step)`` rows across all stages."""
        rows, k = [], 0
        for s in self.stages:
            for e, g, a in zip(s.energies, s.grad_norms, s.steps + [0.0]):
                rows.append((k, s.eps, e, g, a))
                k += 1
        return rows


class _Metric:
    def __init__(self, kind, fn):
        self.kind = kind
        self.fn = fn
        if kind == "sobolev":
            P = (fn.LT @ sp.diags(fn.w) @ fn.L).tocsc()
            self._solve = splu(P).solve
            self._P = P

    def direction(self, u, g, eps):
        if self.kind == "l2":
            return -g / self.fn.w
        if self.kind == "sobolev":
            return -self._solve(g)
        return -splu(self.fn.metric_int(u, eps)).solve(g)

    def norm2(self, s):
        if self.kind == "l2":
            return float(np.sum(self.fn.w * s * s))
        if self.kind == "sobolev":
            return float(s @ (self._P @ s))
        return None


def _descend(fn, u, eps, spec, metric):
    trace = StageTrace(eps)
    E, g = fn.value_and_grad_int(u, eps)
    prev = None
    alpha = 1.0
    for _ in range(spec.max_iter + 1):
        gnorm = float(np.max(np.abs(g)))
        trace.energies.append(E)
        trace.grad_norms.append(gnorm)
        small_grad = gnorm <= spec.gtol * (1.0 + abs(E))
        hist = trace.energies
        stalled = len(hist) > spec.window and hist[-1 - spec.window] - E <= spec.ftol
        if small_grad and stalled:
            trace.converged, trace.reason = True, "converged"
            return u, trace
        if trace.iterations >= spec.max_iter:
            trace.reason = "max_iter"
            return u, trace

        d = metric.direction(u, g, eps)
        slope = float(g @ d)
        if not slope < 0:
            d, slope = -g / fn.w, -float(np.sum(g * g / fn.w))
        if metric.kind == "newton":
            alpha = 1.0
        elif prev is not None:
            s, y = u - prev[0], g - prev[1]
            sy = float(s @ y)
            if sy > 0:
                alpha = metric.norm2(s) / sy
        alpha0 = alpha
        accepted = False
        for _ in range(80):
            u_new = u + alpha * d
            E_new = fn.value_int(u_new, eps)
            if np.isfinite(E_new) and E_new <= E + spec.armijo * alpha * slope and E_new < E:
                accepted = True
                break
            alpha *= spec.backtrack
        if not accepted:
            # A predicted decrease below the resolution of E means no further
            # progress is measurable; the gradient itself then sits at its
            # round-off floor (about cond(L) * machine epsilon).
            resolution = _ROUNDOFF * fn.energy_scale_int(u, eps)
            if small_grad or abs(alpha0 * slope) <= resolution:
                trace.converged, trace.reason = True, "converged (energy at round-off)"
                return u, trace
            raise StageFailureError(
                f"line search failed at eps={eps:g} (grad {gnorm:.3e}, E {E:.12e})", trace
            )
        prev = (u, g)
        u = u_new
        trace.steps.append(alpha)
        E, g = fn.value_and_grad_int(u, eps)
    return u, trace


def stationarity_residual(spec, u, eps=None, probes=None):
    """Largest normalized weak-form defect over the probe basis.

    For each probe ``v``: ``|∫φ(|Δu|)ΔuΔv - ∫s_ε(u)v - λ∫|u|^{r-2}uv| / (1 + |Δv|_p)``.
    """
    fn = spec.functional
    eps = spec.eps_min if eps is None else eps
    probes = probe_basis(fn.grid, spec.n_probes) if probes is None else probes
    g = fn.grad_int(fn.restrict(u), eps)
    worst = 0.0
    for v in probes:
        defect = abs(float(np.sum(g * fn.restrict(v))))
        worst = max(worst, defect / (1.0 + laplacian_norm(v, spec.exponents.p)))
    return worst


def minimize(spec, u_init=None):
    """Minimize the energy from ``u_init`` (default: valley seed ``t* v``)."""
    t0 = time.perf_counter()
    fn = spec.functional
    if u_init is None:
        if spec.init != "valley":
            raise ValueError("u_init is required when init='given'")
        v = bump_profile(fn.grid)
        u_init = valley_scan(spec, v).t_star * v
    check_field(u_init, fn.grid, "u_init")
    if np.any(u_init.values[fn.grid.boundary_mask] != 0):
        raise InvalidFieldError("u_init must vanish on the boundary")
    u = fn.restrict(u_init)
    metric = _Metric(spec.metric, fn)
    stages = []
    status = "ok"
    for eps in spec.eps_schedule:
        try:
            u, trace = _descend(fn, u, eps, spec, metric)
        except StageFailureError as exc:
            stages.append(exc.trace)
            status = f"stage failure: {exc}"
            break
        stages.append(trace)
        if not trace.converged:
            status = f"not converged at eps={eps:g} ({trace.reason})"
    u0 = fn.extend(u)
    b_eps = fn.breakdown_int(u, spec.eps_min)
    b_exact = fn.breakdown_int(u, 0.0)
    residual = stationarity_residual(spec, u0)
    m_hat = b_exact.total
    norm = laplacian_norm(u0, spec.exponents.p)
    if status == "ok":
        if not m_hat < 0:
            status = "failed: minimum is not negative"
        elif residual > spec.residual_tol:
            status = f"failed: residual {residual:.3e} above tolerance"
    return SolveResult(
        u0=u0,
        breakdown_eps=b_eps,
        breakdown_exact=b_exact,
        m_hat=m_hat,
        residual=residual,
        norm=norm,
        stages=stages,
        success=status == "ok",
        status=status,
        lam=spec.lam,
        duration=time.perf_counter() - t0,
    )


# -- lambda sweep -----------------------------------------------------------


@dataclass
class SweepTable:
    lambdas: list
    results: list
    monotone: bool

    @property
    def success(self):
        return self.monotone and all(r is not None and r.success for r in self.results)

    def rows(self):
        out = []
        for lam, r in zip(self.lambdas, self.results):
            if r is None:
                out.append((lam, float("nan"), float("nan"), float("nan"), "error"))
            else:
                out.append((lam, r.m_hat, r.norm, r.residual, "ok" if r.success else r.status))
        return out


def lambda_sweep(spec_base, lambdas, jobs=1):
    """Independent solves for each ``λ``; results in ``λ`` order."""
    lambdas = [float(x) for x in lambdas]
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("all lambdas must be > 0")
    if lambdas != sorted(lambdas):
        raise ValueError("lambdas must be sorted ascending")

    def run(lam):
        try:
            return minimize(spec_base.with_lambda(lam))
        except (ValleyNotFoundError, StageFailureError, InvalidFieldError):
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, lambdas))
    else:
        results = [run(lam) for lam in lambdas]
    m = [r.m_hat if r is not None else np.nan for r in results]
    monotone = all(b <= a for a, b in zip(m, m[1:]))
    return SweepTable(lambdas, results, bool(monotone))


# -- estimator facade -------------------------------------------------------


class NavierBiharmonicSolver(BaseEstimator):
    """scikit-learn style front end to :func:`minimize`.

    Hyperparameters are the solver knobs of :class:`ProblemSpec`; ``fit``
    takes the problem data (exponents and integrand) and stores the
    minimizer in ``u_``.

    Examples
    --------
    >>> from pxbiharmonic import Grid, ExponentTriple, PhiModel
    >>> g = Grid.uniform(101)
    >>> e = ExponentTriple.constant(g, 2.5, 0.5, 1.5)
    >>> solver = NavierBiharmonicSolver(lam=1.0).fit(e, PhiModel("power", e.p))
    >>> bool(solver.energy_ < 0)
    True
    """

    def __init__(
        self,
        lam=1.0,
        eps0=1e-2,
        eps_decay=0.1,
        eps_min=1e-6,
        gtol=1e-8,
        ftol=1e-12,
        max_iter=500,
        armijo=1e-4,
        backtrack=0.5,
        metric="newton",
        residual_tol=1e-6,
    ):
        self.lam = lam
        self.eps0 = eps0
        self.eps_decay = eps_decay
        self.eps_min = eps_min
        self.gtol = gtol
        self.ftol = ftol
        self.max_iter = max_iter
        self.armijo = armijo
        self.backtrack = backtrack
        self.metric = metric
        self.residual_tol = residual_tol

    def make_spec(self, exponents, phi):
        return ProblemSpec(exponents, phi, **self.get_params())

    def fit(self, exponents, phi, u_init=None):
        spec = self.make_spec(exponents, phi)
        result = minimize(spec, u_init)
        self.spec_ = spec
        self.result_ = result
        self.u_ = result.u0
        self.energy_ = result.m_hat
        self.residual_ = result.residual
        self.n_iter_ = sum(s.iterations for s in result.stages)
        return self

    def energy(self, u=None, eps=0.0):
        """Exact (or ε-smoothed) energy of ``u``; defaults to the fitted minimizer."""
        check_is_fitted(self, "u_")
        fn = self.spec_.functional
        u = self.u_ if u is None else u
        return fn.value_int(fn.restrict(u), float(eps))

    def score(self, exponents=None, phi=None):
        """Negative exact energy of the fitted minimizer (higher is better)."""
        check_is_fitted(self, "u_")
        return -self.energy_
