"""Modulars and Luxemburg norms in variable-exponent Lebesgue spaces."""

from dataclasses import asdict, dataclass

import numpy as np

from .discretization import integrate
from .exponent_field import ScalarField, exponent_bounds
from .validation import check_exponent, check_positive, check_same_grid

__all__ = [
    "NormResult",
    "modular",
    "luxemburg_norm",
    "conjugate_exponent",
    "holder_check",
    "modular_norm_relations_check",
    "modular_convergence_check",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class NormResult:
    value: float
    iterations: int
    residual: float

    def __float__(self):
        return self.value


def _modular_flat(u, p, w):
    with np.errstate(over="ignore"):
        return float(np.sum(w * np.abs(u) ** p))


def modular(u, p):
    """Quadrature approximation of ``∫ |u|^{p(x)} dx``."""
    grid = check_same_grid(u, p)
    return integrate(grid, np.abs(u.values) ** p.values)


def _luxemburg_flat(u, p, w, measure, tol=DEFAULT_TOL, max_iter=400):
    """Bisection core on flat arrays; returns ``(mu, iterations, residual)``."""
    umax = float(np.max(np.abs(u)))
    if umax == 0.0:
        return 0.0, 0, 0.0
    lo = np.finfo(float).eps
    hi = max(1.0, umax * measure)
    while _modular_flat(u / hi, p, w) > 1.0:
        lo = hi
        hi *= 2.0
    it = 0
    mid, res = hi, abs(_modular_flat(u / hi, p, w) - 1.0)
    while res > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        rho = _modular_flat(u / mid, p, w)
        res = abs(rho - 1.0)
        it += 1
        if rho > 1.0:
            lo = mid
        else:
            hi = mid
    return mid, it, res


def luxemburg_norm(u, p, tol=DEFAULT_TOL):
    """Luxemburg norm ``inf{μ > 0 : ρ(u/μ) <= 1}`` by bracketing and bisection.

    Iterates until ``|ρ(u/μ) - 1| <= tol``.  The zero field has norm 0.
    """
    grid = check_same_grid(u, p)
    check_exponent(p, 0.0, "p")
    check_positive(tol, "tol")
    mu, it, res = _luxemburg_flat(
        u.flat, p.flat, grid.weights.reshape(-1), grid.measure, tol
    )
    return NormResult(mu, it, res)


def conjugate_exponent(p):
    """Nodewise ``p / (p - 1)``."""
    check_exponent(p, 1.0, "p")
    return ScalarField(p.grid, p.values / (p.values - 1.0))


@dataclass(frozen=True)
class HolderReport:
    lhs: float
    rhs: float
    constant: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def holder_check(u, v, p, tol=1e-9):
    """Check ``|∫uv| <= (1/p⁻ + 1/p'⁻) |u|_p |v|_p' + tol``."""
    check_same_grid(u, v, p)
    pc = conjugate_exponent(p)
    p_minus, _ = exponent_bounds(p)
    pc_minus, _ = exponent_bounds(pc)
    const = 1.0 / p_minus + 1.0 / pc_minus
    lhs = abs(integrate(u.grid, u.values * v.values))
    rhs = const * luxemburg_norm(u, p).value * luxemburg_norm(v, pc).value
    return HolderReport(lhs, rhs, const, bool(lhs <= rhs + tol))


@dataclass(frozen=True)
class RelationsReport:
    norm: float
    modular: float
    lower: float
    upper: float
    branch: str
    passed: bool

    def to_dict(self):
        return asdict(self)


def modular_norm_relations_check(u, p, slack=1e-9):
    """Check the norm/modular sandwich on whichever side of 1 the norm lies.

    ``norm > 1``:  norm^{p⁻} <= ρ <= norm^{p⁺};
    ``norm < 1``:  norm^{p⁺} <= ρ <= norm^{p⁻}.
    At ``norm == 1`` (or for the zero field) neither applies and the check
    passes vacuously.
    """
    check_same_grid(u, p)
    n = luxemburg_norm(u, p).value
    rho = modular(u, p)
    lo_e, hi_e = exponent_bounds(p)
    if n > 1.0 + 1e-12:
        branch, lower, upper = "norm>1", n**lo_e, n**hi_e
    elif 0.0 < n < 1.0 - 1e-12:
        branch, lower, upper = "norm<1", n**hi_e, n**lo_e
    else:
        return RelationsReport(n, rho, rho, rho, "vacuous", True)
    passed = lower * (1.0 - slack) <= rho <= upper * (1.0 + slack)
    return RelationsReport(n, rho, lower, upper, branch, bool(passed))


@dataclass(frozen=True)
class ConvergenceReport:
    norms: tuple
    modulars: tuple
    passed: bool

    def to_dict(self):
        return {"norms": list(self.norms), "modulars": list(self.modulars), "passed": self.passed}


def modular_convergence_check(u, w, p, n_terms=40, zero_tol=1e-9):
    """Norm and modular of ``u_n - u`` for ``u_n = u + 2^{-n} w``.

    Both sequences must be nonincreasing, the modular must stay inside the
    small-norm sandwich at every term, and both must fall below
    ``zero_tol`` together.
    """
    check_same_grid(u, w, p)
    lo_e, hi_e = exponent_bounds(p)
    norms, mods = [], []
    ok = True
    for n in range(n_terms):
        un = u + (2.0**-n) * w
        diff = un - u
        nr = luxemburg_norm(diff, p).value
        rho = modular(diff, p)
        norms.append(nr)
        mods.append(rho)
        if 0.0 < nr < 1.0:
            ok &= nr**hi_e * (1 - 1e-9) <= rho <= nr**lo_e * (1 + 1e-9)
    mono = all(b <= a * (1 + 1e-9) for a, b in zip(norms, norms[1:])) and all(
        b <= a * (1 + 1e-9) for a, b in zip(mods, mods[1:])
    )
    both_small = (norms[-1] <= zero_tol) == (mods[-1] <= zero_tol)
    return ConvergenceReport(tuple(norms), tuple(mods), bool(ok and mono and both_small and norms[-1] <= zero_tol))
