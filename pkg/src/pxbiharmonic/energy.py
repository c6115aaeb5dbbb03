"""The energy functional, its gradient and the a-priori bound constants.

For exponents ``(p, q, r)``, integrand ``φ`` and ``λ > 0`` the energy is::

    E(u) = ∫ Φ(x, |Δu|) - ∫ |u|^{1-q}/(1-q) - λ ∫ |u|^r / r

The singular potential is not differentiable at ``u = 0``.  For ``ε > 0`` it
is replaced by::

    S_ε(u) = ((u² + ε²)^{(1-q)/2} - ε^{1-q}) / (1-q)

whose derivative is ``s_ε(u) = u (u² + ε²)^{-(q+1)/2}``.  ``S_ε <= S_0`` and
``S_ε`` increases as ``ε`` decreases, so ``E_ε`` decreases to ``E_0``.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .discretization import NavierOperator, integrate
from .exceptions import InvalidFieldError, OutOfRegimeError
from .exponent_field import ScalarField, random_smooth_field
from .phi_models import h2_data
from .validation import check_field, check_positive
from .variable_lebesgue import _luxemburg_flat, conjugate_exponent, luxemburg_norm

__all__ = [
    "EnergyBreakdown",
    "EnergyFunctional",
    "ValleyConstants",
    "energy",
    "energy_gradient",
    "inner_h",
    "coercivity_bound",
    "estimate_embedding_constant",
    "valley_constants",
    "laplacian_norm",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    phi_part: float
    singular_part: float
    reaction_part: float
    lam: float
    eps: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "total", self.phi_part - self.singular_part - self.lam * self.reaction_part
        )

    def to_dict(self):
        return asdict(self)


class EnergyFunctional:
    """Discrete energy restricted to interior nodes.

    All ``*_int`` methods take and return flat arrays over the interior
    nodes, which is the unknown vector of the minimizer.
    """

    def __init__(self, exponents, phi, lam):
        if phi.grid != exponents.grid:
            raise InvalidFieldError("phi model and exponents live on different grids")
        self.exponents = exponents
        self.phi = phi
        self.lam = float(lam)
        self.grid = exponents.grid
        self.op = NavierOperator(self.grid)
        self.interior = self.op.interior
        self.L = self.op.matrix[self.interior][:, self.interior].tocsr()
        self.LT = self.L.T.tocsr()
        self.w = np.ascontiguousarray(self.grid.weights.reshape(-1)[self.interior])
        self.q = exponents.q.flat[self.interior]
        self.r = exponents.r.flat[self.interior]
        self._phi_cache = None

    # helpers between full fields and interior vectors
    def restrict(self, u):
        vals = u.flat if isinstance(u, ScalarField) else np.asarray(u, dtype=float).reshape(-1)
        return np.ascontiguousarray(vals[self.interior])

    def extend(self, u_int):
        full = np.zeros(self.grid.size)
        full[self.interior] = u_int
        return ScalarField(self.grid, full.reshape(self.grid.shape))

    def _phi_int(self, lu):
        full = np.zeros(self.grid.size)
        full[self.interior] = lu
        return full

    def _sum(self, vals):
        return float(np.sum(self.w * vals))

    def singular_potential(self, u, eps):
        e = 1.0 - self.q
        if eps == 0:
            return np.abs(u) ** e / e
        return ((u * u + eps * eps) ** (e / 2) - eps**e) / e

    def singular_force(self, u, eps):
        return u * (u * u + eps * eps) ** (-(self.q + 1) / 2)

    def reaction_force(self, u):
        return np.sign(u) * np.abs(u) ** (self.r - 1)

    def parts_int(self, u, eps, singular=True):
        lu = self.L @ u
        bigphi = self._bigphi(lu)
        phi_part = self._sum(bigphi)
        sing = self._sum(self.singular_potential(u, eps)) if singular else 0.0
        reac = self._sum(np.abs(u) ** self.r / self.r)
        return phi_part, sing, reac

    def _bigphi(self, lu):
        # the model is defined on the full grid; pad interior values
        return self.phi.bigphi_flat(self._phi_int(lu))[self.interior]

    def _flux(self, lu):
        return self.phi.flux_flat(self._phi_int(lu))[self.interior]

    def _dflux(self, lu):
        return self.phi.dflux_flat(self._phi_int(lu))[self.interior]

    def value_int(self, u, eps, singular=True):
        a, b, c = self.parts_int(u, eps, singular)
        return a - b - self.lam * c

    def energy_scale_int(self, u, eps):
        """Sum of the magnitudes of the three parts, for round-off estimates."""
        a, b, c = self.parts_int(u, eps)
        return abs(a) + abs(b) + self.lam * abs(c)

    def breakdown_int(self, u, eps, singular=True):
        a, b, c = self.parts_int(u, eps, singular)
        return EnergyBreakdown(a, b, c, self.lam, float(eps))

    def grad_int(self, u, eps, singular=True):
        """Euclidean gradient ``∂E/∂u_i`` over interior nodes."""
        lu = self.L @ u
        g = self.LT @ (self.w * self._flux(lu))
        if singular:
            g -= self.w * self.singular_force(u, eps)
        g -= self.lam * self.w * self.reaction_force(u)
        return g

    def value_and_grad_int(self, u, eps):
        lu = self.L @ u
        phi_part = self._sum(self._bigphi(lu))
        sing = self._sum(self.singular_potential(u, eps))
        reac = self._sum(np.abs(u) ** self.r / self.r)
        g = self.LT @ (self.w * self._flux(lu))
        g -= self.w * self.singular_force(u, eps)
        g -= self.lam * self.w * self.reaction_force(u)
        return phi_part - sing - self.lam * reac, g

    def metric_int(self, u, eps, floor=1e-3):
        """Positive-definite part of the Hessian, used as a descent metric.

        Keeps the convex principal part (``Lᵀ W diag(dflux) L``, with the
        flux derivative floored relative to its mean so it stays invertible
        where ``Δu`` vanishes) plus the convex part of ``-S_ε``; the concave
        reaction term is dropped.
        """
        import scipy.sparse as sp

        lu = self.L @ u
        d = self._dflux(lu)
        finite = np.isfinite(d)
        ref = float(np.mean(d[finite])) if finite.any() else 1.0
        ref = ref if ref > 0 else 1.0
        d = np.clip(np.where(finite, d, np.inf), floor * ref, ref / floor)
        H = self.LT @ sp.diags(self.w * d) @ self.L
        qq = self.q
        s2 = u * u + eps * eps
        # -d/du s_ε(u) = -(ε² - q u²) (u²+ε²)^{-(q+3)/2}
        curv = -(eps * eps - qq * u * u) * s2 ** (-(qq + 3) / 2)
        H = H + sp.diags(self.w * np.maximum(curv, 0.0))
        return H.tocsc()

    def weak_residual_int(self, u, eps):
        """Riesz representer of the weak-form defect on interior nodes."""
        return self.grad_int(u, eps) / self.w


def _functional(spec):
    fn = getattr(spec, "functional", None)
    if isinstance(fn, EnergyFunctional):
        return fn
    return EnergyFunctional(spec.exponents, spec.phi, spec.lam)


def energy(u, spec, eps=0.0, singular=True):
    """Energy breakdown of ``u`` (boundary values are treated as zero).

    ``singular=False`` drops the singular term; it exists for tests of the
    quadratic principal part.
    """
    fn = _functional(spec)
    check_field(u, fn.grid, "u")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    out = fn.breakdown_int(fn.restrict(u), float(eps), singular)
    if not np.isfinite(out.total):
        raise InvalidFieldError("energy is not finite")
    return out


def energy_gradient(u, spec, eps, singular=True):
    """Riesz representer ``g`` of ``dE_ε(u)`` in the quadrature inner product.

    ``inner_h(g, v)`` equals the directional derivative of the smoothed
    energy along any ``v`` vanishing on the boundary; ``g = 0`` on the
    boundary.
    """
    check_positive(eps, "eps")
    fn = _functional(spec)
    check_field(u, fn.grid, "u")
    g = fn.grad_int(fn.restrict(u), float(eps), singular) / fn.w
    return fn.extend(g)


def inner_h(u, v):
    """Quadrature-weighted nodal inner product ``Σ w_i u_i v_i``."""
    check_field(v, u.grid, "v")
    return integrate(u.grid, u.values * v.values)


def laplacian_norm(u, p):
    """``|Δu|_{p(x)}``, the norm used on the solution space."""
    op = NavierOperator(u.grid)
    lu = op.apply_flat(u.flat)
    return _luxemburg_flat(lu, p.flat, u.grid.weights.reshape(-1), u.grid.measure)[0]


def _embedding_ratio(u, spec):
    e = spec.exponents
    w, m = u.grid.weights.reshape(-1), u.grid.measure
    norm = laplacian_norm(u, e.p)
    if norm == 0:
        return 0.0
    s = (1.0 - e.q.flat) * e.p.flat
    a = _luxemburg_flat(u.flat, s, w, m)[0]
    b = _luxemburg_flat(u.flat, e.r.flat, w, m)[0]
    return max(a, b) / norm


def estimate_embedding_constant(spec, n_probes=200, seed=0, probes=None):
    """Estimate ``c₀`` with ``max(|u|_{(1-q)p}, |u|_r) <= c₀ |Δu|_p``.

    The maximum ratio over ``probes`` (default: ``n_probes`` random smooth
    fields from ``seed``).  It can only underestimate the true constant.
    """
    if probes is None:
        rng = np.random.default_rng(seed)
        probes = [random_smooth_field(spec.exponents.grid, rng) for _ in range(n_probes)]
    return max(_embedding_ratio(u, spec) for u in probes)


def coercivity_bound(u, spec, c0=None):
    """Lower bound ``(c/p⁺)‖u‖^{p⁻} - c₀/(1-q⁺) ‖u‖^{1-q⁺} - λc₀/r⁻ ‖u‖^{r⁻}``.

    Only valid for ``‖u‖ = |Δu|_p > 1``.  ``c`` is the model's (H3) constant.
    Returns ``(bound, pieces)``.
    """
    e = spec.exponents
    norm = laplacian_norm(u, e.p)
    if not norm > 1.0:
        raise OutOfRegimeError(f"coercivity chain needs ||u|| > 1, got {norm:.6g}")
    if c0 is None:
        c0 = estimate_embedding_constant(spec)
    c, lam = spec.phi.c, spec.lam
    principal = c / e.p_plus * norm**e.p_minus
    singular = c0 / (1.0 - e.q_plus) * norm ** (1.0 - e.q_plus)
    reaction = lam * c0 / e.r_minus * norm**e.r_minus
    pieces = {
        "norm": norm,
        "c": c,
        "c0": c0,
        "lam": lam,
        "principal": principal,
        "singular": singular,
        "reaction": reaction,
    }
    return principal - singular - reaction, pieces


@dataclass(frozen=True)
class ValleyConstants:
    C1: float
    C2: float
    C3: float
    exponents: tuple

    def bound(self, t):
        """``C1 t + C2 t^{p⁻} - C3 t^{1-q⁻}``."""
        t = np.asarray(t, dtype=float)
        e1, e2, e3 = self.exponents
        return self.C1 * t**e1 + self.C2 * t**e2 - self.C3 * t**e3

    def to_dict(self):
        return {"C1": self.C1, "C2": self.C2, "C3": self.C3, "exponents": list(self.exponents)}


def valley_constants(v, spec):
    """Constants of the small-amplitude upper bound ``E(tv) <= C1 t + C2 t^{p⁻} - C3 t^{1-q⁻}``."""
    e = spec.exponents
    check_field(v, e.grid, "v")
    vals = v.values
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("valley profile must satisfy 0 <= v <= 1")
    if np.any(vals[e.grid.boundary_mask] != 0):
        raise ValueError("valley profile must vanish on the boundary")
    if not np.any(vals):
        raise ValueError("valley profile must not vanish identically")
    a, b = h2_data(spec.phi, p_growth=e.p)
    lv = NavierOperator(e.grid)(v)
    abs_lv = ScalarField(e.grid, np.abs(lv.values))
    a_norm = luxemburg_norm(a, conjugate_exponent(e.p)).value
    C1 = 2.0 * a_norm * luxemburg_norm(abs_lv, e.p).value
    C2 = b / e.p_minus * integrate(e.grid, np.abs(lv.values) ** e.p.values)
    C3 = integrate(e.grid, vals ** (1.0 - e.q.values) / (1.0 - e.q.values))
    return ValleyConstants(C1, C2, C3, (1.0, e.p_minus, 1.0 - e.q_minus))
