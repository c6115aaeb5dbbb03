"""Integrand families ``φ(x, ξ)`` for the operator ``Δ(φ(x, |Δu|) Δu)``.

Supported tags:

``power``           ``ξ^{p-2}``
``mean_curvature``  ``(1 + ξ²)^{(p-2)/2}``
``capillarity``     ``(1 + ξ^p / sqrt(1 + ξ^{2p})) ξ^{p-2}``
``double_phase``    ``φ₁ + V φ₂`` with exponents ``p₁ <= p₂``
``double_phase_log`` same, second phase additionally weighted by ``log(e + |x|)``

Each family comes with the closed-form antiderivative
``Φ(x, t) = ∫_0^t s φ(x, s) ds`` and the "flux" ``ξ φ(x, |ξ|)`` that the
energy gradient needs.  The flux is evaluated from its own closed form, so
the singular value ``φ(x, 0) = ∞`` (power law with ``p < 2``) never enters a
computation.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridMismatchError, UndefinedBranchError
from .exponent_field import INFINITY, ScalarField, exponent_bounds
from .validation import check_exponent, check_same_grid

__all__ = [
    "BASE_TAGS",
    "TAGS",
    "PhiModel",
    "phi",
    "big_phi",
    "verify_hypotheses",
    "HypothesisCheck",
    "simon_gap",
    "default_b",
    "h2_data",
]

BASE_TAGS = ("power", "mean_curvature", "capillarity")
TAGS = BASE_TAGS + ("double_phase", "double_phase_log")


# -- closed forms on arrays (p and xi broadcast against each other) ---------


def _cap_ratio(xi, p):
    """``ξ^p / sqrt(1 + ξ^{2p})`` without overflow."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        small = xi**p / np.sqrt(1.0 + xi ** (2 * p))
        large = 1.0 / np.sqrt(1.0 + xi ** (-2 * p))
    return np.where(xi <= 1.0, small, large)


def _base_phi(tag, p, xi):
    with np.errstate(divide="ignore", invalid="ignore"):
        if tag == "power":
            return xi ** (p - 2)
        if tag == "mean_curvature":
            return (1.0 + xi**2) ** ((p - 2) / 2)
        if tag == "capillarity":
            return (1.0 + _cap_ratio(xi, p)) * xi ** (p - 2)
    raise ValueError(f"unknown base tag {tag!r}")


def _base_flux(tag, p, xi):
    """``ξ φ(ξ)`` for ``ξ >= 0``; finite at ``ξ = 0`` since ``p > 1``."""
    if tag == "power":
        return xi ** (p - 1)
    if tag == "mean_curvature":
        return xi * (1.0 + xi**2) ** ((p - 2) / 2)
    if tag == "capillarity":
        return (1.0 + _cap_ratio(xi, p)) * xi ** (p - 1)
    raise ValueError(f"unknown base tag {tag!r}")


def _base_dflux(tag, p, xi):
    """``d/dξ (ξ φ(ξ)) = φ + ξ ∂φ/∂ξ``."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if tag == "power":
            return (p - 1) * xi ** (p - 2)
        if tag == "mean_curvature":
            return (1.0 + xi**2) ** ((p - 4) / 2) * (1.0 + (p - 1) * xi**2)
        if tag == "capillarity":
            ratio = _cap_ratio(xi, p)
            # ξ^{2p-2}(1+ξ^{2p})^{-3/2}[(2p-1) + (p-1)ξ^{2p}] rewritten via ratio
            s = 1.0 / (1.0 + xi ** (2 * p))
            extra = ratio * xi ** (p - 2) * s * (2 * p - 1) + ratio * xi ** (p - 2) * (1 - s) * (p - 1)
            return (p - 1) * xi ** (p - 2) + np.where(xi > 0, extra, 0.0)
    raise ValueError(f"unknown base tag {tag!r}")


def _base_bigphi(tag, p, t):
    if tag == "power":
        return t**p / p
    if tag == "mean_curvature":
        return np.expm1((p / 2) * np.log1p(t**2)) / p
    if tag == "capillarity":
        with np.errstate(over="ignore", invalid="ignore"):
            a = t ** (2 * p)
            root = np.where(np.isfinite(a), a / (np.sqrt(1.0 + a) + 1.0), t**p)
        return t**p / p + root / p
    raise ValueError(f"unknown base tag {tag!r}")


def default_b(tag, p_plus):
    """Default growth constant ``b`` for the (H2) check."""
    if tag == "power":
        return 1.0
    if tag == "capillarity":
        return 2.0
    if tag == "mean_curvature":
        return 2.0 ** ((p_plus - 2) / 2) + 1.0
    raise ValueError(f"no default b for {tag!r}")


def _resolve_b(model):
    if model.b is not None:
        return float(model.b)
    if model.is_double_phase:
        return default_b(model.base, exponent_bounds(model.p)[1]) + float(
            model.second_weight.max()
        ) * default_b(model.base2, exponent_bounds(model.p2)[1])
    return default_b(model.tag, exponent_bounds(model.p)[1])


# -- the model --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhiModel:
    """A tagged integrand.

    For the double-phase tags ``p`` is the lower exponent ``p₁`` and ``p2``
    the upper one; ``base``/``base2`` choose the family of each phase.
    ``c`` is the (H3) constant and ``a``/``b`` the (H2) data claimed by the
    caller; ``None`` for ``a``/``b`` means "use the defaults".
    """

    tag: str
    p: ScalarField
    c: float = 1.0
    b: float = None
    a: ScalarField = None
    p2: ScalarField = None
    V: ScalarField = None
    base: str = "power"
    base2: str = "power"
    _weight2: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown phi tag {self.tag!r}; expected one of {TAGS}")
        check_exponent(self.p, 1.0, "p")
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be > 0, got {self.c}")
        if self.b is not None and not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if self.a is not None:
            check_same_grid(self.p, self.a)
            if np.any(self.a.values < 0):
                raise ValueError("a(x) must be nonnegative")
        if self.is_double_phase:
            if self.p2 is None or self.V is None:
                raise ValueError(f"{self.tag} needs p2 and V")
            check_same_grid(self.p, self.p2, self.V)
            check_exponent(self.p2, 1.0, "p2")
            if np.any(self.p.values > self.p2.values):
                raise ValueError("double-phase requires p1(x) <= p2(x) at every node")
            if np.any(self.V.values < 0):
                raise ValueError("V must be nonnegative")
            for b in (self.base, self.base2):
                if b not in BASE_TAGS:
                    raise ValueError(f"unknown base family {b!r}")
            w2 = self.V.values.reshape(-1).copy()
            if self.tag == "double_phase_log":
                r = np.sqrt(sum(c**2 for c in self.grid.coordinates)).reshape(-1)
                w2 = w2 * np.log(np.e + r)
            w2.setflags(write=False)
            object.__setattr__(self, "_weight2", w2)
        elif self.p2 is not None or self.V is not None:
            raise ValueError(f"p2/V only apply to double-phase models, not {self.tag!r}")

    @property
    def grid(self):
        return self.p.grid

    @property
    def is_double_phase(self):
        return self.tag.startswith("double_phase")

    @property
    def p_lower(self):
        return self.p

    @property
    def p_upper(self):
        return self.p2 if self.is_double_phase else self.p

    @property
    def second_weight(self):
        """``V(x)`` (times ``log(e + |x|)`` for the log variant), flat."""
        return self._weight2

    def check_grid(self, grid):
        if grid != self.grid:
            raise GridMismatchError(f"model lives on {self.grid}, expected {grid}")

    def components(self, nodes=slice(None)):
        """``[(family, exponent values, weight)]`` restricted to ``nodes``."""
        if not self.is_double_phase:
            return [(self.tag, self.p.flat[nodes], None)]
        return [
            (self.base, self.p.flat[nodes], None),
            (self.base2, self.p2.flat[nodes], self._weight2[nodes]),
        ]

    def _evaluate(self, fn, xi, nodes=slice(None)):
        total = None
        for family, p, weight in self.components(nodes):
            if np.ndim(xi) > np.ndim(p):
                p = np.reshape(p, np.shape(p) + (1,) * (np.ndim(xi) - np.ndim(p)))
                if weight is not None:
                    weight = np.reshape(weight, np.shape(p))
            val = fn(family, p, xi)
            if weight is not None:
                val = np.where(weight == 0, 0.0, weight * val)
            total = val if total is None else total + val
        return total

    # flat-array API used by the discretization and energy modules
    def phi_flat(self, xi, nodes=slice(None)):
        return self._evaluate(_base_phi, xi, nodes)

    def flux_flat(self, xi):
        """``φ(x, |ξ|) ξ`` at every node (signed ``ξ``)."""
        return np.sign(xi) * self._evaluate(_base_flux, np.abs(xi))

    def dflux_flat(self, xi):
        return self._evaluate(_base_dflux, np.abs(xi))

    def bigphi_flat(self, t, nodes=slice(None)):
        return self._evaluate(_base_bigphi, np.abs(t), nodes)

    def flux_at(self, xi, nodes=slice(None)):
        return self._evaluate(_base_flux, xi, nodes)


def _flat_index(model, x):
    if isinstance(x, (tuple, list, np.ndarray)):
        return int(np.ravel_multi_index(tuple(int(i) for i in x), model.grid.shape))
    return int(x)


def phi(model, x, xi):
    """``φ(x, ξ)`` at node ``x`` (flat index or index tuple).

    Returns :data:`INFINITY` where the formula blows up (``ξ = 0``, ``p < 2``).
    """
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    i = _flat_index(model, x)
    val = float(model.phi_flat(np.float64(xi), np.array([i]))[0])
    if np.isinf(val):
        return INFINITY
    return val


def big_phi(model, x, t):
    """``Φ(x, t) = ∫_0^t s φ(x, s) ds`` from the closed form."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    i = _flat_index(model, x)
    return float(model.bigphi_flat(np.float64(t), np.array([i]))[0])


# -- hypothesis verification ------------------------------------------------


@dataclass
class HypothesisCheck:
    """Outcome of the (H1)-(H3) checks for one model."""

    tag: str
    c: float
    b: float
    n_samples: int
    c_max: float
    c_max_first: float
    c_max_second: float
    h1: str
    h2_passed: bool
    h3_first_passed: bool
    h3_second_passed: bool
    worst_margin_first: float
    worst_margin_second: float
    a_max: float
    violations: list
    n_violations: dict

    @property
    def h3_passed(self):
        return self.h3_first_passed and self.h3_second_passed

    @property
    def passed(self):
        return self.h2_passed and self.h3_passed

    def to_dict(self):
        return {
            "tag": self.tag,
            "passed": self.passed,
            "c": self.c,
            "b": self.b,
            "samples": self.n_samples,
            "c_max": self.c_max,
            "c_max_first": self.c_max_first,
            "c_max_second": self.c_max_second,
            "H1": self.h1,
            "H2": {"passed": self.h2_passed, "a_max": self.a_max, "b": self.b},
            "H3": {
                "passed": self.h3_passed,
                "first_passed": self.h3_first_passed,
                "second_passed": self.h3_second_passed,
                "worst_margin_first": self.worst_margin_first,
                "worst_margin_second": self.worst_margin_second,
            },
            "n_violations": self.n_violations,
            "violations": self.violations,
        }


def _sample_points(n_nodes, samples):
    n_xi = max(2, samples // n_nodes)
    n_used = min(n_nodes, max(1, samples // n_xi))
    nodes = np.unique(np.linspace(0, n_nodes - 1, n_used).round().astype(int))
    xi = np.geomspace(1e-6, 1e6, n_xi)
    return nodes, xi


def verify_hypotheses(model, samples=20000, slack=1e-7, max_listed=50):
    """Sample (H2) and both (H3) inequalities over nodes x log-spaced ξ.

    ξ ranges over ``[1e-6, 1e6]``; ``∂φ/∂ξ`` is a central difference with
    relative step ``1e-6 ξ``.  The largest admissible (H3) constant over the
    samples is reported as ``c_max``.  Violations are report content.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    nodes, xi = _sample_points(model.grid.size, samples)
    X = xi[None, :]
    p_lo = model.p_lower.flat[nodes][:, None]
    p_hi = model.p_upper.flat[nodes][:, None]

    ph = model.phi_flat(X, nodes)
    step = 1e-6 * X
    dphi = (model.phi_flat(X + step, nodes) - model.phi_flat(X - step, nodes)) / (2 * step)
    scale = X ** (p_lo - 2)
    r1 = ph / scale
    r2 = (ph + X * dphi) / scale
    c_first, c_second = float(np.min(r1)), float(np.min(r2))

    tol = model.c * (1.0 - slack)
    bad1 = r1 < tol
    bad2 = r2 < tol

    b = _resolve_b(model)
    flux = model.flux_at(X, nodes)
    excess = flux - b * X ** (p_hi - 1)
    if model.a is None:
        a = np.maximum(0.0, excess.max(axis=1))
        bad_h2 = np.zeros_like(bad1)
    else:
        a = model.a.flat[nodes]
        bad_h2 = excess > a[:, None] * (1 + slack) + slack

    violations = []
    counts = {}
    for name, mask in (("H3 first", bad1), ("H3 second", bad2), ("H2", bad_h2)):
        idx = np.argwhere(mask)
        counts[name] = int(len(idx))
        for i, j in idx[: max(0, max_listed - len(violations))]:
            violations.append({"inequality": name, "node": int(nodes[i]), "xi": float(xi[j])})

    return HypothesisCheck(
        tag=model.tag,
        c=float(model.c),
        b=b,
        n_samples=int(len(nodes) * len(xi)),
        c_max=min(c_first, c_second),
        c_max_first=c_first,
        c_max_second=c_second,
        h1="satisfied by construction (closed-form continuous integrand)",
        h2_passed=not bad_h2.any(),
        h3_first_passed=not bad1.any(),
        h3_second_passed=not bad2.any(),
        worst_margin_first=float(np.min((r1 - model.c) * scale)),
        worst_margin_second=float(np.min((r2 - model.c) * scale)),
        a_max=float(np.max(a)),
        violations=violations,
        n_violations=counts,
    )


def _norm(w):
    """Euclidean norm that does not underflow for subnormal entries."""
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    return scale * float(np.linalg.norm(w / scale)) if scale > 0 else 0.0


def simon_gap(model, x, u, v, c=None):
    """Both sides of the Simon-type monotonicity estimate at node ``x``.

    ``lhs = <φ(|u|)u - φ(|v|)v, u - v>``; ``rhs`` is
    ``c (|u|+|v|)^{p-2} |u-v|²`` when ``p(x) < 2`` and
    ``4^{1-p⁺} c |u-v|^{p}`` otherwise.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("u and v must be finite")
    c = model.c if c is None else c
    i = _flat_index(model, x)
    p = float(model.p.flat[i])
    nu, nv = _norm(u), _norm(v)
    if p < 2 and nu == 0 and nv == 0:
        raise UndefinedBranchError("(u, v) = (0, 0) is excluded when p(x) < 2")
    nodes = np.array([i])
    # φ(|u|) u written as flux(|u|) * u/|u| so |u| = 0 needs no special case
    fu = model.flux_at(np.float64(nu), nodes)[0] * (u / nu if nu > 0 else 0 * u)
    fv = model.flux_at(np.float64(nv), nodes)[0] * (v / nv if nv > 0 else 0 * v)
    d = u - v
    lhs = float(np.dot(fu - fv, d))
    nd = _norm(d)
    if p < 2:
        rhs = c * (nu + nv) ** (p - 2) * nd**2
    else:
        p_plus = exponent_bounds(model.p)[1]
        rhs = 4.0 ** (1 - p_plus) * c * nd**p
    return lhs, float(rhs)


def h2_data(model, p_growth=None, n_xi=241):
    """``(a, b)`` for ``|φ(x,ξ)ξ| <= a(x) + b ξ^{p(x)-1}`` at every node.

    Claimed values on the model win; otherwise ``b`` takes the per-family
    default and ``a(x)`` is the largest excess over log-spaced
    ``ξ in [1e-6, 1e6]``.
    """
    p_growth = model.p_upper if p_growth is None else p_growth
    check_same_grid(model.p, p_growth)
    b = _resolve_b(model)
    if model.a is not None:
        return model.a, b
    X = np.geomspace(1e-6, 1e6, n_xi)[None, :]
    nodes = np.arange(model.grid.size)
    excess = model.flux_at(X, nodes) - b * X ** (p_growth.flat[:, None] - 1)
    a = np.maximum(0.0, excess.max(axis=1))
    return ScalarField(model.grid, a.reshape(model.grid.shape)), b
