"""Grids, nodal fields and variable exponents.

A :class:`Grid` discretizes an interval ``(0, L)`` or a rectangle
``(0, Lx) x (0, Ly)`` with uniformly spaced nodes.  Everything downstream
(quadrature, finite differences, norms) works with nodal values stored in a
:class:`ScalarField`.
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._io import atomic_write_text
from .exceptions import GridMismatchError, InvalidFieldError
from .validation import check_exponent, check_same_grid, check_values

__all__ = [
    "Grid",
    "ScalarField",
    "ExponentTriple",
    "INFINITY",
    "CriticalExponent",
    "HypothesisReport",
    "exponent_bounds",
    "sobolev_critical_exponent",
    "check_theorem_hypotheses",
    "random_smooth_field",
    "field_to_dict",
    "field_from_dict",
    "save_field",
    "load_field",
]


class _Infinity:
    """Tagged ``+inf`` for critical exponents.

    It orders above every real number but deliberately supports no
    arithmetic, so it can never leak into a computation as a float would.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("pxbiharmonic.INFINITY")

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self


INFINITY = _Infinity()


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``(0, extents[0]) x ...`` (1D or 2D).

    Nodes on the outer edge are boundary nodes, all others are interior.
    """

    counts: tuple
    extents: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        if len(counts) not in (1, 2) or len(counts) != len(extents):
            raise ValueError(f"grid must be 1D or 2D, got counts={counts}, extents={extents}")
        if any(c < 3 for c in counts):
            raise ValueError(f"need at least 3 nodes per axis, got {counts}")
        if any(not np.isfinite(e) or e <= 0 for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "extents", extents)

    @classmethod
    def uniform(cls, n, length=1.0, dim=1):
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return tuple(e / (c - 1) for c, e in zip(self.counts, self.extents))

    @property
    def measure(self):
        return float(np.prod(self.extents))

    @cached_property
    def axes(self):
        return tuple(np.linspace(0.0, e, c) for c, e in zip(self.counts, self.extents))

    @cached_property
    def coordinates(self):
        """Tuple of coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_mask(self):
        mask = ~self.boundary_mask
        mask.setflags(write=False)
        return mask

    @cached_property
    def weights(self):
        """Composite trapezoidal weights, tensorized over axes."""
        w = np.ones(())
        for c, h in zip(self.counts, self.spacing):
            w1 = np.full(c, h)
            w1[0] = w1[-1] = 0.5 * h
            w = np.multiply.outer(w, w1)
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        return w

    def node_coordinates(self, index):
        index = np.unravel_index(index, self.shape) if np.isscalar(index) else tuple(index)
        return np.array([ax[i] for ax, i in zip(self.axes, index)])

    def sample(self, func):
        """Evaluate ``func(*coordinates)`` on the nodes and wrap it as a field."""
        vals = np.broadcast_to(np.asarray(func(*self.coordinates), dtype=float), self.shape)
        return ScalarField(self, vals)

    def constant(self, value):
        return ScalarField(self, np.full(self.shape, float(value)))

    def zeros(self):
        return self.constant(0.0)

    def to_dict(self):
        return {"dim": self.dim, "counts": list(self.counts), "extents": list(self.extents)}

    @classmethod
    def from_dict(cls, d):
        grid = cls(tuple(d["counts"]), tuple(d["extents"]))
        if "dim" in d and int(d["dim"]) != grid.dim:
            raise InvalidFieldError(f"grid dim {d['dim']} does not match counts {grid.counts}")
        return grid


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real nodal values on a :class:`Grid`; immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = check_values(self.values, self.grid.shape).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def flat(self):
        return self.values.reshape(-1)

    def with_values(self, values):
        return ScalarField(self.grid, values)

    def equals(self, other):
        """Bitwise equality of grid and values."""
        return (
            isinstance(other, ScalarField)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    def _binary(self, other, op):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")
            other = other.values
        return ScalarField(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __abs__(self):
        return ScalarField(self.grid, np.abs(self.values))

    def __repr__(self):
        return f"ScalarField(grid={self.grid}, min={self.values.min():.6g}, max={self.values.max():.6g})"


def exponent_bounds(f):
    """Return ``(inf, sup)`` of a field over the grid nodes."""
    vals = f.values if isinstance(f, ScalarField) else check_values(f)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class ExponentTriple:
    """Exponents ``p`` (principal), ``q`` (singular) and ``r`` (reaction)."""

    p: ScalarField
    q: ScalarField
    r: ScalarField
    p_minus: float = field(init=False)
    p_plus: float = field(init=False)
    q_minus: float = field(init=False)
    q_plus: float = field(init=False)
    r_minus: float = field(init=False)
    r_plus: float = field(init=False)

    def __post_init__(self):
        check_same_grid(self.p, self.q, self.r)
        check_exponent(self.p, 1.0, "p")
        for name in ("p", "q", "r"):
            lo, hi = exponent_bounds(getattr(self, name))
            object.__setattr__(self, f"{name}_minus", lo)
            object.__setattr__(self, f"{name}_plus", hi)

    @property
    def grid(self):
        return self.p.grid

    @classmethod
    def constant(cls, grid, p, q, r):
        return cls(grid.constant(p), grid.constant(q), grid.constant(r))


@dataclass(frozen=True, eq=False)
class CriticalExponent:
    """Nodewise critical exponent with an explicit infinite mask.

    ``values`` holds the finite branch; entries under ``is_infinite`` are
    zero-filled placeholders and must not be read as numbers.
    """

    grid: Grid
    values: np.ndarray
    is_infinite: np.ndarray

    def at(self, index):
        index = np.unravel_index(index, self.grid.shape) if np.isscalar(index) else tuple(index)
        return INFINITY if self.is_infinite[index] else float(self.values[index])

    def exceeds(self, f):
        """Boolean mask of nodes where ``f < critical exponent`` strictly."""
        vals = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
        return self.is_infinite | (vals < self.values)

    @property
    def all_infinite(self):
        return bool(np.all(self.is_infinite))


def sobolev_critical_exponent(p, order=2, N=None):
    """Critical embedding exponent for ``W^{order, p(x)}``.

    ``N p / (N - order p)`` where ``order * p < N``, :data:`INFINITY`
    elsewhere.  ``N`` defaults to the grid dimension.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    check_exponent(p, 1.0, "p")
    N = p.grid.dim if N is None else int(N)
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    pv = p.values
    infinite = order * pv >= N
    finite = np.zeros_like(pv)
    np.divide(N * pv, N - order * pv, out=finite, where=~infinite)
    finite.setflags(write=False)
    infinite.setflags(write=False)
    return CriticalExponent(p.grid, finite, infinite)


CHAIN = ("0<q", "q<1", "1<r", "r<p", "p<p*")


@dataclass
class HypothesisReport:
    """Per-node outcome of the ``0 < q < 1 < r < p < p*`` chain."""

    passed: bool
    n_nodes: int
    violations: dict
    dimension: int

    @property
    def failed_inequalities(self):
        return [k for k in CHAIN if self.violations.get(k)]

    def violating_nodes(self, inequality=None):
        if inequality is not None:
            return [v["index"] for v in self.violations.get(inequality, [])]
        seen = []
        for k in CHAIN:
            for v in self.violations.get(k, []):
                if v["index"] not in seen:
                    seen.append(v["index"])
        return seen

    def to_dict(self):
        return {
            "passed": self.passed,
            "n_nodes": self.n_nodes,
            "dimension": self.dimension,
            "failed": self.failed_inequalities,
            "violations": {k: self.violations.get(k, []) for k in CHAIN},
        }


def check_theorem_hypotheses(e, N=None):
    """Check ``0 < q < 1 < r < p < p*`` at every node of ``e.grid``."""
    if not isinstance(e, ExponentTriple):
        raise TypeError("expected an ExponentTriple")
    grid = check_same_grid(e.p, e.q, e.r)
    N = grid.dim if N is None else int(N)
    crit = sobolev_critical_exponent(e.p, order=2, N=N)
    p, q, r = e.p.values, e.q.values, e.r.values
    ok = {
        "0<q": q > 0,
        "q<1": q < 1,
        "1<r": r > 1,
        "r<p": r < p,
        "p<p*": crit.exceeds(p),
    }
    violations = {}
    for name in CHAIN:
        bad = np.argwhere(~ok[name])
        violations[name] = [
            {
                "index": [int(i) for i in idx],
                "x": [float(c) for c in grid.node_coordinates(tuple(idx))],
            }
            for idx in bad
        ]
    passed = all(not v for v in violations.values())
    return HypothesisReport(passed, grid.size, violations, N)


def random_smooth_field(grid, rng, n_modes=8, decay=2.0, amplitude=1.0):
    """Random sine series vanishing on the boundary.

    Coefficients are standard normal scaled by ``|k|**-decay``, so the
    lowest modes dominate.
    """
    if grid.dim == 1:
        k = np.arange(1, n_modes + 1)
        coef = rng.standard_normal(n_modes) / k**decay
        basis = np.sin(np.pi * np.outer(grid.axes[0] / grid.extents[0], k))
        vals = basis @ coef
    else:
        k = np.arange(1, n_modes + 1)
        coef = rng.standard_normal((n_modes, n_modes)) / np.hypot(*np.meshgrid(k, k, indexing="ij")) ** decay
        bx = np.sin(np.pi * np.outer(grid.axes[0] / grid.extents[0], k))
        by = np.sin(np.pi * np.outer(grid.axes[1] / grid.extents[1], k))
        vals = bx @ coef @ by.T
    vals = np.where(grid.boundary_mask, 0.0, vals)
    return ScalarField(grid, amplitude * vals)


def field_to_dict(f):
    return {"grid": f.grid.to_dict(), "values": [float(v) for v in f.values.reshape(-1)]}


def field_from_dict(d):
    try:
        grid = Grid.from_dict(d["grid"])
        values = np.asarray(d["values"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise InvalidFieldError(f"malformed field document: {exc}") from exc
    if values.ndim != 1 or values.size != grid.size:
        raise InvalidFieldError(f"expected {grid.size} row-major values, got shape {values.shape}")
    return ScalarField(grid, values.reshape(grid.shape))


def save_field(f, path):
    atomic_write_text(path, json.dumps(field_to_dict(f)) + "\n")


def load_field(path):
    with open(path, encoding="utf-8") as fh:
        return field_from_dict(json.load(fh))
