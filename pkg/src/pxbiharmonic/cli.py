"""Command-line front end.

Usage::

    pxbiharmonic verify|solve|valley|sweep|norm --config run.json [--out DIR] [--seed N]

Exit codes: 0 success, 1 mathematical failure (hypothesis or solve), 2 usage
or config error.  Every output file is written atomically and is a pure
function of the config, the referenced field files and the seed.
"""

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from ._io import atomic_write_text
from .energy import valley_constants
from .exceptions import (
    ConfigError,
    HypothesisViolationError,
    InvalidFieldError,
    PxBiharmonicError,
    StageFailureError,
    ValleyNotFoundError,
)
from .exponent_field import (
    ExponentTriple,
    Grid,
    ScalarField,
    check_theorem_hypotheses,
    load_field,
    random_smooth_field,
    save_field,
)
from .minimizer import ProblemSpec, bump_profile, lambda_sweep, minimize, valley_scan
from .phi_models import TAGS, PhiModel, simon_gap, verify_hypotheses
from .variable_lebesgue import (
    holder_check,
    luxemburg_norm,
    modular,
    modular_convergence_check,
    modular_norm_relations_check,
)

__all__ = ["RunConfig", "load_config", "build_problem", "main", "COMMANDS"]

COMMANDS = ("verify", "solve", "valley", "sweep", "norm")
EXIT_OK, EXIT_MATH, EXIT_CONFIG = 0, 1, 2
DEFAULT_SEED = 42


# -- config -----------------------------------------------------------------


def _block(cls, data, name):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad '{name}' block: {exc}") from exc


def _as_float(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return float(value)


def _as_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _as_spec(value, name):
    """An exponent/field spec: number, affine string or field-file path."""
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{name} must be a number or a string, got {value!r}")
    return _as_float(value, name) if not isinstance(value, str) else value


@dataclass
class DomainConfig:
    dim: int = 1
    extents: list = field(default_factory=lambda: [1.0])
    counts: list = field(default_factory=lambda: [201])

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError("domain.dim must be 1 or 2")
        if not (isinstance(self.extents, list) and isinstance(self.counts, list)):
            raise ConfigError("domain.extents and domain.counts must be lists")
        if len(self.extents) != self.dim or len(self.counts) != self.dim:
            raise ConfigError("domain.extents and domain.counts need one entry per dimension")
        self.extents = [_as_float(x, "domain.extents") for x in self.extents]
        self.counts = [_as_int(n, "domain.counts", 3) for n in self.counts]
        if min(self.extents) <= 0:
            raise ConfigError("domain.extents must be positive")


@dataclass
class ExponentConfig:
    p: object = 2.5
    q: object = 0.5
    r: object = 1.5

    def __post_init__(self):
        for name in ("p", "q", "r"):
            setattr(self, name, _as_spec(getattr(self, name), f"exponents.{name}"))


@dataclass
class PhiConfig:
    tag: str = "power"
    p: object = None
    V: object = None
    log_weight: bool = False
    c: float = 1.0
    b: object = None
    a: object = None
    base: str = "power"
    base2: str = "power"

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ConfigError(f"phi.tag must be one of {TAGS}, got {self.tag!r}")
        if not isinstance(self.log_weight, bool):
            raise ConfigError("phi.log_weight must be true or false")
        if self.p is not None:
            if isinstance(self.p, list):
                if len(self.p) != 2:
                    raise ConfigError("phi.p as a list must be [p1, p2]")
                self.p = [_as_spec(x, "phi.p") for x in self.p]
            else:
                self.p = _as_spec(self.p, "phi.p")
        if self.V is not None:
            self.V = _as_spec(self.V, "phi.V")
        if self.a is not None:
            self.a = _as_spec(self.a, "phi.a")
        self.c = _as_float(self.c, "phi.c")
        if self.b is not None:
            self.b = _as_float(self.b, "phi.b")

    @property
    def model_tag(self):
        if self.tag == "double_phase" and self.log_weight:
            return "double_phase_log"
        return self.tag


@dataclass
class SolveConfig:
    lam: float = 1.0
    lambdas: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
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
    residual_tol: float = 1e-6
    n_probes: int = 20
    t_min: float = 1e-6
    t_max: float = 1.0
    n_t: int = 25
    jobs: int = 1

    def __post_init__(self):
        for name in ("lam", "eps0", "eps_decay", "eps_min", "gtol", "ftol", "armijo",
                     "backtrack", "residual_tol", "t_min", "t_max"):
            setattr(self, name, _as_float(getattr(self, name), f"solve.{name}"))
        for name in ("window", "max_iter", "n_probes", "n_t", "jobs"):
            setattr(self, name, _as_int(getattr(self, name), f"solve.{name}"))
        if not isinstance(self.lambdas, list) or not self.lambdas:
            raise ConfigError("solve.lambdas must be a nonempty list")
        self.lambdas = [_as_float(x, "solve.lambdas") for x in self.lambdas]
        if not (0 < self.t_min < self.t_max):
            raise ConfigError("need 0 < solve.t_min < solve.t_max")

    def knobs(self):
        keys = ("eps0", "eps_decay", "eps_min", "gtol", "ftol", "window", "max_iter",
                "armijo", "backtrack", "metric", "residual_tol", "n_probes")
        out = {k: getattr(self, k) for k in keys}
        out["t_grid"] = tuple(np.logspace(np.log10(self.t_min), np.log10(self.t_max), self.n_t))
        return out


@dataclass
class VerifyConfig:
    samples: int = 20000
    simon_samples: int = 10000
    battery_samples: int = 100
    sequences: int = 10

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _as_int(getattr(self, f.name), f"verify.{f.name}"))


@dataclass
class NormConfig:
    field: str = None
    exponent: object = "p"

    def __post_init__(self):
        if self.field is not None and not isinstance(self.field, str):
            raise ConfigError("norm.field must be a path")
        self.exponent = _as_spec(self.exponent, "norm.exponent")


_BLOCKS = {
    "domain": DomainConfig,
    "exponents": ExponentConfig,
    "phi": PhiConfig,
    "solve": SolveConfig,
    "verify": VerifyConfig,
    "norm": NormConfig,
}


@dataclass
class RunConfig:
    """A validated run configuration.

    ``to_dict`` gives the canonical document (every default filled in);
    ``from_dict(to_dict())`` reproduces an equal config.
    """

    domain: DomainConfig
    exponents: ExponentConfig
    phi: PhiConfig
    solve: SolveConfig
    verify: VerifyConfig
    norm: NormConfig
    seed: int = DEFAULT_SEED
    out: str = "out"
    base_dir: str = field(default=".", compare=False, repr=False)

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - set(_BLOCKS) - {"seed", "out"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        blocks = {name: _block(kind, data.get(name), name) for name, kind in _BLOCKS.items()}
        seed = _as_int(data.get("seed", DEFAULT_SEED), "seed", 0)
        out = data.get("out", "out")
        if not isinstance(out, str):
            raise ConfigError("out must be a path")
        return cls(**blocks, seed=seed, out=out, base_dir=base_dir)

    def to_dict(self):
        d = {name: dict(vars(getattr(self, name))) for name in _BLOCKS}
        d["seed"] = self.seed
        d["out"] = self.out
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# -- building the problem ---------------------------------------------------

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(rf"([+-]?)({_NUM})?(?:(?(2)\*)([xy]))?")


def parse_affine(expr, dim):
    """Parse ``"a + b*x + c*y"`` into ``(a, [b, c])``; ``None`` if not affine."""
    s = expr.replace(" ", "")
    if not s:
        return None
    const, coef = 0.0, [0.0, 0.0]
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if m is None or m.end() == pos or (pos > 0 and not m.group(1)):
            return None
        sign = -1.0 if m.group(1) == "-" else 1.0
        num, var = m.group(2), m.group(3)
        if num is None and var is None:
            return None
        value = sign * (float(num) if num is not None else 1.0)
        if var is None:
            const += value
        else:
            axis = "xy".index(var)
            if axis >= dim:
                raise ConfigError(f"expression {expr!r} uses {var} on a {dim}D domain")
            coef[axis] += value
        pos = m.end()
    return const, coef[:dim]


def field_from_spec(spec, grid, base_dir, name):
    """Turn a config value into a ScalarField on ``grid``."""
    if isinstance(spec, float):
        return grid.constant(spec)
    parsed = parse_affine(spec, grid.dim)
    if parsed is not None:
        const, coef = parsed
        vals = np.full(grid.shape, const)
        for c, coord in zip(coef, grid.coordinates):
            vals = vals + c * coord
        return ScalarField(grid, vals)
    path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
    if not os.path.exists(path):
        raise ConfigError(f"{name}: {spec!r} is neither an affine expression nor a file")
    try:
        f = load_field(path)
    except (InvalidFieldError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{name}: cannot load field file {spec!r}: {exc}") from exc
    if f.grid != grid:
        raise ConfigError(f"{name}: field file {spec!r} lives on a different grid")
    return f


def build_grid(cfg):
    d = cfg.domain
    return Grid(tuple(d.counts), tuple(d.extents))


def build_exponents(cfg, grid):
    e = cfg.exponents
    p, q, r = (field_from_spec(getattr(e, n), grid, cfg.base_dir, f"exponents.{n}") for n in "pqr")
    try:
        return ExponentTriple(p, q, r)
    except ValueError as exc:
        raise ConfigError(f"invalid exponents: {exc}") from exc


def build_phi(cfg, exponents):
    ph, grid, base = cfg.phi, exponents.grid, cfg.base_dir
    tag = ph.model_tag
    double = tag.startswith("double_phase")
    p1, p2 = exponents.p, None
    if isinstance(ph.p, list):
        if not double:
            raise ConfigError("phi.p as [p1, p2] only applies to double-phase models")
        p1 = field_from_spec(ph.p[0], grid, base, "phi.p[0]")
        p2 = field_from_spec(ph.p[1], grid, base, "phi.p[1]")
    elif ph.p is not None:
        if double:
            raise ConfigError("double-phase models need phi.p = [p1, p2]")
        p1 = field_from_spec(ph.p, grid, base, "phi.p")
    elif double:
        raise ConfigError("double-phase models need phi.p = [p1, p2]")
    if ph.log_weight and ph.tag != "double_phase":
        raise ConfigError("phi.log_weight only applies to double_phase")
    V = field_from_spec(ph.V, grid, base, "phi.V") if ph.V is not None else None
    if double and V is None:
        raise ConfigError("double-phase models need phi.V")
    a = field_from_spec(ph.a, grid, base, "phi.a") if ph.a is not None else None
    kw = dict(c=ph.c, b=ph.b, a=a)
    if double:
        kw.update(p2=p2, V=V, base=ph.base, base2=ph.base2)
    elif V is not None:
        raise ConfigError("phi.V only applies to double-phase models")
    try:
        return PhiModel(tag, p1, **kw)
    except ValueError as exc:
        raise ConfigError(f"invalid phi block: {exc}") from exc


def build_problem(cfg, lam=None):
    """``ProblemSpec`` for ``cfg``; exponent hypotheses are checked here."""
    grid = build_grid(cfg)
    exponents = build_exponents(cfg, grid)
    model = build_phi(cfg, exponents)
    lam = cfg.solve.lam if lam is None else lam
    try:
        return ProblemSpec(exponents, model, lam=lam, **cfg.solve.knobs())
    except InvalidFieldError as exc:
        raise ConfigError(str(exc)) from exc
    except HypothesisViolationError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid solve block: {exc}") from exc


# -- output helpers ---------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("nan" if x != x else ("inf" if x > 0 else "-inf"))
    return obj


def write_json(path, obj):
    atomic_write_text(path, json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    atomic_write_text(path, buf.getvalue())


# -- commands ---------------------------------------------------------------


def _simon_battery(model, n, rng, c):
    nodes = rng.integers(0, model.grid.size, size=n)
    uv = rng.uniform(-10.0, 10.0, size=(n, 2, 2))
    worst, bad = math.inf, []
    for i, (u, v) in zip(nodes, uv):
        lhs, rhs = simon_gap(model, int(i), u, v, c=c)
        gap = lhs - rhs
        worst = min(worst, gap)
        if gap < -1e-9 * max(1.0, abs(rhs)):
            bad.append({"node": int(i), "u": u.tolist(), "v": v.tolist(), "lhs": lhs, "rhs": rhs})
    return {"samples": n, "c": c, "worst_gap": worst, "violations": bad[:50],
            "n_violations": len(bad), "passed": not bad}


def _lebesgue_battery(exponents, n, n_seq, rng):
    grid, p = exponents.grid, exponents.p
    holder_fail = relation_fail = 0
    worst_holder = math.inf
    for _ in range(n):
        u = random_smooth_field(grid, rng, amplitude=float(rng.uniform(0.1, 10.0)))
        v = random_smooth_field(grid, rng, amplitude=float(rng.uniform(0.1, 10.0)))
        h = holder_check(u, v, p)
        worst_holder = min(worst_holder, h.rhs - h.lhs)
        holder_fail += not h.passed
        relation_fail += not modular_norm_relations_check(u, p).passed
    seq_fail = 0
    for _ in range(n_seq):
        u = random_smooth_field(grid, rng)
        w = random_smooth_field(grid, rng, amplitude=float(rng.uniform(0.5, 20.0)))
        seq_fail += not modular_convergence_check(u, w, p).passed
    return {
        "samples": n,
        "holder_failures": holder_fail,
        "holder_worst_margin": worst_holder,
        "relations_failures": relation_fail,
        "sequences": n_seq,
        "convergence_failures": seq_fail,
        "passed": holder_fail == relation_fail == seq_fail == 0,
    }


def cmd_verify(cfg, out):
    grid = build_grid(cfg)
    exponents = build_exponents(cfg, grid)
    model = build_phi(cfg, exponents)
    rng = np.random.default_rng(cfg.seed)
    structural = check_theorem_hypotheses(exponents)
    hyp = verify_hypotheses(model, samples=cfg.verify.samples)
    c_simon = hyp.c_max if hyp.c_max > 0 else model.c
    simon = _simon_battery(model, cfg.verify.simon_samples, rng, c_simon)
    lebesgue = _lebesgue_battery(exponents, cfg.verify.battery_samples, cfg.verify.sequences, rng)
    warnings = []
    if not hyp.h3_passed:
        warnings.append("H3 fails empirically for this model; see phi.H3 and phi.violations")
    if not simon["passed"] and not hyp.h3_passed:
        warnings.append("Simon-type inequality violated; expected when H3 fails")
    failed = []
    if not structural.passed:
        failed += [f"exponents: {name}" for name in structural.failed_inequalities]
    if not hyp.h2_passed:
        failed.append("phi: H2")
    if not simon["passed"] and hyp.h3_passed:
        failed.append("simon")
    if not lebesgue["passed"]:
        failed.append("lebesgue")
    report = {
        "seed": cfg.seed,
        "exponents": structural.to_dict(),
        "phi": hyp.to_dict(),
        "simon": simon,
        "lebesgue": lebesgue,
        "warning": bool(warnings),
        "warnings": warnings,
        "failed": failed,
        "passed": not failed,
    }
    write_json(os.path.join(out, "verify.json"), report)
    for msg in warnings:
        print(f"warning: {msg}", file=sys.stderr)
    for msg in failed:
        print(f"failed: {msg}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_MATH


def _check_model(spec):
    """Structural (H2) check before a solve; (H3) failures only warn."""
    hyp = verify_hypotheses(spec.phi)
    if not hyp.h2_passed:
        raise HypothesisViolationError("phi model fails (H2)", hyp)
    if not hyp.h3_passed:
        print("warning: H3 fails empirically for this model", file=sys.stderr)
    return hyp


def cmd_solve(cfg, out):
    spec = build_problem(cfg)
    hyp = _check_model(spec)
    result = minimize(spec)
    save_field(result.u0, os.path.join(out, "u0.json"))
    doc = result.to_dict()
    doc["h3_warning"] = not hyp.h3_passed
    write_json(os.path.join(out, "result.json"), doc)
    write_csv(os.path.join(out, "trace.csv"), ["iter", "eps", "E", "grad_norm", "step"],
              result.trace_rows())
    print(f"m_hat = {result.m_hat:.12g}  residual = {result.residual:.3e}  status = {result.status}")
    return EXIT_OK if result.success else EXIT_MATH


def cmd_valley(cfg, out):
    spec = build_problem(cfg)
    _check_model(spec)
    v = bump_profile(spec.grid)
    consts = valley_constants(v, spec)
    try:
        scan = valley_scan(spec, v)
        t_grid, energies, t_star = scan.t_grid, scan.energies, scan.t_star
    except ValleyNotFoundError as exc:
        print(f"valley not found: {exc}", file=sys.stderr)
        t_grid = tuple(float(t) for t in spec.t_grid)
        fn = spec.functional
        energies = tuple(fn.value_int(t * fn.restrict(v), 0.0) for t in t_grid)
        t_star = None
    bounds = [float(b) for b in consts.bound(np.asarray(t_grid))]
    write_csv(os.path.join(out, "valley.csv"), ["t", "E", "bound"], zip(t_grid, energies, bounds))
    below = all(e <= b for e, b in zip(energies, bounds))
    write_json(os.path.join(out, "valley.json"),
               {"t_star": t_star, "constants": consts.to_dict(), "below_bound": below})
    if not below:
        print("E(tv) exceeds the valley bound somewhere", file=sys.stderr)
    return EXIT_OK if (t_star is not None and below) else EXIT_MATH


def cmd_sweep(cfg, out):
    spec = build_problem(cfg)
    _check_model(spec)
    table = lambda_sweep(spec, cfg.solve.lambdas, jobs=cfg.solve.jobs)
    write_csv(os.path.join(out, "sweep.csv"), ["lambda", "m_hat", "norm", "residual", "status"],
              table.rows())
    if not table.monotone:
        print("m_hat is not nonincreasing in lambda", file=sys.stderr)
    return EXIT_OK if table.success else EXIT_MATH


def cmd_norm(cfg, out, field_path=None):
    grid = build_grid(cfg)
    path = field_path or cfg.norm.field
    if path is None:
        raise ConfigError("norm needs a field file (norm.field or --field)")
    base = os.getcwd() if field_path is not None else cfg.base_dir
    u = field_from_spec(path, grid, base, "norm.field")
    spec = cfg.norm.exponent
    if spec in ("p", "q", "r"):
        p = field_from_spec(getattr(cfg.exponents, spec), grid, cfg.base_dir, f"exponents.{spec}")
    else:
        p = field_from_spec(spec, grid, cfg.base_dir, "norm.exponent")
    if np.any(p.values <= 0):
        raise ConfigError("norm exponent must be positive")
    print(f"norm = {luxemburg_norm(u, p).value:.12g}")
    print(f"modular = {modular(u, p):.12g}")
    return EXIT_OK


_HANDLERS = {
    "verify": cmd_verify,
    "solve": cmd_solve,
    "valley": cmd_valley,
    "sweep": cmd_sweep,
    "norm": cmd_norm,
}


def make_parser():
    ap = argparse.ArgumentParser(prog="pxbiharmonic", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="sampling seed (overrides the config)")
    ap.add_argument("--field", help="field file for the norm command")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg.seed = args.seed
        out = args.out if args.out is not None else cfg.out
        if args.command == "norm":
            return cmd_norm(cfg, out, args.field)
        os.makedirs(out, exist_ok=True)
        return _HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolationError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_MATH
    except (ValleyNotFoundError, StageFailureError, PxBiharmonicError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
