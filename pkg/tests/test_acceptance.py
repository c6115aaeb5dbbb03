"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also echoed in the pytest
terminal summary).  Run ``python3 tests/test_acceptance.py`` for the lines
alone.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import ACCEPTANCE_LINES
from pxbiharmonic import (
    ExponentTriple,
    Grid,
    NavierOperator,
    PhiModel,
    ProblemSpec,
    big_phi,
    bump_profile,
    coercivity_bound,
    energy,
    energy_gradient,
    estimate_embedding_constant,
    holder_check,
    inner_h,
    laplacian,
    luxemburg_norm,
    modular,
    modular_convergence_check,
    modular_norm_relations_check,
    random_smooth_field,
    simon_gap,
    valley_constants,
    valley_scan,
    verify_hypotheses,
)
from pxbiharmonic.cli import main as cli_main
from pxbiharmonic.energy import laplacian_norm

SEED = 42


def report(number, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    passed = bool(ok and within)
    budget = f" / {limit:g} s" if limit is not None else ""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail} [{elapsed:.2f} s{budget}]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def criterion_spec(n=201, lam=1.0):
    g = Grid.uniform(n)
    e = ExponentTriple.constant(g, 2.5, 0.5, 1.5)
    return ProblemSpec(e, PhiModel("power", e.p), lam=lam)


def test_criterion_01_luxemburg_norm():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    g = Grid.uniform(201)
    worst_red = worst_hom = 0.0
    for p0 in (1.5, 2.0, 3.0):
        p = g.constant(p0)
        for _ in range(100):
            u = random_smooth_field(g, rng, amplitude=float(10 ** rng.uniform(-2, 2)))
            n = luxemburg_norm(u, p).value
            worst_red = max(worst_red, abs(n - modular(u, p) ** (1 / p0)) / n)
            c = float(rng.uniform(-20, 20))
            worst_hom = max(worst_hom, abs(luxemburg_norm(u * c, p).value - abs(c) * n) / (abs(c) * n))
    ok = worst_red < 1e-8 and worst_hom < 1e-8
    assert report(1, ok, f"max rel err reduction {worst_red:.2e}, homogeneity {worst_hom:.2e} (< 1e-8)",
                  time.perf_counter() - t0, 10)


def _random_exponent(g, rng):
    base = float(rng.uniform(1.1, 3.0))
    bump = np.abs(random_smooth_field(g, rng).values)
    return g.zeros().with_values(base + float(rng.uniform(0, 2)) * bump / max(bump.max(), 1e-12))


def test_criterion_02_inequality_battery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    g = Grid.uniform(51)
    hol = l4 = l5 = 0
    n_l4 = n_l5 = 0
    for _ in range(1000):
        p = _random_exponent(g, rng)
        u = random_smooth_field(g, rng, amplitude=float(10 ** rng.uniform(-2, 2)))
        v = random_smooth_field(g, rng, amplitude=float(10 ** rng.uniform(-2, 2)))
        hol += not holder_check(u, v, p, tol=1e-9).passed
        rel = modular_norm_relations_check(u, p, slack=1e-9)
        if rel.branch == "norm>1":
            n_l4 += 1
            l4 += not rel.passed
        elif rel.branch == "norm<1":
            n_l5 += 1
            l5 += not rel.passed
    l6 = 0
    for _ in range(50):
        p = _random_exponent(g, rng)
        u = random_smooth_field(g, rng)
        w = random_smooth_field(g, rng, amplitude=float(10 ** rng.uniform(-1, 2)))
        l6 += not modular_convergence_check(u, w, p).passed
    ok = hol == l4 == l5 == l6 == 0 and n_l4 > 0 and n_l5 > 0
    assert report(2, ok, f"Hol {hol}/1000, L4 {l4}/{n_l4}, L5 {l5}/{n_l5}, L6 {l6}/50 failures",
                  time.perf_counter() - t0, 30)


REFERENCE = {
    "power": lambda p, s: s ** (p - 2),
    "mean_curvature": lambda p, s: (1 + s * s) ** ((p - 2) / 2),
    "capillarity": lambda p, s: (1 + s**p / math.sqrt(1 + s ** (2 * p))) * s ** (p - 2),
}


def test_criterion_03_big_phi_closed_forms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    g = Grid.uniform(41)
    p = g.sample(lambda x: 1.2 + 2.8 * x)
    worst, count = 0.0, 0
    for tag in REFERENCE:
        m = PhiModel(tag, p)
        for k in range(67 if tag != "capillarity" else 66):
            i, t = int(rng.integers(g.size)), float(10 ** rng.uniform(-3, 1.3))
            pi = float(p.flat[i])
            ref, _ = quad(lambda s: s * REFERENCE[tag](pi, s), 0, t, epsabs=0, epsrel=1e-13, limit=200)
            worst = max(worst, abs(big_phi(m, i, t) - ref) / ref)
            count += 1
    cap = PhiModel("capillarity", Grid.uniform(3).constant(2.0))
    example = big_phi(cap, 0, 1.0)
    example_err = abs(example - (0.5 + (math.sqrt(2) - 1) / 2)) / example
    ok = worst < 1e-8 and example_err < 1e-8 and count == 200
    assert report(3, ok, f"{count} samples, max rel err {worst:.2e}; capillarity(p=2,t=1) = {example:.12f}",
                  time.perf_counter() - t0, 10)


def test_criterion_04_simon_inequality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    bad, details = 0, []
    for p0 in (1.5, 2.5):
        m = PhiModel("power", Grid.uniform(51).constant(p0))
        c = verify_hypotheses(m).c_max
        for _ in range(10_000):
            u, v = rng.uniform(-10, 10, 2), rng.uniform(-10, 10, 2)
            lhs, rhs = simon_gap(m, int(rng.integers(51)), u, v, c=c)
            bad += lhs < rhs
        details.append(f"p={p0}: c={c:.6g}")
    assert report(4, bad == 0, f"{bad} violations in 20000 samples ({', '.join(details)})",
                  time.perf_counter() - t0, 10)


def _lap_error(n, dim):
    g = Grid.uniform(n, dim=dim)
    u = g.sample(lambda *xs: np.prod([np.sin(np.pi * x) for x in xs], axis=0))
    lu = laplacian(NavierOperator(g), u).values
    return np.max(np.abs(lu + dim * np.pi**2 * u.values)[g.interior_mask])


def test_criterion_05_discretization_order():
    t0 = time.perf_counter()
    ratios = {}
    for dim, n in ((1, 101), (2, 41)):
        errs = [_lap_error(n, dim), _lap_error(2 * n - 1, dim), _lap_error(4 * n - 3, dim)]
        ratios[dim] = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(3.7 <= r <= 4.3 for rs in ratios.values() for r in rs)
    text = "; ".join(f"{d}D ratios {', '.join(f'{r:.3f}' for r in rs)}" for d, rs in ratios.items())
    assert report(5, ok, text, time.perf_counter() - t0, 5)


def test_criterion_06_gradient_consistency():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    spec = criterion_spec()
    g, eps, d = spec.grid, 1e-3, 1e-5
    worst = 0.0
    for _ in range(30):
        u = random_smooth_field(g, rng).values
        u = np.where(u >= 0, u + 0.1, u - 0.1)
        u[g.boundary_mask] = 0.0
        u = g.zeros().with_values(u)
        v = random_smooth_field(g, rng)
        fd = (energy(u + v * d, spec, eps).total - energy(u - v * d, spec, eps).total) / (2 * d)
        an = inner_h(energy_gradient(u, spec, eps), v)
        worst = max(worst, abs(an - fd) / abs(fd))
    assert report(6, worst < 1e-4, f"30 pairs, max rel err {worst:.2e} (< 1e-4)", time.perf_counter() - t0, 10)


def test_criterion_07_valley():
    t0 = time.perf_counter()
    spec = criterion_spec()
    v = bump_profile(spec.grid)
    scan = valley_scan(spec, v)
    consts = valley_constants(v, spec)
    bounds = consts.bound(np.array(scan.t_grid))
    above = int(np.sum(np.array(scan.energies) > bounds))
    ok = scan.t_star > 0 and min(scan.energies) < 0 and above == 0
    assert report(7, ok, f"t* = {scan.t_star:.4g}, E(t*v) = {energy(v * scan.t_star, spec).total:.4g}, "
                  f"{above}/{len(scan.t_grid)} points above the bound", time.perf_counter() - t0, 5)


def _sweep(tmp_path, n, tag):
    cfg = {
        "domain": {"dim": 1, "extents": [1.0], "counts": [n]},
        "exponents": {"p": 2.5, "q": 0.5, "r": 1.5},
        "phi": {"tag": "power", "c": 1.0},
        "solve": {"lambdas": [0.5, 1.0, 2.0, 4.0]},
        "seed": SEED,
    }
    path = tmp_path / f"{tag}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / tag
    code = cli_main(["sweep", "--config", str(path), "--out", str(out)])
    rows = [line.split(",") for line in (out / "sweep.csv").read_text().splitlines()[1:]]
    return code, [(float(a), float(b), float(c), float(d), s) for a, b, c, d, s in rows], out


def test_criterion_08_existence_sweep(tmp_path):
    t0 = time.perf_counter()
    code_h, rows_h, _ = _sweep(tmp_path, 201, "h")
    code_h2, rows_h2, _ = _sweep(tmp_path, 401, "h2")
    ok = code_h == code_h2 == 0
    for rows in (rows_h, rows_h2):
        ms = [r[1] for r in rows]
        ok &= all(m < 0 for m in ms) and all(b <= a for a, b in zip(ms, ms[1:]))
        ok &= all(r[3] <= 1e-6 and math.isfinite(r[2]) and r[4] == "ok" for r in rows)
    change = max(abs(a[1] - b[1]) / abs(a[1]) for a, b in zip(rows_h, rows_h2))
    ok &= change < 0.05
    ms = ", ".join(f"{r[1]:.6f}" for r in rows_h2)
    assert report(8, ok, f"m_hat(h/2) = [{ms}], max residual {max(r[3] for r in rows_h + rows_h2):.1e}, "
                  f"max rel change under h/2 {change:.2e}", time.perf_counter() - t0, 300)


@pytest.mark.xfail(
    strict=True,
    reason="the bound uses c0 where the Hölder step yields c0^(1-q+); with c0 < 1 it is "
    "violated for small norms (see test_energy::test_holder_scaled_coercivity_chain)",
)
def test_criterion_09_coercivity_chain():
    t0 = time.perf_counter()
    spec = criterion_spec()
    g, p = spec.grid, spec.exponents.p
    c0 = estimate_embedding_constant(spec, n_probes=200, seed=0)
    rng = np.random.default_rng(SEED)
    bad = []
    for _ in range(100):
        u = random_smooth_field(g, rng)
        u = u * (float(rng.uniform(1.0, 50.0)) / laplacian_norm(u, p))
        if not laplacian_norm(u, p) > 1.0:
            continue
        bound, pieces = coercivity_bound(u, spec, c0=c0)
        if energy(u, spec).total < bound:
            bad.append(pieces["norm"])
    detail = f"c0 = {c0:.4f}, {len(bad)}/100 violations"
    if bad:
        detail += f" at norms {', '.join(f'{n:.2f}' for n in sorted(bad))}"
    assert report(9, not bad, detail, time.perf_counter() - t0, 60)


def test_criterion_10_continuation_monotone():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    spec = criterion_spec()
    bad = 0
    for _ in range(20):
        u = random_smooth_field(spec.grid, rng, amplitude=float(10 ** rng.uniform(-3, 1)))
        totals = [energy(u, spec, eps=e).total for e in (1e-2, 1e-3, 1e-4, 1e-6, 0.0)]
        bad += any(b > a for a, b in zip(totals, totals[1:]))
    assert report(10, bad == 0, f"{bad}/20 fields with an increase", time.perf_counter() - t0, 10)


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    _, _, out_a = _sweep(tmp_path, 201, "run_a")
    _, _, out_b = _sweep(tmp_path, 201, "run_b")
    files = sorted(f.name for f in out_a.iterdir())
    same = files == sorted(f.name for f in out_b.iterdir()) and all(
        (out_a / f).read_bytes() == (out_b / f).read_bytes() for f in files
    )
    assert report(11, same, f"byte-identical outputs: {', '.join(files)}", time.perf_counter() - t0)


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    results = []
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_criterion_"):
            continue
        with tempfile.TemporaryDirectory() as tmp:
            try:
                fn(Path(tmp)) if "tmp_path" in fn.__code__.co_varnames else fn()
                results.append(True)
            except AssertionError:
                results.append(False)
    sys.exit(0 if all(results) else 1)
