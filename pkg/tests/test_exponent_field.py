import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pxbiharmonic import (
    INFINITY,
    ExponentTriple,
    Grid,
    GridMismatchError,
    InvalidFieldError,
    ScalarField,
    check_theorem_hypotheses,
    exponent_bounds,
    load_field,
    random_smooth_field,
    save_field,
    sobolev_critical_exponent,
)
from pxbiharmonic.exponent_field import field_from_dict, field_to_dict


class TestGrid:
    def test_spacing_and_masks(self):
        g = Grid.uniform(11, 2.0)
        assert g.spacing == (0.2,)
        assert g.boundary_mask.sum() == 2
        assert np.all(g.boundary_mask ^ g.interior_mask)

    def test_2d_masks_partition(self):
        g = Grid((5, 7), (1.0, 2.0))
        assert g.shape == (5, 7)
        assert g.boundary_mask.sum() == 2 * 5 + 2 * 7 - 4
        assert np.all(g.boundary_mask ^ g.interior_mask)

    @pytest.mark.parametrize("counts, extents", [((2,), (1.0,)), ((5,), (0.0,)), ((3, 3, 3), (1, 1, 1))])
    def test_rejects_bad_grids(self, counts, extents):
        with pytest.raises(ValueError):
            Grid(counts, extents)

    def test_weights_sum_to_measure(self):
        g = Grid((9, 13), (1.5, 0.5))
        assert g.weights.sum() == pytest.approx(g.measure, rel=1e-14)

    def test_dict_roundtrip(self):
        g = Grid((4, 6), (1.0, 3.0))
        assert Grid.from_dict(g.to_dict()) == g


class TestScalarField:
    def test_rejects_non_finite(self, grid101):
        vals = np.zeros(grid101.shape)
        vals[3] = np.nan
        with pytest.raises(InvalidFieldError):
            ScalarField(grid101, vals)

    def test_rejects_wrong_length(self, grid101):
        with pytest.raises(InvalidFieldError):
            ScalarField(grid101, np.zeros(100))

    def test_values_are_read_only(self, grid101):
        f = grid101.constant(1.0)
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_arithmetic_checks_grid(self, grid101):
        with pytest.raises(GridMismatchError):
            grid101.constant(1.0) + Grid.uniform(51).constant(1.0)


class TestExponentBounds:
    def test_constant(self, grid101):
        assert exponent_bounds(grid101.constant(2.5)) == (2.5, 2.5)

    def test_affine(self, grid101):
        assert exponent_bounds(grid101.sample(lambda x: 2 + x)) == (2.0, 3.0)

    def test_sine_matches_direct_scan(self, grid101):
        f = grid101.sample(lambda x: 2 + np.sin(np.pi * x))
        vals = 2 + np.sin(np.pi * np.linspace(0, 1, 101))
        assert exponent_bounds(f) == (vals.min(), vals.max())

    @given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=40))
    def test_bounds_are_attained(self, values):
        g = Grid.uniform(len(values))
        lo, hi = exponent_bounds(ScalarField(g, np.array(values)))
        assert lo in values and hi in values

    def test_rejects_non_finite_array(self):
        with pytest.raises(InvalidFieldError):
            exponent_bounds(np.array([1.0, np.inf]))


class TestExponentTriple:
    def test_cached_bounds(self, grid101):
        e = ExponentTriple(
            grid101.sample(lambda x: 2 + x),
            grid101.constant(0.5),
            grid101.sample(lambda x: 1.2 + 0.1 * x),
        )
        assert (e.p_minus, e.p_plus) == (2.0, 3.0)
        assert (e.r_minus, e.r_plus) == (1.2, pytest.approx(1.3))

    def test_requires_p_above_one(self, grid101):
        with pytest.raises(ValueError):
            ExponentTriple.constant(grid101, 1.0, 0.5, 1.5)


class TestCriticalExponent:
    def test_one_dimension_is_infinite(self, grid101):
        crit = sobolev_critical_exponent(grid101.constant(1.3))
        assert crit.all_infinite
        assert crit.at(5) is INFINITY

    def test_boundary_case_is_infinite(self):
        g = Grid.uniform(5, dim=2)
        assert sobolev_critical_exponent(g.constant(2.0)).all_infinite

    def test_finite_branch_formula(self, grid101):
        crit = sobolev_critical_exponent(grid101.constant(1.2), N=3)
        assert crit.at(0) == pytest.approx(6.0)

    def test_order_one(self, grid101):
        crit = sobolev_critical_exponent(grid101.constant(1.5), order=1, N=3)
        assert crit.at(0) == pytest.approx(3 * 1.5 / 1.5)

    @given(st.floats(1.01, 1.45), st.floats(1.01, 1.45))
    def test_monotone_on_finite_branch(self, a, b):
        g = Grid.uniform(3)
        lo, hi = sorted((a, b))
        c_lo = sobolev_critical_exponent(g.constant(lo), N=3).at(1)
        c_hi = sobolev_critical_exponent(g.constant(hi), N=3).at(1)
        assert c_lo <= c_hi

    def test_sentinel_refuses_arithmetic(self):
        with pytest.raises(TypeError):
            INFINITY + 1.0
        assert INFINITY > 1e308


class TestTheoremHypotheses:
    def test_constant_chain_passes(self, grid101):
        assert check_theorem_hypotheses(ExponentTriple.constant(grid101, 2.5, 0.5, 1.5)).passed

    def test_q_above_one_fails_everywhere(self, grid101):
        rep = check_theorem_hypotheses(ExponentTriple.constant(grid101, 2.5, 1.2, 1.5))
        assert not rep.passed
        assert rep.failed_inequalities == ["q<1"]
        assert len(rep.violating_nodes("q<1")) == grid101.size

    def test_r_crossing_p_is_localized(self, grid101):
        e = ExponentTriple(
            grid101.sample(lambda x: 2 + 0.4 * x),
            grid101.constant(0.5),
            grid101.sample(lambda x: 1.5 + x),
        )
        rep = check_theorem_hypotheses(e)
        bad = [i[0] for i in rep.violating_nodes("r<p")]
        x = grid101.axes[0]
        # oracle: 1.5 + x >= 2 + 0.4 x  <=>  x >= 5/6
        assert bad == [i for i in range(101) if 1.5 + x[i] >= 2 + 0.4 * x[i]]
        assert rep.failed_inequalities == ["r<p"]

    def test_critical_exponent_binds_in_3d_emulation(self, grid101):
        # with N=3, p* = 3p/(3-2p) is finite for p < 1.5 and r < p < p* holds
        e = ExponentTriple.constant(grid101, 1.4, 0.5, 1.2)
        assert check_theorem_hypotheses(e, N=3).passed

    def test_grid_mismatch(self, grid101):
        g2 = Grid.uniform(51)
        with pytest.raises(GridMismatchError):
            ExponentTriple(grid101.constant(2.5), g2.constant(0.5), g2.constant(1.5))

    @given(
        st.floats(0.01, 0.99),
        st.floats(1.01, 3.0),
        st.floats(1.02, 5.0),
    )
    def test_pass_means_chain_holds(self, q, r, p):
        g = Grid.uniform(5)
        e = ExponentTriple.constant(g, p, q, r)
        rep = check_theorem_hypotheses(e)
        assert rep.passed == (0 < q < 1 < r < p)


class TestFieldIO:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        g = Grid((7, 9), (1.0, 0.3))
        f = ScalarField(g, rng.standard_normal(g.shape) * 1e-7)
        path = tmp_path / "f.json"
        save_field(f, path)
        assert load_field(path).equals(f)

    def test_format(self, grid101):
        d = field_to_dict(grid101.constant(1.0))
        assert set(d) == {"grid", "values"}
        assert d["grid"] == {"dim": 1, "counts": [101], "extents": [1.0]}
        assert len(d["values"]) == 101

    def test_rejects_bad_document(self):
        with pytest.raises(InvalidFieldError):
            field_from_dict(json.loads('{"grid": {"dim": 1, "counts": [3], "extents": [1]}, "values": [1, 2]}'))


def test_random_smooth_field_vanishes_on_boundary(rng):
    g = Grid((17, 23), (1.0, 2.0))
    f = random_smooth_field(g, rng)
    assert np.all(f.values[g.boundary_mask] == 0)
    assert np.any(f.values != 0)
