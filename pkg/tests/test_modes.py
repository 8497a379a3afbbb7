import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from spatialtomo.modes import (
    ModeBasis,
    PixelGrid,
    evaluate_hg,
    evaluate_lg,
    hermite_polynomial,
    laguerre_polynomial,
    sample_basis,
)


def test_hermite_frozen_values():
    assert hermite_polynomial(0, 0.7) == 1.0
    assert hermite_polynomial(1, 0.7) == pytest.approx(1.4)
    assert hermite_polynomial(3, 1.0) == pytest.approx(-4.0)
    assert hermite_polynomial(4, 0.0) == pytest.approx(12.0)


def test_laguerre_frozen_values():
    assert laguerre_polynomial(0, 3, 1.3) == 1.0
    assert laguerre_polynomial(1, 1, 2.0) == pytest.approx(0.0)
    # L_2^1(x) = (x^2 - 6x + 6) / 2
    assert laguerre_polynomial(2, 1, 2.0) == pytest.approx(-1.0)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 25), x=st.floats(-4, 4))
def test_hermite_matches_scipy(n, x):
    ref = special.eval_hermite(n, x)
    assert hermite_polynomial(n, x) == pytest.approx(ref, rel=1e-10, abs=1e-10 * max(1.0, abs(ref)))


@settings(max_examples=60, deadline=None)
@given(p=st.integers(0, 12), alpha=st.integers(0, 12), x=st.floats(0, 20))
def test_laguerre_matches_scipy(p, alpha, x):
    ref = special.eval_genlaguerre(p, alpha, x)
    assert laguerre_polynomial(p, alpha, x) == pytest.approx(ref, rel=1e-9, abs=1e-9 * max(1.0, abs(ref)))


def test_polynomials_reject_negative_index():
    with pytest.raises(ValueError):
        hermite_polynomial(-1, 0.0)
    with pytest.raises(ValueError):
        laguerre_polynomial(1, -1, 0.0)


def test_hg00_peak():
    assert evaluate_hg(0, 0, 1.0, (0, 0), 0.0, 0.0) == pytest.approx(math.sqrt(2 / math.pi))


def test_lg01_is_hg_combination():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 50))
    lhs = evaluate_lg(0, 1, 1.0, (0, 0), x, y)
    rhs = (evaluate_hg(1, 0, 1.0, (0, 0), x, y) + 1j * evaluate_hg(0, 1, 1.0, (0, 0), x, y)) / math.sqrt(2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_lg_charge_sign_conjugates():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(2, 30))
    np.testing.assert_allclose(evaluate_lg(1, -2, 1.3, (0, 0), x, y), np.conj(evaluate_lg(1, 2, 1.3, (0, 0), x, y)))


@pytest.mark.parametrize("m,n", [(0, 0), (1, 2), (3, 1), (4, 0)])
def test_hg_parity(m, n):
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(2, 20))
    base = evaluate_hg(m, n, 1.0, (0, 0), x, y)
    np.testing.assert_allclose(evaluate_hg(m, n, 1.0, (0, 0), -x, y), (-1) ** m * base, atol=1e-13)
    np.testing.assert_allclose(evaluate_hg(m, n, 1.0, (0, 0), x, -y), (-1) ** n * base, atol=1e-13)


def test_hg_center_shift():
    v = evaluate_hg(2, 1, 1.0, (0.3, -0.2), 0.8, 0.1)
    assert v == pytest.approx(evaluate_hg(2, 1, 1.0, (0, 0), 0.5, 0.3))


@pytest.mark.parametrize("order", [1, 3, 5, 9])
def test_sampled_gram_is_identity(desk_grid, order):
    sb = sample_basis(ModeBasis.hg_fixed_order(order), desk_grid)
    np.testing.assert_allclose(sb.gram(), np.eye(order + 1), atol=1e-8)


def test_lg_gram_is_identity(desk_grid):
    sb = sample_basis(ModeBasis.lg_list([(1, 0), (0, 2), (0, -1)]), desk_grid)
    np.testing.assert_allclose(sb.gram(), np.eye(3), atol=1e-8)


def test_fixed_order_basis_layout():
    b = ModeBasis.hg_fixed_order(3)
    assert b.modes == ((0, 3), (1, 2), (2, 1), (3, 0))
    assert b.d == 4 and b.is_fixed_order_hg and b.orders == [3, 3, 3, 3]
    assert not ModeBasis.lg_list([(1, 0), (0, 2)]).is_fixed_order_hg


def test_basis_validation():
    with pytest.raises(ValueError):
        ModeBasis("hg", ((0, 0), (0, 0)))
    with pytest.raises(ValueError):
        ModeBasis.hg_fixed_order(31)
    with pytest.raises(ValueError):
        ModeBasis("zz", ((0, 0),))
    with pytest.raises(ValueError):
        ModeBasis.hg_fixed_order(2, waist=0.0)


def test_grid_indexing():
    g = PixelGrid(4, 3, 8.0, 6.0)
    assert g.shape == (3, 4) and g.size == 12
    assert g.pixel_area == pytest.approx(4.0)
    coords = g.coordinates()
    # flat index iy * nx + ix
    assert coords[1 * 4 + 2] == pytest.approx([g.x[2], g.y[1]])
    np.testing.assert_allclose(g.x, [-3, -1, 1, 3])
    with pytest.raises(ValueError):
        PixelGrid(1, 5)


def test_sampled_basis_csv(tmp_path, small_grid):
    sb = sample_basis(ModeBasis.hg_fixed_order(1), small_grid)
    path = tmp_path / "basis.csv"
    sb.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,re_u1,im_u1,re_u2,im_u2"
    assert len(lines) == small_grid.size + 1
