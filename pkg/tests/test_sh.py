import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambinet.errors import ConfigurationError
from ambinet.sh import (MAX_ORDER, Direction, acn, acn_to_nm, cart_to_sph, channel_orders, n_channels, sh_eval,
                        sh_matrix, uniform_grid, unit_vector)

azimuths = st.floats(0, 2 * np.pi, allow_nan=False)
elevations = st.floats(-np.pi / 2, np.pi / 2, allow_nan=False)


def test_order_zero_is_unity():
    for d in [Direction(0, 0), Direction(1.3, -0.4), Direction(5.0, 1.5)]:
        np.testing.assert_array_equal(sh_eval(d, 0, "SN3D"), [1.0])


def test_dipoles_on_x_axis():
    y = sh_eval(Direction(0.0, 0.0), 1, "SN3D")
    # ACN 1, 2, 3 are the y, z and x dipoles
    assert y[3] == pytest.approx(1.0)
    assert y[1] == pytest.approx(0.0, abs=1e-15)
    assert y[2] == pytest.approx(0.0, abs=1e-15)


def test_first_order_matches_unit_vector():
    rng = np.random.default_rng(0)
    az, el = rng.uniform(0, 2 * np.pi, 50), rng.uniform(-1.5, 1.5, 50)
    y = sh_matrix(az, el, 1)
    u = unit_vector(az, el)
    np.testing.assert_allclose(y[1:], np.stack([u[:, 1], u[:, 2], u[:, 0]]), atol=1e-14)


def test_known_second_order_values():
    # SN3D: Y_{2,0} = (3 sin^2(el) - 1) / 2 ; Y_{2,2} = sqrt(3)/2 cos^2(el) cos(2 az)
    az, el = 0.7, 0.3
    y = sh_eval(Direction(az, el), 2)
    assert y[acn(2, 0)] == pytest.approx((3 * np.sin(el) ** 2 - 1) / 2)
    assert y[acn(2, 2)] == pytest.approx(np.sqrt(3) / 2 * np.cos(el) ** 2 * np.cos(2 * az))
    assert y[acn(2, -2)] == pytest.approx(np.sqrt(3) / 2 * np.cos(el) ** 2 * np.sin(2 * az))


@pytest.mark.parametrize("convention", ["SN3D", "N3D"])
def test_quadrature_orthogonality_order3(convention):
    grid = uniform_grid(1008)
    y = sh_matrix(grid.azimuth, grid.elevation, 3, convention)
    gram = (y * grid.weights) @ y.T
    n = channel_orders(3)
    if convention == "SN3D":
        expected = np.diag(4 * np.pi / (2 * n + 1))
    else:
        gram = gram / (4 * np.pi)
        expected = np.eye(len(n))
    np.testing.assert_allclose(gram, expected, atol=5e-3)


def test_order_limit():
    with pytest.raises(ConfigurationError):
        sh_eval(Direction(0, 0), MAX_ORDER + 1)
    with pytest.raises(ConfigurationError):
        sh_eval(Direction(0, 0), 1, "FuMa")
    assert sh_eval(Direction(0, 0), MAX_ORDER).shape == ((MAX_ORDER + 1) ** 2,)


def test_grid_examples():
    g = uniform_grid(1008)
    assert len(g) == 1008
    assert g.weights.sum() == pytest.approx(4 * np.pi, rel=1e-9)
    assert np.linalg.norm(g.unit_vectors().mean(axis=0)) < 0.01
    one = uniform_grid(1)
    assert len(one) == 1 and one.weights[0] == pytest.approx(4 * np.pi)
    with pytest.raises(ConfigurationError):
        uniform_grid(0)


def test_grid_deterministic():
    a, b = uniform_grid(300), uniform_grid(300)
    np.testing.assert_array_equal(a.azimuth, b.azimuth)
    np.testing.assert_array_equal(a.elevation, b.elevation)


@given(st.integers(0, MAX_ORDER))
def test_acn_bijection(order):
    pairs = [(n, m) for n in range(order + 1) for m in range(-n, n + 1)]
    idx = [acn(n, m) for n, m in pairs]
    assert sorted(idx) == list(range(n_channels(order)))
    assert [acn_to_nm(i) for i in idx] == pairs


@given(azimuths, elevations, st.integers(0, MAX_ORDER))
def test_n3d_sn3d_ratio(az, el, order):
    sn = sh_eval(Direction(az, el), order, "SN3D")
    n3 = sh_eval(Direction(az, el), order, "N3D")
    np.testing.assert_allclose(n3, sn * np.sqrt(2 * channel_orders(order) + 1), rtol=1e-12, atol=1e-14)


@given(azimuths, st.floats(-1.5, 1.5), st.floats(-1, 1), st.floats(-1, 1))
def test_continuity(az, el, da, de):
    a = sh_eval(Direction(az, el), 4)
    b = sh_eval(Direction(az + 1e-8 * da, el + 1e-8 * de), 4)
    assert np.max(np.abs(a - b)) < 1e-6


@given(azimuths, st.floats(-1.5, 1.5))
def test_sph_round_trip(az, el):
    a2, e2, r = cart_to_sph(unit_vector(az, el)[None, :] * 2.5)
    assert r[0] == pytest.approx(2.5)
    np.testing.assert_allclose(unit_vector(a2[0], e2[0]), unit_vector(az, el), atol=1e-12)


def test_addition_theorem():
    # sum_m Y_nm(u)^2 = 2n+1 under N3D for every direction
    g = uniform_grid(64)
    y = sh_matrix(g.azimuth, g.elevation, 5, "N3D")
    n = channel_orders(5)
    for order in range(6):
        np.testing.assert_allclose((y[n == order] ** 2).sum(axis=0), 2 * order + 1, rtol=1e-12)
