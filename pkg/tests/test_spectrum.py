import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycomb_bie.bie import CellGrid
from honeycomb_bie.geometry import BETA1, BETA2, K_POINT, SYM, ObstacleShape, discretize_boundary
from honeycomb_bie.spectrum import (
    DegeneracyError,
    SolverSettings,
    band_sweep,
    default_dirac_window,
    leading_order_shift,
    locate_dirac,
    measure_cone_slope,
    symmetry_project,
    verify_no_fold,
)

# frozen from the full solver (n = 96); independent checks below confirm it is a Dirichlet mode
LAMBDA_STAR_DEFAULT = 25.09237127660


def test_default_dirac_point(default_dirac):
    d = default_dirac
    assert d.lambda_star == pytest.approx(LAMBDA_STAR_DEFAULT, abs=1e-9)
    assert d.residual < 1e-10
    assert d.h0_leak < 1e-8
    # F maps the H1 member onto the H2 member
    assert d.pair_mismatch < 1e-8


def test_dirac_modes_vanish_inside_the_obstacle(default_dirac):
    # the single-layer field of a characteristic density is zero inside the obstacle
    from honeycomb_bie.bie import evaluate_mode

    d = default_dirac
    th = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    r = 0.5 * d.shape.radius(th)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    from honeycomb_bie.greens import green_sums

    z = pts[:, None, :] - d.system.points[None, :, :]
    G = green_sums(z, d.lambda_star, d.system.lattice)["value"]
    assert np.max(np.abs(G @ (d.system.weights * d.rho1))) < 1e-8


def test_dirac_modes_are_rotation_eigenfunctions(default_dirac):
    d = default_dirac
    perm = d.system.obstacles[0].disc.rotation_permutation()
    assert np.allclose(d.rho1[perm], SYM.tau * d.rho1, atol=1e-9)
    assert np.allclose(d.rho2[perm], SYM.tau**2 * d.rho2, atol=1e-9)


def test_dirac_modes_are_field_normalised(default_dirac):
    d = default_dirac
    grid = CellGrid.build(d.system, (160, 160))
    for rho in (d.rho1, d.rho2):
        assert grid.norm(grid.field(d.system, d.lambda_star, rho)) == pytest.approx(1, abs=1e-10)


def test_literal_window_misses_the_default_dirac_point():
    k2 = float(K_POINT @ K_POINT)
    with pytest.raises(DegeneracyError):
        locate_dirac(ObstacleShape(), window=(k2 - 3, k2 + 3))
    lo, hi = default_dirac_window(ObstacleShape())
    assert lo < LAMBDA_STAR_DEFAULT < hi


def test_locate_dirac_requires_unrotated_shape():
    with pytest.raises(ValueError):
        locate_dirac(ObstacleShape(eps=0.1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_symmetry_projection_decomposes(seed):
    n = 48
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=n) + 1j * rng.normal(size=n)
    perm = discretize_boundary(ObstacleShape(), n).rotation_permutation()
    h = symmetry_project(phi, perm)
    assert np.allclose(sum(h), phi)
    for i, comp in enumerate(h):
        assert np.allclose(comp[perm], SYM.tau**i * comp)


def test_cone_slope_matches_coefficients(default_dirac, default_coeffs):
    cone = measure_cone_slope(default_dirac)
    assert cone.anisotropy < 0.05
    assert cone.m_star == pytest.approx(default_coeffs.m_star, rel=0.01)


def test_cone_slope_approaches_free_space_limit():
    # the empty-lattice cone at K has slope |K| = 4 pi / 3 in this dual-lattice convention
    slopes = []
    for eta in (0.3, 0.15):
        d = locate_dirac(ObstacleShape(eta=eta))
        slopes.append(measure_cone_slope(d, radii=(0.005, 0.01)).m_star)
    assert slopes[1] == pytest.approx(4 * np.pi / 3, rel=0.01)
    assert abs(slopes[1] - 4 * np.pi / 3) < abs(slopes[0] - 4 * np.pi / 3)


def test_leading_order_shift_formula():
    assert leading_order_shift(1.0, 1.0) == pytest.approx((2 / 3) * (2 * np.pi) ** 2 / (math.sqrt(3) / 2))
    assert leading_order_shift(0.5, 0.5) == pytest.approx(leading_order_shift(1.0, 1.0) / 8)


def test_band_sweep_rows():
    path = np.array([[0.0, 0.0], K_POINT])
    bs = band_sweep(path, (0.5, 26.0), settings=SolverSettings(n_nodes=48))
    rows = list(bs.rows())
    # one band at Gamma below 26; at K the two lowest bands meet at the Dirac point
    assert [r[3] for r in rows if r[2] == 0.0] == [1]
    at_k = [r[4] for r in rows if r[2] == 1.0]
    assert len(at_k) == 2
    assert at_k[0] == pytest.approx(LAMBDA_STAR_DEFAULT, abs=1e-7)
    assert at_k[1] == pytest.approx(at_k[0], abs=1e-9)
    assert all(r[5] < 1e-10 for r in rows)


@pytest.mark.parametrize(
    "direction, expected",
    [(BETA1, [(0.0, "K")]), (BETA1 - BETA2, [(0.0, "K"), (2 * np.pi / 3, "Kp")])],
    ids=["beta1", "beta1_armchair"],
)
def test_no_fold_touches(default_dirac, direction, expected):
    rep = verify_no_fold(direction, default_dirac.lambda_star, settings=SolverSettings(n_nodes=48))
    assert len(rep.touches) == len(expected)
    for (ell, dist, onK, onKp), (ell0, which) in zip(rep.touches, expected):
        assert ell == pytest.approx(ell0, abs=1e-5)
        assert (onK, onKp) == ((True, False) if which == "K" else (False, True))
