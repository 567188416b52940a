import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycomb_bie.berry import (
    BerryGrid,
    GridTooCoarseError,
    berry_curvature_fhs,
    bloch_mode_grid,
    valley_flux,
    tie_mask,
    valley_mask,
)
from honeycomb_bie.bie import CellGrid
from honeycomb_bie.geometry import BETA1, BETA2, ObstacleShape
from honeycomb_bie.spectrum import SolverSettings

LAMBDA_STAR_48 = 25.09237127


def _cell(n=16):
    system = SolverSettings(n_nodes=24).system(ObstacleShape(), np.zeros(2))
    return CellGrid.build(system, (n, n))


def _qwz_grid(N, m, cell):
    """Lower band of the two-band lattice model h = sin k1 sx + sin k2 sy + (m + cos k1 + cos k2) sz.

    The two-component vector is embedded as ``a g1 + b g2`` with fixed grid
    functions; the plane wave ``exp(-i p.x)`` makes it a periodic part.
    """
    rng = np.random.default_rng(0)
    g1 = rng.normal(size=cell.shape) * cell.mask + 0j
    g2 = rng.normal(size=cell.shape) * cell.mask + 0j
    g2 -= cell.inner(g1, g2) / cell.inner(g1, g1) * g1
    g1, g2 = g1 / cell.norm(g1), g2 / cell.norm(g2)
    modes = np.zeros((N, N) + cell.shape, complex)
    mom = np.zeros((N, N, 2))
    for i in range(N):
        for j in range(N):
            k1, k2 = 2 * np.pi * i / N, 2 * np.pi * j / N
            h = np.array([[m + np.cos(k1) + np.cos(k2), np.sin(k1) - 1j * np.sin(k2)],
                          [np.sin(k1) + 1j * np.sin(k2), -(m + np.cos(k1) + np.cos(k2))]])
            a, b = np.linalg.eigh(h)[1][:, 0]
            p = 2 * np.pi * (i * BETA1 + j * BETA2) / N
            mom[i, j] = p
            modes[i, j] = np.exp(-1j * (cell.points @ p)) * (a * g1 + b * g2)
    return BerryGrid(N, 0.1, mom, np.zeros((N, N)), np.full((N, N), np.nan), modes, cell)


@pytest.mark.parametrize("m, chern", [(1.0, 1), (-1.0, -1), (3.0, 0)])
def test_two_band_model_chern(m, chern):
    g = berry_curvature_fhs(_qwz_grid(16, m, _cell()))
    assert abs(g.chern) == abs(chern)
    assert g.total_flux == pytest.approx(2 * np.pi * g.chern, abs=1e-9)


def test_opposite_mass_flips_sign():
    cell = _cell()
    a = berry_curvature_fhs(_qwz_grid(16, 1.0, cell)).chern
    b = berry_curvature_fhs(_qwz_grid(16, -1.0, cell)).chern
    assert a == -b != 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_curvature_is_gauge_invariant(seed):
    cell = _cell()
    g = berry_curvature_fhs(_qwz_grid(10, 1.0, cell))
    F = g.curvature.copy()
    phases = np.exp(2j * np.pi * np.random.default_rng(seed).random((10, 10)))
    g.modes = g.modes * phases[:, :, None, None]
    assert np.allclose(berry_curvature_fhs(g).curvature, F, atol=1e-10)


@pytest.mark.parametrize("N", [6, 12])
def test_valley_masks_partition_the_zone(N):
    g = BerryGrid(N, 0.1, np.zeros((N, N, 2)), np.zeros((N, N)), np.zeros((N, N)), np.zeros((N, N, 1, 1)))
    k, kp, tie = valley_mask(g, "K"), valley_mask(g, "Kp"), tie_mask(g)
    assert not np.any(k & kp) and not np.any(k & tie) and not np.any(kp & tie)
    assert np.all(k | kp | tie)
    assert k.sum() == kp.sum()
    # ties sit on the mirror line p . (beta1 - beta2) = 0, i.e. the grid diagonal
    assert np.array_equal(tie, np.eye(N, dtype=bool))


def test_orthogonal_neighbours_raise():
    cell = _cell()
    g = _qwz_grid(4, 1.0, cell)
    g.modes[1, 1] = 0
    with pytest.raises(GridTooCoarseError):
        berry_curvature_fhs(g)


def test_valley_fluxes_add_to_total():
    g = berry_curvature_fhs(_qwz_grid(12, 1.0, _cell()))
    assert valley_flux(g, "K") + valley_flux(g, "Kp") == pytest.approx(g.total_flux, abs=1e-12)
    with pytest.raises(ValueError):
        valley_flux(g, "M")


@pytest.mark.parametrize("kwargs", [dict(eps=0.0), dict(eps=0.05, N=2)])
def test_bloch_grid_preconditions(kwargs):
    with pytest.raises(ValueError):
        bloch_mode_grid(lambda_star=LAMBDA_STAR_48, **kwargs)


def test_rotated_lattice_has_opposite_valley_fluxes():
    s = SolverSettings(n_nodes=48)
    flux = {}
    for e in (0.05, -0.05):
        g = berry_curvature_fhs(bloch_mode_grid(e, N=6, settings=s, lambda_star=LAMBDA_STAR_48, grid_n=48))
        assert g.chern == 0
        flux[e] = valley_flux(g, "K"), valley_flux(g, "Kp")
    assert abs(flux[0.05][0]) > 2.5
    assert flux[0.05][0] == pytest.approx(-flux[-0.05][0], rel=0.01)
    assert flux[0.05][0] == pytest.approx(-flux[0.05][1], rel=0.01)
