"""Discrete Berry curvature of the first band on a Brillouin-zone grid."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bie import CellGrid, find_characteristic_values, normalize_mode
from .geometry import BETA1, BETA2, K_POINT, ObstacleShape
from .spectrum import SolverSettings

log = logging.getLogger(__name__)


class GridTooCoarseError(RuntimeError):
    """Neighbouring Bloch modes have almost vanishing overlap."""


@dataclass
class BerryGrid:
    """First-band periodic parts on an ``N x N`` grid ``p = 2 pi (i beta1 + j beta2) / N``.

    ``modes[i, j]`` holds the periodic part ``exp(-i p.x) u(x)`` on the cell
    grid; ``curvature[i, j]`` the flux through the plaquette with lower-left
    corner ``(i, j)``.
    """

    N: int
    eps: float
    momenta: np.ndarray  # (N, N, 2)
    energies: np.ndarray  # (N, N)
    gaps: np.ndarray  # (N, N) distance to the second band (nan if not computed)
    modes: np.ndarray = field(repr=False)
    cell: CellGrid = field(repr=False, default=None)
    curvature: np.ndarray | None = None

    @property
    def total_flux(self) -> float:
        return float(np.sum(self.curvature))

    @property
    def chern(self) -> int:
        return int(round(self.total_flux / (2 * np.pi)))

    def plaquette_centers(self) -> np.ndarray:
        N = self.N
        i, j = np.meshgrid(np.arange(N) + 0.5, np.arange(N) + 0.5, indexing="ij")
        return 2 * np.pi * (i[..., None] * BETA1 + j[..., None] * BETA2) / N


def bloch_mode_grid(eps: float, N: int = 12, shape: ObstacleShape = ObstacleShape(),
                    settings: SolverSettings = SolverSettings(), lambda_star: float | None = None,
                    lam_lo: float = 0.5, grid_n: int | None = None, mapper=map) -> BerryGrid:
    """Solve for the first band at every grid momentum.

    The first band is taken as the unique characteristic value in
    ``[lam_lo, lambda_star]``, which holds whenever the rotation opens a
    complete gap around ``lambda_star``.  ``mapper`` evaluates the
    independent solves and must preserve order.
    """
    if eps == 0:
        raise ValueError("the first band is only isolated for eps != 0")
    if N < 3:
        raise ValueError("N must be at least 3")
    if lambda_star is None:
        from .spectrum import locate_dirac

        lambda_star = locate_dirac(shape.with_(eps=0.0), settings=settings).lambda_star
    shape = shape.with_(eps=eps)
    gn = grid_n or settings.grid_n
    sites = [(i, j) for i in range(N) for j in range(N)]

    def solve(site):
        i, j = site
        p = 2 * np.pi * (i * BETA1 + j * BETA2) / N
        system = settings.system(shape, p)
        cvs = find_characteristic_values(system, (lam_lo, lambda_star), cv_tol=settings.cv_tol)
        if len(cvs) != 1 or cvs[0].multiplicity != 1:
            raise RuntimeError(f"band 1 not isolated at grid site ({i}, {j}): "
                               f"{[(c.lam, c.multiplicity) for c in cvs]}")
        return p, system, cvs[0]

    solved = list(mapper(solve, sites))
    cell = CellGrid.build(solved[0][1], (gn, gn))
    mom = np.zeros((N, N, 2))
    lam = np.zeros((N, N))
    gaps = np.full((N, N), np.nan)
    modes = np.zeros((N, N, gn, gn), complex)
    for (i, j), (p, system, cv) in zip(sites, solved):
        phi = normalize_mode(system, cv.lam, cv.densities[0], grid=cell)
        modes[i, j] = cell.periodic_part(system, cv.lam, phi)
        mom[i, j], lam[i, j] = p, cv.lam
    return BerryGrid(N, eps, mom, lam, gaps, modes, cell)


def _link(grid: BerryGrid, a: np.ndarray, b: np.ndarray, shift: np.ndarray | None) -> complex:
    """Normalised overlap of two periodic parts, ``b`` optionally multiplied by ``exp(-i shift.x)``."""
    if shift is not None:
        b = b * np.exp(-1j * (grid.cell.points @ shift))
    ov = grid.cell.inner(a, b)
    return ov


def berry_curvature_fhs(grid: BerryGrid, min_overlap: float = 0.1) -> BerryGrid:
    """Plaquette curvature ``arg(U1 U2 U3 U4)`` from link variables of grid overlaps.

    Periodic parts at wrapped momenta are multiplied by the reciprocal-lattice
    phase so the links close across the zone boundary.
    """
    N = grid.N
    G1, G2 = 2 * np.pi * BETA1, 2 * np.pi * BETA2
    U1 = np.zeros((N, N), complex)  # link (i, j) -> (i+1, j)
    U2 = np.zeros((N, N), complex)  # link (i, j) -> (i, j+1)
    for i in range(N):
        for j in range(N):
            a = grid.modes[i, j]
            U1[i, j] = _link(grid, a, grid.modes[(i + 1) % N, j], G1 if i + 1 == N else None)
            U2[i, j] = _link(grid, a, grid.modes[i, (j + 1) % N], G2 if j + 1 == N else None)
    mags = np.concatenate([abs(U1).ravel(), abs(U2).ravel()])
    if mags.min() < min_overlap:
        raise GridTooCoarseError(f"smallest link overlap {mags.min():.3f} below {min_overlap}")
    U1, U2 = U1 / abs(U1), U2 / abs(U2)
    F = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            ip, jp = (i + 1) % N, (j + 1) % N
            loop = U1[i, j] * U2[ip, j] * np.conj(U1[i, jp]) * np.conj(U2[i, j])
            F[i, j] = np.angle(loop)
    grid.curvature = F
    return grid


def _valley_translates(valley: np.ndarray) -> np.ndarray:
    G1, G2 = 2 * np.pi * BETA1, 2 * np.pi * BETA2
    return np.array([valley + a * G1 + b * G2 for a in range(-2, 3) for b in range(-2, 3)])


def _valley_distances(grid: BerryGrid):
    c = grid.plaquette_centers().reshape(-1, 2)
    dk = np.min(np.linalg.norm(c[:, None] - _valley_translates(K_POINT)[None], axis=2), axis=1)
    dkp = np.min(np.linalg.norm(c[:, None] - _valley_translates(-K_POINT)[None], axis=2), axis=1)
    return dk.reshape(grid.N, grid.N), dkp.reshape(grid.N, grid.N)


def valley_mask(grid: BerryGrid, valley: str = "K", tol: float = 1e-9) -> np.ndarray:
    """Plaquettes strictly closer to a translate of the chosen valley than to any of the other one.

    Plaquettes equidistant from both (on the mirror lines) belong to neither;
    see :func:`tie_mask`.
    """
    dk, dkp = _valley_distances(grid)
    return dk < dkp - tol if valley == "K" else dkp < dk - tol


def tie_mask(grid: BerryGrid, tol: float = 1e-9) -> np.ndarray:
    dk, dkp = _valley_distances(grid)
    return np.abs(dk - dkp) <= tol


def valley_flux(grid: BerryGrid, valley: str = "K") -> float:
    """Total plaquette curvature in the chosen valley's half of the zone.

    Plaquettes on the boundary between the halves count half to each valley,
    so the two valley fluxes add up to the total flux.
    """
    if valley not in ("K", "Kp"):
        raise ValueError("valley must be 'K' or 'Kp'")
    m = valley_mask(grid, valley)
    flux = float(np.sum(grid.curvature[m]) + 0.5 * np.sum(grid.curvature[tie_mask(grid)]))
    # curvature of this valley's sign that sits in the other half
    same = np.sign(grid.curvature) == np.sign(flux)
    mass = np.sum(np.abs(grid.curvature[same]))
    leak = np.sum(np.abs(grid.curvature[same & ~m])) / mass if mass > 0 else 0.0
    if leak > 0.2:
        log.warning("%.0f%% of the %s-valley curvature lies outside its half of the zone", 100 * leak, valley)
    return flux


def curvature_rows(grid: BerryGrid):
    """``(px, py, F)`` per plaquette centre, for CSV export."""
    c = grid.plaquette_centers()
    for i in range(grid.N):
        for j in range(grid.N):
            yield (c[i, j, 0], c[i, j, 1], grid.curvature[i, j])
