"""Band sweeps, Dirac points, cone slopes and symmetry projections."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bie import (
    BlochSystem,
    CellGrid,
    CharacteristicValue,
    find_characteristic_values,
    normalize_mode,
    primitive_system,
)
from .geometry import BETA1, K_POINT, SYM, ObstacleShape, discretize_boundary

log = logging.getLogger(__name__)

K_SQ = float(K_POINT @ K_POINT)


class DegeneracyError(RuntimeError):
    """The Dirac point does not have multiplicity two."""


@dataclass(frozen=True)
class SolverSettings:
    """Discretisation settings shared by all primitive-cell solves."""

    n_nodes: int = 96
    ewald_split: float = 3.0
    lam_max: float = 40.0
    cv_tol: float = 1e-6
    grid_n: int = 160

    def system(self, shape: ObstacleShape, p) -> BlochSystem:
        return primitive_system(shape, self.n_nodes, p, self.lam_max, self.ewald_split)


# -- symmetry ----------------------------------------------------------------------
def symmetry_project(phi: np.ndarray, perm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Components of ``phi`` in the rotation eigenspaces ``H0, H1, H2``.

    ``perm`` is the node permutation of the rotation, ``(R phi)_k = phi[perm[k]]``
    (see :meth:`BoundaryDiscretization.rotation_permutation`).  ``H_i`` holds
    densities with ``R phi = tau^i phi``.
    """
    phi = np.asarray(phi)
    rots = [phi, phi[..., perm], phi[..., perm][..., perm]]
    tau = SYM.tau
    return tuple(sum(tau ** (-i * k) * rots[k] for k in range(3)) / 3 for i in range(3))


# -- band sweeps ---------------------------------------------------------------------
@dataclass
class BandStructure:
    """Band energies along a path of Bloch vectors."""

    path: np.ndarray
    ell: np.ndarray
    bands: list  # per path point: list of CharacteristicValue (sorted)

    def rows(self):
        for p, l, cvs in zip(self.path, self.ell, self.bands):
            k = 0
            for cv in cvs:
                for _ in range(cv.multiplicity):
                    k += 1
                    yield (p[0], p[1], l, k, cv.lam, cv.residual)

    def energies(self, i: int) -> np.ndarray:
        return np.array([cv.lam for cv in self.bands[i] for _ in range(cv.multiplicity)])


def band_sweep(path, window, shape: ObstacleShape = ObstacleShape(), settings: SolverSettings = SolverSettings(),
               ell=None, mapper=map) -> BandStructure:
    """Characteristic values in ``window`` at every Bloch vector of ``path``.

    ``mapper`` evaluates the independent solves (e.g. ``executor.map``); it
    must preserve order.
    """
    path = np.atleast_2d(np.asarray(path, float))

    def solve(p):
        system = settings.system(shape, p)
        return find_characteristic_values(system, window, cv_tol=settings.cv_tol, densities=False)

    bands = list(mapper(solve, path))
    ell = np.arange(len(path), dtype=float) if ell is None else np.asarray(ell, float)
    return BandStructure(path, ell, bands)


# -- Dirac point ---------------------------------------------------------------------
@dataclass
class DiracPoint:
    """Degenerate characteristic value at ``K`` with symmetry-adapted densities.

    ``rho1`` lies in ``H1`` and ``rho2`` in ``H2``; both are normalised so
    that their fields have unit ``L^2`` norm in the cell minus the obstacle.
    """

    lambda_star: float
    rho1: np.ndarray
    rho2: np.ndarray
    shape: ObstacleShape
    settings: SolverSettings
    system: BlochSystem = field(repr=False)
    residual: float = 0.0
    singular_values: np.ndarray = field(default=None, repr=False)
    h0_leak: float = 0.0
    pair_mismatch: float = 0.0
    m_star: float | None = None

    @property
    def p_star(self) -> np.ndarray:
        return K_POINT.copy()

    @property
    def eta(self) -> float:
        return self.shape.eta


def leading_order_shift(a_frak: float, eta: float) -> float:
    """Leading-order Dirac energy shift ``(2/3)(2 pi)^2 a eta^2 / |C|``."""
    return (2 / 3) * (2 * np.pi) ** 2 * a_frak * eta**2 / (math.sqrt(3) / 2)


def default_dirac_window(shape: ObstacleShape) -> tuple[float, float]:
    """``[|K|^2 - 3, |K|^2 + 3]`` widened upward by 1.5 times the leading-order shift.

    The fixed window misses the Dirac point for larger obstacles (for the
    default shape the shift is about 7.5), so the upper end follows the
    leading-order estimate computed from the Laplace capacity coefficient.
    """
    from .perturb import compute_a_frak

    a = compute_a_frak(shape).real
    return K_SQ - 3.0, K_SQ + 3.0 + 1.5 * leading_order_shift(a, shape.eta)


def locate_dirac(shape: ObstacleShape = ObstacleShape(), window=None,
                 settings: SolverSettings = SolverSettings()) -> DiracPoint:
    """Find the doubly degenerate characteristic value at ``K`` and adapt its basis."""
    if shape.eps != 0:
        raise ValueError("the Dirac point requires an unrotated obstacle (eps = 0)")
    window = window or default_dirac_window(shape)
    system = settings.system(shape, K_POINT)
    cvs = find_characteristic_values(system, window, cv_tol=settings.cv_tol)
    if len(cvs) != 1 or cvs[0].multiplicity != 2:
        found = [(round(c.lam, 8), c.multiplicity) for c in cvs]
        raise DegeneracyError(f"expected one double characteristic value in {window}, found {found}")
    cv = cvs[0]
    rho1, rho2, leak = adapt_pair(cv, system)
    grid = CellGrid.build(system, (settings.grid_n, settings.grid_n))
    rho1 = normalize_mode(system, cv.lam, rho1, grid=grid)
    rho2 = normalize_mode(system, cv.lam, rho2, grid=grid)
    disc = system.obstacles[0].disc
    mismatch = _pair_mismatch(rho1, rho2, disc.reflection_permutation(), system.weights)
    return DiracPoint(cv.lam, rho1, rho2, shape, settings, system, cv.residual,
                      cv.singular_values, leak, mismatch)


def adapt_pair(cv: CharacteristicValue, system: BlochSystem):
    """Split a two-dimensional null space into its ``H1`` and ``H2`` members.

    Returns ``(rho1, rho2, leak)`` with ``leak`` the largest relative ``H0``
    component found in the null space.
    """
    disc = system.obstacles[0].disc
    perm = disc.rotation_permutation()
    w = system.weights
    Q = np.column_stack(cv.densities)
    comps = symmetry_project(Q.T, perm)  # each (2, n)
    leak = max(np.sqrt(np.sum(w * abs(comps[0][k]) ** 2)) for k in range(Q.shape[1]))
    out = []
    for i in (1, 2):
        P = comps[i].T * np.sqrt(w)[:, None]
        u, s, vh = np.linalg.svd(P, full_matrices=False)
        rho = u[:, 0] / np.sqrt(w)
        out.append(rho)
    return out[0], out[1], float(leak)


def _pair_mismatch(rho1, rho2, fperm, w) -> float:
    """Relative distance between ``rho2`` and the reflected ``rho1`` after phase alignment."""
    f = rho1[fperm]
    c = np.sum(w * np.conj(f) * rho2)
    ph = c / abs(c) if abs(c) > 0 else 1.0
    return float(np.sqrt(np.sum(w * abs(rho2 - ph * f) ** 2) / np.sum(w * abs(rho2) ** 2)))


# -- cone slope ----------------------------------------------------------------------
@dataclass
class ConeSlope:
    m_star: float
    anisotropy: float
    samples: np.ndarray  # rows: angle, radius, lambda_minus, lambda_plus


def measure_cone_slope(dirac: DiracPoint, radii=(0.02, 0.04), n_dirs: int = 8) -> ConeSlope:
    """Fit ``|lambda_pm(K + dp) - lambda*| = m* |dp|`` over directions and radii.

    Both bands share one slope.  Anisotropy is the spread of per-direction
    slopes relative to their mean.
    """
    lam0 = dirac.lambda_star
    rows = []
    for k in range(n_dirs):
        ang = 2 * np.pi * k / n_dirs
        u = np.array([math.cos(ang), math.sin(ang)])
        for r in radii:
            system = dirac.settings.system(dirac.shape, K_POINT + r * u)
            cvs = find_characteristic_values(system, (lam0 - 6 * r, lam0 + 6 * r), densities=False)
            lams = sorted(c.lam for c in cvs for _ in range(c.multiplicity))
            if len(lams) != 2:
                raise RuntimeError(f"expected two bands near the Dirac point at angle {ang:.3f}, radius {r}")
            rows.append((ang, r, lams[0], lams[1]))
    rows = np.array(rows)
    dl = np.concatenate([lam0 - rows[:, 2], rows[:, 3] - lam0])
    rr = np.concatenate([rows[:, 1], rows[:, 1]])
    m = float(dl @ rr / (rr @ rr))
    per_dir = []
    for k in range(n_dirs):
        sel = np.isclose(rows[:, 0], 2 * np.pi * k / n_dirs)
        d = np.concatenate([lam0 - rows[sel, 2], rows[sel, 3] - lam0])
        q = np.concatenate([rows[sel, 1], rows[sel, 1]])
        per_dir.append(d @ q / (q @ q))
    per_dir = np.array(per_dir)
    aniso = float((per_dir.max() - per_dir.min()) / per_dir.mean())
    if aniso > 0.1:
        log.warning("cone anisotropy %.1f%% exceeds 10%%; shrink the radii", 100 * aniso)
    dirac.m_star = m
    return ConeSlope(m, aniso, rows)


# -- no-fold check -------------------------------------------------------------------
@dataclass
class NoFoldReport:
    direction: np.ndarray
    ell: np.ndarray
    distance: np.ndarray  # distance from lambda* to the nearest band at each sample
    touches: list  # (ell, distance, on_K_translate, on_Kp_translate)


def _nearest_band(shape, settings, p, lam0, half):
    system = settings.system(shape, p)
    cvs = find_characteristic_values(system, (lam0 - half, lam0 + half), densities=False)
    return min([abs(c.lam - lam0) for c in cvs], default=half)


def _on_translate(p: np.ndarray, q: np.ndarray, tol: float = 1e-3) -> bool:
    from .geometry import E1, E2

    coords = np.array([E1 @ (p - q), E2 @ (p - q)]) / (2 * np.pi)
    return bool(np.all(np.abs(coords - np.round(coords)) < tol))


def verify_no_fold(direction=BETA1, lambda_star: float = None, shape: ObstacleShape = ObstacleShape(),
                   settings: SolverSettings = SolverSettings(), n_samples: int = 48,
                   half_window: float = 2.0, tol: float = 1e-4) -> NoFoldReport:
    """Scan ``p = K + ell * direction`` over ``ell in [0, 2 pi)`` for bands touching ``lambda*``.

    Local minima of the distance between ``lambda*`` and the nearest band are
    refined by bounded scalar minimisation; minima below ``tol`` are reported
    with their relation to the ``K`` and ``K'`` translates.
    """
    direction = np.asarray(direction, float)
    ells = 2 * np.pi * np.arange(n_samples) / n_samples
    dist = np.array([_nearest_band(shape, settings, K_POINT + l * direction, lambda_star, half_window)
                     for l in ells])
    h = ells[1] - ells[0]
    touches = []
    for i in range(n_samples):
        if dist[i] <= dist[i - 1] and dist[i] <= dist[(i + 1) % n_samples] and dist[i] < half_window:
            res = optimize.minimize_scalar(
                lambda l: _nearest_band(shape, settings, K_POINT + l * direction, lambda_star, half_window),
                bounds=(ells[i] - h, ells[i] + h), method="bounded", options={"xatol": 1e-7})
            if res.fun < tol:
                l = float(res.x) % (2 * np.pi)
                p = K_POINT + l * direction
                touches.append((l, float(res.fun), _on_translate(p, K_POINT), _on_translate(p, -K_POINT)))
    return NoFoldReport(direction, ells, dist, touches)
