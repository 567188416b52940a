"""Interface modes between the +eps and -eps lattices in a periodic supercell.

The supercell stacks ``W`` primitive cells along the transverse vector
``e1`` of an interface basis (``e2`` runs along the interface).  Cells
``m = 0..W/2-1`` hold obstacles rotated by ``+eps`` and cells
``m = -W/2..-1`` obstacles rotated by ``-eps``.  Periodic wrapping produces
two domain walls per period: the central wall between cells ``-1`` and ``0``
and the seam between ``W/2-1`` and ``-W/2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bie import BlochSystem, CellGrid, Obstacle, find_characteristic_values
from .geometry import InterfaceSpec, LatticeBasis, ObstacleShape, classify_interface, discretize_boundary
from .greens import EwaldLattice

log = logging.getLogger(__name__)


class SupercellTooSmallError(RuntimeError):
    """An interface mode is not localised well enough for the chosen supercell width."""


@dataclass(frozen=True)
class SupercellSpec:
    interface: InterfaceSpec
    W: int = 10
    eps: float = 0.05
    k_par: float = 4 * np.pi / 3
    transverse_phase: float = 0.0

    def __post_init__(self):
        if self.W % 2 or self.W < 6:
            raise ValueError(f"W must be even and at least 6, got {self.W}")

    @property
    def basis(self) -> LatticeBasis:
        b = self.interface.basis
        return LatticeBasis(self.W * b.e1, b.e2, orientation=f"supercell({b.orientation})")

    def bloch_vector(self) -> np.ndarray:
        """``p`` with ``p . e2 = k_par`` and ``p . (W e1) = transverse_phase``."""
        b = self.interface.basis
        return self.k_par * b.beta2 + self.transverse_phase / self.W * b.beta1

    @property
    def cells(self) -> np.ndarray:
        return np.arange(-self.W // 2, self.W // 2)


def interface_spec(kind: str | tuple[int, int]) -> InterfaceSpec:
    if kind == "zigzag":
        return classify_interface(0, 1)
    if kind == "armchair":
        return classify_interface(1, 1)
    return classify_interface(*kind)


def build_supercell(spec: SupercellSpec, shape: ObstacleShape = ObstacleShape(), n_nodes: int = 96,
                    lam_max: float = 40.0, split: float = 3.0) -> BlochSystem:
    """Single-layer system of the ``W``-obstacle supercell at ``spec.k_par``."""
    plus = discretize_boundary(shape.with_(eps=abs(spec.eps)), n_nodes)
    minus = discretize_boundary(shape.with_(eps=-abs(spec.eps)), n_nodes)
    e1 = spec.interface.basis.e1
    rmax = max(np.max(np.hypot(*d.points.T)) for d in (plus, minus))
    gap = min(np.linalg.norm(v) for v in (e1, spec.interface.basis.e2, e1 - spec.interface.basis.e2,
                                          e1 + spec.interface.basis.e2))
    if 2 * rmax >= gap:
        raise ValueError("rotated obstacles overlap")
    obstacles = [Obstacle(plus if m >= 0 else minus, m * e1) for m in spec.cells]
    lat = EwaldLattice(spec.basis, spec.bloch_vector(), split)
    return BlochSystem(obstacles, lat, lam_max)


@dataclass
class InterfaceMode:
    k_par: float
    lam: float
    density: np.ndarray = field(repr=False)
    center: float  # field-weighted transverse position in cell units
    wall: str  # 'central' | 'seam' | 'hybrid'
    kappa: float
    r2: float
    cell_norms: np.ndarray = field(repr=False)
    residual: float = 0.0
    central_weight: float = 0.0  # share of |u|^2 on the central-wall half of the supercell
    spread: float = 0.0  # energy spread of the localised combination (0 for a single eigenmode)


def _row_cells(W: int, g: int) -> np.ndarray:
    """Cell index ``m`` of every grid row of a ``(W g, g)`` supercell grid."""
    rows = (np.arange(W * g) + 0.5) / g - W / 2  # transverse coordinate in cell units
    idx = np.floor(rows + 0.5).astype(int)
    idx[idx == W // 2] = -W // 2
    return idx


def _norms_from_field(v: np.ndarray, W: int, g: int, dA: float) -> np.ndarray:
    out = np.zeros(W)
    np.add.at(out, _row_cells(W, g) + W // 2, (np.abs(v) ** 2).sum(axis=1) * dA)
    return np.sqrt(out)


def cell_norms(system: BlochSystem, spec: SupercellSpec, lam: float, phi: np.ndarray, g: int = 24) -> np.ndarray:
    """``L^2`` norm of the field in each primitive cell of the supercell, ordered like ``spec.cells``."""
    grid = CellGrid.build(system, (spec.W * g, g))
    return _norms_from_field(grid.periodic_part(system, lam, phi), spec.W, g, grid.dA)


def _circular_center(norms: np.ndarray, cells: np.ndarray, W: int) -> float:
    w = norms**2
    ang = 2 * np.pi * cells / W
    z = np.sum(w * np.exp(1j * ang))
    return float(np.angle(z) * W / (2 * np.pi))


def _wall_distance(x, wall_pos: float, W: int):
    return np.abs((np.asarray(x, float) - wall_pos + W / 2) % W - W / 2)


def decay_fit(norms: np.ndarray, cells: np.ndarray, wall_pos: float, W: int, max_dist: float | None = None):
    """Fit ``log(norm) = a - kappa * distance`` over cells on both sides of a wall.

    Distances are measured periodically from ``wall_pos``; cells within
    ``max_dist`` (default ``W/2 - 1.5``, which keeps away from the opposite
    wall) are used.  Returns ``(kappa, r2)``.
    """
    if max_dist is None:
        max_dist = W / 2 - 1.5
    d = _wall_distance(cells, wall_pos, W)
    sel = d <= max_dist + 1e-9
    x, y = d[sel], np.log(norms[sel])
    if len(x) < 4:
        raise ValueError("need at least four cells for a decay fit")
    A = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid**2) / ss if ss > 0 else 0.0
    if r2 < 0.9:
        log.warning("poor exponential fit: R^2 = %.3f", r2)
    return float(coef[1]), float(r2)


def find_interface_modes(spec: SupercellSpec, window: tuple[float, float], shape: ObstacleShape = ObstacleShape(),
                         n_nodes: int = 96, strict: bool = True, system: BlochSystem | None = None,
                         g: int = 24, cluster_frac: float = 0.02) -> list[InterfaceMode]:
    """Characteristic values of the supercell inside ``window`` with wall assignment.

    The central and seam walls can carry modes at nearly equal energies, so
    supercell eigenmodes may be arbitrary mixtures of the two.  Modes whose
    energies lie within ``cluster_frac`` of the window width of each other
    are rotated among themselves into the eigenbasis of the central-half
    weight ``<u_i, chi u_j>`` before classification; isolated modes are kept
    as they are.  Each resulting mode is assigned
    to the wall nearest its field-weighted centre; a centre within half a cell
    of the midpoint between the walls is labelled ``'hybrid'``.  With
    ``strict``, a mode decaying too weakly over half the supercell
    (``kappa * W/2 < 3``) or a hybrid mode raises
    :class:`SupercellTooSmallError`.
    """
    system = system or build_supercell(spec, shape, n_nodes)
    cvs = find_characteristic_values(system, window)
    W = spec.W
    central, seam = -0.5, W / 2 - 0.5
    if not cvs:
        return []
    grid = CellGrid.build(system, (W * g, g))
    lams, dens, fields = [], [], []
    for cv in cvs:
        for phi in cv.densities:
            v = grid.periodic_part(system, cv.lam, phi)
            nrm = math.sqrt(np.sum(np.abs(v) ** 2) * grid.dA)
            lams.append(cv.lam)
            dens.append(phi / nrm)
            fields.append(v / nrm)
    lams = np.array(lams)
    V = np.array(fields).reshape(len(lams), -1)
    chi = (_wall_distance(_row_cells(W, g), central, W) < W / 4)[:, None]
    chi = np.broadcast_to(chi, (W * g, g)).ravel()
    P = (np.conj(V) * chi) @ V.T * grid.dA
    P = (P + P.conj().T) / 2
    # rotate within clusters of nearly equal energy, where wall mixing is unconstrained
    weights = P.diagonal().real.copy()
    C = np.eye(len(lams), dtype=complex)
    tol = cluster_frac * (window[1] - window[0])
    order = np.argsort(lams)
    groups = np.split(order, np.flatnonzero(np.diff(lams[order]) > tol) + 1)
    for grp in groups:
        if len(grp) > 1:
            w_g, c_g = np.linalg.eigh(P[np.ix_(grp, grp)])
            weights[grp] = w_g
            C[np.ix_(grp, grp)] = c_g
    modes = []
    for k in np.argsort(-weights):
        c = C[:, k]
        prob = np.abs(c) ** 2
        lam = float(prob @ lams)
        spread = float(np.sqrt(prob @ (lams - lam) ** 2))
        v = (c @ V).reshape(W * g, g)
        norms = _norms_from_field(v, W, g, grid.dA)
        phi = np.tensordot(c, np.array(dens), axes=1)
        ctr = _circular_center(norms, spec.cells, W)
        dc, ds = _wall_distance(ctr, central, W), _wall_distance(ctr, seam, W)
        wall = "hybrid" if abs(dc - ds) < 0.5 else ("central" if dc < ds else "seam")
        kappa, r2 = decay_fit(norms, spec.cells, seam if wall == "seam" else central, W)
        resid = float(np.linalg.norm(system.apply(lam, phi) * np.sqrt(system.weights))
                      / np.linalg.norm(phi * np.sqrt(system.weights)))
        modes.append(InterfaceMode(spec.k_par, lam, phi, ctr, wall, kappa, r2, norms, resid,
                                   float(weights[k]), spread))
    modes.sort(key=lambda m: (m.wall, m.lam))
    if strict:
        for m in modes:
            if m.wall == "hybrid" or m.kappa * W / 2 < 3:
                raise SupercellTooSmallError(
                    f"mode at lambda={m.lam:.6f} ({m.wall}) decays with kappa={m.kappa:.3f} per cell; "
                    f"kappa*W/2 = {m.kappa * W / 2:.2f} < 3, the walls hybridise")
    return modes


@dataclass
class DispersionResult:
    k: np.ndarray
    modes: list  # per k: list of InterfaceMode on the chosen wall
    slopes: list  # one slope per branch
    intercepts: list  # fitted energy of each branch at k_star

    def rows(self):
        for k, ms in zip(self.k, self.modes):
            for m in ms:
                yield (k, m.lam, m.wall, m.center, m.kappa, m.residual)


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if len(x) < 2 or np.ptp(x) == 0:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(icpt)


def dispersion_sweep(spec: SupercellSpec, k_values, window, k_star: float, shape: ObstacleShape = ObstacleShape(),
                     n_nodes: int = 96, n_branches: int = 1, wall: str = "central",
                     lam_star: float | None = None, mapper=map) -> DispersionResult:
    """Interface-mode energies over ``k_values`` and least-squares slopes.

    For one branch (zigzag type) the mode nearest ``lam_star`` (or the window
    centre) is followed.  For two branches (armchair type) the two modes at
    each ``k`` are assumed to cross at ``k_star``: the branch of positive slope
    is the upper mode for ``k > k_star`` and the lower one for ``k < k_star``.
    Each branch is fitted with its own intercept because finite ``eps`` splits
    the pair slightly at ``k_star``; at ``k_star`` itself the pair mean is used.
    ``mapper`` evaluates the per-``k`` solves and must preserve order.
    """
    centre = lam_star if lam_star is not None else 0.5 * (window[0] + window[1])

    def solve(k):
        s = SupercellSpec(spec.interface, spec.W, spec.eps, float(k), spec.transverse_phase)
        return [m for m in find_interface_modes(s, window, shape, n_nodes, strict=False) if m.wall == wall]

    per_k = list(mapper(solve, k_values))
    for k, ms in zip(k_values, per_k):
        if len(ms) < n_branches:
            log.warning("only %d %s-wall modes at k=%.4f; truncated range", len(ms), wall, k)
    k_values = np.asarray(k_values, float)
    x = k_values - k_star
    slopes, icpts = [], []
    if n_branches == 1:
        xs, ys = [], []
        for dx, ms in zip(x, per_k):
            if ms:
                xs.append(dx)
                ys.append(min((m.lam for m in ms), key=lambda l: abs(l - centre)))
        sl, ic = _fit_line(np.array(xs), np.array(ys))
        slopes.append(sl)
        icpts.append(ic)
    else:
        up, down = ([], []), ([], [])
        for dx, ms in zip(x, per_k):
            if len(ms) < 2:
                continue
            lams = sorted(m.lam for m in ms)
            lo, hi = lams[0], lams[-1]
            if abs(dx) < 1e-12:
                lo = hi = 0.5 * (lo + hi)
            a, b = (hi, lo) if dx > 0 else (lo, hi)
            up[0].append(dx)
            up[1].append(a)
            down[0].append(dx)
            down[1].append(b)
        for xs, ys in (up, down):
            sl, ic = _fit_line(np.array(xs), np.array(ys))
            slopes.append(sl)
            icpts.append(ic)
    return DispersionResult(k_values, per_k, slopes, icpts)
