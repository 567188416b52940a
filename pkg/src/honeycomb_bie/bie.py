"""Nyström discretisation of single-layer operators and characteristic-value search.

The single-layer operator ``S(lam)`` on the obstacle boundaries is discretised
with Kress's periodic log-quadrature for the self-interaction of every
obstacle and the trapezoid rule elsewhere.  With quadrature weights ``w`` the
symmetrised matrix ``B = W^{1/2} A W^{-1/2}`` is Hermitian for real ``lam``
and ``dB/dlam`` is positive semidefinite, so between plane-wave resonances the
eigenvalues of ``B`` increase with ``lam``.  Characteristic values are the
zero crossings of these eigenvalues; they are counted by inertia and located
with Brent's method.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .geometry import (
    BoundaryDiscretization,
    LatticeBasis,
    ObstacleShape,
    build_basis,
    discretize_boundary,
)
from .greens import (
    EULER_GAMMA,
    DEFAULT_SPLIT,
    EwaldLattice,
    SpectralResonanceError,
    _c_powers,
    series_order,
)

log = logging.getLogger(__name__)


class CapacityDegeneracyError(ValueError):
    """The Laplace single layer is (numerically) singular."""


class DegenerateDensityError(ValueError):
    """A density produces an identically vanishing field."""


# -- quadrature -----------------------------------------------------------------
def kress_weights(n: int) -> np.ndarray:
    """Matrix ``R[i, k]`` with ``sum_k R[i, k] f(t_k) ~ int ln(4 sin^2((t_i - s)/2)) f(s) ds``."""
    N = n // 2
    t = 2 * np.pi * np.arange(n) / n
    m = np.arange(1, N)
    col = -(2 * np.pi / N) * (np.cos(np.outer(t, m)) @ (1.0 / m)) - (np.pi / N**2) * np.cos(N * t)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def _log_sin2(n: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(n) / n
    d = t[:, None] - t[None, :]
    with np.errstate(divide="ignore"):
        L = np.log(4 * np.sin(d / 2) ** 2)
    np.fill_diagonal(L, 0.0)
    return L


def assemble_laplace_single_layer(disc: BoundaryDiscretization, check: bool = True) -> np.ndarray:
    """Nyström matrix of ``phi -> int -(1/2pi) ln|x-y| phi(y) ds_y``.

    Raises :class:`CapacityDegeneracyError` when the smallest singular value
    is below 1e-6 (the boundary has unit logarithmic capacity).
    """
    n = disc.n
    R = kress_weights(n)
    L = _log_sin2(n)
    d = disc.points[:, None, :] - disc.points[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, 1.0)
    sp = disc.speed[None, :]
    M1 = -sp / (4 * np.pi) * np.ones((n, n))
    M2 = (-np.log(r2) / (4 * np.pi) + L / (4 * np.pi)) * sp
    np.fill_diagonal(M2, -np.log(disc.speed) / (2 * np.pi) * disc.speed)
    A = R * M1 + (2 * np.pi / n) * M2
    if check:
        smin = linalg.svdvals(A)[-1]
        if smin < 1e-6:
            raise CapacityDegeneracyError(f"Laplace single layer nearly singular: sigma_min = {smin:.3e}")
    return A


# -- Bloch system ------------------------------------------------------------------
@dataclass
class Obstacle:
    disc: BoundaryDiscretization
    center: np.ndarray


class BlochSystem:
    """Single-layer system of several obstacles in one periodic cell.

    Parameters
    ----------
    obstacles : obstacles with centres inside the cell of ``lattice``.
    lattice : Ewald data (lattice, Bloch vector, split).
    lam_max : largest ``lam`` that will be requested; fixes the series order.
    """

    def __init__(self, obstacles: list[Obstacle], lattice: EwaldLattice, lam_max: float = 40.0):
        self.obstacles = obstacles
        self.lattice = lattice
        self.lam_max = float(lam_max)
        self.jmax = series_order(lam_max / (4 * lattice.split**2))
        sizes = [o.disc.n for o in obstacles]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])
        self.points = np.vstack([o.center + o.disc.points for o in obstacles])
        self.weights = np.concatenate([o.disc.weights for o in obstacles])
        self.sqrtw = np.sqrt(self.weights)
        self._tables: dict = {}
        self._blocks: list = []
        self._build_tables()
        self._spec_key = None

    # ---- lambda-independent data
    def _reduce(self, dc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split ``dc = r + L`` with lattice vector ``L`` and ``r`` in the centred cell."""
        V = self.lattice.basis.vectors
        coords = np.linalg.solve(V.T, dc)
        n = np.round(coords)
        return dc - n @ V, n @ V

    def _build_tables(self):
        lat = self.lattice
        reach = lat.spatial_reach()
        rmax = max(np.max(np.hypot(*o.disc.points.T)) for o in self.obstacles)
        ident = {}
        for a, oa in enumerate(self.obstacles):
            for b, ob in enumerate(self.obstacles):
                red, L = self._reduce(oa.center - ob.center)
                # nearest image distance between the two centres
                ij = lat.images(reach + 2 * rmax + np.linalg.norm(red))
                e = ij @ lat.basis.vectors
                dist = np.min(np.hypot(*(red - e).T)) if len(e) else np.inf
                if dist > reach + 2 * rmax and a != b:
                    continue
                key = (tuple(np.round(red, 9)), id(oa.disc), id(ob.disc), a == b)
                if key not in self._tables:
                    self._tables[key] = self._block_table(red, oa.disc, ob.disc, a == b)
                phase = np.exp(1j * (lat.p @ L))
                self._blocks.append((a, b, key, phase))
                ident[a, b] = key

    def _block_table(self, dc, da: BoundaryDiscretization, db: BoundaryDiscretization, self_block: bool):
        """Tables ``T[j]`` so the spatial block equals ``sum_j c^j/j! T[j]`` (Nyström form)."""
        lat = self.lattice
        z = (dc + da.points[:, None, :] - db.points[None, :, :]).reshape(-1, 2)
        S = lat.spatial_coefficients(z, self.jmax)["value"].reshape(self.jmax + 1, da.n, db.n)
        n = db.n
        T = S * (2 * np.pi / n) * db.speed[None, None, :]
        if self_block:
            R = kress_weights(n)
            L = _log_sin2(n)
            x0 = np.einsum("ijk,ijk->ij", *(2 * [da.points[:, None, :] - db.points[None, :, :]])) * lat.split**2
            sp = db.speed[None, :] / (4 * np.pi)
            poly = np.ones_like(x0)
            for j in range(self.jmax + 1):
                if j > 0:
                    poly = poly * (-x0) / j  # (-x0)^j / j!
                corr = sp * poly * ((2 * np.pi / n) * L - R)
                # diagonal: regular limit of the e=0 image minus the quadrature of its log part
                loc = (-EULER_GAMMA - 2 * np.log(lat.split * db.speed)) if j == 0 else np.full(n, 1.0 / j)
                diag = (2 * np.pi / n) * db.speed * loc / (4 * np.pi)
                np.fill_diagonal(corr, diag - (db.speed / (4 * np.pi) * np.diag(R) if j == 0 else 0.0))
                T[j] += corr
        return T

    # ---- per-lambda assembly
    def _spectral(self, lam: float):
        m, s = self.lattice.spectral_modes(self.lam_max)
        if self._spec_key is None:
            self._psi = self.sqrtw[:, None] * np.exp(1j * (self.points @ m.T))
            self._spec_key = True
        return s, self._psi

    def check(self, lam: float):
        if lam > self.lam_max + 1e-12:
            raise ValueError(f"lam = {lam} exceeds the prepared range lam_max = {self.lam_max}")
        self.lattice.check_resonance(lam)

    def hermitian(self, lam: float, deriv: bool = False) -> np.ndarray:
        """Symmetrised matrix ``B(lam)`` (or ``dB/dlam`` with ``deriv``)."""
        self.check(lam)
        E2 = self.lattice.split**2
        c = lam / (4 * E2)
        cp = _c_powers(c, self.jmax)
        if deriv:
            cp = np.concatenate([[0.0], cp[:-1]]) / (4 * E2)
        s, psi = self._spectral(lam)
        f, g = self.lattice.spectral_weights(lam, s)
        B = (psi * (g if deriv else f)) @ psi.conj().T
        cache = {}
        for a, b, key, phase in self._blocks:
            if key not in cache:
                cache[key] = np.tensordot(cp, self._tables[key], axes=1)
            ra = slice(self.offsets[a], self.offsets[a + 1])
            rb = slice(self.offsets[b], self.offsets[b + 1])
            B[ra, rb] += phase * cache[key] * (self.sqrtw[ra, None] / self.sqrtw[None, rb])
        return B

    def matrix(self, lam: float, deriv: bool = False) -> np.ndarray:
        """Nyström matrix ``A`` acting on density values at the nodes."""
        B = self.hermitian(lam, deriv)
        return B / self.sqrtw[:, None] * self.sqrtw[None, :]

    def apply(self, lam: float, phi: np.ndarray) -> np.ndarray:
        return self.matrix(lam) @ phi

    def poles(self, lo: float, hi: float) -> np.ndarray:
        return self.lattice.poles(lo, hi)


def primitive_system(shape: ObstacleShape, n_nodes: int, p, lam_max: float = 40.0,
                     split: float = DEFAULT_SPLIT, basis: LatticeBasis | None = None) -> BlochSystem:
    """One obstacle centred at the origin of the primitive cell."""
    disc = discretize_boundary(shape, n_nodes)
    lat = EwaldLattice(basis or build_basis(), np.asarray(p, float), split)
    return BlochSystem([Obstacle(disc, np.zeros(2))], lat, lam_max)


# -- characteristic values ----------------------------------------------------------
@dataclass
class CharacteristicValue:
    """A real characteristic value with its near-null densities.

    ``densities`` are node values ``phi`` with ``A(lam) phi ~ 0``,
    orthonormal in the boundary ``L^2`` inner product.
    """

    lam: float
    multiplicity: int
    densities: list
    residual: float
    singular_values: np.ndarray = field(repr=False, default=None)


class _EigenCache:
    def __init__(self, system: BlochSystem):
        self.system = system
        self.store: dict[float, np.ndarray] = {}
        self.calls = 0

    def __call__(self, lam: float) -> np.ndarray:
        if lam not in self.store:
            self.calls += 1
            self.store[lam] = linalg.eigvalsh(self.system.hermitian(lam), check_finite=False)
        return self.store[lam]

    def count(self, lam: float) -> int:
        return int(np.sum(self(lam) < 0))


def _pole_margin(pole: float) -> float:
    return max(1e-7, 1e-7 * pole)


def split_window(system: BlochSystem, lo: float, hi: float) -> list[tuple[float, float]]:
    """Sub-intervals of ``[lo, hi]`` that stay clear of plane-wave resonances."""
    cuts = system.poles(lo - 1e-12, hi + 1e-12)
    pieces, a = [], lo
    for q in cuts:
        m = _pole_margin(q)
        if q - m > a:
            pieces.append((a, q - m))
        a = max(a, q + m)
    if hi > a:
        pieces.append((a, hi))
    return pieces


def find_characteristic_values(system: BlochSystem, window: tuple[float, float], *,
                               cv_tol: float = 1e-6, xtol: float = 1e-12,
                               cluster_tol: float = 1e-7, densities: bool = True) -> list[CharacteristicValue]:
    """All characteristic values of ``system`` inside ``window``.

    The number of eigenvalues of ``B`` that change sign across a resonance-free
    interval equals the number of characteristic values in it; each crossing
    is bracketed by the interval ends and refined with Brent's method.
    Crossings closer than ``cluster_tol`` are merged into one value whose
    multiplicity is the number of merged crossings.
    """
    lo, hi = window
    if not hi > lo:
        raise ValueError("empty window")
    eig = _EigenCache(system)
    roots = []
    for a, b in split_window(system, lo, hi):
        na, nb = eig.count(a), eig.count(b)
        if na < nb:
            log.warning("eigenvalue count increased across [%g, %g]; monotonicity violated", a, b)
        for j in range(nb, na):
            f = lambda t, j=j: eig(t)[j]  # noqa: E731
            fa, fb = f(a), f(b)
            if fb == 0.0:
                r = b
            else:
                r = optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
            if min(r - lo, hi - r) < 10 * xtol:
                log.warning("characteristic value %.12g sits at the window edge; widen the window", r)
            roots.append(r)
    roots.sort()
    clusters: list[list[float]] = []
    for r in roots:
        if clusters and r - clusters[-1][-1] < cluster_tol * max(1.0, abs(r)):
            clusters[-1].append(r)
        else:
            clusters.append([r])
    out = []
    for cl in clusters:
        lam = float(np.mean(cl))
        out.append(_characterize(system, lam, len(cl), cv_tol, densities))
    return out


def _characterize(system: BlochSystem, lam: float, mult: int, cv_tol: float, with_densities: bool):
    B = system.hermitian(lam)
    mu, V = linalg.eigh(B)
    order = np.argsort(np.abs(mu))
    sv = np.sort(np.abs(mu))
    idx = order[:mult]
    dens = []
    if with_densities:
        Q = V[:, idx] / system.sqrtw[:, None]
        # orthonormalise in the weighted boundary inner product
        Q = _orthonormalize(Q, system.weights)
        dens = [Q[:, k] for k in range(mult)]
    res = float(linalg.svdvals(B)[-1])
    scale = float(np.linalg.norm(B, 2))
    if res >= cv_tol * max(scale, 1.0):
        log.warning("characteristic value %.10g has residual %.2e above tolerance", lam, res)
    return CharacteristicValue(lam, mult, dens, res, sv[: mult + 4])


def _orthonormalize(Q: np.ndarray, w: np.ndarray) -> np.ndarray:
    G = Q.conj().T @ (w[:, None] * Q)
    L = np.linalg.cholesky(G)
    return np.linalg.solve(L.conj(), Q.T).T


def boundary_inner(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> complex:
    """``int conj(u) v ds`` by the trapezoid rule."""
    return complex(np.sum(w * np.conj(u) * v))


# -- fields ------------------------------------------------------------------------
def evaluate_mode(system: BlochSystem, lam: float, phi: np.ndarray, points: np.ndarray):
    """Single-layer potential of ``phi`` at ``points``; zero inside obstacles.

    Returns ``(values, inside)`` where ``inside`` flags points that lie in an
    obstacle (their value is set to 0).
    """
    pts = np.atleast_2d(np.asarray(points, float))
    inside = np.zeros(len(pts), bool)
    for ob in system.obstacles:
        for dc in _nearby_translates(system, ob.center, pts):
            inside |= ob.disc.shape.contains(pts, dc)
    from .greens import green_sums

    vals = np.zeros(len(pts), complex)
    wphi = system.weights * phi
    for k0 in range(0, len(pts), 256):
        blk = pts[k0:k0 + 256]
        z = blk[:, None, :] - system.points[None, :, :]
        G = green_sums(z, lam, system.lattice, check=False)["value"]
        vals[k0:k0 + 256] = G @ wphi
    # points on the boundary nodes: use the Nystrom trace instead of the singular sum
    d = np.hypot(*(pts[:, None, :] - system.points[None, :, :]).transpose(2, 0, 1))
    on_node = d.min(axis=1) < 1e-12
    if np.any(on_node):
        trace = system.matrix(lam) @ phi
        vals[on_node] = trace[d[on_node].argmin(axis=1)]
        inside[on_node] = False
    vals[inside] = 0.0
    return vals, inside


def _nearby_translates(system: BlochSystem, center: np.ndarray, pts: np.ndarray):
    """Lattice translates of ``center`` that can be close to some of ``pts``."""
    V = system.lattice.basis.vectors
    Binv = system.lattice.basis.dual_vectors
    coords = (pts - center) @ Binv.T
    lo, hi = np.floor(coords.min(axis=0)) - 1, np.ceil(coords.max(axis=0)) + 1
    for i in range(int(lo[0]), int(hi[0]) + 1):
        for j in range(int(lo[1]), int(hi[1]) + 1):
            yield center + i * V[0] + j * V[1]


@dataclass
class CellGrid:
    """Midpoint grid on the periodic cell of ``basis``.

    Points are ``x = s1 v1 + s2 v2`` with ``s_i`` at cell-centred positions in
    ``(-1/2, 1/2)``.  ``mask`` is true outside all obstacles.
    """

    basis: LatticeBasis
    shape: tuple[int, int]
    points: np.ndarray
    mask: np.ndarray
    dA: float

    @classmethod
    def build(cls, system: BlochSystem, shape: tuple[int, int]) -> "CellGrid":
        basis = system.lattice.basis
        n1, n2 = shape
        s1 = (np.arange(n1) + 0.5) / n1 - 0.5
        s2 = (np.arange(n2) + 0.5) / n2 - 0.5
        S1, S2 = np.meshgrid(s1, s2, indexing="ij")
        pts = S1[..., None] * basis.e1 + S2[..., None] * basis.e2
        inside = np.zeros(shape, bool)
        flat = pts.reshape(-1, 2)
        for ob in system.obstacles:
            for dc in (ob.center + i * basis.e1 + j * basis.e2 for i in (-1, 0, 1) for j in (-1, 0, 1)):
                inside |= ob.disc.shape.contains(flat, dc).reshape(shape)
        return cls(basis, shape, pts, ~inside, basis.cell_area / (n1 * n2))

    def periodic_part(self, system: BlochSystem, lam: float, phi: np.ndarray) -> np.ndarray:
        """Grid samples of ``exp(-i p.x) u(x)`` for the single-layer field ``u`` of ``phi``.

        The field is synthesised from its plane-wave coefficients
        ``phi_hat(m) / (|C| (|m|^2 - lam))`` by an inverse FFT, truncated to
        the modes the grid resolves.  Samples inside obstacles are set to 0.
        """
        n1, n2 = self.shape
        p = system.lattice.p
        B = 2 * np.pi * self.basis.dual_vectors
        i = np.fft.fftfreq(n1, 1.0 / n1)
        j = np.fft.fftfreq(n2, 1.0 / n2)
        I, Jj = np.meshgrid(i, j, indexing="ij")
        m = p + I[..., None] * B[0] + Jj[..., None] * B[1]
        s = np.einsum("...k,...k->...", m, m)
        wphi = system.weights * phi
        phase = np.exp(-1j * (m.reshape(-1, 2) @ system.points.T))
        hat = (phase @ wphi).reshape(n1, n2)
        coef = hat / (self.basis.cell_area * (s - lam))
        # grid offset -1/2 + 1/(2n) in each lattice coordinate
        o1, o2 = 0.5 / n1 - 0.5, 0.5 / n2 - 0.5
        coef = coef * np.exp(2j * np.pi * (I * o1 + Jj * o2))
        v = np.fft.ifft2(coef) * (n1 * n2)
        return np.where(self.mask, v, 0.0)

    def field(self, system: BlochSystem, lam: float, phi: np.ndarray) -> np.ndarray:
        p = system.lattice.p
        return np.exp(1j * (self.points @ p)) * self.periodic_part(system, lam, phi)

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(np.conj(u) * v * self.mask) * self.dA)

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.inner(u, u).real, 0.0))


def normalize_mode(system: BlochSystem, lam: float, phi: np.ndarray, grid_n: int = 160,
                   grid: CellGrid | None = None) -> np.ndarray:
    """Rescale ``phi`` so its field has unit ``L^2`` norm outside the obstacles.

    The overall phase is fixed by making the largest-modulus grid sample of
    the field real and positive.
    """
    grid = grid or CellGrid.build(system, (grid_n, grid_n))
    u = grid.field(system, lam, phi)
    nrm = grid.norm(u)
    if not nrm > 1e-300:
        raise DegenerateDensityError("density produces a vanishing field")
    k = np.argmax(np.abs(u))
    ph = np.conj(u.flat[k]) / abs(u.flat[k])
    return phi * ph / nrm
