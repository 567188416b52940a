"""Quasi-periodic Helmholtz Green function and its parameter derivatives.

``G`` solves ``(-Delta - lam) G(., y) = sum_e exp(i p.e) delta(. - y - e)`` over
the lattice ``e``.  It is evaluated by Ewald summation with split parameter
``E``: with ``c = lam / (4 E^2)`` and ``x_e = |z - e|^2 E^2``,

    G(z) = 1/(4 pi) sum_e exp(i p.e) sum_j c^j / j! E_{j+1}(x_e)
         + 1/|C| sum_m exp(i m.z) exp(-(|m|^2 - lam)/(4 E^2)) / (|m|^2 - lam)

where ``m`` runs over ``p + 2 pi (dual lattice)`` and ``E_n`` is the
generalised exponential integral.  The spatial part is a power series in
``c`` whose coefficients do not depend on ``lam``; the assembly code in
:mod:`honeycomb_bie.bie` caches them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .geometry import LatticeBasis, SYM, build_basis, dual_lattice_points

EULER_GAMMA = float(np.euler_gamma)
DEFAULT_SPLIT = 3.0
# exp(-X_CUT) ~ 1e-16: both Ewald sums are truncated where the Gaussian factor drops below this
X_CUT = 37.0


class SpectralResonanceError(ArithmeticError):
    """``lam`` coincides with a free-space plane-wave energy ``|m|^2``."""

    def __init__(self, lam: float, m2: float):
        super().__init__(f"lambda = {lam!r} is resonant with |m|^2 = {m2!r}")
        self.lam = lam
        self.m2 = m2


def hankel0(z):
    """Hankel function ``H_0^(1)(z) = J_0(z) + i Y_0(z)`` for ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("hankel0 requires z > 0")
    out = special.hankel1(0, z)
    return out[()] if out.ndim == 0 else out


def expint_orders(x: np.ndarray, jmax: int) -> np.ndarray:
    """``E_0(x), ..., E_{jmax+1}(x)`` stacked along the first axis, for ``x > 0``.

    Uses forward recurrence from ``E_1``.  The recurrence amplifies relative
    errors when ``x > n``, but only where ``E_n(x) <= exp(-x)/x`` is tiny, so
    the absolute error stays at rounding level for all orders.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((jmax + 2,) + x.shape)
    ex = np.exp(-x)
    out[0] = ex / x
    out[1] = special.exp1(x)
    for n in range(1, jmax + 1):
        out[n + 1] = (ex - x * out[n]) / n
    return out


def series_order(c: float, tol: float = 1e-17) -> int:
    """Number of terms so that ``c^j / j!`` drops below ``tol`` (relative to ``e^c``)."""
    c = abs(c)
    term, j = 1.0, 0
    while True:
        j += 1
        term *= c / j
        if j > c and term < tol:
            return j


@dataclass
class EwaldLattice:
    """Ewald machinery for one Bravais lattice and Bloch vector ``p``.

    Parameters
    ----------
    basis : lattice with direct vectors ``e1, e2``.
    p : Bloch vector (Cartesian).
    split : Ewald split parameter ``E``.
    """

    basis: LatticeBasis = field(default_factory=build_basis)
    p: np.ndarray = field(default_factory=lambda: np.zeros(2))
    split: float = DEFAULT_SPLIT

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.area = self.basis.cell_area
        self._spec_cache: dict = {}

    # -- lattice bookkeeping ------------------------------------------------
    def images(self, reach: float) -> np.ndarray:
        """Integer coefficient pairs of lattice points with ``|e| <= reach``."""
        V = self.basis.vectors
        Binv = self.basis.dual_vectors
        n1 = int(math.ceil(reach * np.linalg.norm(Binv[0]))) + 1
        n2 = int(math.ceil(reach * np.linalg.norm(Binv[1]))) + 1
        i, j = np.meshgrid(np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1), indexing="ij")
        ij = np.column_stack([i.ravel(), j.ravel()])
        e = ij @ V
        keep = np.einsum("ij,ij->i", e, e) <= reach * reach
        return ij[keep]

    def spatial_reach(self) -> float:
        return math.sqrt(X_CUT) / self.split

    def spectral_modes(self, lam_max: float) -> tuple[np.ndarray, np.ndarray]:
        """Modes ``m`` and ``|m|^2`` needed for ``lam <= lam_max``."""
        # bucket the energy so that nearby lam share one mode list
        key = 10.0 * math.ceil(max(lam_max, 0.0) / 10.0 + 1.0)
        if key not in self._spec_cache:
            s_max = key + 4 * self.split**2 * X_CUT
            m = dual_lattice_points(self.p, math.sqrt(s_max), self.basis)
            s = np.einsum("ij,ij->i", m, m)
            order = np.lexsort((m[:, 1], m[:, 0], np.round(s, 12)))
            self._spec_cache = {key: (m[order], s[order])}
        return self._spec_cache[key]

    def check_resonance(self, lam: float, rtol: float = 1e-8) -> None:
        m = dual_lattice_points(self.p, math.sqrt(lam) + 1.0, self.basis)
        s = np.einsum("ij,ij->i", m, m)
        if s.size:
            k = np.argmin(np.abs(s - lam))
            if abs(s[k] - lam) <= rtol * lam:
                raise SpectralResonanceError(lam, float(s[k]))

    def poles(self, lo: float, hi: float) -> np.ndarray:
        """Sorted distinct plane-wave energies ``|m|^2`` in ``[lo, hi]``."""
        m = dual_lattice_points(self.p, math.sqrt(max(hi, 0.0)), self.basis)
        s = np.sort(np.einsum("ij,ij->i", m, m))
        s = s[(s >= lo) & (s <= hi)]
        if s.size == 0:
            return s
        keep = np.concatenate([[True], np.diff(s) > 1e-9 * max(1.0, hi)])
        return s[keep]

    # -- pointwise sums -----------------------------------------------------
    def spatial_coefficients(self, z: np.ndarray, jmax: int, *, skip_origin: bool = False,
                             grad: bool = False, dp: bool = False):
        """Coefficients of ``c^j / j!`` in the spatial sum, ``j = 0..jmax``.

        Returns a dict with ``'value'`` of shape ``(jmax+1, N)`` and optionally
        ``'grad'`` (``(jmax+1, N, 2)``, gradient in z) and ``'dp'``
        (``(jmax+1, N, 2)``, gradient in p).  The ``1/(4 pi)`` factor is
        included.  Image points closer than 1e-12 to ``z`` are always skipped;
        with ``skip_origin`` the ``e = 0`` image is skipped too.
        """
        z = np.atleast_2d(np.asarray(z, dtype=float))
        N = z.shape[0]
        E2 = self.split**2
        rz = float(np.max(np.hypot(z[:, 0], z[:, 1]))) if N else 0.0
        ij = self.images(self.spatial_reach() + rz)
        if skip_origin:
            ij = ij[np.any(ij != 0, axis=1)]
        e = ij @ self.basis.vectors
        phase = np.exp(1j * (e @ self.p))
        val = np.zeros((jmax + 1, N), complex)
        gz = np.zeros((jmax + 1, N, 2), complex) if grad else None
        gp = np.zeros((jmax + 1, N, 2), complex) if dp else None
        # chunk over images to bound memory
        for k0 in range(0, len(e), 64):
            ek, ph = e[k0:k0 + 64], phase[k0:k0 + 64]
            d = z[:, None, :] - ek[None, :, :]
            x = np.einsum("nkc,nkc->nk", d, d) * E2
            ok = (x < X_CUT + 10) & (x > 1e-24 * E2)
            if not np.any(ok):
                continue
            nn, kk = np.nonzero(ok)
            xs = x[nn, kk]
            En = expint_orders(xs, jmax)
            w = ph[kk] / (4 * np.pi)
            for j in range(jmax + 1):
                val[j] += np.bincount(nn, En[j + 1] * w.real, N) + 1j * np.bincount(nn, En[j + 1] * w.imag, N)
                if grad:
                    # d/dz E_{j+1}(x) = -E_j(x) * 2 E^2 (z - e)
                    coef = -En[j] * 2 * E2 * w
                    for a in range(2):
                        t = coef * d[nn, kk, a]
                        gz[j, :, a] += np.bincount(nn, t.real, N) + 1j * np.bincount(nn, t.imag, N)
                if dp:
                    coef = 1j * En[j + 1] * w
                    for a in range(2):
                        t = coef * ek[kk, a]
                        gp[j, :, a] += np.bincount(nn, t.real, N) + 1j * np.bincount(nn, t.imag, N)
        out = {"value": val}
        if grad:
            out["grad"] = gz
        if dp:
            out["dp"] = gp
        return out

    def spectral_weights(self, lam: float, s: np.ndarray):
        """``f(s) = exp(-(s-lam)/4E^2)/(s-lam)`` and ``g = -df/ds``, both divided by |C|."""
        E2 = self.split**2
        d = s - lam
        ex = np.exp(-d / (4 * E2))
        f = ex / d / self.area
        g = ex * (1 / (4 * E2 * d) + 1 / d**2) / self.area
        return f, g


def _c_powers(c: float, jmax: int) -> np.ndarray:
    """``c^j / j!`` for ``j = 0..jmax``."""
    out = np.empty(jmax + 1)
    out[0] = 1.0
    for j in range(1, jmax + 1):
        out[j] = out[j - 1] * c / j
    return out


@dataclass(frozen=True)
class GreenParams:
    """Spectral parameter, Bloch vector and lattice for a Green-function evaluation."""

    lam: float
    p: tuple[float, float]
    basis: LatticeBasis = field(default_factory=build_basis)
    ewald_split: float = DEFAULT_SPLIT

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    def lattice(self) -> EwaldLattice:
        return EwaldLattice(self.basis, np.asarray(self.p, float), self.ewald_split)


def green_sums(z, lam: float, lat: EwaldLattice, *, grad=False, dlam=False, dp=False,
               skip_origin=False, check=True) -> dict:
    """Evaluate ``G`` and selected derivatives at separations ``z`` (shape (..., 2)).

    With ``skip_origin`` the ``e = 0`` spatial image is left out, which is
    what the ``eps``-kernel needs (that image contributes exactly zero there).
    """
    z = np.asarray(z, dtype=float)
    shp = z.shape[:-1]
    z2 = z.reshape(-1, 2)
    if check:
        lat.check_resonance(lam)
    c = lam / (4 * lat.split**2)
    jmax = series_order(c)
    cp = _c_powers(c, jmax)
    sp = lat.spatial_coefficients(z2, jmax, grad=grad, dp=dp, skip_origin=skip_origin)
    m, s = lat.spectral_modes(lam)
    f, g = lat.spectral_weights(lam, s)
    out = {}
    ph = np.exp(1j * (z2 @ m.T))  # (N, M)
    out["value"] = cp @ sp["value"] + ph @ f
    if grad:
        out["grad"] = np.einsum("j,jna->na", cp, sp["grad"]) + 1j * (ph * f) @ m
    if dlam:
        # d/dlam (c^j / j!) = c^{j-1}/(j-1)! / (4 E^2)
        cpd = np.concatenate([[0.0], cp[:-1]]) / (4 * lat.split**2)
        out["dlam"] = cpd @ sp["value"] + ph @ g
    if dp:
        spec = 1j * z2 * (ph @ f)[:, None] - 2 * (ph * g) @ m
        out["dp"] = np.einsum("j,jna->na", cp, sp["dp"]) + spec
    for k, v in out.items():
        out[k] = v.reshape(shp + v.shape[1:])
    return out


def regular_part_at_origin(lam: float, lat: EwaldLattice, *, dlam: bool = False) -> complex:
    """``lim_{z->0} G(z) + ln|z| / (2 pi)`` (or its ``lam``-derivative)."""
    c = lam / (4 * lat.split**2)
    jmax = series_order(c)
    cp = _c_powers(c, jmax)
    origin = lat.spatial_coefficients(np.zeros((1, 2)), jmax, skip_origin=True)["value"][:, 0]
    m, s = lat.spectral_modes(lam)
    f, g = lat.spectral_weights(lam, s)
    j = np.arange(1, jmax + 1)
    if not dlam:
        local = (-EULER_GAMMA - 2 * math.log(lat.split) + np.sum(cp[1:] / j)) / (4 * np.pi)
        return complex(local + cp @ origin + f.sum())
    cpd = np.concatenate([[0.0], cp[:-1]]) / (4 * lat.split**2)
    local = np.sum(cpd[1:] / j) / (4 * np.pi)
    return complex(local + cpd @ origin + g.sum())


# -- point-pair API -------------------------------------------------------------
def _sep(x, y) -> np.ndarray:
    return np.asarray(x, float) - np.asarray(y, float)


def qp_green(x, y, params: GreenParams):
    """``G(x, y; lam, p)``; ``x - y`` must not be a lattice vector."""
    return green_sums(_sep(x, y), params.lam, params.lattice())["value"]


def qp_green_grad(x, y, params: GreenParams):
    """Gradient of ``G`` in ``x``."""
    return green_sums(_sep(x, y), params.lam, params.lattice(), grad=True)["grad"]


def qp_green_dlambda(x, y, params: GreenParams):
    """``dG/dlam``; finite at ``x = y`` (log terms cancel)."""
    z = _sep(x, y)
    lat = params.lattice()
    zz = np.atleast_2d(z)
    at0 = np.hypot(zz[:, 0], zz[:, 1]) < 1e-12
    out = np.atleast_1d(green_sums(zz, params.lam, lat, dlam=True)["dlam"]).astype(complex)
    if np.any(at0):
        out[at0] = regular_part_at_origin(params.lam, lat, dlam=True)
    return out.reshape(z.shape[:-1])


def qp_green_gradp(x, y, params: GreenParams):
    """Gradient of ``G`` with respect to the Bloch vector ``p`` (smooth in ``x - y``)."""
    return green_sums(_sep(x, y), params.lam, params.lattice(), dp=True)["dp"]


def qp_green_deps(x, y, params: GreenParams):
    """``d/d eps G(R_eps x, R_eps y)`` at ``eps = 0``, i.e. ``grad G(x-y) . J (x-y)``."""
    z = _sep(x, y)
    g = green_sums(z, params.lam, params.lattice(), grad=True, skip_origin=True)["grad"]
    return np.einsum("...a,...a->...", g, z @ SYM.J.T)


def spectral_sum_dlambda(x, y, params: GreenParams, cutoff: float = 40 * 2 * np.pi):
    """Direct plane-wave sum ``1/|C| sum_m exp(i m.(x-y)) / (lam - |m|^2)^2``.

    Absolutely convergent (terms ~ ``|m|^-4``); truncated at ``|m| <= cutoff``.
    """
    z = _sep(x, y)
    m = dual_lattice_points(np.asarray(params.p, float), cutoff, params.basis)
    s = np.einsum("ij,ij->i", m, m)
    ph = np.exp(1j * (np.atleast_2d(z) @ m.T))
    out = ph @ (1 / (params.lam - s) ** 2) / params.basis.cell_area
    return out.reshape(z.shape[:-1])
