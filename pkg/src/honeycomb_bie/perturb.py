"""Derivative matrices at the Dirac point and the resulting band predictions.

With ``rho1 in H1`` and ``rho2 in H2`` the Dirac pair, the coefficients are

* ``gamma* = <rho1, dS/dlam rho1>``
* ``t* = <rho1, dT/deps rho1>`` where ``T(eps)`` has kernel ``G(R_eps x, R_eps y)``
* ``theta* = <rho2, (beta1 . grad_p S) rho1>``

with ``<u, v> = int conj(u) v ds``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bie import CellGrid, assemble_laplace_single_layer, find_characteristic_values
from .geometry import BETA1, BETA2, K_POINT, SYM, ObstacleShape, discretize_boundary
from .greens import green_sums
from .spectrum import DiracPoint, SolverSettings


class StructureError(RuntimeError):
    """Derivative matrices violate the symmetry-imposed pattern."""


# -- capacity coefficient -----------------------------------------------------------
def compute_a_frak(shape: ObstacleShape, n_nodes: int = 96, return_density: bool = False):
    """Coefficient ``a = (1/2) (1, -i) . int y phi*(y) ds`` of the reference shape.

    ``phi*`` solves the Laplace single-layer equation ``S0 phi* = x1 + i x2`` on
    the unscaled, unrotated boundary (``eta = 1``, ``eps = 0``).
    """
    ref = shape.with_(eta=1.0, eps=0.0)
    disc = discretize_boundary(ref, n_nodes)
    A = assemble_laplace_single_layer(disc)
    rhs = disc.points[:, 0] + 1j * disc.points[:, 1]
    phi = np.linalg.solve(A, rhs)
    v = (disc.weights * phi) @ disc.points
    a = 0.5 * (v[0] - 1j * v[1])
    if return_density:
        return complex(a), phi, disc
    return complex(a)


# -- coefficients -------------------------------------------------------------------
@dataclass
class PerturbationCoefficients:
    t_star: float
    gamma_star: float
    theta_star: complex
    a_frak: complex
    lambda_star: float
    eta: float
    matrices: dict = field(default_factory=dict, repr=False)

    @property
    def alpha_star(self) -> float:
        return abs(self.theta_star / self.gamma_star)

    @property
    def m_star(self) -> float:
        """Cone slope ``|theta*/gamma*| / |beta1|``."""
        return math.sqrt(3) / 2 * self.alpha_star

    @property
    def beta_star(self) -> float:
        return self.t_star / abs(self.theta_star)

    def as_dict(self) -> dict:
        return {
            "t_star": self.t_star, "gamma_star": self.gamma_star,
            "theta_star_re": self.theta_star.real, "theta_star_im": self.theta_star.imag,
            "a_frak_re": self.a_frak.real, "a_frak_im": self.a_frak.imag,
            "m_star": self.m_star, "alpha_star": self.alpha_star, "beta_star": self.beta_star,
            "lambda_star": self.lambda_star, "eta": self.eta,
        }


def _pair_matrix(M: np.ndarray, rhos, w) -> np.ndarray:
    """``[[<rho_a, M rho_b>]]`` with trapezoid weights ``w``."""
    R = np.column_stack(rhos)
    return (np.conj(R) * w[:, None]).T @ (M @ R)


def derivative_matrices(dirac: DiracPoint) -> dict[str, np.ndarray]:
    """2x2 matrices of the ``lam``, ``eps`` and ``p`` derivatives in the Dirac basis."""
    system = dirac.system
    lam = dirac.lambda_star
    pts, w = system.points, system.weights
    rhos = (dirac.rho1, dirac.rho2)
    z = pts[:, None, :] - pts[None, :, :]
    # eps-kernel: the e = 0 image is radial and drops out of grad G . J z
    gz = green_sums(z, lam, system.lattice, grad=True, skip_origin=True)["grad"]
    Keps = np.einsum("ika,ika->ik", gz, z @ SYM.J.T) * w[None, :]
    gp = green_sums(z, lam, system.lattice, dp=True)["dp"] * w[None, :, None]
    Dl = system.matrix(lam, deriv=True)
    beta1a = BETA1 - BETA2
    return {
        "lam": _pair_matrix(Dl, rhos, w),
        "eps": _pair_matrix(Keps, rhos, w),
        "p_beta1": _pair_matrix(gp @ BETA1, rhos, w),
        "p_beta2": _pair_matrix(gp @ BETA2, rhos, w),
        "p_beta1a": _pair_matrix(gp @ beta1a, rhos, w),
    }


def compute_coefficients(dirac: DiracPoint, check: bool = True, tol: float = 1e-3) -> PerturbationCoefficients:
    """Extract ``t*``, ``gamma*``, ``theta*`` from the derivative matrices."""
    mats = derivative_matrices(dirac)
    g = mats["lam"][0, 0]
    t = mats["eps"][0, 0]
    for name, v in (("gamma*", g), ("t*", t)):
        if abs(v.imag) > 1e-5 * abs(v):
            raise StructureError(f"{name} has a non-negligible imaginary part: {v}")
    coeffs = PerturbationCoefficients(float(t.real), float(g.real), complex(mats["p_beta1"][1, 0]),
                                      compute_a_frak(dirac.shape, dirac.settings.n_nodes),
                                      dirac.lambda_star, dirac.shape.eta, mats)
    if check:
        rep = verify_matrix_structure(coeffs, tol)
        bad = [k for k, v in rep.items() if not v["pass"]]
        if bad:
            raise StructureError(f"derivative matrices violate identities: {bad}")
    return coeffs


def verify_matrix_structure(coeffs: PerturbationCoefficients, tol: float = 1e-3) -> dict:
    """Check the zero and ratio patterns of the derivative matrices.

    Every entry of the returned dict holds the measured relative deviation and
    whether it is below ``tol``.
    """
    M = coeffs.matrices
    g, t, th = abs(coeffs.gamma_star), abs(coeffs.t_star), abs(coeffs.theta_star)
    tau = SYM.tau
    dev = {
        "lam_offdiag": max(abs(M["lam"][0, 1]), abs(M["lam"][1, 0])) / g,
        "lam_diag_equal": abs(M["lam"][0, 0] - M["lam"][1, 1]) / g,
        "eps_offdiag": max(abs(M["eps"][0, 1]), abs(M["eps"][1, 0])) / t,
        "eps_diag_antisymmetric": abs(M["eps"][0, 0] + M["eps"][1, 1]) / t,
        "p_beta1_diag": max(abs(M["p_beta1"][0, 0]), abs(M["p_beta1"][1, 1])) / th,
        "p_beta2_ratio": abs(M["p_beta2"][1, 0] / M["p_beta1"][1, 0] - np.conj(tau)),
        "p_beta1a_ratio": abs(M["p_beta1a"][1, 0] / M["p_beta1"][1, 0] - (-math.sqrt(3) * 1j * tau)) / math.sqrt(3),
    }
    return {k: {"deviation": float(v), "pass": bool(v < tol)} for k, v in dev.items()}


# -- predictions --------------------------------------------------------------------
def predict_bands(coeffs: PerturbationCoefficients, eps: float, ell: float, mu: float):
    """Two-band prediction near ``K`` for ``p = K + ell beta1 + mu beta2``.

    Returns ``(lam1, lam2, L)`` where ``L`` is the mixing ratio of the lower
    band's density in the ``(rho1, rho2)`` basis.
    """
    tau = SYM.tau
    q = ell + mu * np.conj(tau)
    root = math.sqrt((eps * coeffs.t_star) ** 2 + abs(coeffs.theta_star) ** 2 * abs(q) ** 2)
    g = abs(coeffs.gamma_star)
    denom = eps * coeffs.t_star + root
    if denom == 0:
        raise ZeroDivisionError("mixing ratio undefined at eps = ell = mu = 0")
    L = coeffs.theta_star * q / denom
    return coeffs.lambda_star - root / g, coeffs.lambda_star + root / g, complex(L)


@dataclass
class GapReport:
    eps: float
    predicted: float
    measured: dict  # eps value -> (lam1, lam2)
    swap_overlaps: tuple[float, float]
    expected_partner: tuple[str, str]

    def gap(self, e: float) -> float:
        l1, l2 = self.measured[e]
        return l2 - l1

    @property
    def relative_error(self) -> float:
        return abs(self.gap(self.eps) / self.predicted - 1)

    @property
    def ratio(self) -> float:
        return self.gap(self.eps) / self.gap(self.eps / 2)


def solve_at_K(dirac: DiracPoint, eps: float, half: float):
    """The two characteristic values nearest ``lambda*`` at ``K`` for rotation ``eps``."""
    shape = dirac.shape.with_(eps=eps)
    system = dirac.settings.system(shape, K_POINT)
    lam0 = dirac.lambda_star
    cvs = find_characteristic_values(system, (lam0 - half, lam0 + half), cv_tol=dirac.settings.cv_tol)
    if sum(c.multiplicity for c in cvs) != 2 or len(cvs) != 2:
        raise RuntimeError(f"expected two simple values near lambda* at eps={eps}, got "
                           f"{[(c.lam, c.multiplicity) for c in cvs]}")
    return system, cvs


def compare_gap(coeffs: PerturbationCoefficients, dirac: DiracPoint, eps: float = 0.05) -> GapReport:
    """Measure the gap at ``K`` for ``+-eps`` and ``eps/2`` and check the band-edge swap.

    The lower band at ``+eps`` is compared with the Dirac mode of the label
    predicted by ``sign(t*)`` (``w1`` for ``t* > 0``) and the lower band at
    ``-eps`` with the other one.
    """
    pred = 2 * abs(coeffs.t_star / coeffs.gamma_star) * eps
    measured, lower = {}, {}
    grid = None
    for e in (eps, -eps, eps / 2):
        system, cvs = solve_at_K(dirac, e, 3 * pred + 1e-3)
        measured[e] = (cvs[0].lam, cvs[1].lam)
        if e != eps / 2:
            grid = grid or CellGrid.build(system, (dirac.settings.grid_n,) * 2)
            u = grid.field(system, cvs[0].lam, cvs[0].densities[0])
            lower[e] = u / grid.norm(u)
    sys0 = dirac.system
    w1 = grid.field(sys0, dirac.lambda_star, dirac.rho1)
    w2 = grid.field(sys0, dirac.lambda_star, dirac.rho2)
    w1, w2 = w1 / grid.norm(w1), w2 / grid.norm(w2)
    first, second = (w1, w2) if coeffs.t_star > 0 else (w2, w1)
    names = ("w1", "w2") if coeffs.t_star > 0 else ("w2", "w1")
    ov = (abs(grid.inner(first, lower[eps])), abs(grid.inner(second, lower[-eps])))
    return GapReport(eps, pred, measured, ov, names)
