"""Lattice bases, symmetry operations, obstacle shapes and interface classification.

All lengths are in units of the lattice constant.  Quasimomenta translate by
``2*pi`` times integer combinations of the dual vectors ``beta1, beta2``
(``e_i . beta_j = delta_ij``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

SQRT3 = math.sqrt(3.0)
TAU = np.exp(2j * np.pi / 3)

E1 = np.array([SQRT3 / 2, -0.5])
E2 = np.array([SQRT3 / 2, 0.5])
BETA1 = np.array([1 / SQRT3, -1.0])
BETA2 = np.array([1 / SQRT3, 1.0])
K_POINT = 2 * np.pi * np.array([1 / SQRT3, 1 / 3])


class GeometryError(ValueError):
    """Invalid lattice, shape or interface specification."""


def rotation(s: float) -> np.ndarray:
    """Rotation ``R_s = [[cos s, sin s], [-sin s, cos s]]`` (clockwise for s > 0)."""
    c, sn = math.cos(s), math.sin(s)
    return np.array([[c, sn], [-sn, c]])


@dataclass(frozen=True)
class SymmetryOps:
    """Point symmetries of the honeycomb structure.

    ``R`` is the 2*pi/3 rotation, ``F`` the reflection ``x1 -> -x1`` and
    ``J`` the derivative of :func:`rotation` at zero.
    """

    R: np.ndarray = field(default_factory=lambda: rotation(2 * np.pi / 3))
    F: np.ndarray = field(default_factory=lambda: np.diag([-1.0, 1.0]))
    J: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0], [-1.0, 0.0]]))
    tau: complex = complex(TAU)


SYM = SymmetryOps()


def _dual(e1: np.ndarray, e2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inv = np.linalg.inv(np.column_stack([e1, e2]))
    return inv[0].copy(), inv[1].copy()


@dataclass(frozen=True)
class LatticeBasis:
    """Direct and dual lattice vectors.

    ``e2`` is the direction along an interface and ``e1`` the transverse
    direction; for the primitive zigzag basis these are the usual vectors.
    """

    e1: np.ndarray
    e2: np.ndarray
    orientation: str = "zigzag"

    @property
    def beta1(self) -> np.ndarray:
        return _dual(self.e1, self.e2)[0]

    @property
    def beta2(self) -> np.ndarray:
        return _dual(self.e1, self.e2)[1]

    @property
    def cell_area(self) -> float:
        return abs(float(np.linalg.det(np.column_stack([self.e1, self.e2]))))

    @property
    def vectors(self) -> np.ndarray:
        """Direct vectors as rows."""
        return np.vstack([self.e1, self.e2])

    @property
    def dual_vectors(self) -> np.ndarray:
        """Dual vectors as rows."""
        return np.vstack(_dual(self.e1, self.e2))

    def reduce(self, p: np.ndarray) -> np.ndarray:
        """Map ``p`` to the representative with dual coordinates in [0, 1)."""
        p = np.asarray(p, dtype=float)
        coords = self.vectors @ p / (2 * np.pi)
        coords -= np.floor(coords)
        return 2 * np.pi * coords @ self.dual_vectors


@dataclass(frozen=True)
class InterfaceSpec:
    """Rational interface along ``a e1 + b e2``.

    ``(c, d)`` complete the basis with ``b c - a d = 1``.
    """

    a: int
    b: int
    c: int
    d: int

    @property
    def kind(self) -> Literal["zigzag", "armchair"]:
        return "armchair" if (self.a - self.b) % 3 == 0 else "zigzag"

    @property
    def A(self) -> complex:
        return self.b - self.a * np.conj(TAU)

    @property
    def B(self) -> complex:
        return -self.d + self.c * np.conj(TAU)

    @property
    def f_r(self) -> complex:
        A, B = self.A, self.B
        return complex(B - A / abs(A) ** 2 * (A * np.conj(B)).real)

    @property
    def basis(self) -> LatticeBasis:
        e1 = self.c * E1 + self.d * E2
        e2 = self.a * E1 + self.b * E2
        return LatticeBasis(e1, e2, orientation=f"rational({self.a},{self.b})")

    @property
    def k_par_star(self) -> float:
        """``K . (a e1 + b e2)``."""
        return float(K_POINT @ (self.a * E1 + self.b * E2))


def _complement(a: int, b: int) -> tuple[int, int]:
    """Integers (c, d) with ``b c - a d = 1``, minimal ``|c|+|d|``, ties to larger c."""
    if math.gcd(abs(a), abs(b)) != 1:
        raise GeometryError(f"interface ({a},{b}) is not primitive: gcd != 1")
    # extended Euclid on (b, -a)
    old_r, r = b, -a
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    c0, d0 = old_s * old_r, old_t * old_r  # old_r = +-1
    span = abs(c0) + abs(d0) + 2
    cands = [(c0 + k * a, d0 + k * b) for k in range(-span, span + 1)]
    return min(cands, key=lambda cd: (abs(cd[0]) + abs(cd[1]), -cd[0]))


def classify_interface(a: int, b: int) -> InterfaceSpec:
    """Complete ``(a, b)`` to a unimodular basis and classify the interface.

    Examples
    --------
    >>> classify_interface(1, 1).kind
    'armchair'
    """
    c, d = _complement(int(a), int(b))
    return InterfaceSpec(int(a), int(b), c, d)


def build_basis(orientation: str | tuple[int, int] = "zigzag") -> LatticeBasis:
    """Lattice basis for ``'zigzag'``, ``'armchair'`` or a rational ``(a, b)``."""
    if isinstance(orientation, tuple):
        return classify_interface(*orientation).basis
    if orientation == "zigzag":
        return LatticeBasis(E1.copy(), E2.copy(), "zigzag")
    if orientation == "armchair":
        return LatticeBasis(E1.copy(), E1 + E2, "armchair")
    raise GeometryError(f"unknown orientation {orientation!r}")


def high_symmetry_points(basis: LatticeBasis | None = None) -> dict[str, np.ndarray]:
    """Cartesian K and K' (independent of the chosen basis)."""
    return {"K": K_POINT.copy(), "Kp": -K_POINT.copy()}


def dual_lattice_points(p: np.ndarray, radius: float, basis: LatticeBasis | None = None) -> np.ndarray:
    """All ``m = p + 2 pi (i beta1 + j beta2)`` with ``|m| <= radius``."""
    basis = basis or build_basis()
    B = 2 * np.pi * basis.dual_vectors
    # |i| <= (radius + |p|) * |e_1| / (2 pi) bounds the search box
    n = [int(math.ceil((radius + np.linalg.norm(p)) * np.linalg.norm(e) / (2 * np.pi))) + 1
         for e in basis.vectors]
    i, j = np.meshgrid(np.arange(-n[0], n[0] + 1), np.arange(-n[1], n[1] + 1), indexing="ij")
    m = p + i.reshape(-1, 1) * B[0] + j.reshape(-1, 1) * B[1]
    return m[np.einsum("ij,ij->i", m, m) <= radius * radius]


@dataclass(frozen=True)
class ObstacleShape:
    """Star-shaped obstacle ``r(theta) = eta r0 (1 + delta3 sin 3 theta)`` rotated by ``eps``.

    The default is invariant under the 2*pi/3 rotation and the reflection F.
    """

    r0: float = 0.3
    delta3: float = 0.2
    eta: float = 0.6
    eps: float = 0.0

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise GeometryError(f"eta must lie in (0, 1], got {self.eta}")
        if self.r0 <= 0 or not (0 <= abs(self.delta3) < 1):
            raise GeometryError("need r0 > 0 and |delta3| < 1")
        if self.r0 * self.eta * (1 + abs(self.delta3)) >= 0.5:
            raise GeometryError("obstacle does not fit inside the unit cell")

    def radius(self, theta: np.ndarray) -> np.ndarray:
        return self.eta * self.r0 * (1 + self.delta3 * np.sin(3 * theta))

    def dradius(self, theta: np.ndarray) -> np.ndarray:
        return 3 * self.eta * self.r0 * self.delta3 * np.cos(3 * theta)

    def d2radius(self, theta: np.ndarray) -> np.ndarray:
        return -9 * self.eta * self.r0 * self.delta3 * np.sin(3 * theta)

    def with_(self, **kw) -> "ObstacleShape":
        d = dict(r0=self.r0, delta3=self.delta3, eta=self.eta, eps=self.eps)
        d.update(kw)
        return ObstacleShape(**d)

    def contains(self, x: np.ndarray, center=(0.0, 0.0)) -> np.ndarray:
        """Mask of points strictly inside the (rotated) obstacle centred at ``center``."""
        x = np.asarray(x, dtype=float) - np.asarray(center)
        # undo the rotation: body coordinates are R_eps^{-1} x
        xb = x @ rotation(self.eps)  # row-vector form of R_eps^T x
        th = np.arctan2(xb[..., 1], xb[..., 0])
        return np.hypot(xb[..., 0], xb[..., 1]) < self.radius(th)


@dataclass(frozen=True)
class BoundaryDiscretization:
    """Equispaced-in-parameter nodes on a closed obstacle boundary.

    Attributes
    ----------
    theta : (n,) parameter values ``2 pi k / n``.
    points : (n, 2) node positions relative to the obstacle centre.
    tangent : (n, 2) derivative of position with respect to ``theta``.
    speed : (n,) ``|x'(theta)|``.
    normal : (n, 2) outward unit normals.
    weights : (n,) quadrature weights ``(2 pi / n) |x'|``.
    """

    shape: ObstacleShape
    theta: np.ndarray
    points: np.ndarray
    tangent: np.ndarray
    speed: np.ndarray
    normal: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.theta.size

    def rotation_permutation(self) -> np.ndarray:
        """Index map for ``(R phi)(x) = phi(R^{-1} x)``: ``(R phi)_k = phi_{perm[k]}``."""
        n = self.n
        return (np.arange(n) + n // 3) % n

    def reflection_permutation(self) -> np.ndarray:
        """Index map for ``(F phi)(x) = phi(F x)``."""
        n = self.n
        return (n // 2 - np.arange(n)) % n


def discretize_boundary(shape: ObstacleShape, n_nodes: int) -> BoundaryDiscretization:
    """Nodes ``R_eps x(theta_k)`` with ``theta_k = 2 pi k / n``.

    ``n_nodes`` must be a multiple of 6 so that the 2*pi/3 rotation and the
    reflection permute the nodes exactly.
    """
    if n_nodes % 6 != 0 or n_nodes < 24:
        raise GeometryError(f"n_nodes must be a multiple of 6 and >= 24, got {n_nodes}")
    th = 2 * np.pi * np.arange(n_nodes) / n_nodes
    r, dr = shape.radius(th), shape.dradius(th)
    c, s = np.cos(th), np.sin(th)
    pts = np.column_stack([r * c, r * s])
    tan = np.column_stack([dr * c - r * s, dr * s + r * c])
    Rm = rotation(shape.eps)
    pts, tan = pts @ Rm.T, tan @ Rm.T
    speed = np.hypot(tan[:, 0], tan[:, 1])
    normal = np.column_stack([tan[:, 1], -tan[:, 0]]) / speed[:, None]
    w = 2 * np.pi / n_nodes * speed
    return BoundaryDiscretization(shape, th, pts, tan, speed, normal, w)
