import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycomb_bie.geometry import E1, E2, K_POINT
from honeycomb_bie.greens import (
    EwaldLattice,
    GreenParams,
    SpectralResonanceError,
    expint_orders,
    green_sums,
    hankel0,
    qp_green,
    qp_green_dlambda,
    qp_green_deps,
    qp_green_grad,
    qp_green_gradp,
    regular_part_at_origin,
    spectral_sum_dlambda,
)

LAM = 23.7
P = (1.1, -0.4)


@pytest.mark.parametrize("z", [1e-3, 0.1, 1.0, 2.404825557695773, 7.5, 30.0, 120.0])
def test_hankel_against_mpmath(z):
    ref = complex(mpmath.hankel1(0, mpmath.mpf(z)))
    assert abs(hankel0(z) - ref) <= 1e-13 * abs(ref)


def test_hankel_rejects_nonpositive():
    with pytest.raises(ValueError):
        hankel0(0.0)


@pytest.mark.parametrize("x", [0.05, 0.7, 3.0, 12.0, 40.0])
def test_expint_orders_against_mpmath(x):
    # absolute accuracy is what the Ewald sums need: terms enter with O(1) weights
    E = expint_orders(np.array(x), 8)
    for n in range(10):
        ref = float(mpmath.expint(n, x))
        assert abs(E[n] - ref) <= 1e-12 * abs(ref) + 1e-17


def _pts(rng, k=6):
    return rng.uniform(-0.4, 0.4, size=(k, 2)), rng.uniform(-0.4, 0.4, size=(k, 2))


def test_ewald_split_invariance(rng):
    x, y = _pts(rng)
    ref = qp_green(x, y, GreenParams(LAM, P, ewald_split=3.0))
    for E in (math.sqrt(math.pi) / math.sqrt(math.sqrt(3) / 2), 2.2, 4.5):
        g = qp_green(x, y, GreenParams(LAM, P, ewald_split=E))
        assert np.max(np.abs(g - ref)) <= 1e-8 * np.max(np.abs(ref))


def test_conjugate_symmetry(rng):
    x, y = _pts(rng)
    prm = GreenParams(LAM, P)
    assert np.allclose(qp_green(x, y, prm), np.conj(qp_green(y, x, prm)), rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
def test_quasi_periodicity(i, j, zx, zy):
    if math.hypot(zx, zy) < 1e-3:
        return
    prm = GreenParams(LAM, P)
    e = i * E1 + j * E2
    z = np.array([zx, zy])
    g0 = qp_green(z, np.zeros(2), prm)
    g1 = qp_green(z + e, np.zeros(2), prm)
    assert abs(g1 - np.exp(1j * (np.array(P) @ e)) * g0) <= 1e-9 * max(1.0, abs(g0))


def test_log_singularity_and_regular_part():
    prm = GreenParams(LAM, P)
    lat = prm.lattice()
    reg = regular_part_at_origin(LAM, lat)
    for r in (1e-2, 1e-3):
        z = np.array([r, 0.3 * r])
        rho = np.hypot(*z)
        g = qp_green(z, np.zeros(2), prm) + math.log(rho) / (2 * math.pi)
        assert abs(g - reg) < 5 * rho**2 * (1 + abs(math.log(rho))) * LAM


def test_helmholtz_residual_is_second_order():
    prm = GreenParams(LAM, P)
    x0 = np.array([0.31, -0.17])
    res = []
    for h in (2e-2, 1e-2):
        st5 = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]]) + x0
        g = qp_green(st5, np.zeros(2), prm)
        lap = (g[1:].sum() - 4 * g[0]) / h**2
        res.append(abs(-lap - LAM * g[0]))
    assert res[1] < res[0] / 3


def test_resonance_is_detected():
    with pytest.raises(SpectralResonanceError):
        green_sums(np.array([[0.2, 0.1]]), float(K_POINT @ K_POINT), EwaldLattice(p=K_POINT))


def test_dlambda_two_routes(rng):
    # Ewald derivative against the absolutely convergent plane-wave sum
    x, y = _pts(rng, 4)
    prm = GreenParams(LAM, P)
    a = qp_green_dlambda(x, y, prm)
    b = spectral_sum_dlambda(x, y, prm, cutoff=400.0)
    assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))
    # coincident points are finite
    assert np.isfinite(qp_green_dlambda(x[0], x[0], prm))


def _fd_check(f, df, h, tol):
    assert abs(df - f(h)) <= tol * abs(df)


def test_dlambda_finite_difference():
    x, y = np.array([0.21, 0.05]), np.array([-0.13, 0.19])
    d = qp_green_dlambda(x, y, GreenParams(LAM, P))
    h = 1e-4
    fd = (qp_green(x, y, GreenParams(LAM + h, P)) - qp_green(x, y, GreenParams(LAM - h, P))) / (2 * h)
    assert abs(d - fd) <= 1e-5 * abs(d)


@pytest.mark.parametrize("axis", [0, 1])
def test_gradp_finite_difference(axis):
    x, y = np.array([0.21, 0.05]), np.array([-0.13, 0.19])
    d = qp_green_gradp(x, y, GreenParams(LAM, P))[axis]
    h = 1e-5
    e = np.eye(2)[axis] * h
    fd = (qp_green(x, y, GreenParams(LAM, tuple(np.array(P) + e)))
          - qp_green(x, y, GreenParams(LAM, tuple(np.array(P) - e)))) / (2 * h)
    assert abs(d - fd) <= 1e-5 * abs(d)


def test_grad_finite_difference():
    x, y = np.array([0.21, 0.05]), np.array([-0.13, 0.19])
    prm = GreenParams(LAM, P)
    g = qp_green_grad(x, y, prm)
    h = 1e-5
    for a in range(2):
        e = np.eye(2)[a] * h
        fd = (qp_green(x + e, y, prm) - qp_green(x - e, y, prm)) / (2 * h)
        assert abs(g[a] - fd) <= 1e-6 * np.linalg.norm(g)


def test_deps_kernel_finite_difference():
    from honeycomb_bie.geometry import rotation

    x, y = np.array([0.21, 0.05]), np.array([-0.13, 0.19])
    prm = GreenParams(LAM, P)
    d = qp_green_deps(x, y, prm)
    h = 1e-5
    # points rotated with the obstacle: x -> R_eps x
    fd = (qp_green(rotation(h) @ x, rotation(h) @ y, prm) - qp_green(rotation(-h) @ x, rotation(-h) @ y, prm)) / (2 * h)
    assert abs(d - fd) <= 1e-5 * abs(d)
