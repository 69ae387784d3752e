import numpy as np
import pytest

from magspec import (GaugeError, make_field, make_gauge, model_potential,
                     transverse_phase, transverse_potential,
                     verify_taylor_order)
from magspec.field import Bounds, wrap_user_field

BOX2 = [[-2.0, 2.0], [-2.0, 2.0]]


def constant_field(b=1.0):
    return make_field({"family": "constant", "dim": 2, "b": b, "domain": BOX2})


def landau_gauge_field(b=1.0):
    # A = (0, b x1), B12 = b
    def A(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2,))
        out[..., 1] = b * x[..., 0]
        return out

    M = np.array([[0.0, b], [-b, 0.0]])
    return wrap_user_field(
        2, lambda x: np.broadcast_to(M, np.asarray(x).shape[:-1] + (2, 2)),
        lambda x: np.zeros(np.asarray(x).shape[:-1]), A,
        Bounds(b, 0.0, 0.0, 0.0), BOX2,
    )


# --- transverse_phase --------------------------------------------------------


def test_phase_symmetric_gauge_is_zero():
    fs = constant_field(1.0)  # synthesized A is the symmetric gauge about 0
    rng = np.random.default_rng(0)
    Z = rng.uniform(-1, 1, size=(20, 2))
    vals = transverse_phase(fs, [0.0, 0.0], Z)
    assert np.max(np.abs(vals)) < 1e-14


def test_phase_landau_gauge_hand_integral():
    # -int_0^1 tau * b * Z1 * Z2 dtau = -1/2 for b=1, Z=(1,1)
    fs = landau_gauge_field(1.0)
    val = transverse_phase(fs, [0.0, 0.0], [1.0, 1.0])
    assert np.isclose(val, -0.5, atol=1e-14)


def test_phase_zero_displacement():
    assert transverse_phase(landau_gauge_field(), [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_phase_requires_potential():
    fs = constant_field()
    fs_no_a = type(fs)(dim=fs.dim, B=fs.B, V=fs.V, A=None, bounds=fs.bounds,
                       domain=fs.domain)
    with pytest.raises(GaugeError):
        transverse_phase(fs_no_a, [0.0, 0.0], [1.0, 0.0])


# --- transverse_potential ----------------------------------------------------


def test_constant_field_gives_symmetric_gauge():
    fs = constant_field(2.0)
    Z = np.array([0.7, -0.3])
    A = transverse_potential(fs, [0.0, 0.0], Z)
    assert np.allclose(A, [-(2.0 / 2) * Z[1], (2.0 / 2) * Z[0]], atol=1e-14)


def test_radial_entry_hand_integral():
    # B12 = 1 + x1^2, Z = (1,0): A2 = int_0^1 (1+tau^2) tau dtau = 3/4, A1 = 0
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})

    # restrict the quadratic growth to the first axis via a polynomial entry
    fs1 = make_field({"family": "polynomial", "dim": 2,
                      "entries": {(0, 1): [(1.0, (0, 0)), (1.0, (2, 0))]},
                      "bounds": {"sup_b": 5.0, "sup_db": 4.0},
                      "domain": BOX2})
    A = transverse_potential(fs1, [0.0, 0.0], [1.0, 0.0])
    assert np.allclose(A, [0.0, 0.75], atol=1e-14)
    # full radial well for comparison: same value along the x1 axis
    A2 = transverse_potential(fs, [0.0, 0.0], [1.0, 0.0])
    assert np.allclose(A2, [0.0, 0.75], atol=1e-14)


def test_zero_displacement_gives_zero_vector():
    fs = constant_field()
    assert np.allclose(transverse_potential(fs, [0, 0], [0.0, 0.0]), 0.0)


def test_radial_annihilation_on_probes():
    # <Z, Avec(Z)> vanishes identically (antisymmetry under the integral)
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    rng = np.random.default_rng(5)
    Z = rng.uniform(-1.5, 1.5, size=(1000, 2))
    A = transverse_potential(fs, [0.2, -0.4], Z)
    assert np.max(np.abs(np.sum(A * Z, axis=-1))) < 1e-12


def test_gauge_data_invariants():
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    gd = make_gauge(fs, [0.1, 0.3])
    assert np.allclose(gd.a_trans(np.zeros(2)), 0.0, atol=1e-12)
    # defining relation: grad(phi) + A = a_trans, checked by central differences
    rng = np.random.default_rng(8)
    h = 1e-5
    for Z in rng.uniform(-0.8, 0.8, size=(10, 2)):
        g = np.array([
            (gd.phi(Z + [h, 0]) - gd.phi(Z - [h, 0])) / (2 * h),
            (gd.phi(Z + [0, h]) - gd.phi(Z - [0, h])) / (2 * h),
        ])
        lhs = g + fs.A(gd.x0 + Z)
        assert np.allclose(lhs, gd.a_trans(Z), atol=1e-8)


def test_transverse_curl_reproduces_field():
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    gd = make_gauge(fs, [0.0, 0.0])
    h = 1e-4
    for Z in np.random.default_rng(9).uniform(-1, 1, size=(10, 2)):
        dx = (gd.a_trans(Z + [h, 0]) - gd.a_trans(Z - [h, 0])) / (2 * h)
        dy = (gd.a_trans(Z + [0, h]) - gd.a_trans(Z - [0, h])) / (2 * h)
        assert np.isclose(dx[1] - dy[0], fs.B(Z)[0, 1], atol=1e-6)


# --- verify_taylor_order -----------------------------------------------------


def radii(r0=0.2, n=5):
    return [r0 * 0.5**i for i in range(n)]


def test_taylor_constant_field_exact():
    rep = verify_taylor_order(constant_field(), [0.0, 0.0],
                              [[1.0, 0.0], [0.3, 0.7]], radii())
    assert rep.exact and rep.slope is None


def test_taylor_slope_even_profile_is_cubic():
    # B = 1 + x1^2 at x0 = 0: remainder Z1^3/4 along (1,0), slope 3 >= 1.9
    fs = make_field({"family": "polynomial", "dim": 2,
                     "entries": {(0, 1): [(1.0, (0, 0)), (1.0, (2, 0))]},
                     "bounds": {"sup_b": 5.0, "sup_db": 4.0},
                     "domain": BOX2})
    rep = verify_taylor_order(fs, [0.0, 0.0], [[1.0, 0.0]], radii())
    assert not rep.exact
    assert rep.slope >= 1.9
    assert np.isclose(rep.slope, 3.0, atol=1e-6)


def test_taylor_slope_generic_point_is_quadratic():
    fs = make_field({"family": "polynomial", "dim": 2,
                     "entries": {(0, 1): [(1.0, (0, 0)), (1.0, (2, 0))]},
                     "bounds": {"sup_b": 5.0, "sup_db": 4.0},
                     "domain": BOX2})
    rep = verify_taylor_order(fs, [0.7, 0.0], [[1.0, 0.0], [0.6, -0.8]], radii(0.1))
    assert not rep.exact
    assert 1.9 <= rep.slope <= 2.2


def test_taylor_residuals_monotone_decreasing():
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    rep = verify_taylor_order(fs, [0.4, 0.1], [[1.0, 0.0]], radii())
    res = rep.residuals[0]
    assert np.all(np.diff(res) < 0)


def test_taylor_requires_four_decreasing_radii():
    fs = constant_field()
    with pytest.raises(ValueError):
        verify_taylor_order(fs, [0, 0], [[1, 0]], [0.2, 0.1, 0.05])
    with pytest.raises(ValueError):
        verify_taylor_order(fs, [0, 0], [[1, 0]], [0.05, 0.1, 0.2, 0.4])
