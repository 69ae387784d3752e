import numpy as np
import pytest

from magspec import AmbiguousRankError, FieldError, make_field, skew_spectrum
from magspec.field import Bounds, skew_batched, wrap_user_field

BOX2 = [[-2.0, 2.0], [-2.0, 2.0]]


def constant_field(b=1.0, dim=2, box=BOX2, **kw):
    return make_field({"family": "constant", "dim": dim, "b": b, "domain": box, **kw})


def test_constant_field_matrix_everywhere():
    fs = constant_field(b=1.0)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
    B = fs.B(pts)
    assert np.array_equal(B[:, 0, 1], np.ones(50))
    assert np.array_equal(B[:, 1, 0], -np.ones(50))


def test_radial_well_value_at_point():
    # hand evaluation: B12(1, 0) = 1 + |x|^2 = 2
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    B = fs.B(np.array([1.0, 0.0]))
    assert np.allclose(B, [[0.0, 2.0], [-2.0, 0.0]], atol=0, rtol=0)


def test_three_dim_block_field_has_zero_mode():
    fs = make_field({"family": "constant", "dim": 3,
                     "matrix": [[0, 1, 0], [-1, 0, 0], [0, 0, 0]],
                     "domain": [[-1, 1]] * 3})
    ms = skew_spectrum(fs, [0.0, 0.0, 0.0])
    assert ms.rank == 2
    assert ms.zero_modes == 1
    assert np.allclose(ms.a, [1.0])


def test_unknown_family_and_bad_dim():
    with pytest.raises(FieldError):
        make_field({"family": "nope", "dim": 2, "domain": BOX2})
    with pytest.raises(FieldError):
        make_field({"family": "constant", "dim": 1, "b": 1.0, "domain": [[-1, 1]]})


def test_non_antisymmetric_matrix_rejected():
    with pytest.raises(FieldError):
        make_field({"family": "constant", "dim": 2,
                    "matrix": [[0.0, 1.0], [-1.0 + 1e-6, 0.0]], "domain": BOX2})


def test_wrapped_user_field_antisymmetrizes_exactly():
    rng = np.random.default_rng(3)
    M = rng.uniform(-1, 1, size=(2, 2))
    M = M - M.T + 1e-14 * rng.uniform(size=(2, 2))  # tiny defect below tolerance

    fs = wrap_user_field(2, lambda x: np.broadcast_to(M, x.shape[:-1] + (2, 2)),
                         lambda x: np.zeros(x.shape[:-1]), None,
                         Bounds(2.0, 0.0, 0.0, 0.0), BOX2)
    pts = rng.uniform(-2, 2, size=(1000, 2))
    B = fs.B(pts)
    assert np.max(np.abs(B + np.swapaxes(B, -1, -2))) == 0.0


# --- skew_spectrum -----------------------------------------------------------


def test_skew_spectrum_constant_2x2():
    ms = skew_spectrum(constant_field(1.0), [0.0, 0.0])
    assert np.allclose(ms.a, [1.0]) and ms.rank == 2 and ms.v0 == 0.0


def test_skew_spectrum_blockdiag_sorted_descending():
    fs = make_field({"family": "constant", "dim": 4, "blocks": [2.0, 3.0],
                     "domain": [[-1, 1]] * 4})
    ms = skew_spectrum(fs, [0.0] * 4)
    # oracle: dense Hermitian eigensolve of iB
    B = fs.B(np.zeros(4))
    ref = np.linalg.eigvalsh(1j * B)
    assert np.allclose(sorted(ms.a, reverse=True), [3.0, 2.0], atol=1e-12)
    assert np.allclose(np.sort(np.concatenate([ms.a, -ms.a])), np.sort(ref), atol=1e-10)


def test_skew_spectrum_zero_matrix():
    fs = make_field({"family": "constant", "dim": 2, "matrix": [[0, 0], [0, 0]],
                     "domain": BOX2})
    ms = skew_spectrum(fs, [0.0, 0.0])
    assert ms.rank == 0 and ms.zero_modes == 2 and len(ms.a) == 0


def test_skew_spectrum_outside_domain_rejected():
    with pytest.raises(FieldError):
        skew_spectrum(constant_field(), [5.0, 0.0])


def test_ambiguous_rank_straddled_tolerance():
    from magspec.field import _pair_up

    # odd number of B^T B eigenvalues inside the tolerance band: a rounding-split
    # pair; the classifier must refuse rather than guess
    with pytest.raises(AmbiguousRankError):
        _pair_up(np.array([1.0, 1.0, 3e-18, 1e-19]), rank_tol=1e-9)
    # odd number above the tolerance: pairing is impossible
    with pytest.raises(AmbiguousRankError):
        _pair_up(np.array([1.0, 1e-19, 1e-20, 1e-21]), rank_tol=1e-9)
    # an exactly degenerate pair in band is even and classifies consistently
    a, n, zero = _pair_up(np.array([1.0, 1.0, 1e-18, 1e-18]), rank_tol=1e-9)
    assert n in (1, 2) and len(a) == n


def constant_spec(M, d):
    M = np.asarray(M, dtype=float)
    return wrap_user_field(
        d, lambda x: np.broadcast_to(M, np.asarray(x).shape[:-1] + (d, d)),
        lambda x: np.zeros(np.asarray(x).shape[:-1]), None,
        Bounds(float(np.linalg.norm(M, 2)), 0.0, 0.0, 0.0), [[-1, 1]] * d,
    )


@pytest.mark.parametrize("d", [2, 4, 6])
def test_pairing_against_dense_oracle(d):
    # eigenvalue multiset of iB must equal {+-a_j, 0 x zero_modes}
    rng = np.random.default_rng(100 + d)
    for _ in range(60):
        M = rng.uniform(-1, 1, size=(d, d))
        M = 0.5 * (M - M.T)
        fs = constant_spec(M, d)
        ms = skew_spectrum(fs, [0.0] * d)
        mine = np.sort(np.concatenate([ms.a, -ms.a, np.zeros(ms.zero_modes)]))
        ref = np.sort(np.linalg.eigvalsh(1j * fs.B(np.zeros(d))))
        assert np.allclose(mine, ref, atol=1e-10)


def test_a1_lipschitz_along_segments():
    # |a1(x) - a1(y)| <= sup|grad B| |x - y| for the radial well
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    rng = np.random.default_rng(7)
    X = rng.uniform(-2, 2, size=(200, 2))
    Y = rng.uniform(-2, 2, size=(200, 2))
    aX, _, _ = skew_batched(fs, X)
    aY, _, _ = skew_batched(fs, Y)
    L = fs.bounds.sup_db
    gap = np.abs(aX[:, 0] - aY[:, 0])
    assert np.all(gap <= L * np.linalg.norm(X - Y, axis=1) + 1e-12)


def test_declared_bounds_sanity_check_fires():
    with pytest.raises(FieldError):
        make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                    "domain": BOX2, "bounds": {"sup_b": 0.5}})


def test_polynomial_family_needs_declared_bounds():
    cfg = {"family": "polynomial", "dim": 2,
           "entries": {(0, 1): [(1.0, (0, 0)), (1.0, (2, 0))]},
           "domain": BOX2}
    with pytest.raises(FieldError):
        make_field(cfg)
    cfg["bounds"] = {"sup_b": 5.0, "sup_db": 4.0}
    fs = make_field(cfg)
    assert np.allclose(fs.B(np.array([1.0, 0.5]))[0, 1], 2.0)


def test_iwatsuka_profile_and_analytic_potential():
    fs = make_field({"family": "iwatsuka", "dim": 2, "b_inf": 1.0, "delta": 0.5,
                     "width": 0.7, "domain": BOX2})
    x = np.array([0.3, -0.2])
    assert np.isclose(fs.B(x)[0, 1], 1.0 + 0.5 * np.tanh(0.3 / 0.7))
    # curl check ran at construction; spot check dA2/dx1 by finite differences
    h = 1e-5
    da = (fs.A(x + [h, 0])[1] - fs.A(x - [h, 0])[1]) / (2 * h)
    assert np.isclose(da, fs.B(x)[0, 1], atol=1e-8)


def test_synthesized_potential_reproduces_field_curl():
    fs = make_field({"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
                     "domain": BOX2})
    rng = np.random.default_rng(11)
    pts = rng.uniform(-1.5, 1.5, size=(40, 2))
    h = 1e-4
    for p in pts[:10]:
        dxA = (fs.A(p + [h, 0]) - fs.A(p - [h, 0])) / (2 * h)
        dyA = (fs.A(p + [0, h]) - fs.A(p - [0, h])) / (2 * h)
        curl = dxA[1] - dyA[0]
        assert np.isclose(curl, fs.B(p)[0, 1], atol=1e-6)
