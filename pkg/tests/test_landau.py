import math

import numpy as np
import pytest
from scipy.integrate import quad

from magspec import (TestFunction, enumerate_levels, find_gaps, kset,
                     make_field, model_f0, model_spectrum_min, sample_sigma,
                     sigma_distance, skew_spectrum)
from magspec.field import ModelSpectrum
from magspec.landau import SampleGrid, SigmaApprox


def ms_of(a, v0, zero_modes=0):
    a = np.asarray(sorted(a, reverse=True), dtype=float)
    return ModelSpectrum(x0=np.zeros(2), a=a, rank=2 * len(a), v0=float(v0),
                         zero_modes=zero_modes)


def brute_force_levels(a, v0, emax, kcap=12):
    """Independent oracle: exhaustive scan of the k lattice."""
    a = list(a)
    out = []
    grids = np.meshgrid(*[np.arange(kcap + 1)] * len(a), indexing="ij")
    ks = np.stack([g.ravel() for g in grids], axis=1)
    for k in ks:
        lam = sum((2 * int(ki) + 1) * ai for ki, ai in zip(k, a)) + v0
        if lam <= emax:
            out.append((tuple(int(v) for v in k), lam))
    out.sort(key=lambda p: (p[1], p[0]))
    return out


# --- enumerate_levels / model_spectrum_min -----------------------------------


def test_landau_ladder_simple():
    got = enumerate_levels(ms_of([1.0], 0.0), 6.0)
    assert got == [((0,), 1.0), ((1,), 3.0), ((2,), 5.0)]


def test_two_frequency_enumeration_matches_brute_force():
    # a = [3, 2], v0 = 0.5: only (0,0) -> 5.5 lies at or below 8
    ms = ms_of([3.0, 2.0], 0.5)
    got = enumerate_levels(ms, 8.0)
    oracle = brute_force_levels([3.0, 2.0], 0.5, 8.0)
    assert got == oracle
    assert got == [((0, 0), 5.5)]


def test_negative_shift_single_level():
    assert enumerate_levels(ms_of([1.0], -2.0), 0.0) == [((0,), -1.0)]


def test_enumeration_rank_zero_rejected():
    with pytest.raises(ValueError):
        enumerate_levels(ms_of([], 0.7), 5.0)


@pytest.mark.parametrize("seed", range(8))
def test_enumeration_random_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    a = sorted(rng.uniform(0.3, 3.0, size=n), reverse=True)
    v0 = float(rng.uniform(-1, 1))
    emax = float(rng.uniform(2, 12))
    got = enumerate_levels(ms_of(a, v0), emax)
    oracle = brute_force_levels(a, v0, emax)
    assert [k for k, _ in got] == [k for k, _ in oracle]
    assert np.allclose([l for _, l in got], [l for _, l in oracle], atol=1e-12)


def test_level_count_closed_form_2d():
    # count of ladder levels (2k+1)a + v0 at or below E: with t = (E - v0)/(2a),
    # the condition is k <= t - 1/2, so the count is floor(t + 1/2) clamped at 0
    # (away from knife edges)
    rng = np.random.default_rng(42)
    for _ in range(200):
        a1 = float(rng.uniform(0.2, 3.0))
        v0 = float(rng.uniform(-2, 2))
        E = float(rng.uniform(-3, 12))
        t = (E - v0) / (2 * a1)
        if abs(t + 0.5 - round(t + 0.5)) < 1e-9:
            continue  # knife-edge ties are a tolerance question, not a count question
        got = len(enumerate_levels(ms_of([a1], v0), E))
        want = max(math.floor(t + 0.5), 0)
        assert got == want


def test_model_spectrum_min():
    assert model_spectrum_min(ms_of([1.0], 0.0)) == 1.0
    assert model_spectrum_min(ms_of([3.0, 2.0], 0.5)) == 5.5
    assert model_spectrum_min(ms_of([], 0.7)) == 0.7


# --- sample_sigma ------------------------------------------------------------


BOX_HALF = 1.0 / math.sqrt(2.0)  # |x| <= 1 over the box corners


def radial_field(box_half=2.0, v=None):
    cfg = {"family": "radial_well", "dim": 2, "b0": 1.0, "b2": 1.0,
           "domain": [[-box_half, box_half]] * 2}
    if v:
        cfg["potential"] = v
    return make_field(cfg)


def test_sigma_constant_field_is_ladder():
    fs = make_field({"family": "constant", "dim": 2, "b": 1.0,
                     "domain": [[-1, 1]] * 2})
    sa = sample_sigma(fs, fs.domain, lmax=6.0, step=0.25)
    # zero Lipschitz bound: rho collapses to the merge tolerance
    assert sa.covering_radius <= 1e-9
    mids = [0.5 * (lo + hi) for lo, hi in sa.intervals]
    assert np.allclose(mids, [1.0, 3.0, 5.0], atol=1e-9)


def test_sigma_radial_well_structure():
    fs = radial_field(BOX_HALF)
    sa = sample_sigma(fs, fs.domain, lmax=4.0, step=0.01)
    rho = sa.covering_radius
    assert len(sa.intervals) == 2
    (l0, h0), (l1, h1) = sa.intervals
    assert abs(l0 - (1.0 - rho)) <= 2 * rho
    assert abs(h0 - (2.0 + rho)) <= 2 * rho
    assert abs(l1 - (3.0 - rho)) <= 2 * rho
    assert h1 == 4.0


def test_sigma_shifted_out_of_range_is_empty():
    fs = radial_field(BOX_HALF, v={"family": "constant", "v0": 10.0})
    sa = sample_sigma(fs, fs.domain, lmax=4.0, step=0.05)
    assert sa.intervals == ()


def test_sigma_hausdorff_against_finer_oracle():
    fs = radial_field(BOX_HALF)
    coarse = sample_sigma(fs, fs.domain, lmax=4.0, step=0.1)
    fine = sample_sigma(fs, fs.domain, lmax=4.0, step=0.01)
    assert fine.covering_radius <= coarse.covering_radius
    assert _hausdorff(coarse.intervals, fine.intervals) <= coarse.covering_radius


def _hausdorff(ivs_a, ivs_b, n=4001):
    xs = np.linspace(0.0, 4.0, n)

    def dist(x, ivs):
        best = np.inf
        for lo, hi in ivs:
            if lo <= x <= hi:
                return 0.0
            best = min(best, abs(x - lo), abs(x - hi))
        return best

    in_a = np.array([x for x in xs if dist(x, ivs_a) == 0.0])
    in_b = np.array([x for x in xs if dist(x, ivs_b) == 0.0])
    d_ab = max(dist(x, ivs_b) for x in in_a)
    d_ba = max(dist(x, ivs_a) for x in in_b)
    return max(d_ab, d_ba)


def test_sigma_monotone_in_lmax():
    fs = radial_field(BOX_HALF)
    small = sample_sigma(fs, fs.domain, lmax=2.5, step=0.05)
    big = sample_sigma(fs, fs.domain, lmax=4.0, step=0.05)
    xs = np.linspace(0, 2.5, 801)
    for x in xs:
        if sigma_distance(x, small) == 0.0:
            assert sigma_distance(x, big) == 0.0


def test_sigma_semiaxis_for_rank_deficient_nodes():
    fs = make_field({"family": "constant", "dim": 3,
                     "matrix": [[0, 1, 0], [-1, 0, 0], [0, 0, 0]],
                     "domain": [[-1, 1]] * 3})
    sa = sample_sigma(fs, fs.domain, lmax=6.0, step=0.5)
    assert len(sa.intervals) == 1
    lo, hi = sa.intervals[0]
    assert abs(lo - 1.0) <= sa.covering_radius + 1e-12 and hi == 6.0


# --- sigma_distance / find_gaps ----------------------------------------------


def sa_from(intervals, lmax, rho=0.0):
    return SigmaApprox(intervals=tuple(intervals), covering_radius=rho,
                       domain=np.array([[-1.0, 1.0]]), sample_step=0.1,
                       lmax=lmax, lipschitz=0.0, kmax=0, merge_tol=1e-12)


def test_sigma_distance_values():
    sa = sa_from([(1.0, 1.0), (3.0, 3.0)], lmax=4.0)
    assert sigma_distance(2.0, sa) == 1.0
    sa2 = sa_from([(0.95, 2.05)], lmax=4.0, rho=0.05)
    assert sigma_distance(1.5, sa2) == 0.0
    sa3 = sa_from([(1.0, 2.0), (3.0, 4.0)], lmax=4.0)
    assert np.isclose(sigma_distance(2.6, sa3), 0.4)
    with pytest.raises(ValueError):
        sigma_distance(7.0, sa3)


def test_find_gaps_elementary():
    sa = sa_from([(1.0, 2.0), (3.0, 4.0)], lmax=5.0)
    gaps = find_gaps(sa, min_width=0.5)
    assert gaps == [(0.0, 1.0), (2.0, 3.0), (4.0, 5.0)]


def test_find_gaps_inflated_ladder():
    sa = sa_from([(0.9, 1.1), (2.9, 3.1), (4.9, 5.1)], lmax=6.0, rho=0.1)
    gaps = find_gaps(sa, min_width=0.5)
    assert np.allclose(gaps, [(0.0, 0.9), (1.1, 2.9), (3.1, 4.9), (5.1, 6.0)])


def test_find_gaps_covering_whole_range():
    sa = sa_from([(1.0, 2.0)], lmax=2.0)
    assert find_gaps(sa, 0.25) == [(0.0, 1.0)]


# --- kset ---------------------------------------------------------------------


def test_kset_annulus():
    fs = radial_field(2.0)
    grid = SampleGrid.from_step(fs.domain, 0.05)
    km = kset(fs, (1.5, 2.5), grid, margin=0.5)
    pts = grid.points()
    r2 = np.sum(pts**2, axis=1)
    want = (r2 >= 0.5) & (r2 <= 1.5)  # k=0 band; k>=1 levels start at 3(1+r^2)
    off_edge = (np.abs(r2 - 0.5) > 1e-9) & (np.abs(r2 - 1.5) > 1e-9)
    assert np.array_equal(km.mask.ravel()[off_edge], want[off_edge])
    assert km.compact_flag


def test_kset_constant_field_everything_or_nothing():
    fs = make_field({"family": "constant", "dim": 2, "b": 1.0,
                     "domain": [[-2, 2]] * 2})
    grid = SampleGrid.from_step(fs.domain, 0.25)
    km_all = kset(fs, (0.5, 1.5), grid, margin=0.5)
    assert np.all(km_all.mask) and not km_all.compact_flag
    km_none = kset(fs, (1.5, 2.5), grid, margin=0.5)
    assert not np.any(km_none.mask) and km_none.compact_flag


def test_kset_sigma_consistency_pointwise():
    # mask true iff the single-point covering of x meets [a, b]
    fs = radial_field(2.0)
    grid = SampleGrid.from_step(fs.domain, 0.4)
    km = kset(fs, (1.5, 2.5), grid, margin=0.0)
    for flat, x in enumerate(grid.points()):
        ms = skew_spectrum(fs, x)
        levels = [lam for _, lam in enumerate_levels(ms, 2.5)]
        hit = any(1.5 <= lam <= 2.5 for lam in levels)
        assert hit == bool(km.mask.ravel()[flat])


# --- model_f0 -----------------------------------------------------------------


def test_f0_full_rank_single_level():
    phi = TestFunction.bump(center=1.0, halfwidth=0.5)
    val = model_f0(ms_of([1.0], 0.0), phi)
    assert np.isclose(val, phi(1.0) / (2 * math.pi), atol=1e-12)
    assert np.isclose(val, 1.0 / (2 * math.pi), atol=1e-12)


def test_f0_zero_function():
    phi = TestFunction.bump(center=50.0, halfwidth=0.5)
    assert model_f0(ms_of([1.0], 0.0), phi) == 0.0


def test_f0_degenerate_rank_against_independent_quadrature():
    # d = 3, one zero mode: omega_0 = 2; oracle is scipy.integrate.quad
    phi = TestFunction.bump(center=1.5, halfwidth=1.0)
    ms = ModelSpectrum(x0=np.zeros(3), a=np.array([1.0]), rank=2, v0=0.0,
                       zero_modes=1)
    got = model_f0(ms, phi, quad_tol=1e-10)
    oracle = 0.0
    for lam in [1.0, 3.0]:  # levels with nonzero overlap of supp(phi)=(0.5, 2.5)
        val, _ = quad(lambda r: phi(r * r + lam), 0.0, math.sqrt(2.5), limit=200)
        oracle += val
    oracle *= 2.0 / (2 * math.pi) ** 2
    assert np.isclose(got, oracle, atol=1e-9)


def test_f0_linearity_and_positivity():
    ms = ms_of([1.3, 0.7], 0.2)
    phi = TestFunction.bump(center=3.0, halfwidth=1.5)
    psi = TestFunction.bump(center=4.0, halfwidth=1.0)

    class Lin:
        support = (min(phi.support[0], psi.support[0]),
                   max(phi.support[1], psi.support[1]))

        def __call__(self, x):
            return 2.0 * phi(x) - 0.5 * psi(x)

    lhs = model_f0(ms, Lin())
    rhs = 2.0 * model_f0(ms, phi) - 0.5 * model_f0(ms, psi)
    assert np.isclose(lhs, rhs, atol=1e-9)
    assert model_f0(ms, phi) >= 0.0


def test_f0_requires_declared_support():
    with pytest.raises(ValueError):
        model_f0(ms_of([1.0], 0.0), lambda x: 0.0)
