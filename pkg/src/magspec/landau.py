"""Pointwise model spectra, the sampled spectral set, localization sets and f0.

The model operator at x0 has eigenvalues (full rank case)

    Lambda_k(x0) = sum_j (2 k_j + 1) a_j(x0) + V(x0),   k in Z_+^n,

and, when B(x0) has d - 2n > 0 zero modes, the semiaxis [Lambda_0(x0), oo)
with Lambda_0 = sum_j a_j + V(x0).  The union of these over a domain is
approximated here by grid sampling plus Lipschitz inflation: each sampled
level is inflated to a ball of radius

    rho = L * step * sqrt(d) / 2 + merge_tol,

where L bounds the Lipschitz constant of x -> Lambda_k(x) via the declared
C^1 bounds (Lambda_k is (2|k|+n)-Lipschitz in the a_j and 1-Lipschitz in V).
Every true point of the union over the sampled box then lies within rho of
the reported intervals, which is the one-sided guarantee gap certification
needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import FieldSpec, ModelSpectrum, skew_batched

Array = np.ndarray

#: Relative slack when testing Lambda_k <= emax, so exact-boundary levels
#: are kept regardless of rounding in the sum.
LEVEL_SLACK = 1e-12


# ---------------------------------------------------------------------------
# sampling grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleGrid:
    """Uniform tensor grid of sample nodes, endpoints included."""

    box: Array  # (d, 2)
    axes: tuple

    @classmethod
    def from_step(cls, box, step: float) -> "SampleGrid":
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        if step <= 0:
            raise ValueError("sample step must be positive")
        axes = []
        for lo, hi in box:
            count = max(int(math.ceil((hi - lo) / step)) + 1, 2)
            axes.append(np.linspace(lo, hi, count))
        return cls(box=box, axes=tuple(axes))

    @classmethod
    def from_axes(cls, axes) -> "SampleGrid":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        box = np.array([[a[0], a[-1]] for a in axes])
        return cls(box=box, axes=axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def steps(self) -> Array:
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def max_step(self) -> float:
        return float(np.max(self.steps))

    def points(self) -> Array:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)


# ---------------------------------------------------------------------------
# level enumeration
# ---------------------------------------------------------------------------


def _k_indices_within(a_desc: Array, budget: float) -> list[tuple[int, ...]]:
    """All k in Z_+^n with sum_j 2 k_j a_j <= budget (a_desc sorted descending)."""
    n = len(a_desc)
    out: list[tuple[int, ...]] = []
    prefix = [0] * n

    def rec(j: int, rem: float) -> None:
        if j == n:
            out.append(tuple(prefix))
            return
        kmax = int(math.floor(rem / (2.0 * a_desc[j]) + LEVEL_SLACK))
        for k in range(kmax + 1):
            prefix[j] = k
            rec(j + 1, rem - 2.0 * k * a_desc[j])
        prefix[j] = 0

    rec(0, budget)
    return out


def _levels_below(a_desc: Array, v0: float, emax: float):
    """(k, Lambda_k) pairs with Lambda_k <= emax, ascending; works for n = 0."""
    a_desc = np.asarray(a_desc, dtype=float)
    base = float(np.sum(a_desc)) + v0
    budget = emax - base
    slack = LEVEL_SLACK * max(1.0, abs(emax), abs(base))
    if budget < -slack:
        return []
    ks = _k_indices_within(a_desc, max(budget, 0.0) + slack)
    pairs = []
    for k in ks:
        lam = base + 2.0 * float(np.dot(k, a_desc))
        if lam <= emax + slack:
            pairs.append((k, lam))
    pairs.sort(key=lambda p: (p[1], p[0]))
    return pairs


def enumerate_levels(ms: ModelSpectrum, emax: float):
    """All (k, Lambda_k(x0)) with Lambda_k <= emax, sorted ascending by level.

    Finite because every a_j > 0.  Rank-0 model spectra have no discrete
    magnetic levels; callers must use the semiaxis branch instead.
    """
    if ms.rank == 0:
        raise ValueError("no magnetic levels: B(x0) has rank 0, spectrum is a semiaxis")
    if not np.isfinite(emax):
        raise ValueError("emax must be finite")
    return _levels_below(ms.a, ms.v0, emax)


def model_spectrum_min(ms: ModelSpectrum) -> float:
    """Bottom of the model spectrum: Lambda_0 = sum_j a_j + V(x0).

    For zero_modes > 0 this is the base of the semiaxis spectrum.
    """
    return float(np.sum(ms.a) + ms.v0)


# ---------------------------------------------------------------------------
# sampled spectral set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaApprox:
    """Finite union of closed intervals covering the sampled spectral set.

    Every level of every model operator over the sampled box lies within
    `covering_radius` of the reported intervals.
    """

    intervals: tuple  # ((lo, hi), ...) sorted, disjoint, inside [0, lmax]
    covering_radius: float
    domain: Array
    sample_step: float
    lmax: float
    lipschitz: float
    kmax: int
    merge_tol: float

    def __post_init__(self):
        prev_hi = -math.inf
        for lo, hi in self.intervals:
            if lo > hi or lo < -1e-12 or hi > self.lmax + 1e-12:
                raise ValueError("intervals must be ordered and inside [0, lmax]")
            if lo < prev_hi:
                raise ValueError("intervals must be disjoint and sorted")
            prev_hi = hi


def _batched_levels(a: Array, n: Array, v: Array, emax: float):
    """Level values for every node, vectorized over a shared candidate k set.

    Returns (values (N, K), mask (N, K), knorm (K,)).  Candidate multi-indices
    are generated from the per-slot minima of the sorted a vectors, which
    gives a superset of every node's own admissible set.
    """
    N, npairs = a.shape
    groups = {}
    for nn in np.unique(n):
        groups[int(nn)] = np.nonzero(n == nn)[0]
    all_vals, all_mask, all_kn = [], [], []
    for nn, idx in groups.items():
        av = a[idx, :nn]
        vv = v[idx]
        if nn == 0:
            vals = vv[:, None]
            mask = vals <= emax + LEVEL_SLACK * max(1.0, abs(emax))
            all_vals.append((idx, vals))
            all_mask.append(mask)
            all_kn.append(np.zeros(1, dtype=int))
            continue
        a_min = np.min(av, axis=0)
        v_min = float(np.min(vv))
        budget = emax - v_min - float(np.sum(a_min))
        ks = _k_indices_within(a_min, max(budget, 0.0)) if budget >= 0 else []
        if not ks:
            ks = [(0,) * nn]
        K = np.asarray(ks, dtype=float)  # (K, nn)
        vals = av @ (2.0 * K.T + 1.0) + vv[:, None]  # (Ng, K)
        slack = LEVEL_SLACK * max(1.0, abs(emax))
        mask = vals <= emax + slack
        all_vals.append((idx, vals))
        all_mask.append(mask)
        all_kn.append(K.sum(axis=1).astype(int))
    return all_vals, all_mask, all_kn


def sample_sigma(fs: FieldSpec, domain, lmax: float, step: float,
                 merge_tol: float = 1e-12, rank_tol_rel: float = 1e-8) -> SigmaApprox:
    """Sample the union of model spectra over a box and certify a covering.

    Levels are evaluated at every node of a uniform grid with spacing
    <= `step`, inflated by the certified radius rho and merged into disjoint
    closed intervals clipped to [0, lmax].  Nodes where B is rank deficient
    contribute the semiaxis [Lambda_0 - rho, lmax].
    """
    grid = SampleGrid.from_step(domain, step)
    pts = grid.points()
    a, n, v = skew_batched(fs, pts, rank_tol_rel)
    d = fs.dim
    delta = grid.max_step * math.sqrt(d) / 2.0
    nmax = int(np.max(n)) if len(n) else 0

    def rho_of(kmax: int) -> float:
        L = (2.0 * kmax + nmax) * fs.bounds.sup_db + fs.bounds.sup_dv
        return L * delta + merge_tol, L

    # two passes: the guard band around lmax must itself be rho wide,
    # and rho depends on the deepest enumerated level
    kmax = 0
    rho, L = rho_of(0)
    for _ in range(2):
        emax_guard = lmax + rho
        groups_vals, groups_mask, groups_kn = _batched_levels(a, n, v, emax_guard)
        kmax_new = 0
        for mask, kn in zip(groups_mask, groups_kn):
            used = np.any(mask, axis=0)
            if np.any(used):
                kmax_new = max(kmax_new, int(np.max(kn[used])))
        kmax = kmax_new
        rho, L = rho_of(kmax)

    values = []
    semiaxis_start = None
    zero_nodes = n < d / 2.0
    for (idx, vals), mask in zip(groups_vals, groups_mask):
        zsel = zero_nodes[idx]
        if np.any(zsel):
            lam0 = np.sum(a[idx][zsel], axis=1) + v[idx][zsel]
            lo = float(np.min(lam0))
            semiaxis_start = lo if semiaxis_start is None else min(semiaxis_start, lo)
            keep = ~zsel
        else:
            keep = slice(None)
        mv = vals[keep][mask[keep]]
        if mv.size:
            values.append(mv.ravel())

    raw = np.concatenate(values) if values else np.empty(0)
    intervals = _merge_inflated(raw, rho, lmax)
    if semiaxis_start is not None and semiaxis_start - rho <= lmax:
        intervals = _merge_intervals(
            intervals + [(max(semiaxis_start - rho, 0.0), lmax)]
        )
    return SigmaApprox(
        intervals=tuple(intervals),
        covering_radius=rho,
        domain=np.asarray(domain, dtype=float).reshape(-1, 2),
        sample_step=grid.max_step,
        lmax=float(lmax),
        lipschitz=L,
        kmax=kmax,
        merge_tol=merge_tol,
    )


def _merge_inflated(values: Array, rho: float, lmax: float) -> list[tuple[float, float]]:
    if values.size == 0:
        return []
    vs = np.sort(values)
    out = []
    lo = vs[0] - rho
    hi = vs[0] + rho
    for vv in vs[1:]:
        if vv - rho <= hi:
            hi = vv + rho
        else:
            out.append((lo, hi))
            lo, hi = vv - rho, vv + rho
    out.append((lo, hi))
    clipped = []
    for lo, hi in out:
        lo, hi = max(lo, 0.0), min(hi, lmax)
        if lo <= hi:
            clipped.append((float(lo), float(hi)))
    return clipped


def _merge_intervals(ivs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    ivs = sorted(ivs)
    out: list[tuple[float, float]] = []
    for lo, hi in ivs:
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def sigma_distance(lam: float, sa: SigmaApprox) -> float:
    """Euclidean distance from lam to the union of intervals (0 inside)."""
    if lam < -1e-9 or lam > sa.lmax + 1e-9:
        raise ValueError(f"lambda = {lam} outside the certified range [0, {sa.lmax}]")
    best = math.inf
    for lo, hi in sa.intervals:
        if lo <= lam <= hi:
            return 0.0
        best = min(best, abs(lam - lo), abs(lam - hi))
    return best


def find_gaps(sa: SigmaApprox, min_width: float = 0.0) -> list[tuple[float, float]]:
    """Maximal open intervals of [0, lmax] disjoint from the covering.

    The covering intervals already carry the inflation radius rho, so the
    returned gaps are the true gaps of the sampled set shrunk by rho on each
    side; only gaps of width >= min_width are kept.  Edge gaps at 0 and lmax
    are included.
    """
    gaps = []
    cursor = 0.0
    for lo, hi in sa.intervals:
        if lo - cursor >= min_width and lo > cursor:
            gaps.append((float(cursor), float(lo)))
        cursor = max(cursor, hi)
    if sa.lmax - cursor >= min_width and sa.lmax > cursor:
        gaps.append((float(cursor), float(sa.lmax)))
    return gaps


# ---------------------------------------------------------------------------
# localization set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KSetMask:
    """Boolean mask of grid nodes whose model spectrum meets [a, b]."""

    grid: SampleGrid
    mask: Array  # bool, shape grid.shape
    interval: tuple
    margin: float
    compact_flag: bool


def kset(fs: FieldSpec, interval, grid: SampleGrid, margin: float,
         rank_tol_rel: float = 1e-8) -> KSetMask:
    """Mark grid nodes x with some Lambda_k(x) in [a, b].

    Pointwise levels are exact for the closed-form field families, so no
    pointwise slack is applied.  Rank-deficient nodes carry the semiaxis
    [Lambda_0, oo) and are marked when Lambda_0 <= b.  The compact flag is
    true iff no marked node lies within `margin` of the grid's outer
    boundary (vacuously true for an empty mask).
    """
    a_lo, b_hi = float(interval[0]), float(interval[1])
    if a_lo >= b_hi:
        raise ValueError("interval must satisfy a < b")
    pts = grid.points()
    a, n, v = skew_batched(fs, pts, rank_tol_rel)
    d = fs.dim
    flat = np.zeros(len(pts), dtype=bool)
    zero_nodes = n < d / 2.0
    if np.any(zero_nodes):
        lam0 = np.sum(a[zero_nodes], axis=1) + v[zero_nodes]
        flat[zero_nodes] = lam0 <= b_hi
    full = ~zero_nodes
    if np.any(full):
        groups_vals, groups_mask, _ = _batched_levels(a[full], n[full], v[full], b_hi)
        hit = np.zeros(int(np.count_nonzero(full)), dtype=bool)
        for (idx, vals), mask in zip(groups_vals, groups_mask):
            ok = mask & (vals >= a_lo)
            hit[idx] |= np.any(ok, axis=1)
        flat[full] = hit
    mask = flat.reshape(grid.shape)

    compact = True
    if np.any(mask):
        near = np.zeros(grid.shape, dtype=bool)
        for ax, coords in enumerate(grid.axes):
            lo, hi = grid.box[ax]
            edge = (coords <= lo + margin) | (coords >= hi - margin)
            shape = [1] * grid.dim
            shape[ax] = len(coords)
            near |= edge.reshape(shape)
        compact = not bool(np.any(mask & near))
    return KSetMask(grid=grid, mask=mask, interval=(a_lo, b_hi),
                    margin=float(margin), compact_flag=compact)


# ---------------------------------------------------------------------------
# leading density-of-states coefficient
# ---------------------------------------------------------------------------


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    """Classic recursive Simpson with Richardson acceptance test."""
    if b <= a:
        return 0.0

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def rec(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        lm, rm = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        flm, frm = f(lm), f(rm)
        left = simpson(x0, xm, f0, flm, f1)
        right = simpson(xm, x2, f1, frm, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return rec(x0, xm, f0, flm, f1, left, eps / 2.0, depth - 1) + rec(
            xm, x2, f1, frm, f2, right, eps / 2.0, depth - 1
        )

    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, max_depth)


def model_f0(ms: ModelSpectrum, phi, quad_tol: float = 1e-9) -> float:
    """Leading local density-of-states coefficient of the model operator.

    Full rank (d = 2n):      (2 pi)^-n  prod_j a_j  sum_k phi(Lambda_k).
    Degenerate (m = d - 2n): (2 pi)^(n-d) prod_j a_j sum_k
                             omega_{m-1} int_0^oo phi(r^2 + Lambda_k) r^(m-1) dr,
    with omega_{m-1} = 2 pi^(m/2) / Gamma(m/2) the unit-sphere area.  The
    radial integral is evaluated in the r variable (the integrand stays
    smooth there for every m) by adaptive Simpson to `quad_tol` over the
    declared support of phi.
    """
    if not hasattr(phi, "support"):
        raise ValueError("phi must declare a compact support (phi.support = (lo, hi))")
    lo, hi = (float(s) for s in phi.support)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError("phi.support must be a finite interval")
    d = ms.rank + ms.zero_modes
    n = ms.n
    m = ms.zero_modes
    pairs = _levels_below(ms.a, ms.v0, hi)
    prod_a = float(np.prod(ms.a)) if n else 1.0
    if m == 0:
        total = sum(float(phi(lam)) for _, lam in pairs)
        return (2.0 * math.pi) ** (-n) * prod_a * total
    omega = 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)
    total = 0.0
    for _, lam in pairs:
        r_lo = math.sqrt(max(lo - lam, 0.0))
        r_hi = math.sqrt(max(hi - lam, 0.0))
        if r_hi <= r_lo:
            continue
        total += _adaptive_simpson(
            lambda r, L=lam: float(phi(r * r + L)) * r ** (m - 1), r_lo, r_hi, quad_tol
        )
    return (2.0 * math.pi) ** (n - d) * prod_a * omega * total
