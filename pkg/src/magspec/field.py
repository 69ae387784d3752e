"""Continuous problem data: magnetic field B, electric potential V, vector potential A.

A ``FieldSpec`` bundles batched evaluators for B (real antisymmetric d x d
matrix field), V (scalar) and A (d-vector), together with declared sup-norm
bounds over the computational domain.  The bounds feed the Lipschitz covering
certificates downstream, so they are part of the data, not an afterthought.

Evaluator convention: every callable accepts an array of points with shape
``(..., d)`` and returns an array of shape ``(..., d, d)`` for B, ``(...,)``
for V and ``(..., d)`` for A.  All built-in families follow it and are exact
closed-form expressions (tabulated fields cannot certify smoothness bounds).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import AmbiguousRankError, FieldError

Array = np.ndarray

#: Relative antisymmetry defect above which user-supplied B matrices are rejected.
ANTISYMMETRY_TOL = 1e-12

#: Default relative rank tolerance: a_j below this times ||B(x0)|| count as zero modes.
RANK_TOL_REL = 1e-8


@dataclass(frozen=True)
class Bounds:
    """Declared sup-norms over the computational domain.

    ``sup_db`` bounds the operator norm of the derivative of x -> B(x), i.e.
    ||B(x) - B(y)|| <= sup_db * |x - y| on the domain; likewise ``sup_dv``
    for V.  These are what the covering-radius certificate consumes.
    """

    sup_b: float
    sup_db: float
    sup_v: float
    sup_dv: float


@dataclass(frozen=True)
class FieldSpec:
    """Immutable continuous problem data; all evaluators are pure and reentrant."""

    dim: int
    B: Callable[[Array], Array]
    V: Callable[[Array], Array]
    A: Callable[[Array], Array] | None
    bounds: Bounds
    domain: Array  # (d, 2) array of [lo, hi] per axis
    family: str = "custom"
    params: dict = dc_field(default_factory=dict)
    min_skew: float = float("nan")  # sampled inf over the domain of the smallest a_j

    def center(self) -> Array:
        return 0.5 * (self.domain[:, 0] + self.domain[:, 1])

    def contains(self, x: Array) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.domain[:, 0]) and np.all(x <= self.domain[:, 1]))


@dataclass(frozen=True)
class ModelSpectrum:
    """Pointwise data of the frozen-coefficient model operator at x0.

    ``a`` holds the positive numbers a_j (sorted descending) such that the
    nonzero eigenvalues of B(x0) are +-i a_j; ``rank`` = 2 n; ``zero_modes``
    = d - 2 n; ``v0`` = V(x0).
    """

    x0: Array
    a: Array
    rank: int
    v0: float
    zero_modes: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.size and np.any(np.diff(a) > 0):
            raise ValueError("a must be sorted descending")
        if self.rank != 2 * a.size:
            raise ValueError("rank must equal 2 * len(a)")

    @property
    def n(self) -> int:
        return self.rank // 2


# ---------------------------------------------------------------------------
# built-in field families
# ---------------------------------------------------------------------------


def _poly_eval(terms: list[tuple[float, tuple[int, ...]]], x: Array) -> Array:
    """Evaluate sum_t c_t * prod_i x_i**e_{t,i} on points of shape (..., d)."""
    out = np.zeros(x.shape[:-1])
    for coef, exps in terms:
        mono = np.full(x.shape[:-1], float(coef))
        for i, e in enumerate(exps):
            if e:
                mono = mono * x[..., i] ** e
        out = out + mono
    return out


def _entry_field(dim: int, entries: dict[tuple[int, int], Callable[[Array], Array]]):
    """Build an exactly antisymmetric B from upper-triangle entry evaluators."""

    def B(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        for (j, k), f in entries.items():
            v = f(x)
            out[..., j, k] = v
            out[..., k, j] = -v
        return out

    return B


def _constant_matrix(dim: int, params: dict) -> Array:
    if "matrix" in params:
        M = np.asarray(params["matrix"], dtype=float).reshape(dim, dim)
        dev = np.max(np.abs(M + M.T))
        scale = max(np.max(np.abs(M)), 1.0)
        if dev > ANTISYMMETRY_TOL * scale:
            raise FieldError(
                f"constant field matrix is not antisymmetric (defect {dev:.3e})"
            )
        return 0.5 * (M - M.T)
    if "blocks" in params:
        bs = [float(b) for b in np.atleast_1d(params["blocks"])]
        if 2 * len(bs) != dim:
            raise FieldError("need dim/2 block coefficients for a block field")
        M = np.zeros((dim, dim))
        for j, b in enumerate(bs):
            M[2 * j, 2 * j + 1] = b
            M[2 * j + 1, 2 * j] = -b
        return M
    b = float(params.get("b", 1.0))
    if dim != 2:
        raise FieldError("scalar strength 'b' only defines a field in dimension 2")
    return np.array([[0.0, b], [-b, 0.0]])


def _log_cosh(t: Array) -> Array:
    # log(cosh(t)) without overflow for large |t|
    at = np.abs(t)
    return at + np.log1p(np.exp(-2.0 * at)) - np.log(2.0)


def _max_abs_corner(domain: Array) -> float:
    """max |x| over the box (attained at a corner)."""
    corner = np.max(np.abs(domain), axis=1)
    return float(np.sqrt(np.sum(corner**2)))


def _build_potential(dim: int, pot: dict, domain: Array):
    family = pot.get("family", "zero")
    if family == "zero":

        def V(x):
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1])

        return V, 0.0, 0.0
    if family == "constant":
        v0 = float(pot.get("v0", 0.0))

        def V(x):
            x = np.asarray(x, dtype=float)
            return np.full(x.shape[:-1], v0)

        return V, abs(v0), 0.0
    if family == "quadratic":
        v0 = float(pot.get("v0", 0.0))
        v2 = float(pot.get("v2", 1.0))

        def V(x):
            x = np.asarray(x, dtype=float)
            return v0 + v2 * np.sum(x * x, axis=-1)

        R = _max_abs_corner(domain)
        return V, abs(v0) + abs(v2) * R**2, 2.0 * abs(v2) * R
    if family == "polynomial":
        terms = _parse_terms(pot["terms"], dim)

        def V(x):
            return _poly_eval(terms, np.asarray(x, dtype=float))

        return V, None, None
    raise FieldError(f"unknown potential family {family!r}")


def _parse_terms(raw, dim: int) -> list[tuple[float, tuple[int, ...]]]:
    """Normalize a monomial table: iterable of (coef, (e_1, .., e_d))."""
    terms = []
    for item in raw:
        coef, exps = item[0], tuple(int(e) for e in item[1])
        if len(exps) != dim:
            raise FieldError("monomial exponent tuple length must equal dim")
        terms.append((float(coef), exps))
    return terms


def _sampled_sup(f: Callable[[Array], Array], domain: Array, rng, n=4096) -> float:
    pts = rng.uniform(domain[:, 0], domain[:, 1], size=(n, domain.shape[0]))
    return float(np.max(np.abs(f(pts))))


def make_field(config: dict) -> FieldSpec:
    """Build a :class:`FieldSpec` from a parsed field description.

    ``config`` keys: ``family`` (one of ``constant``, ``radial_well``,
    ``polynomial``, ``iwatsuka``), ``dim``, ``domain`` ((d,2) box), family
    parameters, optional ``potential`` sub-dict, optional ``bounds``
    overrides and ``quad_order`` for the synthesized vector potential.

    When the family does not come with a closed-form A, one is synthesized in
    the transverse gauge about the domain center and checked against B by a
    finite-difference curl probe.
    """
    family = config.get("family")
    dim = int(config.get("dim", 2))
    if dim < 2:
        raise FieldError("dimension must be at least 2")
    if "domain" not in config:
        raise FieldError("field config must declare the computational domain box")
    domain = np.asarray(config["domain"], dtype=float).reshape(dim, 2)
    if np.any(domain[:, 1] <= domain[:, 0]):
        raise FieldError("domain box must have lo < hi on every axis")
    params = {k: v for k, v in config.items() if k not in ("family", "dim", "domain", "potential", "bounds", "quad_order")}
    R = _max_abs_corner(domain)

    A = None
    if family == "constant":
        M = _constant_matrix(dim, params)
        Mc = M.copy()

        def B(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(Mc, x.shape[:-1] + (dim, dim))

        sup_b = float(np.linalg.norm(M, 2))
        sup_db = 0.0
    elif family == "radial_well":
        if dim != 2:
            raise FieldError("radial_well is a planar (dim 2) family")
        b0 = float(params.get("b0", 1.0))
        b2 = float(params.get("b2", 1.0))
        if b2 < 0 or b0 <= 0:
            raise FieldError("radial_well needs b0 > 0 and b2 >= 0")

        def entry(x):
            return b0 + b2 * np.sum(x * x, axis=-1)

        B = _entry_field(2, {(0, 1): entry})
        sup_b = b0 + b2 * R**2
        sup_db = 2.0 * b2 * R
    elif family == "iwatsuka":
        if dim != 2:
            raise FieldError("iwatsuka is a planar (dim 2) family")
        b_inf = float(params.get("b_inf", 1.0))
        delta = float(params.get("delta", 0.5))
        width = float(params.get("width", 1.0))
        if width <= 0:
            raise FieldError("iwatsuka profile width must be positive")

        def entry(x):
            return b_inf + delta * np.tanh(x[..., 0] / width)

        B = _entry_field(2, {(0, 1): entry})

        def A(x):  # Landau-type gauge A = (0, int_0^{x1} b)
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (2,))
            t = x[..., 0]
            out[..., 1] = b_inf * t + delta * width * (_log_cosh(t / width) - _log_cosh(0.0))
            return out

        sup_b = abs(b_inf) + abs(delta)
        sup_db = abs(delta) / width
    elif family == "polynomial":
        entries_raw = params.get("entries")
        if not entries_raw:
            raise FieldError("polynomial family needs an 'entries' coefficient table")
        entries = {}
        for key, terms in entries_raw.items():
            j, k = (int(v) for v in key) if not isinstance(key, str) else (int(key[0]), int(key[1]))
            if not (0 <= j < k < dim):
                raise FieldError("polynomial entries must be upper-triangle index pairs")
            tt = _parse_terms(terms, dim)
            entries[(j, k)] = (lambda t: (lambda x: _poly_eval(t, x)))(tt)
        B = _entry_field(dim, entries)
        sup_b = None  # must be declared or sampled
        sup_db = None
    else:
        raise FieldError(f"unknown field family {family!r}")

    V, sup_v, sup_dv = _build_potential(dim, config.get("potential", {"family": "zero"}), domain)

    overrides = dict(config.get("bounds", {}))
    rng = np.random.default_rng(20240601)
    if sup_b is None:
        if "sup_b" not in overrides or "sup_db" not in overrides:
            raise FieldError("polynomial fields must declare sup_b and sup_db bounds")
    if sup_v is None:
        if "sup_v" not in overrides or "sup_dv" not in overrides:
            raise FieldError("polynomial potentials must declare sup_v and sup_dv bounds")
    bounds = Bounds(
        sup_b=float(overrides.get("sup_b", sup_b)),
        sup_db=float(overrides.get("sup_db", sup_db)),
        sup_v=float(overrides.get("sup_v", sup_v)),
        sup_dv=float(overrides.get("sup_dv", sup_dv)),
    )

    # sampling-based sanity check of the declared sup-norms
    sampled_b = _sampled_sup(lambda p: np.linalg.norm(B(p), ord=2, axis=(-2, -1)), domain, rng)
    sampled_v = _sampled_sup(V, domain, rng)
    slack = 1.0 + 1e-9
    problems = []
    if sampled_b > bounds.sup_b * slack + 1e-12:
        problems.append(f"sampled sup|B| = {sampled_b:.6g} exceeds declared {bounds.sup_b:.6g}")
    if sampled_v > bounds.sup_v * slack + 1e-12:
        problems.append(f"sampled sup|V| = {sampled_v:.6g} exceeds declared {bounds.sup_v:.6g}")
    if problems:
        raise FieldError("; ".join(problems))

    quad_order = int(config.get("quad_order", 16))
    fs = FieldSpec(dim=dim, B=B, V=V, A=A, bounds=bounds, domain=domain,
                   family=family, params=params)
    if fs.A is None:
        from .gauge import synthesize_potential

        fs = FieldSpec(dim=dim, B=B, V=V, A=synthesize_potential(fs, fs.center(), quad_order),
                       bounds=bounds, domain=domain, family=family, params=params)
    _check_curl(fs)
    a_min = _sampled_min_skew(fs, rng)
    return FieldSpec(dim=dim, B=fs.B, V=fs.V, A=fs.A, bounds=bounds, domain=domain,
                     family=family, params=params, min_skew=a_min)


def wrap_user_field(dim: int, B_raw, V, A, bounds: Bounds, domain) -> FieldSpec:
    """Wrap user-supplied callables; B is antisymmetrized and defects flagged."""

    def B(x):
        M = np.asarray(B_raw(np.asarray(x, dtype=float)), dtype=float)
        Mt = np.swapaxes(M, -1, -2)
        dev = float(np.max(np.abs(M + Mt)))
        scale = max(float(np.max(np.abs(M))), 1.0)
        if dev > ANTISYMMETRY_TOL * scale:
            raise FieldError(f"user field is not antisymmetric (defect {dev:.3e})")
        return 0.5 * (M - Mt)

    return FieldSpec(dim=dim, B=B, V=V, A=A, bounds=bounds,
                     domain=np.asarray(domain, dtype=float).reshape(dim, 2))


def _check_curl(fs: FieldSpec, n_per_axis: int = 5, rel_h: float = 1.0 / 64.0) -> None:
    """Probe-grid check that the finite-difference curl of A reproduces B.

    Central differences with step h per axis; tolerance 10 * h^2 * ||B||_C1
    with ||B||_C1 read from the declared bounds.  Also catches non-closed B
    when A was synthesized (the transverse construction only inverts d on
    closed 2-forms).
    """
    d = fs.dim
    extents = fs.domain[:, 1] - fs.domain[:, 0]
    h = float(np.min(extents)) * rel_h
    axes = [np.linspace(lo + 2 * h, hi - 2 * h, n_per_axis) for lo, hi in fs.domain]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    curl = np.zeros((mesh.shape[0], d, d))
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = h
        dA = (fs.A(mesh + ej) - fs.A(mesh - ej)) / (2.0 * h)  # (N, d): dA_k/dx_j
        curl[:, j, :] += dA
        curl[:, :, j] -= dA
    Bv = fs.B(mesh)
    err = float(np.max(np.abs(curl - Bv)))
    c1 = fs.bounds.sup_b + fs.bounds.sup_db
    tol = 10.0 * h**2 * max(c1, 1.0)
    if err > tol:
        raise FieldError(
            f"curl(A) does not match B: defect {err:.3e} > tolerance {tol:.3e} "
            "(non-closed field or inconsistent vector potential)"
        )


def _sampled_min_skew(fs: FieldSpec, rng, n: int = 512) -> float:
    pts = rng.uniform(fs.domain[:, 0], fs.domain[:, 1], size=(n, fs.dim))
    a, nvec, _ = skew_batched(fs, pts)
    amin = np.where(nvec > 0, a[np.arange(len(pts)), np.maximum(nvec - 1, 0)], 0.0)
    return float(np.min(amin))


# ---------------------------------------------------------------------------
# pointwise classification of the field
# ---------------------------------------------------------------------------


def skew_spectrum(fs: FieldSpec, x0, rank_tol: float | None = None) -> ModelSpectrum:
    """Classify B(x0): positive skew-eigenvalues a_j, rank 2n, zero modes.

    The a_j are extracted as square roots of the eigenvalues of B^T B (which
    are the a_j^2, each doubly degenerate by antisymmetry), avoiding complex
    arithmetic.  Eigenvalues of B^T B below rank_tol^2 are declared zero
    modes; values inside the band [rank_tol^2/4, 4 rank_tol^2] in odd number
    signal that the tolerance straddles a true eigenvalue and raise
    :class:`AmbiguousRankError`.
    """
    x0 = np.asarray(x0, dtype=float)
    if not fs.contains(x0):
        raise FieldError(f"point {x0.tolist()} is outside the declared domain")
    B = fs.B(x0)
    w = np.linalg.eigvalsh(B.T @ B)  # ascending, >= 0 up to rounding
    w = np.maximum(w, 0.0)
    norm = float(np.sqrt(w[-1]))
    if rank_tol is None:
        rank_tol = RANK_TOL_REL * max(norm, np.finfo(float).tiny)
    a, n, zero = _pair_up(w[::-1], rank_tol)
    v0 = float(fs.V(x0))
    return ModelSpectrum(x0=x0, a=a, rank=2 * n, v0=v0, zero_modes=zero)


def _pair_up(w_desc: Array, rank_tol: float):
    """Pair the descending eigenvalues of B^T B into a_j^2 duplicates."""
    lo_band, hi_band = rank_tol**2 / 4.0, 4.0 * rank_tol**2
    in_band = int(np.count_nonzero((w_desc >= lo_band) & (w_desc <= hi_band)))
    if in_band % 2 == 1:
        raise AmbiguousRankError(
            f"{in_band} singular values of B^T B inside the tolerance band "
            f"[{lo_band:.3e}, {hi_band:.3e}]; rank tolerance straddles a true eigenvalue"
        )
    pos = int(np.count_nonzero(w_desc > rank_tol**2))
    if pos % 2 == 1:
        raise AmbiguousRankError(
            f"odd number ({pos}) of singular values above the rank tolerance; "
            "cannot pair them into skew-eigenvalues"
        )
    n = pos // 2
    a = np.sqrt(0.5 * (w_desc[0 : 2 * n : 2] + w_desc[1 : 2 * n : 2]))
    return a, n, len(w_desc) - 2 * n


def skew_batched(fs: FieldSpec, points: Array, rank_tol_rel: float = RANK_TOL_REL):
    """Vectorized `skew_spectrum` over (N, d) points.

    Returns ``(a, n, v)`` with ``a`` of shape (N, d//2) sorted descending and
    zero-padded past n[i], ``n`` the per-point count of positive pairs and
    ``v`` the potential values.  Raises on any ambiguous-rank point.
    """
    pts = np.asarray(points, dtype=float)
    B = fs.B(pts)
    w = np.linalg.eigvalsh(np.swapaxes(B, -1, -2) @ B)  # (N, d) ascending
    w = np.maximum(w[..., ::-1], 0.0)  # descending
    norm = np.sqrt(w[..., 0])
    rank_tol = rank_tol_rel * np.maximum(norm, np.finfo(float).tiny)
    lo_band = rank_tol[..., None] ** 2 / 4.0
    hi_band = 4.0 * rank_tol[..., None] ** 2
    in_band = np.count_nonzero((w >= lo_band) & (w <= hi_band), axis=-1)
    bad = np.nonzero(in_band % 2 == 1)[0]
    if bad.size:
        raise AmbiguousRankError(
            f"ambiguous rank at {bad.size} sample point(s), first at index {int(bad[0])}"
        )
    d = fs.dim
    npairs = d // 2
    pair_mean = 0.5 * (w[..., 0 : 2 * npairs : 2] + w[..., 1 : 2 * npairs : 2])
    a = np.sqrt(pair_mean)
    n = np.count_nonzero(pair_mean > rank_tol[..., None] ** 2, axis=-1)
    a = np.where(np.arange(npairs) < n[..., None], a, 0.0)
    v = np.asarray(fs.V(pts), dtype=float)
    return a, n, v
