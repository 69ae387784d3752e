"""Windowed eigensolves of the lattice operator and spectral-function data.

Eigenpairs are extracted with shift-invert Lanczos (ARPACK) around the window
center and certified complete by spectrum slicing: the number of eigenvalues
below each window endpoint is computed exactly from matrix inertia via a
block-tridiagonal LDL^H recursion (Haynsworth).  On a tensor grid ordered
along one axis, the operator is block tridiagonal with diagonal coupling
blocks, so each Schur complement is a dense Hermitian matrix of the size of
one grid slab; signs of its LDL^H pivots accumulate into the global count.

All window arguments are in units of H/hbar; eigenvector normalization is
discrete L^2 (sum |u|^2 * prod h_j = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import linalg as dla
from scipy import sparse
from scipy.sparse.linalg import eigsh, splu

from .errors import SolverError
from .lattice import GridSpec, LatticeOperator

Array = np.ndarray

DENSE_THRESHOLD = 2048  # below this, plain dense eigendecomposition is both solver and certificate


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


def _bump_profile(s: Array) -> Array:
    """Standard bump exp(-s^2/(1-s^2)) on |s|<1, peak 1 at s=0, 0 outside."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    ss = np.where(inside, s, 0.0)
    with np.errstate(over="ignore"):
        out[inside] = np.exp(-(ss * ss) / (1.0 - ss * ss))[inside]
    return out


def _smoothstep(t: Array) -> Array:
    """C^inf transition: 0 for t<=0, 1 for t>=1, f(t)/(f(t)+f(1-t)) between."""
    t = np.asarray(t, dtype=float)

    def f(u):
        with np.errstate(divide="ignore", over="ignore"):
            val = np.where(u > 0.0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
        return val

    a, b = f(t), f(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class TestFunction:
    """Smooth compactly supported filter; identically zero outside `support`."""

    __test__ = False  # keep pytest collection away from the Test* name

    kind: str
    center: float
    width: float
    support: tuple
    edge: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        if self.kind == "bump":
            s = (x - self.center) / self.width
            val = _bump_profile(s)
        elif self.kind == "gaussian-truncated":
            window = _smoothstep((x - lo) / self.edge) * _smoothstep((hi - x) / self.edge)
            val = np.exp(-((x - self.center) ** 2) / (2.0 * self.width**2)) * window
        elif self.kind == "indicator-mollified":
            val = _smoothstep((x - lo) / self.edge) * _smoothstep((hi - x) / self.edge)
        else:
            raise ValueError(f"unknown test function kind {self.kind!r}")
        return np.where((x > lo) & (x < hi), val, 0.0)

    @classmethod
    def bump(cls, center: float, halfwidth: float) -> "TestFunction":
        return cls(kind="bump", center=float(center), width=float(halfwidth),
                   support=(float(center - halfwidth), float(center + halfwidth)))

    @classmethod
    def gaussian(cls, center: float, sigma: float, support: tuple,
                 edge_fraction: float = 0.1) -> "TestFunction":
        lo, hi = (float(s) for s in support)
        return cls(kind="gaussian-truncated", center=float(center), width=float(sigma),
                   support=(lo, hi), edge=edge_fraction * (hi - lo))

    @classmethod
    def plateau(cls, lo: float, hi: float, edge: float) -> "TestFunction":
        """Mollified indicator: 1 on [lo+edge, hi-edge], 0 outside (lo, hi)."""
        lo, hi, edge = float(lo), float(hi), float(edge)
        if not 0 < edge <= (hi - lo) / 2:
            raise ValueError("edge must satisfy 0 < edge <= (hi-lo)/2")
        return cls(kind="indicator-mollified", center=0.5 * (lo + hi),
                   width=0.5 * (hi - lo), support=(lo, hi), edge=edge)


# ---------------------------------------------------------------------------
# inertia / spectrum slicing
# ---------------------------------------------------------------------------


class _SingularShift(Exception):
    pass


def _dense_negcount(S: Array, scale: float) -> int:
    """Negative-eigenvalue count of a dense Hermitian matrix via LDL^H pivots."""
    di = np.diag_indices_from(S)
    S[di] = S[di].real  # Hermitian diagonal; drops Schur-update rounding dust
    try:
        _, D, _ = dla.ldl(S, hermitian=True)
    except Exception:  # extremely defensive; eigvalsh is the slow sure path
        w = np.linalg.eigvalsh(S)
        if np.any(np.abs(w) <= 1e-14 * scale):
            raise _SingularShift
        return int(np.count_nonzero(w < 0.0))
    n = S.shape[0]
    tiny = 1e-14 * scale
    neg = 0
    i = 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            blk = D[i : i + 2, i : i + 2]
            det = float(blk[0, 0].real * blk[1, 1].real - abs(blk[1, 0]) ** 2)
            tr = float(blk[0, 0].real + blk[1, 1].real)
            if abs(det) <= tiny * tiny:
                raise _SingularShift
            if det < 0.0:
                neg += 1
            elif tr < 0.0:
                neg += 2
            i += 2
        else:
            piv = float(D[i, i].real)
            if abs(piv) <= tiny:
                raise _SingularShift
            if piv < 0.0:
                neg += 1
            i += 1
    return neg


def _slab_permutation(shape: tuple) -> tuple[Array, int, int]:
    """Reorder nodes so the axis with most nodes becomes the slab axis."""
    ax = int(np.argmax(shape))
    perm = np.moveaxis(np.arange(int(np.prod(shape))).reshape(shape), ax, 0).ravel()
    nslab = shape[ax]
    nb = int(np.prod(shape)) // nslab
    return perm, nslab, nb


def _inertia_below(op: LatticeOperator, shift_h: float) -> int:
    """Number of eigenvalues of H strictly below `shift_h` (H units).

    Dense path for small matrices; block-tridiagonal Schur recursion with
    per-block LDL^H sign counts otherwise.  The recursion is unpivoted, so a
    shift that nearly annihilates a leading principal submatrix (detected by
    a tiny pivot or by entry growth in the complements) would lose digits;
    such shifts are bracketed from both sides instead, and the bracket counts
    must agree for the result to be accepted.
    """
    H = op.matrix
    N = H.shape[0]
    scale = op.norm_bound()
    if N <= DENSE_THRESHOLD:
        w = np.linalg.eigvalsh(H.toarray())
        return int(np.count_nonzero(w < shift_h))
    perm, nslab, nb = _slab_permutation(op.grid.n)
    Hp = H[perm][:, perm].tocsr()
    growth_cap = 8.0 * (scale + abs(shift_h))
    try:
        return _block_tridiag_negcount(Hp, nslab, nb, shift_h, scale, growth_cap)
    except _SingularShift:
        pass
    for mult in (1.0, 32.0, 1024.0):
        delta = 1e-7 * max(scale, 1.0) * mult
        try:
            below = _block_tridiag_negcount(Hp, nslab, nb, shift_h - delta, scale, growth_cap)
            above = _block_tridiag_negcount(Hp, nslab, nb, shift_h + delta, scale, growth_cap)
        except _SingularShift:
            continue
        if below == above:
            return below
        raise SolverError(
            f"an eigenvalue lies within {delta:.3e} of the slicing shift {shift_h!r}; "
            "the count is ill-posed there, move the window endpoint"
        )
    raise SolverError("inertia recursion unstable at every bracketing shift")


def _block_tridiag_negcount(Hp: sparse.csr_matrix, nslab: int, nb: int,
                            shift: float, scale: float, growth_cap: float) -> int:
    neg = 0
    lu_prev = None
    eye = np.eye(nb, dtype=complex)
    for i in range(nslab):
        sl = slice(i * nb, (i + 1) * nb)
        S = Hp[sl, sl].toarray().astype(complex)
        S[np.diag_indices_from(S)] -= shift
        if i > 0:
            prev = slice((i - 1) * nb, i * nb)
            C = Hp[prev, sl]
            c = np.asarray(C.todense())
            if np.count_nonzero(c - np.diag(np.diag(c))):
                # safety net for non-slab-diagonal coupling; not hit by assembly
                X = dla.lu_solve(lu_prev, c)
                S -= c.conj().T @ X
            else:
                cd = np.diag(c)
                X = dla.lu_solve(lu_prev, eye * cd[None, :])
                S -= cd.conj()[:, None] * X
        if float(np.max(np.abs(S))) > growth_cap:
            raise _SingularShift
        neg += _dense_negcount(S, scale)
        lu_prev = dla.lu_factor(S, check_finite=False)
    return neg


def eigencount_below(op: LatticeOperator, e_over_hbar: float) -> int:
    """Exact count of eigenvalues of H/hbar strictly below a threshold."""
    return _inertia_below(op, float(e_over_hbar) * op.hbar)


def eigencount_window(op: LatticeOperator, lo: float, hi: float) -> int:
    """Exact count of eigenvalues of H/hbar in [lo, hi)."""
    return eigencount_below(op, hi) - eigencount_below(op, lo)


# ---------------------------------------------------------------------------
# windowed eigensolve
# ---------------------------------------------------------------------------


@dataclass
class EigenWindowResult:
    """Eigenpairs of H/hbar in a window, with residuals and a completeness certificate."""

    window: tuple
    hbar: float
    grid: GridSpec
    values: Array  # ascending, H/hbar units
    vectors: Array  # (N, m), discrete-L2 normalized
    residuals: Array  # ||H u - lambda_H u||_2 / ||u||_2, H units
    complete_flag: bool
    expected_count: int
    norm_h: float
    extra: dict = dc_field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.values)


def validate_pair(op: LatticeOperator, lam_over_hbar: float, u: Array,
                  tol: float) -> bool:
    """Residual certificate for one eigenpair: ||Hu - lambda u|| <= tol ||H|| ||u||."""
    r = op.matrix @ u - (lam_over_hbar * op.hbar) * u
    return float(np.linalg.norm(r)) <= tol * op.norm_bound() * float(np.linalg.norm(u))


def eigs_window(op: LatticeOperator, window, tol: float = 1e-8, seed: int = 0,
                max_extra: int = 96, maxiter: int | None = None) -> EigenWindowResult:
    """All eigenpairs of H/hbar in `window`, certified by endpoint inertia counts.

    The expected count m is read from the inertia at the endpoints; shift-invert
    Lanczos around the window center is asked for m plus a buffer and regrown
    until the in-window converged count matches m (complete) or the buffer is
    exhausted (complete_flag False, partial results returned sorted).
    """
    lo, hi = (float(v) for v in window)
    if lo >= hi:
        raise SolverError("window must satisfy lo < hi")
    hbar = op.hbar
    hmax = float(np.max(op.grid.h))
    ceiling = 0.5 * hbar / hmax**2
    if hi > ceiling:
        raise SolverError(
            f"window top {hi} exceeds the discretization validity ceiling "
            f"0.5*hbar/h^2 = {ceiling:.3g}; refine the grid or lower the window"
        )
    a, b = hbar * lo, hbar * hi
    N = op.nnodes
    norm_h = op.norm_bound()
    vol = op.grid.cell_volume

    if N <= DENSE_THRESHOLD:
        w, U = np.linalg.eigh(op.matrix.toarray())
        inside = (w >= a) & (w < b)
        vals_h = w[inside]
        vecs = U[:, inside]
        res = _residuals(op, vals_h, vecs)
        return EigenWindowResult(
            window=(lo, hi), hbar=hbar, grid=op.grid,
            values=vals_h / hbar, vectors=vecs / math.sqrt(vol),
            residuals=res, complete_flag=True, expected_count=int(inside.sum()),
            norm_h=norm_h,
        )

    m = eigencount_window(op, lo, hi)
    if m == 0:
        return EigenWindowResult(
            window=(lo, hi), hbar=hbar, grid=op.grid,
            values=np.empty(0), vectors=np.empty((N, 0)),
            residuals=np.empty(0), complete_flag=True, expected_count=0,
            norm_h=norm_h,
        )

    sigma = 0.5 * (a + b)
    shifted = op.matrix - sigma * sparse.identity(N, dtype=complex, format="csr")
    try:
        lu = splu(shifted.tocsc())
    except RuntimeError:
        sigma += 1e-8 * (b - a)
        lu = splu((op.matrix - sigma * sparse.identity(N, dtype=complex, format="csr")).tocsc())
    opinv = sparse.linalg.LinearOperator((N, N), matvec=lu.solve, dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)

    k = min(m + 16, N - 2)
    vals_h = vecs = None
    while True:
        w, U = eigsh(op.matrix, k=k, sigma=sigma, which="LM", OPinv=opinv,
                     v0=v0, maxiter=maxiter)
        inside = (w >= a) & (w < b)
        if int(inside.sum()) >= m or k >= min(m + max_extra, N - 2):
            vals_h, vecs = w[inside], U[:, inside]
            break
        k = min(k + 32, N - 2)

    order = np.argsort(vals_h)
    vals_h, vecs = vals_h[order], vecs[:, order]
    res = _residuals(op, vals_h, vecs)
    ok = res <= tol * norm_h
    complete = bool(len(vals_h) == m and np.all(ok))
    if not np.all(ok):
        vals_h, vecs, res = vals_h[ok], vecs[:, ok], res[ok]
    return EigenWindowResult(
        window=(lo, hi), hbar=hbar, grid=op.grid,
        values=vals_h / hbar, vectors=vecs / math.sqrt(vol),
        residuals=res, complete_flag=complete, expected_count=m,
        norm_h=norm_h,
    )


def _residuals(op: LatticeOperator, vals_h: Array, vecs: Array) -> Array:
    if vecs.shape[1] == 0:
        return np.empty(0)
    R = op.matrix @ vecs - vecs * vals_h[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vecs, axis=0)


# ---------------------------------------------------------------------------
# spectral-function data
# ---------------------------------------------------------------------------


def _flat_node(ew: EigenWindowResult, node) -> int:
    return ew.grid.flat_index(node)


def _require_usable(ew: EigenWindowResult, phi: TestFunction) -> None:
    lo, hi = ew.window
    slo, shi = phi.support
    if slo < lo or shi > hi:
        raise SolverError(
            f"test function support ({slo}, {shi}) exceeds the eigenwindow ({lo}, {hi})"
        )
    if not ew.complete_flag:
        raise SolverError("eigenwindow is not certified complete")


def ldos(ew: EigenWindowResult, phi: TestFunction, node) -> float:
    """Kernel diagonal of phi(H/hbar) at a grid node: sum_i phi(lambda_i) |u_i(x0)|^2."""
    _require_usable(ew, phi)
    i = _flat_node(ew, node)
    w = phi(ew.values)
    return float(np.sum(w * np.abs(ew.vectors[i, :]) ** 2))


def ldos_grid(ew: EigenWindowResult, phi: TestFunction) -> Array:
    """Kernel diagonal on every grid node (flat ordering)."""
    _require_usable(ew, phi)
    w = phi(ew.values)
    return np.abs(ew.vectors) ** 2 @ w


def kernel_offdiag(ew: EigenWindowResult, phi: TestFunction, node0, node1) -> complex:
    """Off-diagonal kernel sample sum_i phi(lambda_i) u_i(x0) conj(u_i(x1))."""
    _require_usable(ew, phi)
    i0, i1 = _flat_node(ew, node0), _flat_node(ew, node1)
    w = phi(ew.values)
    return complex(np.sum(w * ew.vectors[i0, :] * np.conj(ew.vectors[i1, :])))


def projector_diag(ew: EigenWindowResult, interval, node, sigma=None) -> float:
    """Spectral-projector kernel diagonal over an interval of H/hbar values.

    When a sampled spectral set is supplied, both endpoints must lie strictly
    outside it (inside certified gaps); otherwise the value is unstable under
    hbar refinement and the call is refused.
    """
    from .landau import sigma_distance

    lo, hi = (float(v) for v in interval)
    if sigma is not None:
        for e in (lo, hi):
            if sigma_distance(e, sigma) == 0.0:
                raise SolverError(
                    f"projector endpoint {e} lies inside the sampled spectral set"
                )
    i = _flat_node(ew, node)
    sel = (ew.values >= lo) & (ew.values <= hi)
    return float(np.sum(np.abs(ew.vectors[i, sel]) ** 2))


def trace_phi(ew: EigenWindowResult, phi: TestFunction) -> float:
    """sum_i phi(lambda_i); equals the cell-volume-weighted sum of the LDOS."""
    _require_usable(ew, phi)
    return float(np.sum(phi(ew.values)))


# ---------------------------------------------------------------------------
# eigenvector dumps
# ---------------------------------------------------------------------------


def dump_eigenvectors(path, ew: EigenWindowResult) -> None:
    """Little-endian binary dump.

    Header: int64 dim, int64 nodes-per-axis (dim entries), int64 count.
    Payload: for each vector, node-major float64 pairs (re, im).
    """
    with open(path, "wb") as fh:
        dims = np.array([ew.grid.dim, *ew.grid.n, ew.count], dtype="<i8")
        fh.write(dims.tobytes())
        inter = np.empty((ew.count, ew.vectors.shape[0], 2))
        inter[:, :, 0] = ew.vectors.T.real
        inter[:, :, 1] = ew.vectors.T.imag
        fh.write(inter.astype("<f8").tobytes())


def load_eigenvectors(path) -> tuple[tuple, Array]:
    """Inverse of :func:`dump_eigenvectors`; returns (grid shape, vectors (N, m))."""
    with open(path, "rb") as fh:
        d = int(np.frombuffer(fh.read(8), dtype="<i8")[0])
        shape = tuple(int(v) for v in np.frombuffer(fh.read(8 * d), dtype="<i8"))
        count = int(np.frombuffer(fh.read(8), dtype="<i8")[0])
        n = int(np.prod(shape))
        raw = np.frombuffer(fh.read(16 * n * count), dtype="<f8").reshape(count, n, 2)
        return shape, (raw[:, :, 0] + 1j * raw[:, :, 1]).T.copy()
