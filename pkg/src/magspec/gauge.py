"""Transverse (Poincare / Fock-Schwinger) gauge about a base point.

For a base point x0 the gauge phase and the transverse vector potential are
line integrals along the ray from x0,

    Phi(x0 + Z)    = - sum_j  int_0^1 A_j(x0 + tau Z) Z_j  dtau,
    Avec_j(x0 + Z) =   sum_k (int_0^1 B_kj(x0 + tau Z) tau dtau) Z_k,

evaluated with fixed-order Gauss-Legendre quadrature on [0, 1].  For
polynomial integrands of degree < 2q the q-node rule is exact, which removes
one error source from every downstream check on the built-in families.

The transverse potential vanishes at x0, annihilates the radial direction
(<Z, Avec(Z)> = 0 identically by antisymmetry of B) and agrees with the
linear model potential  A_model_j(Z) = (1/2) sum_k B_kj(x0) Z_k  up to
O(|Z|^2) for smooth fields; `verify_taylor_order` measures that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import GaugeError
from .field import FieldSpec

Array = np.ndarray

#: Residuals below this are treated as exactly zero when fitting Taylor orders;
#: log-log fits on rounding noise are meaningless.
EXACT_RESIDUAL = 1e-13


@lru_cache(maxsize=None)
def _gl_rule(order: int) -> tuple[Array, Array]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(order))
    return 0.5 * (x + 1.0), 0.5 * w


def transverse_phase(fs: FieldSpec, x0, Z, quad_order: int = 16):
    """Gauge phase Phi(x0+Z) = -sum_j int_0^1 A_j(x0+tau Z) Z_j dtau.

    Accepts a single displacement (d,) or a batch (..., d); returns a scalar
    or an array of shape (...,).
    """
    if fs.A is None:
        raise GaugeError("transverse_phase needs a vector potential on the field")
    x0 = np.asarray(x0, dtype=float)
    Z = np.asarray(Z, dtype=float)
    tau, w = _gl_rule(quad_order)
    pts = x0 + tau.reshape((-1,) + (1,) * Z.ndim) * Z  # (q, ..., d)
    integrand = np.sum(fs.A(pts) * Z, axis=-1)  # (q, ...)
    val = -np.tensordot(w, integrand, axes=(0, 0))
    return float(val) if val.ndim == 0 else val


def transverse_potential(fs: FieldSpec, x0, Z, quad_order: int = 16):
    """Transverse potential Avec(x0+Z), needing only B.

    Avec_j = sum_k (int_0^1 B_kj(x0+tau Z) tau dtau) Z_k; with B antisymmetric
    this equals -int_0^1 tau B(x0+tau Z) Z dtau, which is how it is computed.
    """
    x0 = np.asarray(x0, dtype=float)
    Z = np.asarray(Z, dtype=float)
    tau, w = _gl_rule(quad_order)
    pts = x0 + tau.reshape((-1,) + (1,) * Z.ndim) * Z  # (q, ..., d)
    B = fs.B(pts)  # (q, ..., d, d)
    BZ = np.einsum("q...jk,...k->q...j", B, Z)
    return -np.tensordot(w * tau, BZ, axes=(0, 0))


def model_potential(fs: FieldSpec, x0, Z):
    """Linearized potential of the frozen field: A_model_j(Z) = 1/2 sum_k B_kj(x0) Z_k."""
    x0 = np.asarray(x0, dtype=float)
    Z = np.asarray(Z, dtype=float)
    B0 = fs.B(x0)
    return -0.5 * np.einsum("jk,...k->...j", B0, Z)


def synthesize_potential(fs: FieldSpec, base, quad_order: int = 16) -> Callable[[Array], Array]:
    """A global vector potential from B alone: the transverse gauge about `base`."""
    base = np.asarray(base, dtype=float)

    def A(x):
        x = np.asarray(x, dtype=float)
        return transverse_potential(fs, base, x - base, quad_order)

    return A


@dataclass(frozen=True)
class GaugeData:
    """Gauge phase and transverse potential bound to one base point."""

    x0: Array
    phi: Callable[[Array], Array]
    a_trans: Callable[[Array], Array]
    quad_order: int


def make_gauge(fs: FieldSpec, x0, quad_order: int = 16) -> GaugeData:
    x0 = np.asarray(x0, dtype=float)

    def phi(Z):
        return transverse_phase(fs, x0, Z, quad_order)

    def a_trans(Z):
        return transverse_potential(fs, x0, Z, quad_order)

    return GaugeData(x0=x0, phi=phi, a_trans=a_trans, quad_order=quad_order)


@dataclass(frozen=True)
class TaylorOrderReport:
    """Least-squares slope of log residual vs log |Z| for the linearization defect."""

    slope: float | None
    exact: bool
    radii: Array
    residuals: Array  # (n_dirs, n_radii)
    dropped_exact: int


def verify_taylor_order(fs: FieldSpec, x0, directions, radii,
                        quad_order: int = 16) -> TaylorOrderReport:
    """Fit the decay order of |Avec(Z) - A_model(Z)| along rays from x0.

    `radii` must be a decreasing geometric ladder with at least 4 rungs.
    Residuals below EXACT_RESIDUAL are excluded from the fit; if every sample
    is below it (constant fields) the report carries the `exact` flag instead
    of a slope.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 4:
        raise ValueError("need at least 4 radii to fit a slope")
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    Z = radii[None, :, None] * dirs[:, None, :]  # (n_dirs, n_radii, d)
    res = np.linalg.norm(
        transverse_potential(fs, x0, Z, quad_order) - model_potential(fs, x0, Z),
        axis=-1,
    )
    keep = res > EXACT_RESIDUAL
    dropped = int(res.size - np.count_nonzero(keep))
    if not np.any(keep):
        return TaylorOrderReport(slope=None, exact=True, radii=radii,
                                 residuals=res, dropped_exact=dropped)
    r_all = np.broadcast_to(radii, res.shape)[keep]
    slope, _ = np.polyfit(np.log(r_all), np.log(res[keep]), 1)
    return TaylorOrderReport(slope=float(slope), exact=False, radii=radii,
                             residuals=res, dropped_exact=dropped)
