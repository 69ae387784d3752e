"""Semiclassical spectral predictions for magnetic Schrodinger operators.

Pointwise model spectra (Landau levels), the sampled spectral set with a
certified covering radius, localization sets, the leading local
density-of-states coefficient, and a gauge-covariant lattice discretization
they are verified against.
"""

from .errors import (AmbiguousRankError, ConfigError, FieldError, GaugeError,
                     GridError, MagspecError, SolverError)
from .field import Bounds, FieldSpec, ModelSpectrum, make_field, skew_spectrum
from .gauge import (GaugeData, TaylorOrderReport, make_gauge, model_potential,
                    transverse_phase, transverse_potential, verify_taylor_order)
from .landau import (KSetMask, SampleGrid, SigmaApprox, enumerate_levels,
                     find_gaps, kset, model_f0, model_spectrum_min,
                     sample_sigma, sigma_distance)
from .lattice import (GridSpec, LatticeOperator, assemble, gauge_transform,
                      hermiticity_violations, link_phase)
from .spectral import (EigenWindowResult, TestFunction, eigencount_below,
                       eigencount_window, eigs_window, kernel_offdiag, ldos,
                       ldos_grid, projector_diag, trace_phi)
from .verify import (DistanceField, ExpFit, LatticeRunner, LocalizationReport,
                     PowerFit, RungSpec, ScalingReport, box_for_interval,
                     check_gap_discreteness, check_ldos_gap,
                     check_ldos_leading, check_localization,
                     check_offdiag_decay, check_spectrum_inclusion,
                     distance_transform, fit_exp_decay, fit_power_law,
                     rungs_from_ladder)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
