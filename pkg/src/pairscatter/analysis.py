"""Post-processing mirroring the figure-production pipeline.

The standard comparison flow is: normalize a simulated curve and its
theory twin to unit area, rescale both by the theory maximum, subtract
the (identically scaled) theory background, then extract FWHM, peak
enhancement or envelope widths from what remains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import Variant
from .engine import CorrelationCurve, ScatterConfig, ensemble_average_cut
from .theory import (
    TheoryParams,
    theory_background,
    theory_curve,
    theory_peak_width,
)

__all__ = [
    "SweepResult",
    "normalize_pair",
    "norm_factors",
    "subtract_background",
    "fwhm",
    "enhancement_ratio",
    "fit_envelope_width",
    "sweep_z",
    "theory_params_for",
]


@dataclass(frozen=True)
class SweepResult:
    """Width and peak-amplitude summaries across crystal positions."""

    z_values: np.ndarray
    z_tilde: np.ndarray
    fwhm_over_theta0: np.ndarray
    fwhm_err: np.ndarray
    peak_amplitude_norm: np.ndarray
    amp_err: np.ndarray

    def __post_init__(self):
        n = len(self.z_values)
        for a in (self.z_tilde, self.fwhm_over_theta0, self.fwhm_err,
                  self.peak_amplitude_norm, self.amp_err):
            if len(a) != n:
                raise ValueError("sweep arrays must share one length")
        if np.any(self.fwhm_err < 0) or np.any(self.amp_err < 0):
            raise ValueError("uncertainties must be nonnegative")


@dataclass(frozen=True)
class _SignedCurve(CorrelationCurve):
    """Background-subtracted curve; residuals may dip below zero (noise)."""

    def __post_init__(self):
        if not (len(self.theta_axis) == len(self.values) == len(self.std_errors)):
            raise ValueError("axis/values/errors length mismatch")
        if np.any(np.diff(self.theta_axis) <= 0):
            raise ValueError("theta axis must be strictly increasing")
        if np.any(self.std_errors < 0):
            raise ValueError("std errors must be nonnegative")


def theory_params_for(config: ScatterConfig) -> TheoryParams:
    """TheoryParams matching a simulation config (same k, d, z, theta0, dim)."""
    return TheoryParams(
        k=config.grid.k,
        d=config.geometry.d,
        z=config.geometry.z,
        theta0=config.diffuser.theta0,
        dim=config.grid.dim,
    )


def _trapz_area(theta: np.ndarray, values: np.ndarray) -> float:
    area = float(np.trapezoid(values, theta))
    if area <= 0.0 or not math.isfinite(area):
        raise ValueError("curve has non-positive or non-finite area")
    return area


def norm_factors(sim: CorrelationCurve, theory: np.ndarray) -> tuple[float, float]:
    """Multiplicative factors (for sim, for theory curves) of normalize_pair."""
    theory = np.asarray(theory, dtype=float)
    if theory.shape != sim.values.shape:
        raise ValueError("sim and theory curves must share one theta axis")
    a_sim = _trapz_area(sim.theta_axis, sim.values)
    a_th = _trapz_area(sim.theta_axis, theory)
    peak = float(np.max(theory / a_th))
    return 1.0 / (a_sim * peak), 1.0 / (a_th * peak)


def normalize_pair(
    sim: CorrelationCurve, theory: np.ndarray
) -> tuple[CorrelationCurve, np.ndarray]:
    """Normalize both curves to unit area, then both by the theory maximum.

    Scale-invariant in each input and idempotent; standard errors scale
    with the values.
    """
    f_sim, f_th = norm_factors(sim, theory)
    sim_n = replace(
        sim, values=sim.values * f_sim, std_errors=sim.std_errors * f_sim
    )
    return sim_n, np.asarray(theory, dtype=float) * f_th


def subtract_background(
    curve: CorrelationCurve, background: np.ndarray
) -> CorrelationCurve:
    """Pointwise difference; the background must already share the curve's scale.

    Small negative residuals are noise and pass through.  A warning fires
    when deep negative excursions cluster (more than 0.5% of points below
    -4 sigma), which signals an inconsistently normalized background; a
    pointwise -3 sigma tripwire would false-fire on any 10^4-point curve
    from noise alone, more so with the heavy-tailed per-realization
    intensities that bias small-ensemble sigma estimates low.
    """
    background = np.asarray(background, dtype=float)
    if background.shape != curve.values.shape:
        raise ValueError("background does not match the curve's theta axis")
    diff = curve.values - background
    bad = diff < -4.0 * curve.std_errors
    if np.mean(bad) > 0.005:
        warnings.warn(
            f"background subtraction left {int(np.sum(bad))} points below -4 sigma"
        )
    return _SignedCurve(
        theta_axis=curve.theta_axis,
        values=diff,
        std_errors=curve.std_errors,
        n_realizations=curve.n_realizations,
        q_a=curve.q_a,
    )


def _fwhm_of(theta: np.ndarray, values: np.ndarray) -> float:
    i = int(np.argmax(values))
    if i == 0 or i == len(values) - 1:
        raise ValueError("peak sits at the axis edge")
    half = values[i] / 2.0

    def crossing(direction: int) -> float:
        # require two consecutive points below half so single noise dips
        # on the slope do not trigger an early crossing
        j = i
        last = len(values) - 1
        while 0 < j < last:
            nxt = j + direction
            if values[nxt] <= half and (
                not (0 < nxt < last) or values[nxt + direction] <= half
            ):
                break
            j = nxt
        j2 = j + direction
        if not (0 <= j2 <= last) or values[j2] > half:
            raise ValueError("no half-max crossing on one side")
        frac = (values[j] - half) / (values[j] - values[j2])
        return theta[j] + frac * (theta[j2] - theta[j])

    return crossing(+1) - crossing(-1)


def fwhm(curve: CorrelationCurve) -> tuple[float, float]:
    """FWHM by linear interpolation of the half-max crossings, with uncertainty.

    The uncertainty refits the crossings with all values shifted by plus
    and minus one standard error and takes half the spread, which stays
    robust for non-Gaussian peak shapes.
    """
    w = _fwhm_of(curve.theta_axis, curve.values)
    try:
        w_hi = _fwhm_of(curve.theta_axis, curve.values + curve.std_errors)
        w_lo = _fwhm_of(curve.theta_axis, curve.values - curve.std_errors)
        unc = abs(w_hi - w_lo) / 2.0
    except ValueError:
        unc = curve.theta_axis[1] - curve.theta_axis[0]
    return w, unc


def _background_window(
    curve: CorrelationCurve, peak_fwhm: float, theta0: float
) -> np.ndarray:
    # Inside 1 theta0 of the peak but capped at 0.3 theta0, where the
    # envelope exp(-theta^2/(4 theta0^2)) stays flat to ~2%; at 1 theta0
    # its droop (22%) would bias the level under the peak.
    i_pk = int(np.argmax(curve.values))
    center = curve.theta_axis[i_pk]
    off = np.abs(curve.theta_axis - center)
    sel = (off > 4.0 * peak_fwhm) & (off < 0.3 * theta0)
    if np.sum(sel) < 8:
        raise ValueError(
            "insufficient background samples between 4*FWHM and 0.3*theta0"
        )
    return sel

def _subtracted_curve(
    curve: CorrelationCurve, params: TheoryParams, variant: Variant
) -> CorrelationCurve:
    th_total = theory_curve(curve.theta_axis, params, variant)
    f_sim, f_th = norm_factors(curve, th_total)
    sim_n = replace(curve, values=curve.values * f_sim, std_errors=curve.std_errors * f_sim)
    bg = theory_background(curve.theta_axis, params, variant) * f_th
    return subtract_background(sim_n, bg)



def enhancement_ratio(
    curve: CorrelationCurve, peak_fwhm: float, theta0: float
) -> tuple[float, float]:
    """Peak value over the local background level under the peak.

    The background is the mean over the envelope-ridge window selected by
    ``_background_window``, close enough to the peak that the theta0
    envelope is flat across it.
    """
    i_pk = int(np.argmax(curve.values))
    if i_pk == 0 or i_pk == len(curve.values) - 1:
        raise ValueError("peak sits at the axis edge")
    peak = curve.values[i_pk]
    sel = _background_window(curve, peak_fwhm, theta0)
    bg = float(np.mean(curve.values[sel]))
    if bg <= 0:
        raise ValueError("non-positive background estimate")
    ratio = peak / bg
    # independent speckle patches in the window are roughly one peak width
    n_eff = max(np.sum(sel) * (curve.theta_axis[1] - curve.theta_axis[0]) / peak_fwhm, 1.0)
    sigma_bg = float(np.mean(curve.std_errors[sel])) / math.sqrt(n_eff)
    sigma_pk = float(curve.std_errors[i_pk])
    unc = ratio * math.hypot(sigma_pk / peak, sigma_bg / bg)
    return ratio, unc


def fit_envelope_width(
    curve: CorrelationCurve,
    theta_window: tuple[float, float],
    allow_negative_fraction: float = 0.1,
) -> float:
    """Gaussian width of a background envelope, A*exp(-theta^2/(4 w^2)).

    Weighted least squares on log(values) inside |theta| in the window;
    points that are non-positive (possible after a subtraction) are
    dropped as long as they stay a small fraction of the window.
    """
    lo, hi = theta_window
    off = np.abs(curve.theta_axis)
    sel = (off >= lo) & (off <= hi)
    if np.sum(sel) < 8:
        raise ValueError("envelope window holds too few points")
    th = curve.theta_axis[sel]
    v = curve.values[sel]
    ok = v > 0
    if np.mean(~ok) > allow_negative_fraction:
        raise ValueError("too many non-positive points for a log-Gaussian fit")
    th, v = th[ok], v[ok]
    # var(log v) ~ (sigma/v)^2, so weights ~ v for a roughly constant sigma
    coeff = np.polynomial.polynomial.polyfit(th * th, np.log(v), 1, w=v)
    slope = coeff[1]
    if slope >= 0:
        raise ValueError("envelope fit did not find a decaying Gaussian")
    return math.sqrt(-1.0 / (4.0 * slope))


def sweep_z(
    base_config: ScatterConfig,
    z_list,
    q_a: float = 0.0,
    threads: int = 1,
    single_precision: bool = True,
) -> SweepResult:
    """Simulate each z, compare to theory, summarize width and amplitude.

    Per z: ensemble cut, two-step normalization against the matching
    theory curve, theory-background subtraction, FWHM of the remaining
    peak; the raw on-axis amplitude is divided by the z = 0 amplitude
    (the raw scales are physically comparable across z: same pump and
    mask normalization throughout).  z_list must contain z = 0.
    """
    z_values = np.asarray(list(z_list), dtype=float)
    if len(z_values) == 0:
        raise ValueError("z_list must not be empty")
    i_ref = int(np.argmin(np.abs(z_values)))
    if abs(z_values[i_ref]) > 1e-12 * max(base_config.geometry.d, 1.0):
        raise ValueError("z_list must contain z = 0 (the amplitude reference)")

    theta0 = base_config.diffuser.theta0
    widths = np.empty(len(z_values))
    width_errs = np.empty(len(z_values))
    amps = np.empty(len(z_values))
    amp_sigmas = np.empty(len(z_values))
    z_tildes = np.empty(len(z_values))

    for i, z in enumerate(z_values):
        geo = replace(base_config.geometry, z=float(z))
        config = replace(base_config, geometry=geo)
        params = theory_params_for(config)
        curve = ensemble_average_cut(
            config, q_a=q_a, threads=threads, single_precision=single_precision
        )
        sub = _subtracted_curve(curve, params, config.variant)
        w, werr = fwhm(sub)
        widths[i] = w / theta0
        width_errs[i] = werr / theta0
        i0 = curve.index_of(0.0)
        amps[i] = curve.values[i0]
        amp_sigmas[i] = curve.std_errors[i0]
        z_tildes[i] = config.z_tilde

    amp_ref = amps[i_ref]
    sig_ref = amp_sigmas[i_ref]
    amp_norm = amps / amp_ref
    amp_err = amp_norm * np.sqrt(
        (amp_sigmas / np.maximum(amps, 1e-300)) ** 2 + (sig_ref / amp_ref) ** 2
    )
    return SweepResult(
        z_values=z_values,
        z_tilde=z_tildes,
        fwhm_over_theta0=widths,
        fwhm_err=width_errs,
        peak_amplitude_norm=amp_norm,
        amp_err=amp_err,
    )
