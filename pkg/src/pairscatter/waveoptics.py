"""Elementary propagation and scattering kernels.

Conventions fixed here (everything else derives from them):

* Fresnel transfer function for propagation over a distance ``s`` at
  wavenumber ``kappa``:  H(q) = exp(+1j * q^2 * s / (2*kappa)).  The sign
  is recorded once in ``FRESNEL_PHASE_SIGN``; all observables |Gamma| are
  convention independent but internal consistency is not optional.
* Diffuser masks are complex Gaussian fields normalized to <|V|^2> = 1
  with transverse correlation <V(r) V*(r')> = exp(-|r-r'|^2 / (4 xi0^2)),
  synthesized in the Fourier domain: unit complex white noise times the
  amplitude filter exp(-q^2 xi0^2 / 2), inverse transformed.  This makes
  the ensemble far-field power spectrum a Gaussian of angular width theta0.
* Masks carry amplitude as well as phase (no phase-only mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy import fft as sp_fft

from .core import ComplexField, ConfigError, DiffuserSpec, TransverseGrid, MAX_DX_OVER_XI0

__all__ = [
    "FRESNEL_PHASE_SIGN",
    "DiffuserMask",
    "fresnel_kernel",
    "fresnel_propagate",
    "synthesize_diffuser",
    "mask_at_2omega",
    "apply_mask",
    "diffuser_noise",
    "diffuser_filter",
    "diffuser_scale",
    "guard_band_energy_fraction",
]

# exp(FRESNEL_PHASE_SIGN * 1j * q^2 * s / (2*kappa)) for forward propagation.
FRESNEL_PHASE_SIGN = +1.0

# The synthesis filter needs several correlation cells inside the window to
# make the periodized correlation indistinguishable from the open one.
_MIN_WINDOW_OVER_XI0 = 16.0


@dataclass(frozen=True)
class DiffuserMask:
    """One realization of the diffuser transmission at the signal frequency."""

    at_omega: ComplexField
    realization_seed: int


def fresnel_kernel(grid: TransverseGrid, s: float, kappa: float) -> np.ndarray:
    """Momentum-space Fresnel factor exp(i q^2 s / 2 kappa) on the grid."""
    if not (kappa > 0):
        raise ValueError(f"kappa must be positive, got {kappa}")
    return np.exp(
        (FRESNEL_PHASE_SIGN * 1j) * grid.momentum_squared() * (s / (2.0 * kappa))
    )


def fresnel_propagate(field: ComplexField, s: float, kappa: float) -> ComplexField:
    """Propagate a field over a (signed) distance s at wavenumber kappa.

    Pure momentum-space multiplication by the Fresnel kernel, so the norm
    is conserved exactly up to FFT rounding, s = 0 is the identity, and
    fresnel_propagate(-s) inverts fresnel_propagate(s).
    """
    if s == 0.0:
        if not (kappa > 0):
            raise ValueError(f"kappa must be positive, got {kappa}")
        return field
    kern = fresnel_kernel(field.grid, s, kappa).astype(field.values.dtype, copy=False)
    spec = sp_fft.fftn(field.values)
    spec *= kern
    return ComplexField(field.grid, sp_fft.ifftn(spec))


def diffuser_noise(grid: TransverseGrid, seed: int, dtype=np.complex128) -> np.ndarray:
    """Unit complex Gaussian white noise, <|n|^2> = 1, from a Philox stream."""
    rng = Generator(Philox(key=seed))
    real_dtype = np.float32 if dtype == np.complex64 else np.float64
    z = rng.standard_normal(2 * grid.n**grid.dim, dtype=real_dtype)
    noise = (z[0::2] + 1j * z[1::2]) / np.sqrt(real_dtype(2.0))
    return noise.reshape(grid.shape).astype(dtype, copy=False)


def diffuser_filter(grid: TransverseGrid, spec: DiffuserSpec) -> np.ndarray:
    """Momentum amplitude filter exp(-q^2 xi0^2 / 2); power spectrum e^{-q^2 xi0^2}."""
    xi0 = spec.xi0(grid.k)
    if grid.dx > MAX_DX_OVER_XI0 * xi0 * (1.0 + 1e-12):
        raise ConfigError(
            f"sampling rule violated: dx = {grid.dx:g} exceeds xi0/4 = {xi0 / 4:g}"
        )
    if grid.window < _MIN_WINDOW_OVER_XI0 * xi0:
        raise ConfigError(
            f"window {grid.window:g} is below {_MIN_WINDOW_OVER_XI0:g}*xi0; "
            "too few correlation cells for meaningful statistics"
        )
    return np.exp(-0.5 * grid.momentum_squared() * xi0**2)


def diffuser_scale(grid: TransverseGrid, spec: DiffuserSpec) -> float:
    """Normalization applied after ifft so that the ensemble <|V|^2> = 1.

    Per axis the synthesized correlation is
    sum_m |f(q_m)|^2 e^{i q_m dr} * C^2 -> C^2 * (sqrt(pi)/(xi0*dq)) * e^{-dr^2/4 xi0^2},
    so C = sqrt(dq*xi0/sqrt(pi)) per axis; the ifft carries 1/n per axis.
    """
    xi0 = spec.xi0(grid.k)
    per_axis = grid.n * math.sqrt(grid.dq * xi0 / math.sqrt(math.pi))
    return per_axis**grid.dim


def synthesize_diffuser(
    grid: TransverseGrid, spec: DiffuserSpec, seed: int, dtype=np.complex128
) -> DiffuserMask:
    """Draw one diffuser realization with exact Gaussian transverse correlations.

    Deterministic in (grid, spec, seed): the same arguments always return a
    bit-identical mask.
    """
    filt = diffuser_filter(grid, spec)
    noise = diffuser_noise(grid, seed, dtype=dtype)
    values = sp_fft.ifftn(noise * filt.astype(dtype, copy=False))
    values *= dtype(diffuser_scale(grid, spec))
    return DiffuserMask(at_omega=ComplexField(grid, values), realization_seed=seed)


def mask_at_2omega(mask: DiffuserMask) -> ComplexField:
    """Diffuser transmission at the pump frequency: pointwise square of V(omega).

    Neglecting material dispersion the same screen acts on the pump as
    V(omega)^2, whose ensemble correlation is twice the square of the
    signal-frequency correlation (complex Gaussian moment theorem); in
    particular <|V(2 omega)|^2> = 2.
    """
    v = mask.at_omega.values
    return ComplexField(mask.at_omega.grid, v * v)


def apply_mask(field: ComplexField, mask_values: np.ndarray | ComplexField) -> ComplexField:
    """Pointwise product of a field with a transmission mask on the same grid."""
    if isinstance(mask_values, ComplexField):
        if mask_values.grid != field.grid:
            raise ValueError("field and mask live on different grids")
        mask_values = mask_values.values
    mask_values = np.asarray(mask_values)
    if mask_values.shape != field.grid.shape:
        raise ValueError(
            f"mask shape {mask_values.shape} does not match grid shape {field.grid.shape}"
        )
    return ComplexField(field.grid, field.values * mask_values)


def guard_band_energy_fraction(
    window: float,
    pump_waist: float,
    spread_sigma: float,
) -> float:
    """Closed-form estimate of pump-envelope energy in the outer 10% of the window.

    The disorder-averaged intensity envelope after the full optical path is
    modeled as the pump intensity Gaussian convolved with the accumulated
    angular-scattering spread: variance sigma_tot^2 = (waist/2)^2 + spread^2.
    Returns the two-sided tail mass beyond 0.45*window from center.
    """
    sigma_tot = math.sqrt((pump_waist / 2.0) ** 2 + spread_sigma**2)
    edge = 0.45 * window
    return math.erfc(edge / (math.sqrt(2.0) * sigma_tot))
