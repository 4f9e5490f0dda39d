"""Domain types shared by every stage: grids, physical specs, seeding.

Unit conventions
----------------
All lengths are in meters and wavenumbers in rad/m internally.  The whole
problem only depends on the dimensionless products k*d and theta0, so the
CLI layer usually synthesizes k = 1 and d = kd; nothing in here cares.

The signal beam has wavenumber ``k``; the pump that drives pair generation
propagates at ``2k``.  Detector positions are angles theta = q / k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Variant",
    "TransverseGrid",
    "ComplexField",
    "DiffuserSpec",
    "GeometrySpec",
    "PumpSpec",
    "EnsembleSpec",
    "ConfigError",
    "make_grid",
    "realization_seed",
    "MIN_WAIST_OVER_XI0",
    "MAX_DX_OVER_XI0",
]

# Sampling rule: the diffuser correlation cell xi0 must be covered by at
# least four samples, otherwise its synthesized statistics degrade.
MAX_DX_OVER_XI0 = 0.25

# Pump must cover many coherence areas for the disorder average to be
# self-averaging; below this the wide-beam assumption starts to fail.
MIN_WAIST_OVER_XI0 = 30.0


class ConfigError(ValueError):
    """A configuration violates a validity invariant (named in the message)."""


class Variant(str, Enum):
    """Crystal placed after (PLUS, z >= 0) or before (MINUS, z <= 0) the diffuser."""

    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class TransverseGrid:
    """Discretized transverse coordinate/momentum space.

    Parameters
    ----------
    dim : int
        Number of transverse dimensions (1 or 2).
    n : int
        Samples per axis, power of two.
    dx : float
        Sample pitch [m].
    k : float
        Signal wavenumber omega/c [rad/m].

    The window ``n*dx`` and momentum pitch ``dq = 2*pi/(n*dx)`` are always
    derived, never stored, so they cannot fall out of sync.  All modules
    obtain the momentum lattice via :meth:`momentum_axis` so that everybody
    agrees on the standard discrete-frequency ordering.
    """

    dim: int
    n: int
    dx: float
    k: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ConfigError(f"n must be a power of two >= 2, got {self.n}")
        if not (self.dx > 0):
            raise ConfigError(f"dx must be positive, got {self.dx}")
        if not (self.k > 0):
            raise ConfigError(f"k must be positive, got {self.k}")

    @property
    def window(self) -> float:
        """Transverse extent n*dx of the periodic box [m]."""
        return self.n * self.dx

    @property
    def dq(self) -> float:
        """Momentum pitch 2*pi/(n*dx) [rad/m]."""
        return 2.0 * math.pi / (self.n * self.dx)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    def coordinate_axis(self) -> np.ndarray:
        """Centered transverse coordinates, one axis (same for x and y)."""
        return (np.arange(self.n) - self.n // 2) * self.dx

    def momentum_axis(self, shifted: bool = False) -> np.ndarray:
        """Momentum lattice spanning [-pi/dx, pi/dx), one axis.

        ``shifted=False`` returns standard FFT ordering (0, +, ..., -);
        ``shifted=True`` returns the monotonically increasing axis.
        """
        q = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dx)
        return np.fft.fftshift(q) if shifted else q

    def angle_axis(self, shifted: bool = False) -> np.ndarray:
        """Detection angles theta = q/k on the momentum lattice [rad]."""
        return self.momentum_axis(shifted) / self.k

    def momentum_squared(self) -> np.ndarray:
        """|q|^2 on the full grid in FFT ordering (shape ``self.shape``)."""
        q = self.momentum_axis()
        if self.dim == 1:
            return q * q
        return q[:, None] ** 2 + q[None, :] ** 2


@dataclass(frozen=True)
class ComplexField:
    """A complex scalar amplitude sampled on a TransverseGrid."""

    grid: TransverseGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, copy=True)
        if not np.iscomplexobj(v):
            v = v.astype(np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def norm_squared(self) -> float:
        """Sum |v|^2 * dx^dim; finite for any valid field."""
        s = float(np.sum(np.abs(self.values) ** 2)) * self.grid.dx**self.grid.dim
        if not math.isfinite(s):
            raise ValueError("field norm is not finite")
        return s


@dataclass(frozen=True)
class DiffuserSpec:
    """Thin Gaussian diffuser characterized by its scattering angle theta0 [rad]."""

    theta0: float

    def __post_init__(self):
        if not (self.theta0 > 0):
            raise ConfigError(f"theta0 must be positive, got {self.theta0}")

    def xi0(self, k: float) -> float:
        """Transverse correlation width 1/(k*theta0) [m]."""
        return 1.0 / (k * self.theta0)

    def z_corr(self, k: float) -> float:
        """Longitudinal coherence length z0 = 1/(k*theta0^2) [m]."""
        return 1.0 / (k * self.theta0**2)


@dataclass(frozen=True)
class GeometrySpec:
    """Round-trip distance d = 2L and signed crystal position z [m].

    PLUS requires 0 <= z <= d/2; MINUS requires z <= 0.  Violations are
    rejected here, never downstream.
    """

    d: float
    z: float
    variant: Variant

    def __post_init__(self):
        if not (self.d > 0):
            raise ConfigError(f"d must be positive, got {self.d}")
        if self.variant == Variant.PLUS:
            if not (0.0 <= self.z <= self.d / 2):
                raise ConfigError(
                    f"PLUS variant requires 0 <= z <= d/2, got z={self.z}, d={self.d}"
                )
        else:
            if self.z > 0.0:
                raise ConfigError(
                    f"MINUS variant requires z <= 0, got z={self.z}"
                )

    @property
    def z_over_d(self) -> float:
        return self.z / self.d

    def z_tilde(self, z_corr: float) -> float:
        """Crystal position in units of the diffuser correlation depth."""
        return self.z / z_corr


@dataclass(frozen=True)
class PumpSpec:
    """Gaussian pump beam; ``waist`` is the 1/e^2 intensity radius [m].

    The pump wavenumber is fixed at 2k by construction.  ``allow_narrow``
    downgrades the wide-beam rule (waist >= 30 xi0) to a warning.
    """

    waist: float
    allow_narrow: bool = False

    def __post_init__(self):
        if not (self.waist > 0):
            raise ConfigError(f"waist must be positive, got {self.waist}")

    def check_width(self, xi0: float) -> None:
        if self.waist < MIN_WAIST_OVER_XI0 * xi0:
            msg = (
                f"pump waist {self.waist:g} is below {MIN_WAIST_OVER_XI0:g}*xi0 "
                f"= {MIN_WAIST_OVER_XI0 * xi0:g}; the wide-beam assumption is marginal"
            )
            if self.allow_narrow:
                warnings.warn(msg)
            else:
                raise ConfigError(msg + " (set allow_narrow to override)")


@dataclass(frozen=True)
class EnsembleSpec:
    """Realization count and the 64-bit master seed of the disorder ensemble."""

    n_realizations: int
    master_seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ConfigError(
                f"n_realizations must be >= 1, got {self.n_realizations}"
            )
        if not (0 <= self.master_seed < 2**64):
            raise ConfigError("master_seed must fit in 64 bits")


def make_grid(dim: int, n: int, dx: float, k: float) -> TransverseGrid:
    """Construct a TransverseGrid with consistent coordinate and momentum axes."""
    return TransverseGrid(dim=dim, n=n, dx=dx, k=k)


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def realization_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit seed of one disorder realization.

    Counter-based (SplitMix64 finalizer on master_seed + index*golden), so
    the result is a pure function of its arguments: the same regardless of
    call order, thread, or how realizations are partitioned across workers.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    x = (master_seed + _GOLDEN * (index + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x
