"""Monte-Carlo two-photon engine.

Per disorder realization the output pair amplitude is evaluated with pure
field propagation, never an explicit transfer matrix: the thin crystal
makes the pair amplitude diagonal in position, Psi(r1, r2) = E(r1) d_{r1,r2},
so the full out amplitude at fixed detection momentum q_a reduces to

    out(q_b; q_a) = G[ E * (G^T e_{q_a}) ](q_b),

two propagation chains plus one transform per realization, O(n log n).

G is applied factor by factor (diffuser masks diagonal in position, Fresnel
kernels diagonal in momentum); G^T e_{q_a} is the same factors applied in
reversed order to a plane wave.  The momentum readout uses the e^{+i q r}
kernel, the exact transpose of the plane wave convention, which makes
reciprocity out(q_b; q_a) = out(q_a; q_b) hold to rounding per realization.

Ensemble averaging is streaming (Welford moments per theta bin) over fixed
chunks of realizations merged in a fixed pairwise tree, so the result is
bit-identical for any worker count.  Per-realization seeds are a pure
function of (master_seed, index).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .core import (
    ComplexField,
    ConfigError,
    DiffuserSpec,
    EnsembleSpec,
    GeometrySpec,
    PumpSpec,
    TransverseGrid,
    Variant,
    MAX_DX_OVER_XI0,
    realization_seed,
)
from .waveoptics import (
    DiffuserMask,
    apply_mask,
    diffuser_filter,
    diffuser_noise,
    diffuser_scale,
    fresnel_propagate,
    guard_band_energy_fraction,
)

__all__ = [
    "RegimeWarning",
    "ScatterConfig",
    "CorrelationCurve",
    "CorrelationMap",
    "config_from_dimensionless",
    "pump_field",
    "pump_at_crystal",
    "detection_mode_at_crystal",
    "biphoton_cut",
    "ensemble_average_cut",
    "ensemble_average_map",
    "CHUNK_REALIZATIONS",
]

# Fixed reduction chunk: part of the determinism contract, never derived
# from the worker count.
CHUNK_REALIZATIONS = 64

# Outer-10%-band energy above this aborts the run as aliasing-unsafe.
GUARD_BAND_MAX_ENERGY = 1e-3

# Below this k*d*theta0^2 the dominant-diagram theory degrades visibly.
REGIME_MIN_KD_THETA0_SQ = 100.0


class RegimeWarning(UserWarning):
    """Configuration is valid but outside the regime the theory targets."""


@dataclass(frozen=True)
class ScatterConfig:
    """Validated bundle of everything one simulation needs.

    Construction enforces the sampling rule, the guard-band rule and the
    geometry/variant consistency; anything invalid fails here, before any
    compute is spent.
    """

    grid: TransverseGrid
    geometry: GeometrySpec
    diffuser: DiffuserSpec
    pump: PumpSpec
    ensemble: EnsembleSpec

    def __post_init__(self):
        g = self.grid
        xi0 = self.diffuser.xi0(g.k)
        if g.dx > MAX_DX_OVER_XI0 * xi0 * (1.0 + 1e-12):
            raise ConfigError(
                f"sampling rule violated: dx = {g.dx:g} exceeds xi0/4 = {xi0 / 4:g}"
            )
        d, z = self.geometry.d, self.geometry.z
        spread = 4.0 * d * self.diffuser.theta0
        waist = self.pump.waist if self.geometry.variant == Variant.PLUS else 0.0
        if g.window < waist + spread:
            raise ConfigError(
                f"guard-band rule violated: window = {g.window:g} is below "
                f"pump waist + 4*d*theta0 = {waist + spread:g}"
            )
        if self.geometry.variant == Variant.PLUS:
            self.pump.check_width(xi0)
            sigma = math.hypot(
                z * self.diffuser.theta0 / 2.0,
                (d - z) * self.diffuser.theta0 / math.sqrt(2.0),
            )
            frac = guard_band_energy_fraction(g.window, self.pump.waist, sigma)
            if frac > GUARD_BAND_MAX_ENERGY:
                raise ConfigError(
                    f"guard-band energy fraction {frac:.2e} exceeds "
                    f"{GUARD_BAND_MAX_ENERGY:g}; enlarge the window"
                )
        regime = g.k * d * self.diffuser.theta0**2
        if regime < REGIME_MIN_KD_THETA0_SQ:
            warnings.warn(
                f"k*d*theta0^2 = {regime:.3g} is below {REGIME_MIN_KD_THETA0_SQ:g}; "
                "the dominant-diagram regime d/z0 >> 1 is marginal",
                RegimeWarning,
            )

    @property
    def variant(self) -> Variant:
        return self.geometry.variant

    @property
    def xi0(self) -> float:
        return self.diffuser.xi0(self.grid.k)

    @property
    def z_corr(self) -> float:
        return self.diffuser.z_corr(self.grid.k)

    @property
    def z_tilde(self) -> float:
        return self.geometry.z_tilde(self.z_corr)


def config_from_dimensionless(
    kd: float,
    theta0: float,
    variant: Variant | str,
    *,
    z_over_d: float | None = None,
    z_tilde: float | None = None,
    n: int = 2**15,
    dim: int = 1,
    dx_over_xi0: float = MAX_DX_OVER_XI0,
    waist_over_xi0: float = 100.0,
    realizations: int = 1000,
    seed: int = 0,
    allow_narrow: bool = False,
) -> ScatterConfig:
    """Build a config from the dimensionless parameterization (k = 1, d = kd).

    The physics depends only on kd, theta0, z/d and z/z0, so the CLI and
    tests specify those directly.  Exactly one of ``z_over_d`` / ``z_tilde``
    must be given (``z_tilde`` is interpreted as a magnitude for MINUS).
    """
    variant = Variant(variant)
    k = 1.0
    d = kd / k
    xi0 = 1.0 / (k * theta0)
    z0 = 1.0 / (k * theta0**2)
    if (z_over_d is None) == (z_tilde is None):
        raise ConfigError("specify exactly one of z_over_d / z_tilde")
    if z_over_d is not None:
        z = z_over_d * d
    else:
        z = abs(z_tilde) * z0
    if variant == Variant.MINUS:
        z = -abs(z)
    return ScatterConfig(
        grid=TransverseGrid(dim=dim, n=n, dx=dx_over_xi0 * xi0, k=k),
        geometry=GeometrySpec(d=d, z=z, variant=variant),
        diffuser=DiffuserSpec(theta0=theta0),
        pump=PumpSpec(waist=waist_over_xi0 * xi0, allow_narrow=allow_narrow),
        ensemble=EnsembleSpec(n_realizations=realizations, master_seed=seed),
    )


@dataclass(frozen=True)
class CorrelationCurve:
    """Ensemble-averaged |out|^2 versus theta = theta_b - theta_a.

    ``q_a`` is the fixed detection momentum of the static arm; the axis is
    the shifted momentum lattice relabeled to relative angles, strictly
    increasing, with the enhancement peak at theta = 0.
    """

    theta_axis: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    n_realizations: int
    q_a: float

    def __post_init__(self):
        if not (len(self.theta_axis) == len(self.values) == len(self.std_errors)):
            raise ValueError("axis/values/errors length mismatch")
        if np.any(np.diff(self.theta_axis) <= 0):
            raise ValueError("theta axis must be strictly increasing")
        if np.any(self.values < 0) or np.any(self.std_errors < 0):
            raise ValueError("values and std errors must be nonnegative")

    def index_of(self, theta: float) -> int:
        return int(np.argmin(np.abs(self.theta_axis - theta)))


@dataclass(frozen=True)
class CorrelationMap:
    """Stacked cuts: rows are q_a values, columns the theta_b lattice."""

    theta_a_values: np.ndarray
    theta_b_axis: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    n_realizations: int


def pump_field(config: ScatterConfig, dtype=np.complex128) -> ComplexField:
    """Gaussian pump amplitude exp(-r^2/waist^2) on the grid (1/e^2 intensity)."""
    x = config.grid.coordinate_axis()
    if config.grid.dim == 1:
        r2 = x * x
    else:
        r2 = x[:, None] ** 2 + x[None, :] ** 2
    return ComplexField(config.grid, np.exp(-r2 / config.pump.waist**2).astype(dtype))


def _plane_wave(grid: TransverseGrid, q_a) -> np.ndarray:
    """Detection-transpose plane wave exp(+i q_a . r) on the grid.

    Uses the FFT's own index coordinates r_j = j*dx so the wave is the
    exact transpose column of the momentum readout kernel; anything else
    breaks per-realization reciprocity by a q_a-dependent phase.
    """
    x = grid.dx * np.arange(grid.n)
    if grid.dim == 1:
        return np.exp(1j * q_a * x)
    qx, qy = q_a
    return np.exp(1j * (qx * x[:, None] + qy * x[None, :]))


def _lattice_index(grid: TransverseGrid, q_component: float) -> int:
    ratio = q_component / grid.dq
    idx = round(ratio)
    if abs(ratio - idx) > 1e-9:
        raise ValueError(
            f"q_a component {q_component:g} is off the momentum lattice "
            f"(pitch {grid.dq:g})"
        )
    if not (-grid.n // 2 <= idx < grid.n // 2):
        raise ValueError(f"q_a component {q_component:g} outside the momentum window")
    return idx % grid.n


def _as_components(grid: TransverseGrid, q_a) -> tuple:
    if grid.dim == 1:
        if np.ndim(q_a) != 0:
            raise ValueError("q_a must be a scalar for a 1D grid")
        return (float(q_a),)
    q = np.asarray(q_a, dtype=float).reshape(-1)
    if q.size != 2:
        raise ValueError("q_a must have two components for a 2D grid")
    return (float(q[0]), float(q[1]))


def pump_at_crystal(config: ScatterConfig, mask: DiffuserMask) -> ComplexField:
    """Transverse pump profile E(r) at the crystal plane.

    PLUS: the wide Gaussian pump passes the diffuser at the pump frequency
    (mask squared) and propagates z at wavenumber 2k.  MINUS: plane-wave
    pump, uniform field.
    """
    if config.variant == Variant.MINUS:
        return ComplexField(config.grid, np.ones(config.grid.shape, dtype=complex))
    v = mask.at_omega.values
    e0 = apply_mask(pump_field(config), v * v)
    return fresnel_propagate(e0, config.geometry.z, 2.0 * config.grid.k)


def detection_mode_at_crystal(
    config: ScatterConfig, mask: DiffuserMask, q_a
) -> ComplexField:
    """The field (G^T e_{q_a}) at the crystal plane.

    G's factors applied in reversed order to the plane wave exp(+i q_a r):
    every factor is symmetric (Fresnel diagonal in momentum, mask diagonal
    in position), so the transpose costs nothing extra.
    """
    comps = _as_components(config.grid, q_a)
    for c in comps:
        _lattice_index(config.grid, c)
    pw = ComplexField(
        config.grid, _plane_wave(config.grid, comps[0] if config.grid.dim == 1 else comps)
    )
    k = config.grid.k
    d, z = config.geometry.d, config.geometry.z
    if config.variant == Variant.PLUS:
        return fresnel_propagate(apply_mask(pw, mask.at_omega), d - z, k)
    inner = fresnel_propagate(apply_mask(pw, mask.at_omega), d, k)
    return fresnel_propagate(apply_mask(inner, mask.at_omega), abs(z), k)


def _momentum_readout(values: np.ndarray) -> np.ndarray:
    """Project onto momentum modes with the e^{+i q r} kernel (scale-free)."""
    return sp_fft.ifftn(values)


def biphoton_cut(config: ScatterConfig, mask: DiffuserMask, q_a) -> ComplexField:
    """Pair amplitude out(q_b; q_a) for one realization, fft-ordered over q_b.

    Computes G[E * (G^T e_{q_a})] where E = pump_at_crystal; the pointwise
    product realizes the position-diagonal thin-crystal pair amplitude.
    The overall scale is arbitrary (every observable is normalized later).
    """
    e = pump_at_crystal(config, mask)
    a = detection_mode_at_crystal(config, mask, q_a)
    field = ComplexField(config.grid, e.values * a.values)
    k = config.grid.k
    d, z = config.geometry.d, config.geometry.z
    if config.variant == Variant.PLUS:
        b = apply_mask(fresnel_propagate(field, d - z, k), mask.at_omega)
    else:
        inner = apply_mask(fresnel_propagate(field, abs(z), k), mask.at_omega)
        b = apply_mask(fresnel_propagate(inner, d, k), mask.at_omega)
    return ComplexField(config.grid, _momentum_readout(b.values))


class _Kernel:
    """Precomputed arrays for the hot ensemble loop (one config, one dtype).

    Same math as the field-op path above, with the mask spectrum reused
    for the first propagation of the detection chain (fft of mask times
    plane wave is a circular shift of the mask spectrum) and, for MINUS,
    the two |z| propagations around the uniform crystal plane fused.
    """

    def __init__(self, config: ScatterConfig, dtype=np.complex64):
        self.config = config
        self.dtype = np.dtype(dtype)
        grid = config.grid
        self.dim = grid.dim
        k = grid.k
        d, z = config.geometry.d, config.geometry.z
        q2 = grid.momentum_squared()
        self.filt = diffuser_filter(grid, config.diffuser).astype(dtype)
        self.scale = np.array(diffuser_scale(grid, config.diffuser)).astype(
            np.float32 if self.dtype == np.complex64 else np.float64
        )
        self.plus = config.variant == Variant.PLUS

        def phase(s, kappa):
            return np.exp(1j * q2 * (s / (2.0 * kappa))).astype(dtype)

        if self.plus:
            self.ph_back = phase(d - z, k)
            self.ph_pump = phase(z, 2.0 * k) if z != 0.0 else None
            self.pump = pump_field(config).values.astype(dtype)
        else:
            self.ph_d = phase(d, k)
            self.ph_2z = phase(2.0 * abs(z), k) if z != 0.0 else None

    def _roll(self, spec: np.ndarray, ia: tuple) -> np.ndarray:
        if self.dim == 1:
            return np.roll(spec, ia[0]) if ia[0] else spec
        if ia == (0, 0):
            return spec
        return np.roll(spec, ia, axis=(0, 1))

    def mask_values(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (mask spectrum unscaled, mask values scaled) for one seed."""
        noise = diffuser_noise(self.config.grid, seed, dtype=self.dtype)
        spec = noise * self.filt
        v = sp_fft.ifftn(spec)
        v *= self.scale
        return spec, v

    def pump_term(self, v: np.ndarray) -> np.ndarray | None:
        if not self.plus:
            return None
        e = self.pump * v
        e *= v
        if self.ph_pump is not None:
            e = sp_fft.ifftn(sp_fft.fftn(e) * self.ph_pump)
        return e

    def out_amplitude(self, spec, v, e, ia: tuple) -> np.ndarray:
        spec_a = self._roll(spec, ia)
        if self.plus:
            a = sp_fft.ifftn(spec_a * self.ph_back)
            a *= self.scale
            b = v * sp_fft.ifftn(sp_fft.fftn(e * a) * self.ph_back)
        else:
            a1 = sp_fft.ifftn(spec_a * self.ph_d)
            a1 *= self.scale
            va = v * a1
            if self.ph_2z is not None:
                va = sp_fft.ifftn(sp_fft.fftn(va) * self.ph_2z)
            b = v * sp_fft.ifftn(sp_fft.fftn(v * va) * self.ph_d)
        return sp_fft.ifftn(b)

    def cut_intensity(self, seed: int, ia: tuple, iy_slice: int | None) -> np.ndarray:
        spec, v = self.mask_values(seed)
        e = self.pump_term(v)
        out = self.out_amplitude(spec, v, e, ia)
        if self.dim == 2:
            out = out[:, iy_slice]
        return out.real.astype(np.float64) ** 2 + out.imag.astype(np.float64) ** 2


def _merge_stats(a, b):
    ca, ma, sa = a
    cb, mb, sb = b
    count = ca + cb
    delta = mb - ma
    mean = ma + delta * (cb / count)
    m2 = sa + sb + delta * delta * (ca * cb / count)
    return count, mean, m2


def _merge_tree(stats: list):
    while len(stats) > 1:
        nxt = [
            _merge_stats(stats[j], stats[j + 1]) for j in range(0, len(stats) - 1, 2)
        ]
        if len(stats) % 2:
            nxt.append(stats[-1])
        stats = nxt
    return stats[0]


def _run_chunks(worker, n_chunks: int, threads: int) -> list:
    if threads <= 1 or n_chunks == 1:
        return [worker(c) for c in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_chunks)))


def _finalize(count, mean, m2):
    if count < 2:
        raise ConfigError("ensemble statistics need n_realizations >= 2")
    err = np.sqrt(m2 / (count - 1) / count)
    return mean, err


def ensemble_average_cut(
    config: ScatterConfig,
    q_a=0.0,
    threads: int = 1,
    single_precision: bool = True,
    debug_reciprocity: bool = False,
) -> CorrelationCurve:
    """Disorder-averaged correlation cut at fixed q_a.

    Streaming mean and standard error per theta bin, accumulated in fixed
    chunks of ``CHUNK_REALIZATIONS`` merged by a fixed pairwise tree, so a
    given master seed yields a bit-identical curve for every ``threads``
    value.  For a 2D grid the returned cut is the scan along the first
    momentum axis at fixed q_by = q_ay.

    ``single_precision`` runs the per-realization field math in complex64
    (Monte-Carlo noise dominates rounding by many orders); accumulators
    are always float64.  ``debug_reciprocity`` cross-checks out(q_b; q_a) =
    out(q_a; q_b) on one seed-derived momentum pair per realization.
    """
    ens = config.ensemble
    if ens.n_realizations < 2:
        raise ConfigError("ensemble_average_cut needs n_realizations >= 2")
    comps = _as_components(config.grid, q_a)
    ia = tuple(_lattice_index(config.grid, c) for c in comps)
    iy = ia[1] if config.grid.dim == 2 else None
    kern = _Kernel(config, np.complex64 if single_precision else np.complex128)
    n_chunks = -(-ens.n_realizations // CHUNK_REALIZATIONS)

    def worker(c: int):
        start = c * CHUNK_REALIZATIONS
        stop = min(start + CHUNK_REALIZATIONS, ens.n_realizations)
        count = 0
        mean = np.zeros(config.grid.n)
        m2 = np.zeros(config.grid.n)
        for i in range(start, stop):
            seed = realization_seed(ens.master_seed, i)
            if debug_reciprocity:
                _check_reciprocity(config, kern, seed)
            intensity = kern.cut_intensity(seed, ia, iy)
            count += 1
            delta = intensity - mean
            mean += delta / count
            m2 += delta * (intensity - mean)
        return count, mean, m2

    count, mean, m2 = _merge_tree(_run_chunks(worker, n_chunks, threads))
    values, errors = _finalize(count, mean, m2)
    q_shift = config.grid.momentum_axis(shifted=True)
    theta_axis = (q_shift - comps[0]) / config.grid.k
    return CorrelationCurve(
        theta_axis=theta_axis,
        values=np.fft.fftshift(values),
        std_errors=np.fft.fftshift(errors),
        n_realizations=count,
        q_a=comps[0],
    )


def _check_reciprocity(config: ScatterConfig, kern: _Kernel, seed: int) -> None:
    # Sample momenta inside the scattering cone: in the far tail the
    # amplitudes sit at the FFT roundoff floor and a pointwise relative
    # comparison stops being meaningful.
    rng = np.random.Generator(np.random.Philox(key=seed ^ 0xA5A5A5A5))
    grid = config.grid
    cone = 2.0 * config.diffuser.theta0 * grid.k / grid.dq
    half = max(2, min(grid.n // 4, int(cone)))
    qa_i = tuple(int(v) % grid.n for v in rng.integers(-half, half, size=grid.dim))
    qb_i = tuple(int(v) % grid.n for v in rng.integers(-half, half, size=grid.dim))
    spec, v = kern.mask_values(seed)
    e = kern.pump_term(v)
    out_ab = kern.out_amplitude(spec, v, e, qa_i)
    out_ba = kern.out_amplitude(spec, v, e, qb_i)
    lhs = out_ab[qb_i]
    rhs = out_ba[qa_i]
    scale = max(abs(lhs), abs(rhs))
    tol = 1e-10 if kern.dtype == np.complex128 else 1e-3
    if scale > 0 and abs(lhs - rhs) / scale > tol:
        raise AssertionError(
            f"reciprocity violated at seed {seed}: {lhs!r} vs {rhs!r}"
        )


def ensemble_average_map(
    config: ScatterConfig,
    q_a_list,
    threads: int = 1,
    single_precision: bool = True,
) -> CorrelationMap:
    """Stacked disorder-averaged cuts over a list of q_a values (1D grids).

    All q_a share the same disorder per realization (seeds derive from the
    realization index only), so each row is bit-identical to the matching
    single-cut call and the map inherits per-realization reciprocity.
    """
    if config.grid.dim != 1:
        raise ConfigError("coincidence maps are defined for 1D grids")
    ens = config.ensemble
    if ens.n_realizations < 2:
        raise ConfigError("ensemble_average_map needs n_realizations >= 2")
    q_values = [float(q) for q in np.asarray(q_a_list, dtype=float).reshape(-1)]
    if not q_values:
        raise ConfigError("q_a_list must not be empty")
    ias = [(_lattice_index(config.grid, q),) for q in q_values]
    kern = _Kernel(config, np.complex64 if single_precision else np.complex128)
    n_chunks = -(-ens.n_realizations // CHUNK_REALIZATIONS)
    shape = (len(q_values), config.grid.n)

    def worker(c: int):
        start = c * CHUNK_REALIZATIONS
        stop = min(start + CHUNK_REALIZATIONS, ens.n_realizations)
        count = 0
        mean = np.zeros(shape)
        m2 = np.zeros(shape)
        row = np.empty(shape)
        for i in range(start, stop):
            seed = realization_seed(ens.master_seed, i)
            spec, v = kern.mask_values(seed)
            e = kern.pump_term(v)
            for j, ia in enumerate(ias):
                out = kern.out_amplitude(spec, v, e, ia)
                row[j] = out.real.astype(np.float64) ** 2 + out.imag.astype(np.float64) ** 2
            count += 1
            delta = row - mean
            mean += delta / count
            m2 += delta * (row - mean)
        return count, mean, m2

    count, mean, m2 = _merge_tree(_run_chunks(worker, n_chunks, threads))
    values, errors = _finalize(count, mean, m2)
    k = config.grid.k
    return CorrelationMap(
        theta_a_values=np.asarray(q_values) / k,
        theta_b_axis=config.grid.angle_axis(shifted=True),
        values=np.fft.fftshift(values, axes=1),
        std_errors=np.fft.fftshift(errors, axes=1),
        n_realizations=count,
    )
