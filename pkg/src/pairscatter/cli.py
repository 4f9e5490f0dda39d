"""Command-line surface: theory | simulate | sweep | validate | reproduce.

Every command is a pure function of (config file, flags, master seed) to
output bytes, modulo the timing fields in the manifest.  Exit codes:
0 success, 2 invalid configuration, 3 numerical validation failed,
4 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .core import ComplexField, ConfigError, Variant
from .engine import (
    ScatterConfig,
    ensemble_average_cut,
)
from .theory import (
    TheoryParams,
    gamma_minus_parts,
    theory_background,
    theory_background_parts,
    theory_curve,
    theory_peak_width,
)
from .analysis import (
    enhancement_ratio,
    fwhm,
    normalize_pair,
    norm_factors,
    subtract_background,
    sweep_z,
    theory_params_for,
)
from .waveoptics import (
    fresnel_propagate,
    synthesize_diffuser,
)
from .runio import (
    RunManifest,
    RunSettings,
    build_scatter_config,
    load_config_file,
    resolve_settings,
    utc_now,
    write_curve_csv,
    write_sweep_csv,
    write_theory_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

SWEEP_PRESETS = {
    # z values are z/d for plus, |z|/z0 for minus; package defaults.
    "fig6-plus": ("plus", [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]),
    "fig6-minus": ("minus", [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 10.0]),
}

REPRODUCE_PRESETS = {
    "fig4c": ("plus", "curves", [0.0, 0.25, 0.45]),
    "fig5c": ("minus", "curves", [0.0, 2.0, 10.0]),
    "fig6": (None, "sweeps", None),
    "fig7": (None, "background", None),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="INI config file")
    p.add_argument("--variant", choices=["plus", "minus"], default=None)
    p.add_argument("--kd", type=float, default=None, help="dimensionless k*d")
    p.add_argument("--theta0", type=float, default=None, help="scattering angle [rad]")
    p.add_argument("--z-over-d", dest="z_over_d", type=float, default=None)
    p.add_argument("--z-over-z0", dest="z_over_z0", type=float, default=None,
                   help="|z|/z0 (sign fixed by the variant)")
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=str, default=".", help="output directory")
    p.add_argument("--qa", type=float, default=None,
                   help="static detector momentum q_a [rad/m]")
    p.add_argument("--n", type=int, default=None, help="grid points per axis")
    p.add_argument("--dim", type=int, default=None, choices=[1, 2])
    p.add_argument("--waist-over-xi0", dest="waist_over_xi0", type=float, default=None)
    p.add_argument("--double", dest="double_precision", action="store_true",
                   default=None, help="run field math in complex128")
    p.add_argument("--allow-narrow-pump", dest="allow_narrow", action="store_true",
                   default=None)


def _settings_from_args(args) -> RunSettings:
    file_values = load_config_file(args.config) if args.config else None
    keys = ["variant", "kd", "theta0", "z_over_d", "z_over_z0", "realizations",
            "seed", "threads", "qa", "n", "dim", "waist_over_xi0",
            "double_precision", "allow_narrow"]
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return resolve_settings(file_values, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _z_tag(settings: RunSettings) -> str:
    if settings.z_over_z0 is not None:
        return f"zt{settings.z_over_z0:g}"
    return f"zd{settings.z_over_d or 0:g}"


def _theory_columns(params: TheoryParams, variant: Variant, theta: np.ndarray):
    total = theory_curve(theta, params, variant)
    background = theory_background(theta, params, variant)
    peak_term = total - background
    minus_parts = None
    if variant == Variant.MINUS:
        zeros = np.zeros_like(theta)
        minus_parts = gamma_minus_parts(zeros, theta, params)
    return total, peak_term, background, minus_parts


def cmd_theory(args) -> int:
    settings = _settings_from_args(args)
    out = _out_dir(args)
    variant = Variant(settings.variant)
    config = build_scatter_config(settings)
    params = theory_params_for(config)
    theta0 = settings.theta0
    theta = np.linspace(-args.theta_max * theta0, args.theta_max * theta0, args.points)
    total, peak_term, background, minus_parts = _theory_columns(params, variant, theta)
    path = out / f"theory_{variant.value}_{_z_tag(settings)}.csv"
    write_theory_csv(path, theta, total, peak_term, background, minus_parts)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    settings = _settings_from_args(args)
    if settings.realizations < 100:
        raise ConfigError(
            f"simulate requires at least 100 realizations, got {settings.realizations}"
        )
    out = _out_dir(args)
    config = build_scatter_config(settings)
    manifest = RunManifest(command="simulate", settings=settings, started_utc=utc_now())
    t0 = time.perf_counter()
    curve = ensemble_average_cut(
        config,
        q_a=settings.qa,
        threads=settings.threads,
        single_precision=not settings.double_precision,
    )
    manifest.stage_seconds["simulate"] = time.perf_counter() - t0
    tag = f"{config.variant.value}_{_z_tag(settings)}"
    csv_path = write_curve_csv(out / f"sim_{tag}.csv", curve)
    manifest.add_output(csv_path)
    manifest.wall_seconds = time.perf_counter() - t0
    mpath = manifest.write(out / f"sim_{tag}.manifest")
    print(f"wrote {csv_path}\nwrote {mpath}")
    return EXIT_OK


def _parse_z_list(raw: str) -> list[float]:
    try:
        values = [float(tok) for tok in raw.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --z-list {raw!r}") from exc
    if not values:
        raise ConfigError("empty z list")
    return values


def cmd_sweep(args) -> int:
    settings = _settings_from_args(args)
    if args.preset:
        if args.preset not in SWEEP_PRESETS:
            raise ConfigError(f"unknown sweep preset {args.preset!r}")
        variant_name, z_list = SWEEP_PRESETS[args.preset]
        settings.variant = variant_name
    elif args.z_list is not None:
        z_list = _parse_z_list(args.z_list)
    else:
        raise ConfigError("sweep needs --z-list or --preset")
    out = _out_dir(args)
    variant = Variant(settings.variant)

    base = build_scatter_config(
        resolve_settings(
            settings.__dict__,
            {"z_over_d": 0.0, "z_over_z0": None},
        )
    )
    d = base.geometry.d
    z0 = base.z_corr
    if variant == Variant.PLUS:
        z_values = [zv * d for zv in z_list]
    else:
        z_values = [-abs(zv) * z0 for zv in z_list]

    manifest = RunManifest(command="sweep", settings=settings, started_utc=utc_now())
    t0 = time.perf_counter()
    sweep = sweep_z(
        base,
        z_values,
        q_a=settings.qa,
        threads=settings.threads,
        single_precision=not settings.double_precision,
    )
    manifest.stage_seconds["sweep"] = time.perf_counter() - t0
    tag = args.preset or variant.value
    path = write_sweep_csv(out / f"sweep_{tag}.csv", sweep)
    manifest.add_output(path)
    manifest.wall_seconds = time.perf_counter() - t0
    mpath = manifest.write(out / f"sweep_{tag}.manifest")
    print(f"wrote {path}\nwrote {mpath}")
    return EXIT_OK


def _validate_mask_statistics(config: ScatterConfig, n_masks: int, lines: list) -> bool:
    """Ensemble mask correlations against their Gaussian targets."""
    from .core import TransverseGrid

    grid = config.grid
    xi0 = config.xi0
    n_val = min(grid.n, 4096)
    vgrid = TransverseGrid(dim=1, n=n_val, dx=grid.dx, k=grid.k)
    lags = np.arange(0, int(3.0 * xi0 / grid.dx) + 1)
    corr_w = np.zeros(len(lags), dtype=complex)
    corr_2w = np.zeros(len(lags), dtype=complex)
    for i in range(n_masks):
        mask = synthesize_diffuser(vgrid, config.diffuser, seed=0xD1F0 + i,
                                   dtype=np.complex64)
        v = mask.at_omega.values
        v2 = v * v
        for j, lag in enumerate(lags):
            vr = np.roll(v, -int(lag))
            v2r = np.roll(v2, -int(lag))
            corr_w[j] += np.mean(v * np.conj(vr))
            corr_2w[j] += np.mean(v2 * np.conj(v2r))
    corr_w /= n_masks
    corr_2w /= n_masks
    dr = lags * grid.dx
    target_w = np.exp(-(dr**2) / (4.0 * xi0**2))
    target_2w = 2.0 * target_w**2
    rms_w = float(np.sqrt(np.mean((np.real(corr_w) - target_w) ** 2)))
    rms_2w = float(np.sqrt(np.mean((np.real(corr_2w) - target_2w) ** 2)))
    ok_w = rms_w < 0.03
    ok_2w = rms_2w < 0.05
    lines.append(f"mask correlation at omega: rms dev {rms_w:.4f} "
                 f"({'PASS' if ok_w else 'FAIL'}, limit 0.03)")
    lines.append(f"mask correlation at 2omega: rms dev {rms_2w:.4f} "
                 f"({'PASS' if ok_2w else 'FAIL'}, limit 0.05)")
    return ok_w and ok_2w


def _validate_propagator(config: ScatterConfig, lines: list) -> bool:
    grid = config.grid
    if grid.dim != 1:
        lines.append("propagator check: skipped for dim=2 (1D check covers the kernel)")
        return True
    k = grid.k
    w0 = max(20 * grid.dx, grid.window / 64)
    x = grid.coordinate_axis()
    beam = ComplexField(grid, np.exp(-(x / w0) ** 2).astype(complex))
    zr = k * w0**2 / 2.0
    drift_ok = True
    width_ok = True
    n0 = beam.norm_squared()
    for frac in (0.5, 1.5, 3.0):
        prop = fresnel_propagate(beam, frac * zr, k)
        drift = abs(prop.norm_squared() / n0 - 1.0)
        drift_ok &= drift < 1e-10
        intensity = np.abs(prop.values) ** 2
        mu = float(np.sum(x * intensity) / np.sum(intensity))
        var = float(np.sum((x - mu) ** 2 * intensity) / np.sum(intensity))
        w_meas = 2.0 * math.sqrt(var)
        w_theory = w0 * math.sqrt(1.0 + (frac * zr / zr) ** 2)
        width_ok &= abs(w_meas / w_theory - 1.0) < 0.005
    fwd = fresnel_propagate(beam, 0.7 * zr, k)
    back = fresnel_propagate(fwd, -0.7 * zr, k)
    inv_err = float(np.max(np.abs(back.values - beam.values)))
    inv_ok = inv_err < 1e-10
    lines.append(f"propagator norm drift: {'PASS' if drift_ok else 'FAIL'} (limit 1e-10)")
    lines.append(f"propagator Gaussian width vs paraxial oracle: "
                 f"{'PASS' if width_ok else 'FAIL'} (limit 0.5%)")
    lines.append(f"propagator inverse residual {inv_err:.2e}: "
                 f"{'PASS' if inv_ok else 'FAIL'} (limit 1e-10)")
    return drift_ok and width_ok and inv_ok


def _validate_guard_band(config: ScatterConfig, lines: list) -> bool:
    from .engine import GUARD_BAND_MAX_ENERGY
    from .waveoptics import guard_band_energy_fraction

    if config.variant != Variant.PLUS:
        lines.append("guard band: n/a for the plane-wave-pump variant")
        return True
    d, z = config.geometry.d, config.geometry.z
    sigma = math.hypot(z * config.diffuser.theta0 / 2.0,
                       (d - z) * config.diffuser.theta0 / math.sqrt(2.0))
    frac = guard_band_energy_fraction(config.grid.window, config.pump.waist, sigma)
    ok = frac <= GUARD_BAND_MAX_ENERGY
    lines.append(f"guard-band energy fraction {frac:.2e}: "
                 f"{'PASS' if ok else 'FAIL'} (limit {GUARD_BAND_MAX_ENERGY:g})")
    return ok


def cmd_validate(args) -> int:
    settings = _settings_from_args(args)
    out = _out_dir(args)
    config = build_scatter_config(settings)
    lines = [f"validation report ({utc_now()})"]
    regime = config.grid.k * config.geometry.d * config.diffuser.theta0**2
    if regime < 100.0:
        lines.append(f"WARNING: k*d*theta0^2 = {regime:.3g} below 100; "
                     "dominant-diagram regime is marginal")
    ok = True
    t0 = time.perf_counter()
    ok &= _validate_mask_statistics(config, args.masks, lines)
    ok &= _validate_propagator(config, lines)
    ok &= _validate_guard_band(config, lines)
    lines.append(f"elapsed {time.perf_counter() - t0:.1f}s")
    lines.append("RESULT: " + ("PASS" if ok else "FAIL"))
    report = "\n".join(lines) + "\n"
    (out / "validate_report.txt").write_text(report)
    print(report, end="")
    return EXIT_OK if ok else EXIT_VALIDATION


def _curve_bundle(settings: RunSettings, z_values, kind: str, out: Path,
                  manifest: RunManifest, theta_max_units: float = 1.0) -> list[str]:
    """Run paired sim/theory curves for several crystal positions."""
    summary = []
    variant = Variant(settings.variant)
    for zv in z_values:
        if variant == Variant.PLUS:
            settings.z_over_d, settings.z_over_z0 = zv, None
        else:
            settings.z_over_d, settings.z_over_z0 = None, zv
        config = build_scatter_config(settings)
        params = theory_params_for(config)
        tag = f"{variant.value}_{_z_tag(settings)}"
        t0 = time.perf_counter()
        curve = ensemble_average_cut(
            config, q_a=settings.qa, threads=settings.threads,
            single_precision=not settings.double_precision,
        )
        manifest.stage_seconds[f"sim_{tag}"] = time.perf_counter() - t0
        manifest.add_output(write_curve_csv(out / f"sim_{tag}.csv", curve))

        theta = curve.theta_axis
        total, peak_term, background, minus_parts = _theory_columns(params, variant, theta)
        manifest.add_output(write_theory_csv(
            out / f"theory_{tag}.csv", theta, total, peak_term, background, minus_parts))

        sim_n, th_n = normalize_pair(curve, total)
        _, f_th = norm_factors(curve, total)
        sub = subtract_background(sim_n, background * f_th)
        w_sim, w_err = fwhm(sub)
        w_th = theory_peak_width(params, variant)
        ratio, r_err = enhancement_ratio(curve, w_th, settings.theta0)
        summary.append(
            f"{tag}: fwhm sim {w_sim:.4e} +- {w_err:.1e} rad, theory {w_th:.4e} rad "
            f"({(w_sim / w_th - 1) * 100:+.1f}%); enhancement {ratio:.3f} +- {r_err:.3f}"
        )
    return summary


def _background_bundle(settings: RunSettings, out: Path,
                       manifest: RunManifest) -> list[str]:
    """Wide-range curves probing the background behavior of both variants."""
    from .analysis import fit_envelope_width

    summary = []
    theta0 = settings.theta0
    for variant_name, z_values in (("plus", [0.0, 0.25]), ("minus", [0.0, 1.0, 10.0])):
        settings.variant = variant_name
        variant = Variant(variant_name)
        for zv in z_values:
            if variant == Variant.PLUS:
                settings.z_over_d, settings.z_over_z0 = zv, None
            else:
                settings.z_over_d, settings.z_over_z0 = None, zv
            config = build_scatter_config(settings)
            params = theory_params_for(config)
            tag = f"{variant.value}_{_z_tag(settings)}"
            curve = ensemble_average_cut(
                config, q_a=settings.qa, threads=settings.threads,
                single_precision=not settings.double_precision,
            )
            manifest.add_output(write_curve_csv(out / f"sim_{tag}.csv", curve))
            theta = curve.theta_axis
            total, peak_term, background, minus_parts = _theory_columns(
                params, variant, theta)
            manifest.add_output(write_theory_csv(
                out / f"theory_{tag}.csv", theta, total, peak_term, background,
                minus_parts))
            w_fit = fit_envelope_width(curve, (1.2 * theta0, 2.5 * theta0))
            summary.append(f"{tag}: fitted background width {w_fit / theta0:.3f} theta0")
    return summary


def cmd_reproduce(args) -> int:
    if args.preset not in REPRODUCE_PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; "
                          f"choose from {sorted(REPRODUCE_PRESETS)}")
    settings = _settings_from_args(args)
    out = _out_dir(args)
    variant_name, kind, z_values = REPRODUCE_PRESETS[args.preset]
    manifest = RunManifest(command=f"reproduce {args.preset}", settings=settings,
                           started_utc=utc_now())
    t_start = time.perf_counter()
    summary: list[str] = [f"preset {args.preset} (kd={settings.kd:g}, "
                          f"theta0={settings.theta0:g}, n={settings.n}, "
                          f"realizations={settings.realizations})"]
    if kind == "curves":
        settings.variant = variant_name
        summary += _curve_bundle(settings, z_values, kind, out, manifest)
    elif kind == "sweeps":
        for preset in ("fig6-plus", "fig6-minus"):
            vname, z_list = SWEEP_PRESETS[preset]
            settings.variant = vname
            base = build_scatter_config(
                resolve_settings(settings.__dict__, {"z_over_d": 0.0, "z_over_z0": None}))
            zs = ([zv * base.geometry.d for zv in z_list] if vname == "plus"
                  else [-abs(zv) * base.z_corr for zv in z_list])
            sweep = sweep_z(base, zs, q_a=settings.qa, threads=settings.threads,
                            single_precision=not settings.double_precision)
            manifest.add_output(write_sweep_csv(out / f"sweep_{preset}.csv", sweep))
            trend = "non-monotonic" if np.any(np.diff(sweep.fwhm_over_theta0) < 0) \
                else "monotonic"
            summary.append(f"{preset}: width column {trend}; "
                           f"amplitude range [{sweep.peak_amplitude_norm.min():.3f}, "
                           f"{sweep.peak_amplitude_norm.max():.3f}]")
    else:
        summary += _background_bundle(settings, out, manifest)
    manifest.wall_seconds = time.perf_counter() - t_start
    text = "\n".join(summary) + "\n"
    (out / f"{args.preset}_summary.txt").write_text(text)
    manifest.add_output(out / f"{args.preset}_summary.txt")
    manifest.write(out / f"{args.preset}.manifest")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairscatter",
        description="Two-photon correlations of pairs scattered by a thin "
                    "dynamic diffuser: Monte-Carlo engine and closed-form theory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="closed-form correlation curves to CSV")
    _add_common(p)
    p.add_argument("--theta-max", type=float, default=3.0,
                   help="half range of the theta axis in units of theta0")
    p.add_argument("--points", type=int, default=2001)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", help="Monte-Carlo correlation cut to CSV")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="width/amplitude summaries across z")
    _add_common(p)
    p.add_argument("--z-list", type=str, default=None,
                   help="comma list: z/d for plus, |z|/z0 for minus")
    p.add_argument("--preset", type=str, default=None,
                   help="fig6-plus | fig6-minus")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="statistics and kernel checks")
    _add_common(p)
    p.add_argument("--masks", type=int, default=10000,
                   help="ensemble size for the mask-statistics checks")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("reproduce", help="figure-style bundles (sim + theory)")
    _add_common(p)
    p.add_argument("--preset", type=str, required=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
