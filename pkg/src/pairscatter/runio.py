"""Configuration files, CSV serialization and run manifests.

Config files are INI-style (key/value with sections); CLI flags override
file values.  Curves are written as CSV with one header line, a fixed
column order and full double precision, so outputs are diffable and
digest-friendly.  Every simulation run writes a sidecar manifest listing
the resolved config, the master seed and a sha256 digest of each emitted
file; re-running with the same config and seed reproduces the digests
bit for bit (only the manifest's timing fields differ).
"""

from __future__ import annotations

import configparser
import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, Variant
from .engine import ScatterConfig, config_from_dimensionless

__all__ = [
    "RunSettings",
    "RunManifest",
    "load_config_file",
    "resolve_settings",
    "build_scatter_config",
    "write_curve_csv",
    "write_theory_csv",
    "write_sweep_csv",
    "file_digest",
    "manifest_outputs",
    "utc_now",
]

_FLOAT_FMT = "%.17g"


@dataclass
class RunSettings:
    """Resolved dimensionless run parameters (file defaults + flag overrides)."""

    kd: float = 5697.0
    theta0: float = 0.56
    variant: str = "plus"
    z_over_d: float | None = None
    z_over_z0: float | None = None
    n: int = 2**15
    dim: int = 1
    dx_over_xi0: float = 0.25
    waist_over_xi0: float = 100.0
    realizations: int = 1000
    seed: int = 0
    threads: int = 1
    qa: float = 0.0
    double_precision: bool = False
    allow_narrow: bool = False

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = "" if v is None else str(v)
        return out


_SECTION_KEYS = {
    "geometry": {"kd": float, "variant": str, "z_over_d": float, "z_over_z0": float},
    "diffuser": {"theta0": float},
    "grid": {"n": int, "dim": int, "dx_over_xi0": float},
    "pump": {"waist_over_xi0": float, "allow_narrow": bool},
    "ensemble": {"realizations": int, "seed": int},
    "run": {"threads": int, "qa": float, "double_precision": bool},
}


def load_config_file(path: str | Path) -> dict:
    """Read an INI config file into a flat {key: typed value} dict."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found or unreadable: {path}")
    values: dict = {}
    for section, keys in _SECTION_KEYS.items():
        if not parser.has_section(section):
            continue
        for key, typ in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[key] = (
                        parser.getboolean(section, key) if typ is bool else typ(raw)
                    )
                except ValueError as exc:
                    raise ConfigError(
                        f"config [{section}] {key} = {raw!r} is not a valid {typ.__name__}"
                    ) from exc
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
    return values


def resolve_settings(file_values: dict | None, overrides: dict) -> RunSettings:
    """Defaults <- config file <- CLI flags (flags win)."""
    settings = RunSettings()
    for source in (file_values or {}), overrides:
        for key, value in source.items():
            if value is None:
                continue
            if not hasattr(settings, key):
                raise ConfigError(f"unknown setting {key!r}")
            setattr(settings, key, value)
    return settings


def build_scatter_config(settings: RunSettings) -> ScatterConfig:
    """Synthesize k = 1, d = kd and construct the validated ScatterConfig."""
    variant = Variant(settings.variant)
    z_over_d = settings.z_over_d
    z_tilde = settings.z_over_z0
    if z_over_d is None and z_tilde is None:
        z_over_d = 0.0
    return config_from_dimensionless(
        kd=settings.kd,
        theta0=settings.theta0,
        variant=variant,
        z_over_d=z_over_d,
        z_tilde=z_tilde,
        n=settings.n,
        dim=settings.dim,
        dx_over_xi0=settings.dx_over_xi0,
        waist_over_xi0=settings.waist_over_xi0,
        realizations=settings.realizations,
        seed=settings.seed,
        allow_narrow=settings.allow_narrow,
    )


def _write_csv(path: Path, header: str, columns: list[np.ndarray]) -> None:
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=_FLOAT_FMT)


def write_curve_csv(path: str | Path, curve) -> Path:
    """theta_rad, mean, std_error"""
    path = Path(path)
    _write_csv(
        path,
        "theta_rad,mean,std_error",
        [curve.theta_axis, curve.values, curve.std_errors],
    )
    return path


def write_theory_csv(
    path: str | Path,
    theta: np.ndarray,
    total: np.ndarray,
    peak_term: np.ndarray,
    background_term: np.ndarray,
    minus_parts: tuple[np.ndarray, np.ndarray] | None = None,
) -> Path:
    """theta_rad, gamma_total, gamma_peak_term, gamma_background_term (+ parts)."""
    path = Path(path)
    header = "theta_rad,gamma_total,gamma_peak_term,gamma_background_term"
    cols = [np.asarray(theta), np.asarray(total), np.asarray(peak_term),
            np.asarray(background_term)]
    if minus_parts is not None:
        header += ",gamma_minus1,gamma_minus2"
        cols += [np.asarray(minus_parts[0]), np.asarray(minus_parts[1])]
    _write_csv(path, header, cols)
    return path


def write_sweep_csv(path: str | Path, sweep) -> Path:
    """z_over_z0, fwhm_over_theta0, fwhm_err, amp_norm, amp_err"""
    path = Path(path)
    _write_csv(
        path,
        "z_over_z0,fwhm_over_theta0,fwhm_err,amp_norm,amp_err",
        [sweep.z_tilde, sweep.fwhm_over_theta0, sweep.fwhm_err,
         sweep.peak_amplitude_norm, sweep.amp_err],
    )
    return path


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a run plus digests of what it produced."""

    command: str
    settings: RunSettings
    started_utc: str = ""
    wall_seconds: float = 0.0
    stage_seconds: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def add_output(self, path: str | Path) -> None:
        p = Path(path)
        self.outputs[p.name] = file_digest(p)

    def write(self, path: str | Path) -> Path:
        parser = configparser.ConfigParser()
        parser["run"] = {
            "command": self.command,
            "version": __version__,
            "started_utc": self.started_utc,
            "wall_seconds": f"{self.wall_seconds:.3f}",
        }
        parser["config"] = self.settings.as_dict()
        parser["timings"] = {k: f"{v:.3f}" for k, v in self.stage_seconds.items()}
        parser["outputs"] = dict(self.outputs)
        path = Path(path)
        with open(path, "w") as fh:
            parser.write(fh)
        return path


def manifest_outputs(path: str | Path) -> dict:
    """Read back the [outputs] digests of a manifest (for reproducibility checks)."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"manifest not found: {path}")
    return dict(parser["outputs"]) if parser.has_section("outputs") else {}


def utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
