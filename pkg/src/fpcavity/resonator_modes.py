"""Paraxial Gaussian modes of a symmetric two-mirror cavity with toroidal mirrors.

Each mirror has two principal radii of curvature. The two transverse axes are
treated independently: every axis gets its own stability parameter, waist,
Rayleigh range and Gouy phase.

All lengths are in meters and all frequencies in hertz.
"""

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import NonPositiveInput, UnstableGeometry

__all__ = [
    "SPEED_OF_LIGHT",
    "CavityGeometry",
    "ModeIndices",
    "ModeProperties",
    "REFERENCE_GEOMETRY",
    "stability_g",
    "mean_radius_geometry",
    "free_spectral_range",
    "mode_geometry",
    "resonance_frequency",
    "polarization_splitting",
    "intensity_profile",
    "displacement_to_detuning",
    "detuning_to_displacement",
    "wavelength_from_frequency",
]


@dataclass(frozen=True)
class CavityGeometry:
    length_m: float
    radius_x_m: float
    radius_y_m: float
    mirror_diameter_m: float
    roughness_rms_m: float = 0.0

    def __post_init__(self):
        for name in ("length_m", "radius_x_m", "radius_y_m", "mirror_diameter_m"):
            value = getattr(self, name)
            if not value > 0:
                raise NonPositiveInput(f"{name} must be > 0, got {value!r}")
        if not self.roughness_rms_m >= 0:
            raise NonPositiveInput(
                f"roughness_rms_m must be >= 0, got {self.roughness_rms_m!r}"
            )


# Mirror set used for the 51 GHz niobium cavity.
REFERENCE_GEOMETRY = CavityGeometry(
    length_m=27.57e-3,
    radius_x_m=39.4e-3,
    radius_y_m=40.6e-3,
    mirror_diameter_m=50e-3,
    roughness_rms_m=10e-9,
)


@dataclass(frozen=True)
class ModeIndices:
    q: int
    m: int = 0
    n: int = 0

    def __post_init__(self):
        if self.q < 1 or self.m < 0 or self.n < 0:
            raise ValueError(f"invalid mode indices (q={self.q}, m={self.m}, n={self.n})")


@dataclass(frozen=True)
class ModeProperties:
    frequency_hz: float
    fsr_hz: float
    waist_x_m: float
    waist_y_m: float
    rayleigh_x_m: float
    rayleigh_y_m: float
    mirror_spot_x_m: float
    mirror_spot_y_m: float
    gouy_x_rad: float
    gouy_y_rad: float
    polarization_splitting_hz: float

    def spot_size(self, z_m):
        """Beam radii (w_x, w_y) at distance ``z_m`` from the cavity center."""
        z = np.asarray(z_m, dtype=float)
        wx = self.waist_x_m * np.sqrt(1.0 + (z / self.rayleigh_x_m) ** 2)
        wy = self.waist_y_m * np.sqrt(1.0 + (z / self.rayleigh_y_m) ** 2)
        return wx, wy


def wavelength_from_frequency(frequency_hz):
    if not frequency_hz > 0:
        raise NonPositiveInput(f"frequency must be > 0, got {frequency_hz!r}")
    return SPEED_OF_LIGHT / frequency_hz


def stability_g(geom):
    """Per-axis stability parameters ``g = 1 - L/R``."""
    return 1.0 - geom.length_m / geom.radius_x_m, 1.0 - geom.length_m / geom.radius_y_m


def _checked_g(geom):
    gx, gy = stability_g(geom)
    for axis, g in (("x", gx), ("y", gy)):
        if not g * g < 1.0:
            raise UnstableGeometry(
                f"unstable on {axis} axis: g = {g:.6g} (need g^2 < 1)"
            )
    return gx, gy


def mean_radius_geometry(geom):
    """Same cavity with both radii replaced by their mean (single-waist convention)."""
    r = 0.5 * (geom.radius_x_m + geom.radius_y_m)
    return replace(geom, radius_x_m=r, radius_y_m=r)


def free_spectral_range(geom):
    return SPEED_OF_LIGHT / (2.0 * geom.length_m)


def _axis_geometry(length, radius, wavelength):
    zr = 0.5 * math.sqrt(length * (2.0 * radius - length))
    w0 = math.sqrt(wavelength * zr / math.pi)
    spot = w0 * math.sqrt(1.0 + (0.5 * length / zr) ** 2)
    return zr, w0, spot


def mode_geometry(geom, wavelength_m):
    """Waists, Rayleigh ranges, mirror spots and Gouy phases at ``wavelength_m``.

    ``frequency_hz`` of the result is simply ``c / wavelength_m``; use
    :func:`resonance_frequency` to get the eigenfrequency of a given mode.
    """
    if not wavelength_m > 0:
        raise NonPositiveInput(f"wavelength must be > 0, got {wavelength_m!r}")
    gx, gy = _checked_g(geom)
    L = geom.length_m
    zrx, w0x, spotx = _axis_geometry(L, geom.radius_x_m, wavelength_m)
    zry, w0y, spoty = _axis_geometry(L, geom.radius_y_m, wavelength_m)
    return ModeProperties(
        frequency_hz=SPEED_OF_LIGHT / wavelength_m,
        fsr_hz=free_spectral_range(geom),
        waist_x_m=w0x,
        waist_y_m=w0y,
        rayleigh_x_m=zrx,
        rayleigh_y_m=zry,
        mirror_spot_x_m=spotx,
        mirror_spot_y_m=spoty,
        gouy_x_rad=math.acos(gx),
        gouy_y_rad=math.acos(gy),
        polarization_splitting_hz=polarization_splitting(geom, wavelength_m),
    )


def resonance_frequency(geom, idx):
    """Eigenfrequency of TEM_qmn.

    nu = FSR * [q + (m + 1/2) acos(g_x)/pi + (n + 1/2) acos(g_y)/pi]
    """
    gx, gy = _checked_g(geom)
    gouy = (idx.m + 0.5) * math.acos(gx) + (idx.n + 0.5) * math.acos(gy)
    return free_spectral_range(geom) * (idx.q + gouy / math.pi)


def polarization_splitting(geom, wavelength_m):
    """Splitting of the two linear polarizations caused by mirror astigmatism.

    First-order vector correction: c*lambda/(4 pi^2 L) * |1/R_x - 1/R_y|.
    """
    if not wavelength_m > 0:
        raise NonPositiveInput(f"wavelength must be > 0, got {wavelength_m!r}")
    _checked_g(geom)
    prefactor = SPEED_OF_LIGHT * wavelength_m / (4.0 * math.pi**2 * geom.length_m)
    return prefactor * abs(1.0 / geom.radius_x_m - 1.0 / geom.radius_y_m)


def intensity_profile(mode, x_m, y_m, z_m=0.0):
    """Transverse Gaussian envelope normalised to 1 on the axis.

    Broadcasts over array inputs. The longitudinal standing-wave fringes are
    not included.
    """
    wx, wy = mode.spot_size(z_m)
    x = np.asarray(x_m, dtype=float)
    y = np.asarray(y_m, dtype=float)
    out = np.exp(-2.0 * x**2 / wx**2) * np.exp(-2.0 * y**2 / wy**2)
    return float(out) if out.ndim == 0 else out


def displacement_to_detuning(geom, frequency_hz, displacement_m):
    """Frequency shift caused by lengthening the cavity by ``displacement_m``."""
    if not frequency_hz > 0:
        raise NonPositiveInput(f"frequency must be > 0, got {frequency_hz!r}")
    return -frequency_hz * displacement_m / geom.length_m


def detuning_to_displacement(geom, frequency_hz, detuning_hz):
    if not frequency_hz > 0:
        raise NonPositiveInput(f"frequency must be > 0, got {frequency_hz!r}")
    return -geom.length_m * detuning_hz / frequency_hz
