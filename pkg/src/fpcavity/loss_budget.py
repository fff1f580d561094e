"""Quality factors, damping times and the superconducting loss model.

The cavity Q is written as G/R_e, with G a geometry factor and R_e an
effective surface resistance. R_e = R_BCS(T) + R_res where
R_BCS = (A/T) exp(-gap/T) and R_res lumps the residual and diffraction
contributions. Geometric loss limits (mirror aperture, surface roughness)
are computed independently and combined harmonically.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import nnls

from .errors import (
    DegenerateRegime,
    EmptyList,
    InsufficientData,
    NonPositiveInput,
    NonPositiveTemperature,
    TemperatureOutOfRange,
    ZeroRoughness,
)
from .fit_engine import FitOptions, Objective, least_squares
from .resonator_modes import SPEED_OF_LIGHT

__all__ = [
    "BcsParams",
    "ResistanceBudget",
    "QualitySummary",
    "ThermalPoint",
    "ThermalDataset",
    "DEFAULT_BCS",
    "DEFAULT_RESIDUAL_OHM",
    "DEFAULT_GEOMETRY_FACTOR_OHM",
    "DEFAULT_FREQUENCY_HZ",
    "MAX_BCS_TEMPERATURE_K",
    "LOSSLESS",
    "bcs_resistance",
    "q_from_resistance",
    "resistance_from_q",
    "residual_resistance_from_tc",
    "q_diffraction",
    "q_surface_scattering",
    "combine_q",
    "quality_summary",
    "tc_from_q",
    "tc_vs_temperature",
    "check_thermal_regimes",
    "fit_thermal",
    "synthetic_thermal_dataset",
    "BudgetReport",
    "loss_budget",
]

MAX_BCS_TEMPERATURE_K = 4.5
# Q of a channel that does not lose energy.
LOSSLESS = math.inf

DEFAULT_GEOMETRY_FACTOR_OHM = 2800.0
DEFAULT_FREQUENCY_HZ = 51.099e9
DEFAULT_RESIDUAL_OHM = 75e-9

THERMAL_PARAM_NAMES = ("a_coeff_ohm_k", "gap_over_kb_k", "r_residual_ohm")
THERMAL_PARAM_UNITS = {"a_coeff_ohm_k": "ohm*K", "gap_over_kb_k": "K", "r_residual_ohm": "ohm"}


def _require_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise NonPositiveInput(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class BcsParams:
    a_coeff_ohm_k: float
    gap_over_kb_k: float

    def __post_init__(self):
        _require_positive(a_coeff_ohm_k=self.a_coeff_ohm_k, gap_over_kb_k=self.gap_over_kb_k)


# A is calibrated so that R_BCS(1.6 K) matches the 75 nOhm residual plateau.
DEFAULT_BCS = BcsParams(a_coeff_ohm_k=0.0365, gap_over_kb_k=20.2)


@dataclass(frozen=True)
class ResistanceBudget:
    geometry_factor_ohm: float
    r_bcs_ohm: float
    r_residual_ohm: float
    r_diffraction_ohm: float = 0.0

    def __post_init__(self):
        _require_positive(geometry_factor_ohm=self.geometry_factor_ohm)
        for name in ("r_bcs_ohm", "r_residual_ohm", "r_diffraction_ohm"):
            if not getattr(self, name) >= 0:
                raise NonPositiveInput(f"{name} must be >= 0")

    @property
    def r_effective_ohm(self):
        return self.r_bcs_ohm + self.r_residual_ohm + self.r_diffraction_ohm

    @property
    def q_factor(self):
        return q_from_resistance(self.geometry_factor_ohm, self.r_effective_ohm)


@dataclass(frozen=True)
class QualitySummary:
    frequency_hz: float
    q_factor: float
    tc_s: float
    q_index: int
    finesse_q_index: float
    finesse_fsr: float
    fwhm_hz: float
    photon_distance_m: float


def bcs_resistance(p, temperature_k):
    """BCS surface resistance ``(A/T) exp(-gap/T)`` in ohm.

    Only defined here up to 4.5 K; the two-parameter exponential form is not
    meant for temperatures approaching Tc of niobium.
    """
    t = np.asarray(temperature_k, dtype=float)
    if np.any(t <= 0):
        raise NonPositiveTemperature(f"temperature must be > 0 K, got {temperature_k!r}")
    if np.any(t > MAX_BCS_TEMPERATURE_K):
        raise TemperatureOutOfRange(
            f"temperature {temperature_k!r} K outside the BCS model range (<= {MAX_BCS_TEMPERATURE_K} K)"
        )
    r = (p.a_coeff_ohm_k / t) * np.exp(-p.gap_over_kb_k / t)
    return float(r) if r.ndim == 0 else r


def q_from_resistance(geometry_factor_ohm, r_effective_ohm):
    _require_positive(geometry_factor_ohm=geometry_factor_ohm, r_effective_ohm=r_effective_ohm)
    return geometry_factor_ohm / r_effective_ohm


def resistance_from_q(geometry_factor_ohm, q_factor):
    _require_positive(geometry_factor_ohm=geometry_factor_ohm, q_factor=q_factor)
    return geometry_factor_ohm / q_factor


def residual_resistance_from_tc(geometry_factor_ohm, omega_rad_s, tc_s):
    """Effective resistance ``G / (omega Tc)`` implied by a measured damping time."""
    _require_positive(geometry_factor_ohm=geometry_factor_ohm, omega_rad_s=omega_rad_s, tc_s=tc_s)
    return geometry_factor_ohm / (omega_rad_s * tc_s)


def q_diffraction(geom, frequency_hz, mirror_spot_m):
    """Aperture-limited Q: ``(omega L / c) exp(D0^2 / (2 w^2))``.

    Very sensitive to ``mirror_spot_m``: a 0.7% change in w moves Q by ~15%
    for the 50 mm mirrors.
    """
    _require_positive(frequency_hz=frequency_hz, mirror_spot_m=mirror_spot_m)
    omega = 2.0 * math.pi * frequency_hz
    exponent = geom.mirror_diameter_m**2 / (2.0 * mirror_spot_m**2)
    return omega * geom.length_m / SPEED_OF_LIGHT * math.exp(exponent)


def q_surface_scattering(geom, frequency_hz):
    """Roughness-limited Q from total integrated scattering: ``c L / (4 omega h^2)``."""
    _require_positive(frequency_hz=frequency_hz)
    if geom.roughness_rms_m == 0:
        raise ZeroRoughness("a perfectly smooth mirror does not scatter; Q_surf is unbounded")
    omega = 2.0 * math.pi * frequency_hz
    return SPEED_OF_LIGHT * geom.length_m / (4.0 * omega * geom.roughness_rms_m**2)


def combine_q(q_list):
    """Harmonic combination of independent loss channels.

    ``LOSSLESS`` (infinite) entries contribute nothing.
    """
    q_list = list(q_list)
    if not q_list:
        raise EmptyList("need at least one Q value")
    inv = 0.0
    for q in q_list:
        if not q > 0:
            raise NonPositiveInput(f"Q values must be > 0, got {q!r}")
        inv += 1.0 / q
    return math.inf if inv == 0.0 else 1.0 / inv


def tc_from_q(frequency_hz, q_factor):
    _require_positive(frequency_hz=frequency_hz, q_factor=q_factor)
    return q_factor / (2.0 * math.pi * frequency_hz)


def quality_summary(frequency_hz, tc_s, q_index, length_m=None):
    """Q, finesse, linewidth and photon travel distance for a damping time.

    Two finesse conventions are reported. ``finesse_q_index`` is Q divided by the
    longitudinal index; ``finesse_fsr`` is FSR over the FWHM linewidth and
    needs the mirror spacing. Without ``length_m`` the spacing is taken as
    ``q_index * lambda / 2``, which makes both conventions coincide.
    """
    _require_positive(frequency_hz=frequency_hz, tc_s=tc_s, q_index=q_index)
    q = 2.0 * math.pi * frequency_hz * tc_s
    if length_m is None:
        fsr = frequency_hz / q_index
    else:
        _require_positive(length_m=length_m)
        fsr = SPEED_OF_LIGHT / (2.0 * length_m)
    return QualitySummary(
        frequency_hz=frequency_hz,
        q_factor=q,
        tc_s=tc_s,
        q_index=q_index,
        finesse_q_index=q / q_index,
        finesse_fsr=fsr * 2.0 * math.pi * tc_s,
        fwhm_hz=1.0 / (2.0 * math.pi * tc_s),
        photon_distance_m=SPEED_OF_LIGHT * tc_s,
    )


def tc_vs_temperature(p, r_residual_ohm, geometry_factor_ohm, frequency_hz, temperature_k):
    """Energy damping time ``G / (omega (R_BCS(T) + R_res))``. Vectorised over T."""
    _require_positive(
        r_residual_ohm=r_residual_ohm,
        geometry_factor_ohm=geometry_factor_ohm,
        frequency_hz=frequency_hz,
    )
    omega = 2.0 * math.pi * frequency_hz
    return geometry_factor_ohm / (omega * (bcs_resistance(p, temperature_k) + r_residual_ohm))


@dataclass(frozen=True)
class ThermalPoint:
    temperature_k: float
    tc_s: float
    tc_err_s: float = None


class ThermalDataset:
    """Damping times versus mirror temperature, sorted by temperature."""

    def __init__(self, points):
        pts = sorted(
            (p if isinstance(p, ThermalPoint) else ThermalPoint(*p) for p in points),
            key=lambda p: p.temperature_k,
        )
        for p in pts:
            if not p.temperature_k > 0:
                raise NonPositiveTemperature(f"temperature must be > 0 K, got {p.temperature_k!r}")
            if not p.tc_s > 0:
                raise NonPositiveInput(f"tc_s must be > 0, got {p.tc_s!r}")
            if p.tc_err_s is not None and not p.tc_err_s > 0:
                raise NonPositiveInput(f"tc_err_s must be > 0 when given, got {p.tc_err_s!r}")
        for a, b in zip(pts, pts[1:]):
            if not b.temperature_k > a.temperature_k:
                raise ValueError(f"duplicate temperature {a.temperature_k!r} K")
        self.points = tuple(pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, ThermalDataset) and self.points == other.points

    @property
    def temperatures(self):
        return np.array([p.temperature_k for p in self.points])

    @property
    def tc(self):
        return np.array([p.tc_s for p in self.points])

    @property
    def has_errors(self):
        return all(p.tc_err_s is not None for p in self.points)

    @property
    def tc_err(self):
        if not self.has_errors:
            return None
        return np.array([p.tc_err_s for p in self.points])


def check_thermal_regimes(data, min_per_regime=2):
    """Raise DegenerateRegime unless both sides of the knee are sampled.

    Points with Tc above 80% of the maximum count as saturated, points below
    50% as BCS-dominated. Without both, the gap and A cannot be separated
    from the residual resistance.
    """
    tc = data.tc
    top = tc.max()
    n_sat = int(np.sum(tc >= 0.8 * top))
    n_bcs = int(np.sum(tc <= 0.5 * top))
    if n_sat < min_per_regime or n_bcs < min_per_regime:
        raise DegenerateRegime(
            f"data do not span both regimes ({n_sat} saturated, {n_bcs} BCS-dominated points;"
            f" need {min_per_regime} of each)"
        )


def _default_thermal_init(data, geometry_factor_ohm, omega):
    t, tc = data.temperatures, data.tc
    r_eff = geometry_factor_ohm / (omega * tc)
    r_res = r_eff.min()
    r_bcs = r_eff - r_res
    hot = np.flatnonzero(r_bcs > r_res)
    if hot.size >= 2:
        i, j = hot[0], hot[-1]
        gap = math.log((r_bcs[j] * t[j]) / (r_bcs[i] * t[i])) / (1.0 / t[i] - 1.0 / t[j])
        if gap > 0:
            a = r_bcs[j] * t[j] * math.exp(gap / t[j])
            return a, gap, r_res
    return DEFAULT_BCS.a_coeff_ohm_k, DEFAULT_BCS.gap_over_kb_k, r_res


def _relinearize(init, t, tc, sigma, geometry_factor_ohm, omega):
    """Re-solve (A, R_res) at fixed gap.

    G/(omega Tc) = A exp(-gap/T)/T + R_res is linear in (A, R_res), so a
    non-negative linear least-squares solve puts the start on the right
    magnitude even when the initial gap is far off. Components that come out
    zero keep their initial value.
    """
    a0, gap0, r0 = init
    r_eff = geometry_factor_ohm / (omega * tc)
    sigma_r = r_eff * sigma / tc
    design = np.column_stack([np.exp(-gap0 / t) / t, np.ones_like(t)]) / sigma_r[:, None]
    with np.errstate(under="ignore"):
        (a, r_res), _ = nnls(design, r_eff / sigma_r)
    return (a if a > 0 else a0), gap0, (r_res if r_res > 0 else r0)


def fit_thermal(data, geometry_factor_ohm=DEFAULT_GEOMETRY_FACTOR_OHM,
                frequency_hz=DEFAULT_FREQUENCY_HZ, init=None, opts=None):
    """Fit (A, gap/kB, R_res) of :func:`tc_vs_temperature` to ``data``.

    With per-point errors the residuals are weighted by 1/sigma and the
    reported standard errors use those sigmas as absolute. Without errors the
    fit is unweighted and the scale comes from the residual variance.
    """
    _require_positive(geometry_factor_ohm=geometry_factor_ohm, frequency_hz=frequency_hz)
    if len(data) < 4:
        raise InsufficientData(f"need at least 4 points, got {len(data)}")
    if data.temperatures.max() > MAX_BCS_TEMPERATURE_K:
        raise TemperatureOutOfRange(
            f"data extend to {data.temperatures.max()} K, above {MAX_BCS_TEMPERATURE_K} K"
        )
    check_thermal_regimes(data)
    omega = 2.0 * math.pi * frequency_hz
    t, tc = data.temperatures, data.tc
    sigma = data.tc_err if data.has_errors else np.ones_like(tc)

    def residuals(p):
        a, gap, r_res = p
        model = geometry_factor_ohm / (omega * ((a / t) * np.exp(-gap / t) + r_res))
        return (tc - model) / sigma

    obj = Objective(residuals, THERMAL_PARAM_NAMES, log_params=(True, True, True))
    if init is None:
        init = _default_thermal_init(data, geometry_factor_ohm, omega)
    init = _relinearize(init, t, tc, sigma, geometry_factor_ohm, omega)
    return least_squares(obj, init, opts or FitOptions(), absolute_sigma=data.has_errors)


def synthetic_thermal_dataset(temperatures_k, p=DEFAULT_BCS, r_residual_ohm=DEFAULT_RESIDUAL_OHM,
                              geometry_factor_ohm=DEFAULT_GEOMETRY_FACTOR_OHM,
                              frequency_hz=DEFAULT_FREQUENCY_HZ, rel_noise=0.0, seed=None):
    """Tc(T) points from the model with multiplicative Gaussian noise.

    Each point carries ``tc_err_s = rel_noise * Tc_true`` when ``rel_noise > 0``.
    """
    t = np.asarray(temperatures_k, dtype=float)
    truth = np.atleast_1d(tc_vs_temperature(p, r_residual_ohm, geometry_factor_ohm, frequency_hz, t))
    if rel_noise > 0:
        rng = np.random.default_rng(seed)
        observed = truth * (1.0 + rel_noise * rng.standard_normal(truth.size))
        errors = rel_noise * truth
        points = zip(t.tolist(), observed.tolist(), errors.tolist())
    else:
        points = ((ti, ci, None) for ti, ci in zip(t.tolist(), truth.tolist()))
    return ThermalDataset(ThermalPoint(*pt) for pt in points)


@dataclass(frozen=True)
class BudgetReport:
    """Per-channel loss budget of a cavity at one temperature.

    ``geometric_limit_q`` combines the diffraction and roughness limits.
    ``q_factor`` is G / (R_BCS + R_res), where R_res is the measured
    residual-plus-diffraction plateau; the geometric limit is an independent
    forward estimate and is not folded in again.
    """

    geometry: dict
    frequency_hz: float
    temperature_k: float
    geometry_factor_ohm: float
    q_index: int
    mirror_spot_m: float
    mirror_spot_source: str
    q_diffraction: float
    q_surface: float
    r_bcs_ohm: float
    q_bcs: float
    r_residual_ohm: float
    q_residual: float
    geometric_limit_q: float
    summary: QualitySummary
    q_diffraction_log_sensitivity: float
    bcs: BcsParams = DEFAULT_BCS

    @property
    def q_factor(self):
        return self.summary.q_factor

    def _q_diff_factor(self, spot_ratio):
        exponent = self.geometry["mirror_diameter_m"] ** 2 / (2.0 * self.mirror_spot_m**2)
        return math.exp(exponent * (1.0 / spot_ratio**2 - 1.0))

    def to_dict(self):
        def q(value):
            return None if math.isinf(value) else value

        return {
            "geometry": dict(self.geometry),
            "frequency_hz": self.frequency_hz,
            "temperature_k": self.temperature_k,
            "geometry_factor_ohm": self.geometry_factor_ohm,
            "q_index": self.q_index,
            "channels": {
                "diffraction": {
                    "q": q(self.q_diffraction),
                    "mirror_spot_m": self.mirror_spot_m,
                    "mirror_spot_source": self.mirror_spot_source,
                    "mirror_diameter_m": self.geometry["mirror_diameter_m"],
                    "dlnq_dlnw": self.q_diffraction_log_sensitivity,
                },
                "surface": {
                    "q": q(self.q_surface),
                    "lossless": math.isinf(self.q_surface),
                    "roughness_rms_m": self.geometry["roughness_rms_m"],
                },
                "bcs": {
                    "q": q(self.q_bcs),
                    "r_ohm": self.r_bcs_ohm,
                    "a_coeff_ohm_k": self.bcs.a_coeff_ohm_k,
                    "gap_over_kb_k": self.bcs.gap_over_kb_k,
                },
                "residual": {"q": q(self.q_residual), "r_ohm": self.r_residual_ohm},
            },
            "geometric_limit_q": q(self.geometric_limit_q),
            "q_factor": self.summary.q_factor,
            "tc_s": self.summary.tc_s,
            "finesse_q_index": self.summary.finesse_q_index,
            "finesse_fsr": self.summary.finesse_fsr,
            "fwhm_hz": self.summary.fwhm_hz,
            "photon_distance_m": self.summary.photon_distance_m,
            "note": (
                "Q_diff depends exponentially on the mirror spot size "
                f"(dlnQ/dlnw = {self.q_diffraction_log_sensitivity:.4g}): "
                f"w larger by 1% gives Q_diff x {self._q_diff_factor(1.01):.3g}, "
                f"smaller by 1% gives x {self._q_diff_factor(0.99):.3g}."
            ),
        }


def loss_budget(geom, frequency_hz=DEFAULT_FREQUENCY_HZ, temperature_k=0.8, bcs=DEFAULT_BCS,
                r_residual_ohm=DEFAULT_RESIDUAL_OHM, geometry_factor_ohm=DEFAULT_GEOMETRY_FACTOR_OHM,
                q_index=9, mirror_spot_m=None):
    """Assemble a :class:`BudgetReport`.

    Without ``mirror_spot_m`` the spot size at the mirrors is computed for the
    mean-radius cavity at ``frequency_hz``.
    """
    from .resonator_modes import mean_radius_geometry, mode_geometry

    if mirror_spot_m is None:
        mode = mode_geometry(mean_radius_geometry(geom), SPEED_OF_LIGHT / frequency_hz)
        mirror_spot_m = mode.mirror_spot_x_m
        source = "computed (mean radius)"
    else:
        source = "given"
    q_diff = q_diffraction(geom, frequency_hz, mirror_spot_m)
    try:
        q_surf = q_surface_scattering(geom, frequency_hz)
    except ZeroRoughness:
        q_surf = LOSSLESS
    r_bcs = bcs_resistance(bcs, temperature_k)
    q_bcs = LOSSLESS if r_bcs == 0 else q_from_resistance(geometry_factor_ohm, r_bcs)
    q_res = q_from_resistance(geometry_factor_ohm, r_residual_ohm)
    q_total = combine_q([q_bcs, q_res])
    summary = quality_summary(frequency_hz, tc_from_q(frequency_hz, q_total), q_index, geom.length_m)
    return BudgetReport(
        geometry={
            "length_m": geom.length_m,
            "radius_x_m": geom.radius_x_m,
            "radius_y_m": geom.radius_y_m,
            "mirror_diameter_m": geom.mirror_diameter_m,
            "roughness_rms_m": geom.roughness_rms_m,
        },
        frequency_hz=frequency_hz,
        temperature_k=temperature_k,
        geometry_factor_ohm=geometry_factor_ohm,
        q_index=q_index,
        mirror_spot_m=mirror_spot_m,
        mirror_spot_source=source,
        q_diffraction=q_diff,
        q_surface=q_surf,
        r_bcs_ohm=r_bcs,
        q_bcs=q_bcs,
        r_residual_ohm=r_residual_ohm,
        q_residual=q_res,
        geometric_limit_q=combine_q([q_diff, q_surf]),
        summary=summary,
        q_diffraction_log_sensitivity=-(geom.mirror_diameter_m / mirror_spot_m) ** 2,
        bcs=bcs,
    )
