"""Atomic-probe ring-down: simulation and damping-time estimation.

After a microwave pulse, the stored energy decays as E0 exp(-t/Tc). A probe
atom sent at delay t makes a transition with a probability that saturates with
the field energy. Injecting with attenuations of 10 log10(e) dB steps divides
E0 by e, which delays the whole P(t) curve by exactly Tc, whatever the
saturation law. Two estimators are provided:

* :func:`fit_ringdown` fits a saturating absorption law jointly to all curves;
* :func:`shift_estimate` only measures the time shifts between curves.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    IdentifiabilityError,
    InsufficientData,
    InvalidDesign,
    NegativeEnergy,
    NonOverlappingSupport,
    NonPositiveTc,
)
from .fit_engine import FitOptions, FitResult, Objective, least_squares

__all__ = [
    "DB_PER_E_FOLD",
    "ProbeModel",
    "RingdownCurve",
    "RingdownDataset",
    "CurveDesign",
    "SimulationDesign",
    "FitResult",
    "PairShift",
    "ShiftEstimate",
    "field_energy",
    "energy_scale",
    "transition_probability",
    "curve_probability",
    "simulate",
    "fit_ringdown",
    "shift_estimate",
    "model_curves",
    "RINGDOWN_PARAM_NAMES",
    "RINGDOWN_PARAM_UNITS",
]

# Attenuation that divides the injected energy by e: 10/ln(10) = 4.3429 dB.
DB_PER_E_FOLD = 10.0 / math.log(10.0)

RINGDOWN_PARAM_NAMES = ("tc_s", "u0", "p_background", "p_saturated")
RINGDOWN_PARAM_UNITS = {"tc_s": "s", "u0": "1", "p_background": "1", "p_saturated": "1"}


@dataclass(frozen=True)
class ProbeModel:
    """Saturating probe response.

    ``u0`` is the injected energy (at zero attenuation) in units of the
    saturation energy; only this ratio is observable.
    """

    p_background: float
    p_saturated: float
    u0: float

    def __post_init__(self):
        if not 0.0 <= self.p_background < self.p_saturated <= 1.0:
            raise ValueError(
                f"need 0 <= p_background < p_saturated <= 1, got "
                f"{self.p_background!r}, {self.p_saturated!r}"
            )
        if not self.u0 > 0:
            raise ValueError(f"u0 must be > 0, got {self.u0!r}")


def field_energy(e0, tc_s, t_s):
    if not tc_s > 0:
        raise NonPositiveTc(f"Tc must be > 0, got {tc_s!r}")
    return e0 * np.exp(-np.asarray(t_s, dtype=float) / tc_s)


def energy_scale(attenuation_db):
    """Energy factor 10^(-att/10) of a power attenuation in dB."""
    return 10.0 ** (-np.asarray(attenuation_db, dtype=float) / 10.0)


def transition_probability(m, u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise NegativeEnergy(f"energy must be >= 0, got {u!r}")
    p = m.p_background + (m.p_saturated - m.p_background) * -np.expm1(-u)
    return float(p) if p.ndim == 0 else p


def curve_probability(m, tc_s, attenuation_db, t_s):
    if np.any(np.asarray(attenuation_db) < 0):
        raise ValueError("attenuation must be >= 0 dB")
    u = m.u0 * energy_scale(attenuation_db) * field_energy(1.0, tc_s, t_s)
    return transition_probability(m, u)


def _model_fraction(params, attenuation_db, t):
    tc, u0, p_bg, p_sat = params
    u = u0 * 10.0 ** (-attenuation_db / 10.0) * np.exp(-t / tc)
    return p_bg + (p_sat - p_bg) * -np.expm1(-u)


class RingdownCurve:
    """Counts of detected transitions versus probe delay for one attenuation."""

    def __init__(self, attenuation_db, time_s, detected, total):
        self.attenuation_db = float(attenuation_db)
        self.time_s = np.asarray(time_s, dtype=float)
        self.detected = np.asarray(detected, dtype=np.int64)
        self.total = np.asarray(total, dtype=np.int64)
        n = self.time_s.size
        if not (self.detected.shape == self.total.shape == (n,) and self.time_s.ndim == 1):
            raise ValueError("time_s, detected and total must be 1-D of equal length")
        if not self.attenuation_db >= 0:
            raise ValueError(f"attenuation must be >= 0 dB, got {attenuation_db!r}")
        if np.any(self.time_s < 0):
            raise ValueError("times must be >= 0")
        if np.any(np.diff(self.time_s) <= 0):
            raise ValueError(f"times must be strictly increasing (attenuation {self.attenuation_db} dB)")
        if np.any(self.total <= 0) or np.any(self.detected < 0) or np.any(self.detected > self.total):
            raise ValueError("need 0 <= detected <= total and total > 0")
        for arr in (self.time_s, self.detected, self.total):
            arr.flags.writeable = False

    def __len__(self):
        return self.time_s.size

    def __eq__(self, other):
        return (
            isinstance(other, RingdownCurve)
            and self.attenuation_db == other.attenuation_db
            and np.array_equal(self.time_s, other.time_s)
            and np.array_equal(self.detected, other.detected)
            and np.array_equal(self.total, other.total)
        )

    def __repr__(self):
        return f"RingdownCurve(attenuation_db={self.attenuation_db!r}, points={len(self)})"

    @property
    def fraction(self):
        return self.detected / self.total

    @property
    def fraction_variance(self):
        """Binomial variance of the observed fraction, floored at 0.25/n for 0 or 1."""
        p = self.fraction
        var = p * (1.0 - p) / self.total
        edge = (self.detected == 0) | (self.detected == self.total)
        var[edge] = 0.25 / self.total[edge]
        return var


class RingdownDataset:
    def __init__(self, curves, frequency_hz=None, seed=None):
        self.curves = tuple(curves)
        atts = [c.attenuation_db for c in self.curves]
        if len(set(atts)) != len(atts):
            raise ValueError("attenuations must be pairwise distinct")
        if not any(len(c) for c in self.curves):
            raise ValueError("dataset has no points")
        self.frequency_hz = frequency_hz
        self.seed = seed

    def __eq__(self, other):
        return isinstance(other, RingdownDataset) and self.curves == other.curves

    def __repr__(self):
        return f"RingdownDataset(curves={list(self.curves)!r}, seed={self.seed!r})"

    @property
    def attenuations_db(self):
        return tuple(c.attenuation_db for c in self.curves)

    @property
    def n_points(self):
        return sum(len(c) for c in self.curves)

    def curve(self, attenuation_db):
        for c in self.curves:
            if c.attenuation_db == attenuation_db:
                return c
        raise KeyError(attenuation_db)


@dataclass(frozen=True)
class CurveDesign:
    attenuation_db: float
    times_s: tuple
    shots: int

    def validate(self):
        t = np.asarray(self.times_s, dtype=float)
        if t.size == 0:
            raise InvalidDesign(f"empty time grid for attenuation {self.attenuation_db} dB")
        if np.any(t < 0):
            raise InvalidDesign("probe delays must be >= 0")
        if np.unique(t).size != t.size:
            raise InvalidDesign(f"duplicate times for attenuation {self.attenuation_db} dB")
        if not (isinstance(self.shots, (int, np.integer)) and self.shots >= 1):
            raise InvalidDesign(f"shots per point must be an integer >= 1, got {self.shots!r}")
        if not self.attenuation_db >= 0:
            raise InvalidDesign("attenuation must be >= 0 dB")


@dataclass(frozen=True)
class SimulationDesign:
    """Flat simulation recipe: truth parameters plus a shared time grid."""

    tc_s: float
    u0: float
    p_background: float
    p_saturated: float
    attenuations_db: tuple
    t_start_s: float
    t_end_s: float
    n_points: int
    shots: int = 1600
    seed: int = None

    @classmethod
    def reference(cls, tc_s=0.112, seed=None, shots=1600):
        """Three curves one e-fold apart, 25 delays over 400 ms."""
        return cls(
            tc_s=tc_s, u0=7.0, p_background=0.02, p_saturated=0.85,
            attenuations_db=(0.0, DB_PER_E_FOLD, 2.0 * DB_PER_E_FOLD),
            t_start_s=0.0, t_end_s=0.4, n_points=25, shots=shots, seed=seed,
        )

    @property
    def model(self):
        return ProbeModel(self.p_background, self.p_saturated, self.u0)

    def curve_designs(self):
        if not (isinstance(self.n_points, (int, np.integer)) and self.n_points >= 1):
            raise InvalidDesign(f"n_points must be an integer >= 1, got {self.n_points!r}")
        if self.n_points > 1 and not self.t_end_s > self.t_start_s:
            raise InvalidDesign("t_end_s must exceed t_start_s")
        if not self.attenuations_db:
            raise InvalidDesign("no attenuations given")
        times = tuple(np.linspace(self.t_start_s, self.t_end_s, self.n_points).tolist())
        return [CurveDesign(float(a), times, self.shots) for a in self.attenuations_db]

    def simulate(self, seed=None):
        seed = self.seed if seed is None else seed
        try:
            model = self.model
        except ValueError as exc:
            raise InvalidDesign(str(exc)) from None
        if not self.tc_s > 0:
            raise InvalidDesign("tc_s must be > 0")
        return simulate(model, self.tc_s, self.curve_designs(), seed)


def _curve_rng(seed, attenuation_db):
    # Keyed by the attenuation bit pattern so draws do not depend on curve order.
    key = struct.unpack("<Q", struct.pack("<d", float(attenuation_db)))[0]
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def simulate(m, tc_s, design, seed=None):
    """Binomial counts for every (attenuation, delay) point of ``design``.

    ``design`` is a sequence of :class:`CurveDesign`. The same seed and design
    always give the same dataset, and each curve's draws are independent of
    the position of that curve in ``design``. With ``seed=None`` fresh entropy
    is drawn and recorded on the returned dataset.
    """
    if not tc_s > 0:
        raise NonPositiveTc(f"Tc must be > 0, got {tc_s!r}")
    design = list(design)
    if not design:
        raise InvalidDesign("design has no curves")
    for d in design:
        d.validate()
    atts = [d.attenuation_db for d in design]
    if len(set(atts)) != len(atts):
        raise InvalidDesign("attenuations must be pairwise distinct")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**64)
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed < 2**64):
        raise InvalidDesign(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    curves = []
    for d in design:
        t = np.sort(np.asarray(d.times_s, dtype=float))
        p = np.atleast_1d(curve_probability(m, tc_s, d.attenuation_db, t))
        total = np.full(t.size, d.shots, dtype=np.int64)
        detected = _curve_rng(int(seed), d.attenuation_db).binomial(total, np.clip(p, 0.0, 1.0))
        curves.append(RingdownCurve(d.attenuation_db, t, detected, total))
    return RingdownDataset(curves, seed=int(seed))


def _stack(data):
    att = np.concatenate([np.full(len(c), c.attenuation_db) for c in data.curves])
    t = np.concatenate([c.time_s for c in data.curves])
    f = np.concatenate([c.fraction for c in data.curves])
    var = np.concatenate([c.fraction_variance for c in data.curves])
    return att, t, f, var


def _default_init(data, flags):
    _, t, f, _ = _stack(data)
    tc0 = None
    if len([c for c in data.curves if len(c)]) >= 2:
        try:
            tc0 = shift_estimate(data).tc_s
        except (NonOverlappingSupport, IdentifiabilityError):
            flags.append("shift_init_failed")
        if tc0 is not None and not (math.isfinite(tc0) and tc0 > 0):
            tc0 = None
    if tc0 is None:
        span = t.max() - t.min()
        tc0 = span / 3.0 if span > 0 else 1.0
    p_sat = float(f.max())
    p_bg = float(f.min())
    if p_sat <= p_bg:
        p_sat = p_bg + 0.5
    return (tc0, 5.0, p_bg, p_sat)


def fit_ringdown(data, init=None, opts=None):
    """Joint weighted fit of all curves to the saturating absorption law.

    Free parameters: ``tc_s``, ``u0`` (log space) and ``p_background``,
    ``p_saturated``. Attenuations are known. Residuals are observed fractions
    minus model, divided by the binomial standard deviation of the observed
    fraction.

    A dataset with a single attenuation is fitted but flagged
    ``single_curve``: Tc then rests entirely on the assumed saturation law.
    """
    curves = [c for c in data.curves if len(c)]
    n_free = len(RINGDOWN_PARAM_NAMES)
    if data.n_points <= n_free:
        raise InsufficientData(f"need more than {n_free} points, got {data.n_points}")
    flags = []
    if len(curves) < 2:
        flags.append("single_curve")
    if init is None:
        init = _default_init(data, flags)
    att, t, f, var = _stack(data)
    sigma = np.sqrt(var)

    def residuals(p):
        return (f - _model_fraction(p, att, t)) / sigma

    obj = Objective(residuals, RINGDOWN_PARAM_NAMES, log_params=(True, True, False, False))
    result = least_squares(obj, init, opts or FitOptions())
    if flags:
        result = FitResult(**{**result.__dict__, "flags": tuple(flags) + result.flags})
    return result


def model_curves(params, attenuations_db, times_s):
    """Model probabilities for plotting: list of (attenuation, times, p)."""
    if isinstance(params, dict):
        params = [params[name] for name in RINGDOWN_PARAM_NAMES]
    t = np.asarray(times_s, dtype=float)
    return [(float(a), t, _model_fraction(params, float(a), t)) for a in attenuations_db]


@dataclass(frozen=True)
class PairShift:
    attenuation_low_db: float
    attenuation_high_db: float
    shift_s: float
    tc_s: float
    std_error_s: float
    n_points: int


@dataclass(frozen=True)
class ShiftEstimate:
    tc_s: float
    std_error_s: float
    pairs: tuple


class _Interp:
    def __init__(self, curve):
        self.t = curve.time_s
        self.f = curve.fraction
        self.var = curve.fraction_variance

    def locate(self, x):
        idx = np.clip(np.searchsorted(self.t, x, side="right") - 1, 0, self.t.size - 2)
        alpha = (x - self.t[idx]) / (self.t[idx + 1] - self.t[idx])
        return idx, alpha

    def __call__(self, x):
        idx, alpha = self.locate(x)
        return (1.0 - alpha) * self.f[idx] + alpha * self.f[idx + 1]


def _pair_shift(lo, hi, background, off_lo, off_hi, n_total):
    """Shift of curve ``hi`` (more attenuated) relative to ``lo``.

    Returns the shift and the linear influence of every data point on it.
    """
    if len(lo) < 2 or len(hi) < 1:
        raise NonOverlappingSupport("curves too short to interpolate")
    f_hi = hi.fraction
    threshold = background + 0.1 * (f_hi.max() - background)
    sel = np.flatnonzero(f_hi > threshold)
    if sel.size < 3:
        raise NonOverlappingSupport(
            f"fewer than 3 informative points in the {hi.attenuation_db} dB curve"
        )
    tk_all = hi.time_s[sel]
    fk_all = f_hi[sel]
    interp = _Interp(lo)
    # Keep at least 3 informative points inside the support of ``lo``.
    tau_lo = max(0.0, lo.time_s[0] - tk_all[0])
    tau_hi = lo.time_s[-1] - tk_all[2]
    if not tau_hi > tau_lo:
        raise NonOverlappingSupport(
            f"curves at {lo.attenuation_db} and {hi.attenuation_db} dB do not overlap after shifting"
        )

    def active(tau):
        x = tk_all + tau
        return (x >= lo.time_s[0]) & (x <= lo.time_s[-1])

    def cost(tau):
        keep = active(tau)
        return float(np.mean((fk_all[keep] - interp(tk_all[keep] + tau)) ** 2))

    grid = np.linspace(tau_lo, tau_hi, 801)
    x = tk_all[None, :] + grid[:, None]
    inside = (x >= lo.time_s[0]) & (x <= lo.time_s[-1])
    sq = np.where(inside, (fk_all[None, :] - interp(x)) ** 2, 0.0)
    costs = sq.sum(axis=1) / inside.sum(axis=1)
    i = int(np.argmin(costs))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(cost, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12 * (tau_hi - tau_lo + 1.0)})
    tau = float(res.x) if res.fun <= costs[i] else float(grid[i])
    keep = active(tau)
    sel = sel[keep]
    tk = tk_all[keep]

    # Gauss-Newton influence of each observed fraction on tau.
    idx, alpha = interp.locate(tk + tau)
    slope = (interp.f[idx + 1] - interp.f[idx]) / (interp.t[idx + 1] - interp.t[idx])
    s2 = float(slope @ slope)
    influence = np.zeros(n_total)
    if s2 > 0:
        np.add.at(influence, off_hi + sel, slope / s2)
        np.add.at(influence, off_lo + idx, -slope * (1.0 - alpha) / s2)
        np.add.at(influence, off_lo + idx + 1, -slope * alpha / s2)
    else:
        influence[:] = np.inf
    return tau, influence, sel.size


def shift_estimate(data):
    """Model-free Tc from the time shifts between curves of different attenuation.

    For each pair of curves, the more attenuated one is compared with the
    linearly interpolated other one, shifted by tau; tau minimises the mean
    squared difference over the informative points (those clearly above
    background). Each pair gives Tc = tau * (10/ln10) / delta_att. Pairs are
    averaged with inverse-variance weights; the standard error is propagated
    from the binomial variance of every point, so correlations between pairs
    sharing a curve are accounted for.
    """
    curves = sorted((c for c in data.curves if len(c)), key=lambda c: c.attenuation_db)
    if len(curves) < 2:
        raise IdentifiabilityError(
            "shift estimation needs at least two attenuations; a single curve carries no shift information"
        )
    offsets = np.concatenate([[0], np.cumsum([len(c) for c in curves])])
    pos = int(offsets[-1])
    var = np.concatenate([c.fraction_variance for c in curves])
    background = min(float(c.fraction.min()) for c in curves)

    pairs, influences = [], []
    for i, lo in enumerate(curves):
        for j in range(i + 1, len(curves)):
            hi = curves[j]
            try:
                tau, infl, n = _pair_shift(lo, hi, background, offsets[i], offsets[j], pos)
            except NonOverlappingSupport:
                continue
            scale = DB_PER_E_FOLD / (hi.attenuation_db - lo.attenuation_db)
            infl = infl * scale
            se = float(np.sqrt(infl**2 @ var))
            pairs.append(PairShift(lo.attenuation_db, hi.attenuation_db, tau, tau * scale, se, n))
            influences.append(infl)
    if not pairs:
        raise NonOverlappingSupport("no pair of curves overlaps after shifting")

    se = np.array([p.std_error_s for p in pairs])
    tcs = np.array([p.tc_s for p in pairs])
    usable = np.isfinite(se) & (se > 0)
    if not usable.any():
        return ShiftEstimate(float(np.mean(tcs)), math.inf, tuple(pairs))
    w = np.where(usable, 1.0 / np.where(usable, se, 1.0) ** 2, 0.0)
    w = w / w.sum()
    tc = float(w @ tcs)
    total_infl = sum(wi * infl for wi, infl in zip(w, influences) if wi > 0)
    return ShiftEstimate(tc, float(np.sqrt(total_infl**2 @ var)), tuple(pairs))
