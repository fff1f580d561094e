import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c

from fpcavity.errors import (
    DegenerateRegime,
    EmptyList,
    InsufficientData,
    NonPositiveTemperature,
    TemperatureOutOfRange,
    ZeroRoughness,
)
from fpcavity.fit_engine import numeric_jacobian
from fpcavity.loss_budget import (
    DEFAULT_BCS,
    LOSSLESS,
    BcsParams,
    ThermalDataset,
    ThermalPoint,
    bcs_resistance,
    combine_q,
    fit_thermal,
    loss_budget,
    q_diffraction,
    q_from_resistance,
    q_surface_scattering,
    quality_summary,
    residual_resistance_from_tc,
    resistance_from_q,
    synthetic_thermal_dataset,
    tc_from_q,
    tc_vs_temperature,
)
from fpcavity.resonator_modes import REFERENCE_GEOMETRY, CavityGeometry

NU = 51.099e9
OMEGA = 2 * math.pi * NU
G = 2800.0
TEMPS = np.array([0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.5, 3.0, 3.5, 4.2])
TRUTH = {"a_coeff_ohm_k": 0.0365, "gap_over_kb_k": 20.2, "r_residual_ohm": 75e-9}


# -- surface resistance ----------------------------------------------------------

def test_bcs_example():
    assert bcs_resistance(DEFAULT_BCS, 1.6) == pytest.approx(75.0e-9, rel=1e-3)
    ratio = bcs_resistance(DEFAULT_BCS, 1.6) / bcs_resistance(DEFAULT_BCS, 3.2)
    assert ratio == pytest.approx(2.0 * math.exp(-20.2 / 3.2), rel=1e-12)
    assert bcs_resistance(DEFAULT_BCS, 0.05) < 1e-100


def test_bcs_domain():
    with pytest.raises(NonPositiveTemperature):
        bcs_resistance(DEFAULT_BCS, 0.0)
    with pytest.raises(TemperatureOutOfRange):
        bcs_resistance(DEFAULT_BCS, 5.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 4.4), st.floats(1e-4, 0.1), st.floats(1e-3, 1.0), st.floats(5.0, 40.0))
def test_bcs_increasing(t, dt, a, gap):
    p = BcsParams(a, gap)
    t2 = min(t + dt, 4.5)
    with np.errstate(under="ignore"):
        lo, hi = bcs_resistance(p, t), bcs_resistance(p, t2)
    assert hi >= lo
    if lo > 1e-290:
        assert hi > lo


def test_q_resistance_conversions():
    assert q_from_resistance(G, 67.1e-9) == pytest.approx(4.173e10, rel=1e-3)
    assert resistance_from_q(1089.0, 4.0e10) == pytest.approx(27.2e-9, rel=1e-3)
    assert q_from_resistance(G, G) == 1.0
    assert residual_resistance_from_tc(G, OMEGA, 0.130) == pytest.approx(67.1e-9, rel=1e-3)


# -- geometric limits --------------------------------------------------------------

def test_q_diffraction():
    w = 1.23 * 6.0e-3
    q = q_diffraction(REFERENCE_GEOMETRY, NU, w)
    assert q == pytest.approx(OMEGA * 27.57e-3 / c * math.exp(0.05**2 / (2 * w**2)), rel=1e-12)
    assert q == pytest.approx(2.75e11, rel=0.01)
    tiny = CavityGeometry(27.57e-3, 39.4e-3, 40.6e-3, 1e-9)
    assert q_diffraction(tiny, NU, w) == pytest.approx(29.5, rel=1e-3)


def test_q_diffraction_sensitivity():
    w = 7.38e-3
    ratio = q_diffraction(REFERENCE_GEOMETRY, NU, 1.01 * w) / q_diffraction(REFERENCE_GEOMETRY, NU, w)
    assert ratio == pytest.approx(math.exp(0.05**2 / (2 * w**2) * (1 / 1.01**2 - 1)), rel=1e-12)
    assert ratio < 0.7


def test_q_surface():
    q = q_surface_scattering(REFERENCE_GEOMETRY, NU)
    assert q == pytest.approx(6.436e10, rel=1e-3)
    rough = CavityGeometry(27.57e-3, 39.4e-3, 40.6e-3, 0.05, 20e-9)
    assert q_surface_scattering(rough, NU) == pytest.approx(q / 4, rel=1e-12)
    assert q_surface_scattering(REFERENCE_GEOMETRY, 2 * NU) == pytest.approx(q / 2, rel=1e-12)
    with pytest.raises(ZeroRoughness):
        q_surface_scattering(CavityGeometry(27.57e-3, 39.4e-3, 40.6e-3, 0.05), NU)


def test_combine():
    assert combine_q([2.7e11, 6.4e10]) == pytest.approx(5.17e10, rel=1e-3)
    assert combine_q([3.3e10]) == pytest.approx(3.3e10, rel=1e-15)
    assert combine_q([3.3e10, LOSSLESS]) == pytest.approx(3.3e10, rel=1e-15)
    assert combine_q([LOSSLESS]) == LOSSLESS
    with pytest.raises(EmptyList):
        combine_q([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1.0, 1e15), min_size=1, max_size=8), st.randoms())
def test_combine_properties(qs, rnd):
    total = combine_q(qs)
    assert total <= min(qs) * (1 + 1e-12)
    shuffled = list(qs)
    rnd.shuffle(shuffled)
    assert combine_q(shuffled) == pytest.approx(total, rel=1e-12)


# -- conversions -----------------------------------------------------------------

def test_quality_summary_example():
    s = quality_summary(NU, 0.130, 9)
    assert s.q_factor == pytest.approx(4.174e10, rel=1e-3)
    assert s.finesse_q_index == pytest.approx(4.638e9, rel=1e-3)
    assert s.fwhm_hz == pytest.approx(1.2243, rel=1e-3)
    assert s.photon_distance_m == pytest.approx(3.897e7, rel=1e-3)
    assert s.finesse_fsr == pytest.approx(s.finesse_q_index, rel=1e-12)
    with_length = quality_summary(NU, 0.130, 9, length_m=27.57e-3)
    fsr = c / (2 * 27.57e-3)
    assert with_length.finesse_fsr / with_length.finesse_q_index == pytest.approx(9 * fsr / NU, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e9, 1e12), st.floats(1e-6, 10.0))
def test_tc_round_trip(nu, tc):
    assert tc_from_q(nu, quality_summary(nu, tc, 1).q_factor) == pytest.approx(tc, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(10.0, 1e4), st.floats(1e9, 1e12), st.floats(1e-6, 10.0))
def test_dimensional_closure(g, nu, tc):
    w = 2 * math.pi * nu
    assert q_from_resistance(g, residual_resistance_from_tc(g, w, tc)) == pytest.approx(w * tc, rel=1e-12)


def test_tc_vs_temperature():
    plateau = G / (OMEGA * 75e-9)
    assert tc_vs_temperature(DEFAULT_BCS, 75e-9, G, NU, 0.8) == pytest.approx(0.1163, rel=1e-3)
    assert tc_vs_temperature(DEFAULT_BCS, 75e-9, G, NU, 0.8) < plateau
    # with A tuned so that R_BCS(1.6 K) equals R_res, Tc halves there
    a = 75e-9 * 1.6 * math.exp(20.2 / 1.6)
    half = tc_vs_temperature(BcsParams(a, 20.2), 75e-9, G, NU, 1.6)
    assert half == pytest.approx(plateau / 2, rel=1e-12)


# -- budget report -------------------------------------------------------------------

def test_budget_report():
    rep = loss_budget(REFERENCE_GEOMETRY, NU, mirror_spot_m=1.23 * 6.0e-3)
    assert rep.q_surface == pytest.approx(6.436e10, rel=1e-3)
    assert rep.geometric_limit_q == pytest.approx(combine_q([rep.q_diffraction, rep.q_surface]), rel=1e-12)
    assert rep.geometric_limit_q == pytest.approx(5.2e10, rel=0.03)
    assert rep.geometric_limit_q >= 4.2e10
    d = rep.to_dict()
    assert d["q_factor"] == pytest.approx(rep.q_factor)


def test_budget_lossless_surface():
    smooth = CavityGeometry(27.57e-3, 39.4e-3, 40.6e-3, 0.05, 0.0)
    rep = loss_budget(smooth, NU)
    assert rep.q_surface == LOSSLESS
    assert rep.geometric_limit_q == rep.q_diffraction
    d = rep.to_dict()
    assert d["channels"]["surface"]["q"] is None
    assert d["channels"]["surface"]["lossless"] is True


def test_budget_default_spot_is_mean_radius_mirror_spot():
    rep = loss_budget(REFERENCE_GEOMETRY, NU)
    assert 7.3e-3 < rep.mirror_spot_m < 7.45e-3
    assert 2.4e11 <= rep.q_diffraction <= 3.3e11


# -- thermal fit -----------------------------------------------------------------------

def _assert_truth(res, rtol):
    for k, v in TRUTH.items():
        assert res[k] == pytest.approx(v, rel=rtol)


def test_thermal_fit_noiseless_default_init():
    data = synthetic_thermal_dataset(TEMPS)
    res = fit_thermal(data)
    _assert_truth(res, 1e-6)
    assert np.all(np.diff(res.ssr_history) <= 1e-12 * np.asarray(res.ssr_history[:-1]))


@pytest.mark.parametrize("fa", [1 / 3, 3.0])
@pytest.mark.parametrize("fg", [1 / 3, 3.0])
@pytest.mark.parametrize("fr", [1 / 3, 3.0])
def test_thermal_fit_noiseless_perturbed_init(fa, fg, fr):
    data = synthetic_thermal_dataset(TEMPS)
    init = (0.0365 * fa, 20.2 * fg, 75e-9 * fr)
    _assert_truth(fit_thermal(data, init=init), 1e-6)


def test_thermal_fit_noisy():
    data = synthetic_thermal_dataset(TEMPS, rel_noise=0.05, seed=1)
    res = fit_thermal(data)
    assert 19.6 <= res["gap_over_kb_k"] <= 20.8
    assert res.error("gap_over_kb_k") <= 0.5
    assert res.converged


def test_thermal_fit_unweighted_scales_errors():
    noisy = synthetic_thermal_dataset(TEMPS, rel_noise=0.05, seed=2)
    bare = ThermalDataset(ThermalPoint(p.temperature_k, p.tc_s) for p in noisy.points)
    res = fit_thermal(bare)
    assert res.std_errors is not None
    truth_tc = tc_vs_temperature(DEFAULT_BCS, 75e-9, G, NU, bare.temperatures)
    assert res.ssr <= np.sum((bare.tc - truth_tc) ** 2)
    assert abs(res["gap_over_kb_k"] - 20.2) <= 3 * res.error("gap_over_kb_k")


def test_thermal_fit_degenerate_low_temperature():
    data = synthetic_thermal_dataset(np.linspace(0.5, 1.2, 8))
    with pytest.raises(DegenerateRegime):
        fit_thermal(data)


def test_low_temperature_data_are_flat():
    # brute-force oracle: at T <= 1.2 K the model barely depends on the gap,
    # which is why the fit refuses such data
    t = np.linspace(0.5, 1.2, 8)
    ref = tc_vs_temperature(DEFAULT_BCS, 75e-9, G, NU, t)
    for gap in (15.0, 25.0):
        a = 0.0365 * math.exp((gap - 20.2) / 1.2)
        alt = tc_vs_temperature(BcsParams(a, gap), 75e-9, G, NU, t)
        assert np.max(np.abs(alt / ref - 1)) < 0.05


def test_thermal_fit_needs_points():
    data = synthetic_thermal_dataset([0.8, 1.0, 3.0])
    with pytest.raises(InsufficientData):
        fit_thermal(data)


def test_thermal_fit_rejects_hot_points():
    data = ThermalDataset([ThermalPoint(t, 0.1) for t in (0.8, 1.0, 3.0, 4.0, 5.0)])
    with pytest.raises(TemperatureOutOfRange):
        fit_thermal(data)


def test_thermal_jacobian_matches_forward_difference():
    # the fit differentiates with respect to log parameters
    t = TEMPS

    def model(theta):
        a, gap, r = np.exp(theta)
        return G / (OMEGA * ((a / t) * np.exp(-gap / t) + r))

    at = np.log([0.0365, 20.2, 75e-9])
    central = numeric_jacobian(model, at)
    fwd = np.empty_like(central)
    f0 = model(at)
    for j in range(3):
        h = 1e-7 * max(abs(at[j]), 1.0)
        x = at.copy()
        x[j] += h
        fwd[:, j] = (model(x) - f0) / h
    scale = np.max(np.abs(fwd), axis=0)
    assert np.max(np.abs(central - fwd) / scale) < 1e-4
