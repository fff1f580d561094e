"""Command-line entry point: ``fpcavity <command> ...``.

Exit codes: 0 ok, 2 parse/config error, 3 unstable geometry, 4 temperature
out of range, 5 invalid simulation design, 6 fit did not converge,
7 degenerate or unidentifiable data.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .errors import (
    CavityError,
    DatasetParseError,
    DegenerateRegime,
    FitDidNotConverge,
    IdentifiabilityError,
    InsufficientData,
    InvalidDesign,
    NonOverlappingSupport,
    TemperatureOutOfRange,
    UnstableGeometry,
)
from .loss_budget import (
    DEFAULT_BCS,
    DEFAULT_FREQUENCY_HZ,
    DEFAULT_GEOMETRY_FACTOR_OHM,
    DEFAULT_RESIDUAL_OHM,
    THERMAL_PARAM_NAMES,
    THERMAL_PARAM_UNITS,
    BcsParams,
    fit_thermal,
    loss_budget,
    tc_vs_temperature,
)
from .resonator_modes import (
    ModeIndices,
    intensity_profile,
    mean_radius_geometry,
    mode_geometry,
    resonance_frequency,
    wavelength_from_frequency,
)
from .ringdown import (
    RINGDOWN_PARAM_NAMES,
    RINGDOWN_PARAM_UNITS,
    fit_ringdown,
    model_curves,
    shift_estimate,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_UNSTABLE = 3
EXIT_RANGE = 4
EXIT_DESIGN = 5
EXIT_NO_CONVERGENCE = 6
EXIT_DEGENERATE = 7

_EXIT_FOR = (
    (UnstableGeometry, EXIT_UNSTABLE),
    (TemperatureOutOfRange, EXIT_RANGE),
    (InvalidDesign, EXIT_DESIGN),
    (FitDidNotConverge, EXIT_NO_CONVERGENCE),
    (DegenerateRegime, EXIT_DEGENERATE),
    (IdentifiabilityError, EXIT_DEGENERATE),
    (InsufficientData, EXIT_DEGENERATE),
    (NonOverlappingSupport, EXIT_DEGENERATE),
    (DatasetParseError, EXIT_PARSE),
    (CavityError, EXIT_PARSE),
)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _floats(text, n, what):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: expected {n} comma-separated numbers") from None
    if len(values) != n:
        raise argparse.ArgumentTypeError(f"{what}: expected {n} comma-separated numbers")
    return values


def _qmn(text):
    try:
        q, m, n = (int(v) for v in text.split(","))
        return ModeIndices(q, m, n)
    except ValueError:
        raise argparse.ArgumentTypeError("--qmn expects q,m,n with q >= 1, m,n >= 0") from None


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _format_table(rows):
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _g(value, unit=""):
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isinf(value):
        return "inf (lossless)"
    return f"{value:.6g}{(' ' + unit) if unit else ''}"


# -- modes -------------------------------------------------------------------

def cmd_modes(args):
    geom = fio.load_geometry(args.geometry)
    if args.freq is not None:
        frequency = args.freq
        indices = None
    else:
        indices = args.qmn or ModeIndices(9, 0, 0)
        frequency = resonance_frequency(geom, indices)
    lam = wavelength_from_frequency(frequency)
    mode = mode_geometry(geom, lam)
    mean = mode_geometry(mean_radius_geometry(geom), lam)

    if args.profile:
        w = {"x": mode.waist_x_m, "y": mode.waist_y_m, "z": mode.rayleigh_x_m}[args.profile]
        n = args.samples if args.samples % 2 else args.samples + 1
        s = np.linspace(-args.extent * w, args.extent * w, n)
        s[n // 2] = 0.0
        zero = np.zeros_like(s)
        if args.profile == "x":
            values = intensity_profile(mode, s, zero, zero)
        elif args.profile == "y":
            values = intensity_profile(mode, zero, s, zero)
        else:
            values = intensity_profile(mode, zero, zero, s)
        _emit(args, fio.format_samples_csv([f"{args.profile}_m", "relative_intensity"], [s, values]))
        return EXIT_OK

    report = {
        "command": ["modes"] + list(args.argv),
        "tool": "fpcavity",
        "version": __version__,
        "indices": None if indices is None else {"q": indices.q, "m": indices.m, "n": indices.n},
        "frequency_hz": frequency,
        "wavelength_m": lam,
        "fsr_hz": mode.fsr_hz,
        "polarization_splitting_hz": mode.polarization_splitting_hz,
        "waist_x_m": mode.waist_x_m,
        "waist_y_m": mode.waist_y_m,
        "rayleigh_x_m": mode.rayleigh_x_m,
        "rayleigh_y_m": mode.rayleigh_y_m,
        "mirror_spot_x_m": mode.mirror_spot_x_m,
        "mirror_spot_y_m": mode.mirror_spot_y_m,
        "gouy_x_rad": mode.gouy_x_rad,
        "gouy_y_rad": mode.gouy_y_rad,
        "mean_radius_waist_m": mean.waist_x_m,
        "mean_radius_mirror_spot_m": mean.mirror_spot_x_m,
    }
    if args.json:
        _emit(args, fio.dumps_json(report))
    else:
        rows = [
            ("mode", "frequency given" if indices is None else f"TEM{indices.q}{indices.m}{indices.n}"),
            ("frequency", _g(frequency, "Hz")),
            ("fsr", _g(mode.fsr_hz, "Hz")),
            ("polarization splitting", _g(mode.polarization_splitting_hz, "Hz")),
            ("waist x / y", f"{_g(mode.waist_x_m, 'm')} / {_g(mode.waist_y_m, 'm')}"),
            ("rayleigh x / y", f"{_g(mode.rayleigh_x_m, 'm')} / {_g(mode.rayleigh_y_m, 'm')}"),
            ("mirror spot x / y", f"{_g(mode.mirror_spot_x_m, 'm')} / {_g(mode.mirror_spot_y_m, 'm')}"),
            ("gouy x / y", f"{_g(mode.gouy_x_rad, 'rad')} / {_g(mode.gouy_y_rad, 'rad')}"),
            ("waist (mean radius)", _g(mean.waist_x_m, "m")),
            ("mirror spot (mean radius)", _g(mean.mirror_spot_x_m, "m")),
        ]
        _emit(args, _format_table(rows))
    return EXIT_OK


# -- budget ------------------------------------------------------------------

def cmd_budget(args):
    geom = fio.load_geometry(args.geometry)
    bcs = BcsParams(*args.bcs) if args.bcs else DEFAULT_BCS
    report = loss_budget(
        geom,
        frequency_hz=args.freq,
        temperature_k=args.temp,
        bcs=bcs,
        r_residual_ohm=args.residual,
        geometry_factor_ohm=args.geometry_factor,
        q_index=args.q_index,
        mirror_spot_m=args.mirror_spot,
    )
    body = report.to_dict()
    body.update({"command": ["budget"] + list(args.argv), "tool": "fpcavity", "version": __version__})
    if args.json:
        _emit(args, fio.dumps_json(body))
        return EXIT_OK
    s = report.summary
    rows = [
        ("temperature", _g(report.temperature_k, "K")),
        ("mirror spot w", f"{_g(report.mirror_spot_m, 'm')} ({report.mirror_spot_source})"),
        ("Q diffraction", _g(report.q_diffraction)),
        ("Q surface", _g(report.q_surface)),
        ("Q' (geometric limit)", _g(report.geometric_limit_q)),
        ("R_BCS", _g(report.r_bcs_ohm, "ohm")),
        ("Q BCS", _g(report.q_bcs)),
        ("R_res", _g(report.r_residual_ohm, "ohm")),
        ("Q residual", _g(report.q_residual)),
        ("Q", _g(s.q_factor)),
        ("Tc", _g(s.tc_s, "s")),
        ("finesse (Q/q)", _g(s.finesse_q_index)),
        ("finesse (FSR/FWHM)", _g(s.finesse_fsr)),
        ("FWHM", _g(s.fwhm_hz, "Hz")),
        ("note", body["note"]),
    ]
    _emit(args, _format_table(rows))
    return EXIT_OK


# -- ring-down ---------------------------------------------------------------

def cmd_ringdown_sim(args):
    design = fio.load_design(args.design)
    seed = args.seed if args.seed is not None else design.seed
    if seed is None:
        raise InvalidDesign("no seed given (set 'seed' in the design or pass --seed)")
    data = design.simulate(seed)
    text = fio.format_ringdown_csv(data)
    if not args.out:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out)
    out.write_text(text, encoding="utf-8")
    sidecar = {
        "design": {**fio.design_to_dict(design), "seed": seed},
        "rows": data.n_points,
        "tool": "fpcavity",
        "version": __version__,
    }
    out.with_suffix(".design.json").write_text(fio.dumps_json(sidecar), encoding="utf-8")
    return EXIT_OK


def _param_rows(names, values, errors, units):
    return [
        {
            "name": n,
            "value": values[n],
            "std_error": None if errors is None else errors.get(n),
            "unit": units[n],
        }
        for n in names
    ]


def _fit_report(command, inputs, method, parameters, ssr, dof, converged, iterations, flags, seed=None):
    return {
        "command": command,
        "inputs": inputs,
        "method": method,
        "parameters": parameters,
        "ssr": ssr,
        "dof": dof,
        "converged": converged,
        "iterations": iterations,
        "flags": list(flags),
        "seed": seed,
        "tool": "fpcavity",
        "version": __version__,
    }


def _emit_report(args, report):
    if args.json:
        _emit(args, fio.dumps_json(report))
        return
    rows = [("method", report["method"])]
    for p in report["parameters"]:
        err = "" if p["std_error"] is None else f" +/- {p['std_error']:.6g}"
        rows.append((p["name"], f"{p['value']:.6g}{err} {p['unit']}"))
    rows += [
        ("ssr", _g(report["ssr"])),
        ("dof", str(report["dof"])),
        ("converged", str(report["converged"]).lower()),
    ]
    if report["flags"]:
        rows.append(("flags", ",".join(report["flags"])))
    _emit(args, _format_table(rows))


def cmd_ringdown_fit(args):
    data = fio.read_ringdown_csv(args.dataset)
    inputs = {str(args.dataset): fio.file_digest(args.dataset)}
    command = ["ringdown-fit"] + list(args.argv)
    if args.shift_only:
        est = shift_estimate(data)
        tcs = np.array([p.tc_s for p in est.pairs])
        report = _fit_report(
            command, inputs, "shift",
            [{"name": "tc_s", "value": est.tc_s, "std_error": est.std_error_s, "unit": "s"}],
            ssr=float(np.sum((tcs - est.tc_s) ** 2)), dof=len(est.pairs) - 1,
            converged=True, iterations=0, flags=(), seed=args.seed,
        )
        _emit_report(args, report)
        return EXIT_OK

    code = EXIT_OK
    try:
        result = fit_ringdown(data, init=args.init)
    except FitDidNotConverge as exc:
        result = exc.result
        code = EXIT_NO_CONVERGENCE
        print(f"error: {exc}", file=sys.stderr)
    report = _fit_report(
        command, inputs, "model",
        _param_rows(RINGDOWN_PARAM_NAMES, result.parameters, result.std_errors, RINGDOWN_PARAM_UNITS),
        result.ssr, result.dof, result.converged, result.iterations, result.flags, args.seed,
    )
    _emit_report(args, report)
    if args.emit_curves:
        t_all = np.concatenate([c.time_s for c in data.curves])
        t = np.linspace(t_all.min(), t_all.max(), 201)
        cols = [[], [], []]
        for att, tt, p in model_curves(result.parameters, data.attenuations_db, t):
            cols[0].extend(tt.tolist())
            cols[1].extend([att] * tt.size)
            cols[2].extend(p.tolist())
        Path(args.emit_curves).write_text(
            fio.format_samples_csv(["time_s", "attenuation_db", "probability"], cols), encoding="utf-8"
        )
    return code


# -- thermal -----------------------------------------------------------------

def cmd_thermal_fit(args):
    data = fio.read_thermal_csv(args.dataset)
    inputs = {str(args.dataset): fio.file_digest(args.dataset)}
    code = EXIT_OK
    try:
        result = fit_thermal(data, args.geometry_factor, args.freq, init=args.init)
    except FitDidNotConverge as exc:
        result = exc.result
        code = EXIT_NO_CONVERGENCE
        print(f"error: {exc}", file=sys.stderr)
    report = _fit_report(
        ["thermal-fit"] + list(args.argv), inputs, "thermal",
        _param_rows(THERMAL_PARAM_NAMES, result.parameters, result.std_errors, THERMAL_PARAM_UNITS),
        result.ssr, result.dof, result.converged, result.iterations, result.flags,
    )
    _emit_report(args, report)
    if args.emit_curves:
        t = data.temperatures
        inv = np.linspace(1.0 / t.max(), 1.0 / t.min(), 201)
        temps = 1.0 / inv
        p = result.parameters
        tc = tc_vs_temperature(
            BcsParams(p["a_coeff_ohm_k"], p["gap_over_kb_k"]), p["r_residual_ohm"],
            args.geometry_factor, args.freq, temps,
        )
        Path(args.emit_curves).write_text(
            fio.format_samples_csv(["inverse_temperature_per_k", "temperature_k", "tc_s"], [inv, temps, tc]),
            encoding="utf-8",
        )
    return code


# -- parser --------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit JSON instead of a text table")
    common.add_argument("--out", metavar="PATH", help="write the primary output to PATH")
    common.add_argument("--seed", type=int, metavar="U64", help="generator seed")

    parser = _ArgumentParser(prog="fpcavity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fpcavity {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("modes", parents=[common], help="mode frequencies, waists and Gouy phases")
    p.add_argument("--geometry", metavar="JSON", help="geometry config (default: 51 GHz cavity)")
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--freq", type=float, metavar="HZ", help="operating frequency")
    sel.add_argument("--qmn", type=_qmn, metavar="Q,M,N", help="mode indices (default 9,0,0)")
    p.add_argument("--profile", choices=("x", "y", "z"), help="emit an intensity-profile CSV along an axis")
    p.add_argument("--extent", type=float, default=3.0, help="profile half-width in waists (z: Rayleigh ranges)")
    p.add_argument("--samples", type=int, default=121, help="number of profile samples (odd)")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("budget", parents=[common], help="loss budget and derived Q, Tc, finesse")
    p.add_argument("--geometry", metavar="JSON")
    p.add_argument("--temp", type=float, default=0.8, metavar="K")
    p.add_argument("--bcs", type=lambda s: _floats(s, 2, "--bcs"), metavar="A,GAP",
                   help=f"BCS A (ohm K) and gap/kB (K) (default {DEFAULT_BCS.a_coeff_ohm_k},{DEFAULT_BCS.gap_over_kb_k})")
    p.add_argument("--residual", type=float, default=DEFAULT_RESIDUAL_OHM, metavar="OHM",
                   help="residual (+ diffraction) resistance")
    p.add_argument("--geometry-factor", type=float, default=DEFAULT_GEOMETRY_FACTOR_OHM, metavar="OHM")
    p.add_argument("--freq", type=float, default=DEFAULT_FREQUENCY_HZ, metavar="HZ")
    p.add_argument("--q-index", type=int, default=9, help="longitudinal index for finesse = Q/q")
    p.add_argument("--mirror-spot", type=float, metavar="M",
                   help="spot size at the mirrors (default: computed for the mean radius)")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("ringdown-sim", parents=[common], help="simulate a ring-down dataset")
    p.add_argument("design", nargs="?", help="design JSON (default: packaged replica design)")
    p.set_defaults(func=cmd_ringdown_sim)

    p = sub.add_parser("ringdown-fit", parents=[common], help="estimate Tc from a ring-down dataset")
    p.add_argument("dataset")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--model-fit", action="store_true", help="joint saturation-model fit (default)")
    mode.add_argument("--shift-only", action="store_true", help="model-free time-shift estimate")
    p.add_argument("--init", type=lambda s: _floats(s, 4, "--init"), metavar="TC,U0,PBG,PSAT")
    p.add_argument("--emit-curves", metavar="CSV", help="write fitted model samples")
    p.set_defaults(func=cmd_ringdown_fit)

    p = sub.add_parser("thermal-fit", parents=[common], help="fit Tc(T) for the superconducting gap")
    p.add_argument("dataset")
    p.add_argument("--geometry-factor", type=float, default=DEFAULT_GEOMETRY_FACTOR_OHM, metavar="OHM")
    p.add_argument("--freq", type=float, default=DEFAULT_FREQUENCY_HZ, metavar="HZ")
    p.add_argument("--init", type=lambda s: _floats(s, 3, "--init"), metavar="A,GAP,RRES")
    p.add_argument("--emit-curves", metavar="CSV", help="write Tc(T) samples on a 1/T grid")
    p.set_defaults(func=cmd_thermal_fit)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv[1:]
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CavityError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        for cls, code in _EXIT_FOR:
            if isinstance(exc, cls):
                return code
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
