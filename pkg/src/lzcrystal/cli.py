"""Command-line front end: ``lzcrystal <subcommand> ...``.

Detunings of the transverse frequency (``--scan``, ``--endpoint``) are in kHz
relative to the critical frequency; every other frequency is absolute Hz.
Data go to ``--out`` (or stdout), progress to stderr.  Each output file gets a
``<file>.manifest.json`` describing how it was produced.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, crystal, effective, quantum
from .errors import LZError, UsageError
from .kernels import BACKEND
from .spectroscopy import RamanConfig, Spectrum, bias_splitting, fit_peaks, fit_resolved, fit_transition
from .spectroscopy.splitting import c2_for_well_frequency
from .trap import PAPER_TRAP, UnitSystem, load_config, micromotion_corrected_alpha_c, micromotion_shift


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _trap(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else PAPER_TRAP
    lam = getattr(args, "lam", None)
    if lam:
        merged = dict(cfg.lam)
        merged.update({(int(i), int(j)): float(v) for i, j, v in lam})
        cfg = cfg.with_lambda(merged)
    return cfg


def _ions(args):
    if args.ions < 2:
        raise UsageError("--ions must be at least 2 (a single ion has no zigzag transition)")
    if args.ions > 20:
        raise UsageError("--ions must be at most 20")
    return args.ions


def _family(args):
    N = _ions(args)
    cfg = _trap(args)
    nu_z = args.nu_z if args.nu_z is not None else cfg.nu_z0
    if args.nu_yc is not None:
        nu_yc = args.nu_yc
    else:
        alpha_c0 = crystal.critical_alpha_pseudo(N)
        alpha_c = alpha_c0 if args.no_micromotion else micromotion_corrected_alpha_c(cfg, alpha_c0)
        nu_yc = nu_z * math.sqrt(alpha_c)
    return effective.PotentialFamily.for_ions(N, nu_z=nu_z, nu_yc=nu_yc, C1=args.c1, C3=args.c3,
                                              mass=cfg.ion_mass)


def _scan(values, name):
    start, stop, num = values
    n = int(num)
    if n < 1 or float(num) != n:
        raise UsageError(f"{name} NUM must be a positive integer")
    return np.linspace(float(start), float(stop), n)


def _pmap(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _Output:
    """Collects text and writes it to a file (plus manifest) or stdout."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.start = time.perf_counter()

    def emit(self, text, extra=None):
        path = getattr(self.args, "out", None)
        if path is None:
            sys.stdout.write(text)
            return
        Path(path).write_text(text)
        manifest = {
            "command": self.command,
            "arguments": {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)},
            "config": _trap(self.args).to_dict() if hasattr(self.args, "config") else None,
            "inputs": [getattr(self.args, "input")] if getattr(self.args, "input", None) else [],
            "outputs": [str(path)],
            "seed": getattr(self.args, "seed", None),
            "tool_version": __version__,
            "backend": BACKEND,
            "python": platform.python_version(),
            "wall_time_s": round(time.perf_counter() - self.start, 3),
        }
        if extra:
            manifest.update(extra)
        Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        _log(f"wrote {path}")


def _csv_text(header_note, columns, rows, fmt="{:.9g}"):
    buf = io.StringIO()
    buf.write(f"# {header_note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt.format(x) for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_critical_point(args):
    N = _ions(args)
    cfg = _trap(args)
    nu_z = args.nu_z if args.nu_z is not None else cfg.nu_z0
    a0 = crystal.critical_alpha_pseudo(N)
    shift = micromotion_shift(cfg, a0)
    a = a0 * (1 + shift)
    report = {"N": N, "alpha_c0": a0, "micromotion_shift": shift, "alpha_c": a, "nu_z_hz": nu_z,
              "nu_yc0_hz": nu_z * math.sqrt(a0), "nu_yc_hz": nu_z * math.sqrt(a)}
    if args.format == "json":
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    else:
        text = "".join(f"{k:>18s}  {v:.6f}\n" if isinstance(v, float) else f"{k:>18s}  {v}\n"
                       for k, v in report.items())
    _Output(args, "critical-point").emit(text)
    return 0


def _levels_row(job):
    fam, d, n_levels = job
    sol = quantum.solve_family(fam, d, n_levels=n_levels)
    return [d / 1e3] + list(np.diff(sol.to_hz(sol.energies))) + list(sol.to_hz(sol.energies[2:] - sol.energies[0]))


def cmd_levels(args):
    fam = _family(args)
    dnu = _scan(args.scan, "--scan") * 1e3
    if args.levels < 3:
        raise UsageError("--levels must be at least 3")
    _log(f"levels: {dnu.size} points, nu_yc = {fam.nu_yc:.1f} Hz")
    rows = _pmap(_levels_row, [(fam, float(d), args.levels) for d in dnu], args.jobs)
    k = args.levels
    cols = ["dnu_y_khz"] + [f"f_{n}{n + 1}_hz" for n in range(k - 1)] + [f"f_0{m}_hz" for m in range(2, k)]
    note = f"nu_y - nu_yc in kHz; nu_yc = {fam.nu_yc:.3f} Hz; nu_z = {fam.nu_z:.3f} Hz; C1 = {fam.C1}; C3 = {fam.C3}"
    _Output(args, "levels").emit(_csv_text(note, cols, rows))
    return 0


def _ramp_row(job):
    fam, ramp, n_levels, n_points = job
    res = quantum.solve_tdse(fam, ramp, n_levels=n_levels, n_points=n_points)
    return [ramp.dnu_end / 1e3] + list(res.final) + [res.ground_change]


def cmd_ramp(args):
    fam = _family(args)
    if args.endpoint is not None:
        ends = np.array(args.endpoint, dtype=float) * 1e3
    else:
        ends = _scan(args.endpoints, "--endpoints") * 1e3
    tpl = quantum.TwoStageTanhRamp(dnu_end=0.0, dnu_start=args.start * 1e3, dnu_mid=args.mid * 1e3,
                                   t1=args.stage1_ms * 1e-3, t2=args.stage2_ms * 1e-3, kappa=args.kappa)
    if args.profile != "tanh":
        raise UsageError(f"unknown ramp profile '{args.profile}'")
    _log(f"ramp: {ends.size} endpoints")
    jobs = [(fam, replace(tpl, dnu_end=float(e)), args.levels, args.points) for e in ends]
    rows = _pmap(_ramp_row, jobs, args.jobs)
    cols = ["endpoint_khz"] + [f"P{n}" for n in range(args.levels)] + ["ground_change"]
    note = (f"endpoint is nu_y - nu_yc in kHz; two-stage tanh ramp, final stage {args.stage2_ms} ms; "
            f"nu_yc = {fam.nu_yc:.3f} Hz; C1 = {fam.C1}")
    _Output(args, "ramp").emit(_csv_text(note, cols, rows))
    return 0


def _read_sidebands(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0][:2] != ["nu_y_hz", "f_sb1_hz"]:
        raise UsageError("transition input needs a header 'nu_y_hz,f_sb1_hz[,f_sb2_hz]'")
    out = []
    for r in rows[1:]:
        vals = [float(x) if x.strip() else float("nan") for x in r]
        out.append(vals + [float("nan")] * (3 - len(vals)))
    return np.array(out)


def cmd_fit(args):
    if args.mode == "transition":
        data = _read_sidebands(args.input)
        N = _ions(args)
        nu_z = args.nu_z if args.nu_z is not None else _trap(args).nu_z0
        res = fit_transition(data, N, nu_z)
        report = {"mode": "transition", **res.to_dict()}
    else:
        spec = Spectrum.from_csv(args.input)
        if args.mode == "peaks":
            res = fit_peaks(spec, model=args.model, n_peaks=args.peaks, pulse_time=args.pulse_time)
        else:
            fam = _family(args)
            cfg = RamanConfig.uniform(fam.N, fam.hbar_eff, Omega_0=args.omega0,
                                      pulse_time=args.pulse_time, gamma_car=args.gamma, gamma_1=args.gamma,
                                      gamma_2=args.gamma)
            res = fit_resolved(spec, fam, cfg, n_max=args.nmax, dnu_guess=args.dnu * 1e3, C1_guess=args.c1 or 1e-7)
        report = {"mode": args.mode, **res.to_dict()}
    _Output(args, "fit").emit(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    return 0


def cmd_bias_scan(args):
    N = _ions(args)
    nu_z = args.nu_z if args.nu_z is not None else _trap(args).nu_z0
    _, C4 = effective.ideal_coefficients(N)
    rows = []
    for nu_R in _scan(args.scan, "--scan"):
        if nu_R <= 0:
            raise UsageError("--scan frequencies must be positive")
        # choose C2 so that the R well oscillates at nu_R
        pot = effective.ZigzagPotential(C1=args.c1, C2=c2_for_well_frequency(nu_R, nu_z), C3=args.c3, C4=C4,
                                        alpha=float("nan"), alpha_c=float("nan"), hbar_eff=1.0, N=N)
        c2 = _solve_c2_for_nu_R(pot, nu_R, nu_z)
        b = bias_splitting(replace(pot, C2=c2), nu_z)
        rows.append([b.nu_R, b.nu_R - b.nu_L, -b.approx_delta])
    note = f"frequencies in Hz; N = {N}; nu_z = {nu_z} Hz; C1 = {args.c1}; C3 = {args.c3}"
    _Output(args, "bias-scan").emit(_csv_text(note, ["nu_R_hz", "nu_R_minus_nu_L_hz", "first_order_hz"], rows))
    return 0


def _solve_c2_for_nu_R(pot, nu_R, nu_z):
    from scipy.optimize import brentq

    def f(c2):
        try:
            return bias_splitting(replace(pot, C2=c2), nu_z).nu_R - nu_R
        except LZError:
            return -nu_R

    c0 = pot.C2
    lo, hi = 4 * c0, 0.25 * c0
    if f(lo) * f(hi) > 0:
        return c0
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-13)


def cmd_potential(args):
    N = _ions(args)
    cfg = _trap(args)
    alpha_c0 = crystal.critical_alpha_pseudo(N)
    alpha = args.alpha if args.alpha is not None else alpha_c0
    nu_z = args.nu_z if args.nu_z is not None else cfg.nu_z0
    pot = effective.zigzag_potential(N, alpha, lam=dict(cfg.lam) or None,
                                     hbar_eff=UnitSystem.from_trap(cfg.ion_mass, cfg.ion_charge, nu_z).hbar_eff)
    text = effective.potential_json(pot, nu_z_hz=nu_z, lam={f"{i},{j}": v for (i, j), v in sorted(cfg.lam.items())})
    _Output(args, "potential").emit(text + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p, family=True):
    p.add_argument("--ions", "-N", type=int, required=True, help="number of ions")
    p.add_argument("--config", help="trap configuration JSON")
    p.add_argument("--nu-z", type=float, help="axial frequency in Hz (overrides the config)")
    p.add_argument("--out", "-o", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    if family:
        p.add_argument("--nu-yc", type=float, help="critical transverse frequency in Hz")
        p.add_argument("--no-micromotion", action="store_true", help="use the pseudopotential critical point")
        p.add_argument("--c1", type=float, default=0.0, help="linear bias C1")
        p.add_argument("--c3", type=float, default=0.0, help="cubic bias C3")
        p.add_argument("--jobs", "-j", type=int, default=1, help="worker processes")


def build_parser():
    ap = argparse.ArgumentParser(prog="lzcrystal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("critical-point", help="critical aspect ratio and transverse frequency")
    _common(p, family=False)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_critical_point)

    p = sub.add_parser("levels", help="sideband frequencies across the transition")
    _common(p)
    p.add_argument("--scan", nargs=3, type=float, metavar=("START", "STOP", "NUM"), required=True,
                   help="nu_y - nu_yc in kHz")
    p.add_argument("--levels", type=int, default=4)
    p.set_defaults(func=cmd_levels)

    p = sub.add_parser("ramp", help="final populations after a ramp into the zigzag phase")
    _common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--endpoint", type=float, nargs="+", help="endpoint(s), kHz relative to nu_yc")
    g.add_argument("--endpoints", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    p.add_argument("--profile", default="tanh")
    p.add_argument("--start", type=float, default=10.0, help="ramp start, kHz relative to nu_yc")
    p.add_argument("--mid", type=float, default=1.0, help="end of the first stage, kHz relative to nu_yc")
    p.add_argument("--stage1-ms", type=float, default=3.0)
    p.add_argument("--stage2-ms", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=3.0, help="tanh steepness")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--points", type=int, default=2048)
    p.set_defaults(func=cmd_ramp)

    p = sub.add_parser("fit", help="fit a spectrum or a sideband scan")
    _common(p)
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--mode", choices=("peaks", "resolved", "transition"), required=True)
    p.add_argument("--model", choices=("gaussian", "expmod", "rabi"), default="gaussian")
    p.add_argument("--peaks", type=int, help="number of peaks (peaks mode)")
    p.add_argument("--pulse-time", type=float, help="pulse length in s")
    p.add_argument("--omega0", type=float, default=1e3, help="carrier Rabi frequency guess in Hz")
    p.add_argument("--gamma", type=float, default=100.0, help="damping-rate guess in 1/s")
    p.add_argument("--nmax", type=int, default=4, help="number of fitted populations")
    p.add_argument("--dnu", type=float, default=0.0, help="nu_y - nu_yc guess in kHz")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bias-scan", help="zigzag frequency difference between the wells")
    _common(p)
    p.add_argument("--scan", nargs=3, type=float, metavar=("START", "STOP", "NUM"), required=True,
                   help="nu_R range in Hz")
    p.set_defaults(func=cmd_bias_scan)

    p = sub.add_parser("potential", help="dump C1..C4")
    _common(p, family=False)
    p.add_argument("--alpha", type=float, help="aspect ratio (default: pseudopotential critical point)")
    p.add_argument("--lambda", dest="lam", nargs=3, action="append", metavar=("I", "J", "VALUE"),
                   help="add lambda_{I,J} = VALUE (repeatable)")
    p.set_defaults(func=cmd_potential)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LZError as exc:
        _log(f"error: {exc}")
        return exc.exit_code
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return UsageError.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
