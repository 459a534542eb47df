"""Least-squares fits of Raman spectra and of sideband frequency scans.

All fits are unweighted chi-square minimisations (``scipy.optimize.least_squares``)
with deterministic starting points.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.signal import find_peaks, peak_widths

from ..effective import PotentialFamily
from ..errors import DomainError, FitError
from ..quantum import auto_half_width, solve_tise
from .lineshapes import expmod_gaussian, gaussian, rabi
from .raman import RamanConfig, Spectrum, synthesize_spectrum

ASYMMETRY_THRESHOLD = 0.5
CARRIER_SCALE_BOUNDS = (0.8, 1.2)
MODELS = ("gaussian", "expmod", "rabi")


def _covariance(res, n_data):
    J = res.jac
    dof = max(n_data - J.shape[1], 1)
    s2 = 2.0 * res.cost / dof
    try:
        return np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:  # pragma: no cover - pinv is robust
        return np.full((J.shape[1], J.shape[1]), np.inf)


# ---------------------------------------------------------------------------
# peak fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeakFit:
    model: str
    f0: float
    w: float  # Gaussian width; Rabi frequency (Hz) for the rabi model
    A: float
    Delta_a: float = 0.0
    errors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LineshapeFit:
    """Result of any spectrum fit.

    ``peaks`` is filled by :func:`fit_peaks`; ``params`` by the model fits.
    """

    b0: float
    residual_norm: float
    peaks: tuple = ()
    params: dict = field(default_factory=dict)
    uncertainties: dict = field(default_factory=dict)
    populations: tuple = ()
    covariance: np.ndarray | None = None

    def to_dict(self):
        return {
            "b0": self.b0,
            "residual_norm": self.residual_norm,
            "peaks": [asdict(p) for p in self.peaks],
            "params": self.params,
            "uncertainties": self.uncertainties,
            "populations": list(self.populations),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_NPAR = {"gaussian": 3, "expmod": 4, "rabi": 3}


def _peak_value(model, f, p, pulse_time):
    if model == "gaussian":
        return gaussian(f, p[0], p[1], p[2])
    if model == "expmod":
        return expmod_gaussian(f, p[0], p[1], p[3], p[2])
    return rabi(f, p[0], p[1], pulse_time, p[2])


def _initial_peaks(spec, n_peaks):
    e = spec.excitation
    span = float(np.ptp(e)) or 1.0
    idx, props = find_peaks(e, prominence=0.05 * span)
    if idx.size == 0:
        idx = np.array([int(np.argmax(e))])
        props = {"prominences": np.array([span])}
    order = np.argsort(props["prominences"])[::-1]
    if n_peaks is not None:
        order = order[:n_peaks]
    idx = np.sort(idx[order])
    fwhm = peak_widths(e, idx, rel_height=0.5)[0] * np.median(np.diff(spec.detunings))
    return spec.detunings[idx], np.maximum(fwhm, 1e-12) / (2 * math.sqrt(math.log(2)))


def _build(models, centers, widths, heights, asym):
    x0, lo, hi = [], [], []
    for m, c, w, a, s in zip(models, centers, widths, heights, asym):
        span = 10 * w
        x0 += [c, w, a]
        lo += [c - span, 1e-6 * w, 0.0]
        hi += [c + span, 100 * w, 10.0]
        if m == "expmod":
            x0.append(s * w)
            lo.append(-100 * w)
            hi.append(100 * w)
    return np.array(x0), np.array(lo), np.array(hi)


def _split(models, x):
    out, k = [], 1
    for m in models:
        out.append(x[k:k + _NPAR[m]])
        k += _NPAR[m]
    return out


def fit_peaks(spec: Spectrum, model="gaussian", centers=None, widths=None, n_peaks=None, models=None,
              pulse_time=None, fallback=True, max_nfev=20000) -> LineshapeFit:
    """Fit an incoherent sum of peaks plus a common baseline.

    ``models`` gives one model per peak and overrides ``model``.  With
    ``fallback``, any exponentially modified peak whose fitted ``|Delta_a|/w``
    is below 0.5 is refitted as a Gaussian.
    """
    f, e = spec.detunings, spec.excitation
    if centers is None:
        c0, w0 = _initial_peaks(spec, n_peaks)
    else:
        c0 = np.atleast_1d(np.asarray(centers, dtype=float))
        w0 = np.atleast_1d(np.asarray(widths, dtype=float)) if widths is not None else None
        if w0 is None:
            _, wd = _initial_peaks(spec, None)
            w0 = np.full(c0.shape, float(np.median(wd)))
        w0 = np.broadcast_to(w0, c0.shape).astype(float)
    models = list(models) if models is not None else [model] * c0.size
    for m in models:
        if m not in MODELS:
            raise DomainError(f"unknown lineshape model '{m}'")
    if len(models) != c0.size:
        raise DomainError("one model per peak required")
    if "rabi" in models:
        pulse_time = pulse_time if pulse_time is not None else spec.metadata.get("pulse_time")
        if pulse_time is None:
            raise DomainError("the rabi model needs pulse_time")
    step = float(np.median(np.diff(f)))
    if np.min(w0) < 4 * step:
        raise DomainError(f"need at least 4 points per peak width (width {np.min(w0):.3g} Hz, step {step:.3g} Hz)")
    b_init = float(np.percentile(e, 5))
    heights = np.clip(np.interp(c0, f, e) - b_init, 1e-3, None)
    # Rabi peaks start from a pi pulse
    w0 = np.array([0.5 / pulse_time if m == "rabi" else w for m, w in zip(models, w0)])

    def run(mods, asym):
        x0, lo, hi = _build(mods, c0, w0, heights, asym)
        x0 = np.concatenate([[b_init], x0])
        lo = np.concatenate([[min(0.0, float(e.min()))], lo])
        hi = np.concatenate([[float(e.max()) + 1e-12], hi])
        x0 = np.clip(x0, lo, hi)

        def resid(x):
            total = np.full_like(f, x[0])
            for m, p in zip(mods, _split(mods, x)):
                total += _peak_value(m, f, p, pulse_time)
            return total - e

        return least_squares(resid, x0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)

    starts = [np.ones(c0.size), -np.ones(c0.size)] if "expmod" in models else [np.ones(c0.size)]
    best = None
    for s in starts:
        res = run(models, s)
        if best is None or res.cost < best[1].cost:
            best = (s, res)
    asym, res = best
    if fallback and "expmod" in models:
        parts = _split(models, res.x)
        new = [("gaussian" if m == "expmod" and abs(p[3]) / p[1] < ASYMMETRY_THRESHOLD else m)
               for m, p in zip(models, parts)]
        if new != models:
            models = new
            res = run(models, asym)
    if res.status <= 0:
        raise FitError(f"peak fit did not converge: {res.message}", residual_norm=float(np.linalg.norm(res.fun)))
    cov = _covariance(res, f.size)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    peaks, k = [], 1
    names = {"gaussian": ("f0", "w", "A"), "expmod": ("f0", "w", "A", "Delta_a"), "rabi": ("f0", "w", "A")}
    for m in models:
        p = res.x[k:k + _NPAR[m]]
        pe = err[k:k + _NPAR[m]]
        peaks.append(PeakFit(model=m, f0=float(p[0]), w=float(p[1]), A=float(p[2]),
                             Delta_a=float(p[3]) if m == "expmod" else 0.0,
                             errors={n: float(v) for n, v in zip(names[m], pe)}))
        k += _NPAR[m]
    return LineshapeFit(b0=float(res.x[0]), residual_norm=float(np.linalg.norm(res.fun)), peaks=tuple(peaks),
                        uncertainties={"b0": float(err[0])}, covariance=cov)


# ---------------------------------------------------------------------------
# transition fit (sideband frequencies across the critical point)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionFit:
    nu_yc: float
    C1: float
    alpha_c: float
    nu_yc_classical: float
    nu_yc_per_sideband: tuple
    residual_norm: float

    def to_dict(self):
        return asdict(self)


def _family(N, nu_z, nu_yc, C1, hbar_eff=None, C3=0.0):
    fam = PotentialFamily.for_ions(N, nu_z=nu_z, nu_yc=nu_yc, C1=C1, C3=C3)
    return fam if hbar_eff is None else replace(fam, hbar_eff=hbar_eff)


def _sideband_model(N, nu_z, nu_yc, C1, nu_y, hbar_eff=None, C3=0.0, grids=None):
    """(f_01, f_02) in Hz at each ``nu_y``; ``grids`` fixes the phi grid per point."""
    fam = _family(N, nu_z, nu_yc, C1, hbar_eff, C3)
    out = np.empty((len(nu_y), 2))
    for i, v in enumerate(nu_y):
        g = None if grids is None else grids[i]
        sol = solve_tise(fam.at_nu_y(v), n_levels=3, nu_z=nu_z, grid=g, check=False)
        out[i] = (sol.transition_hz(0, 1), sol.transition_hz(0, 2))
    return out


def _sideband_grids(N, nu_z, nu_yc, C1_max, nu_y, hbar_eff=None, n_points=2048):
    # sized for the deepest well the fit may visit (nu_yc up to 500 Hz higher, largest bias)
    grids = []
    for v in nu_y:
        widths = [auto_half_width(_family(N, nu_z, nu_yc + dv, c, hbar_eff).at_nu_y(v), 3, n_points)
                  for dv in (0.0, 500.0) for c in (0.0, C1_max)]
        L = 1.25 * max(widths)
        grids.append(np.linspace(-L, L, n_points))
    return grids


def fit_transition(sidebands, N, nu_z, C1_max=1e-4, linear_margin_hz=1e3, hbar_eff=None) -> TransitionFit:
    """Critical frequency and bias from first/second sideband frequencies.

    ``sidebands`` rows are ``(nu_y, f_sb1, f_sb2)`` in Hz; ``f_sb2`` may be NaN.
    Steps: (i) classical ``nu_zz = sqrt(nu_y^2 - nu_yc^2)`` on points at least
    ``linear_margin_hz`` above the critical point; (ii) |C1| from the quantum
    model; (iii) nu_yc refined separately against each sideband and averaged;
    (iv) |C1| refitted.  The sign of C1 is not observable here.
    """
    data = np.asarray(sidebands, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise DomainError("sidebands must be rows of (nu_y, f_sb1, f_sb2)")
    data = data[np.argsort(data[:, 0])]
    nu_y, f1, f2 = data.T

    # (i) classical fit, iterating the linear-side cut
    guess = float(nu_y[np.nanargmin(f1)])
    for _ in range(10):
        sel = nu_y >= guess + linear_margin_hz
        if sel.sum() < 3:
            raise DomainError("insufficient linear-side data for the classical fit")
        res = least_squares(lambda p: np.sqrt(np.clip(nu_y[sel] ** 2 - p[0] ** 2, 0, None)) - f1[sel],
                            [guess], bounds=([0.0], [float(nu_y[sel].min())]), xtol=1e-15)
        new = float(res.x[0])
        if abs(new - guess) < 1e-3:
            guess = new
            break
        guess = new
    nu_yc_cl = guess
    grids = _sideband_grids(N, nu_z, nu_yc_cl, C1_max, nu_y, hbar_eff)

    def cost(nu_yc, C1, cols=(0, 1)):
        model = _sideband_model(N, nu_z, nu_yc, C1, nu_y, hbar_eff, grids=grids)
        r = []
        for c, obs in zip((0, 1), (f1, f2)):
            if c in cols:
                ok = np.isfinite(obs)
                r.append(model[ok, c] - obs[ok])
        r = np.concatenate(r)
        return float(r @ r)

    def fit_c1(nu_yc):
        # |C1| on a log grid, then bounded refinement; 0 is kept as a candidate
        grid = np.concatenate([[0.0], np.logspace(-9, math.log10(C1_max), 25)])
        vals = [cost(nu_yc, c) for c in grid]
        i = int(np.argmin(vals))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        if hi <= lo:
            return float(grid[i])
        r = minimize_scalar(lambda c: cost(nu_yc, c), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-3 * max(grid[i], 1e-10)})
        return float(r.x) if r.fun <= vals[i] else float(grid[i])

    def fit_nu_yc(C1, cols, center):
        r = minimize_scalar(lambda v: cost(v, C1, cols), bounds=(center - 500.0, center + 500.0), method="bounded",
                            options={"xatol": 0.05})
        return float(r.x)

    C1 = fit_c1(nu_yc_cl)  # (ii)
    per = [fit_nu_yc(C1, (0,), nu_yc_cl)]  # (iii)
    if np.any(np.isfinite(f2)):
        per.append(fit_nu_yc(C1, (1,), nu_yc_cl))
    nu_yc = float(np.mean(per))
    C1 = fit_c1(nu_yc)  # (iv)
    return TransitionFit(nu_yc=nu_yc, C1=C1, alpha_c=(nu_yc / nu_z) ** 2, nu_yc_classical=nu_yc_cl,
                         nu_yc_per_sideband=tuple(per), residual_norm=math.sqrt(cost(nu_yc, C1)))


# ---------------------------------------------------------------------------
# resolved-sideband model fit
# ---------------------------------------------------------------------------


def _softmax(z):
    z = np.concatenate([[0.0], z])
    z = z - z.max()
    p = np.exp(z)
    return p / p.sum()


@dataclass(frozen=True)
class ResolvedModel:
    """Forward model used by :func:`fit_resolved`."""

    family: PotentialFamily
    cfg: RamanConfig
    n_max: int
    phi: np.ndarray
    C3: float = 0.0
    max_order: int = 2

    @classmethod
    def build(cls, family, cfg, n_max, dnu_hint, C3=0.0, max_order=2, n_points=1024):
        n_levels = n_max + max_order + 1
        widths = [auto_half_width(family.at_detuning(d).with_bias(C3=C3), n_levels, n_points)
                  for d in (dnu_hint - 300.0, dnu_hint + 300.0)]
        L = 1.5 * max(widths)
        return cls(family, cfg, n_max, np.linspace(-L, L, n_points), C3, max_order)

    def spectrum(self, detunings, dnu, C1, Omega_0, gammas, populations, b0, carrier_scale, sideband_scale):
        pot = self.family.at_detuning(dnu).with_bias(C1=C1, C3=self.C3)
        sol = solve_tise(pot, n_levels=self.n_max + self.max_order + 1, grid=self.phi, nu_z=self.family.nu_z)
        cfg = replace(self.cfg, Omega_0=Omega_0, gamma_car=gammas[0], gamma_1=gammas[1], gamma_2=gammas[2],
                      allow_strong_drive=True)
        pops = np.zeros(self.n_max)
        pops[: len(populations)] = populations
        return synthesize_spectrum(sol, cfg, pops, detunings, baseline=b0, max_order=self.max_order,
                                   carrier_scale=carrier_scale, sideband_scale=sideband_scale)


C1_SCALE = 1e-6


def _initial_populations(model, f, e, dnu, C1, cfg):
    # non-negative least squares on one unit-population spectrum per level
    from scipy.optimize import nnls

    gam = (cfg.gamma_car, cfg.gamma_1, cfg.gamma_2)
    cols = [np.ones_like(f)]
    for n in range(model.n_max):
        unit = np.zeros(model.n_max)
        unit[n] = 1.0
        cols.append(model.spectrum(f, dnu, C1, cfg.Omega_0, gam, unit, 0.0, 1.0, 1.0).excitation)
    w, _ = nnls(np.column_stack(cols), e)
    p = w[1:]
    return p / p.sum() if p.sum() > 0 else np.full(model.n_max, 1.0 / model.n_max)


def fit_resolved(spec: Spectrum, family: PotentialFamily, cfg: RamanConfig, n_max=4, dnu_guess=0.0,
                 C1_guess=1e-7, C3=0.0, populations_guess=None, max_order=2, dnu_starts=(0.0,)) -> LineshapeFit:
    """Carrier + sideband model fit giving P(n), C1 and the offset from the critical point.

    Free parameters: baseline, nu_y - nu_yc, |C1|, Omega_0, the three damping
    rates, a carrier amplitude factor bounded to [0.8, 1.2], a sideband
    amplitude factor and P(n) for n < n_max (softmax, so sum P = 1).  C3 is
    held at ``C3``.  ``dnu_starts`` are offsets from ``dnu_guess`` for a
    deterministic multi-start; the lowest residual wins.
    """
    best = None
    for off in dnu_starts:
        fit = _fit_resolved_once(spec, family, cfg, n_max, dnu_guess + off, C1_guess, C3, populations_guess, max_order)
        if best is None or fit.residual_norm < best.residual_norm:
            best = fit
    return best


def _fit_resolved_once(spec, family, cfg, n_max, dnu_guess, C1_guess, C3, populations_guess, max_order):
    f, e = spec.detunings, spec.excitation
    model = ResolvedModel.build(family, cfg, n_max, dnu_guess, C3=C3, max_order=max_order)
    if populations_guess is None:
        p0 = _initial_populations(model, f, e, dnu_guess, C1_guess, cfg)
    else:
        p0 = np.asarray(populations_guess, dtype=float)
    p0 = np.clip(p0, 1e-4, None)
    p0 = p0 / p0.sum()
    z0 = np.log(p0[1:] / p0[0])
    g_scale = max(cfg.Omega_0, 1.0)
    # x = [b0, dnu, C1/scale, log Omega0, g_car, g1, g2 (units of Omega0), carrier, sideband, logits...]
    x0 = np.concatenate([[float(np.percentile(e, 2)), dnu_guess, C1_guess / C1_SCALE, math.log(cfg.Omega_0),
                          cfg.gamma_car / g_scale, cfg.gamma_1 / g_scale, cfg.gamma_2 / g_scale, 1.0, 1.0], z0])
    lo = np.concatenate([[min(0.0, float(e.min())), dnu_guess - 400.0, 0.0, math.log(cfg.Omega_0) - 2.0, 0, 0, 0,
                          CARRIER_SCALE_BOUNDS[0], 0.2], np.full(n_max - 1, -20.0)])
    hi = np.concatenate([[float(e.max()) + 1e-9, dnu_guess + 400.0, 100.0, math.log(cfg.Omega_0) + 2.0, 50, 50, 50,
                          CARRIER_SCALE_BOUNDS[1], 5.0], np.full(n_max - 1, 20.0)])
    x0 = np.clip(x0, lo + 1e-12, hi - 1e-12)

    def unpack(x):
        return dict(b0=x[0], dnu=x[1], C1=x[2] * C1_SCALE, Omega_0=math.exp(x[3]),
                    gammas=tuple(x[4:7] * g_scale), carrier_scale=x[7], sideband_scale=x[8],
                    populations=_softmax(x[9:]))

    def resid(x):
        p = unpack(x)
        s = model.spectrum(f, p["dnu"], p["C1"], p["Omega_0"], p["gammas"], p["populations"], p["b0"],
                           p["carrier_scale"], p["sideband_scale"])
        return s.excitation - e

    res = least_squares(resid, x0, bounds=(lo, hi), x_scale="jac", diff_step=1e-7, xtol=1e-10, ftol=1e-12,
                        gtol=1e-10, max_nfev=3000)
    if res.status <= 0:
        raise FitError(f"resolved fit did not converge: {res.message}", residual_norm=float(np.linalg.norm(res.fun)))
    p = unpack(res.x)
    cov = _covariance(res, f.size)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    names = ["b0", "dnu_y", "C1", "log_Omega_0", "gamma_car", "gamma_1", "gamma_2", "carrier_scale",
             "sideband_scale"]
    scales = [1, 1, C1_SCALE, 1, g_scale, g_scale, g_scale, 1, 1]
    unc = {n: float(v * s) for n, v, s in zip(names, err[:9], scales)}
    params = {"dnu_y": float(p["dnu"]), "C1": float(p["C1"]), "C3": float(C3), "Omega_0": float(p["Omega_0"]),
              "gamma_car": float(p["gammas"][0]), "gamma_1": float(p["gammas"][1]),
              "gamma_2": float(p["gammas"][2]), "carrier_scale": float(p["carrier_scale"]),
              "sideband_scale": float(p["sideband_scale"])}
    return LineshapeFit(b0=float(p["b0"]), residual_norm=float(np.linalg.norm(res.fun)), params=params,
                        uncertainties=unc, populations=tuple(float(v) for v in p["populations"]), covariance=cov)
