import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lzcrystal import quantum
from lzcrystal.effective import PotentialFamily, ZigzagPotential
from lzcrystal.errors import DomainError, IntegrationError, ResolutionError

HBAR = 5.27e-6  # Yb-171 at 303 kHz


def pot(C1=0.0, C2=0.0, C3=0.0, C4=4.5409, hbar=HBAR):
    return ZigzagPotential(C1=C1, C2=C2, C3=C3, C4=C4, alpha=6.3 + C2, alpha_c=6.3, hbar_eff=hbar, N=5)


@pytest.fixture(scope="module")
def fam():
    return PotentialFamily.for_ions(5, nu_z=303e3, nu_yc=760e3)


def test_harmonic_ladder():
    p = pot(C2=0.04, C4=0.0)
    sol = quantum.solve_tise(p, n_levels=6, n_points=4096, check=False, half_width=0.05)
    w = HBAR * math.sqrt(0.04)
    assert sol.energies == pytest.approx(w * (np.arange(6) + 0.5), rel=2e-5)


def test_pure_quartic_ground_state():
    # -1/2 psi'' + x^4 psi has E0 = 0.667986259...; rescale to hbar and C4 / 4
    p = pot(C4=4.5409)
    sol = quantum.solve_tise(p, n_levels=4)
    g = p.C4 / 4
    assert sol.energies[0] == pytest.approx(0.667986259155777 * HBAR ** (4 / 3) * g ** (1 / 3), rel=1e-5)


def test_eigenvectors_orthonormal_and_parity():
    sol = quantum.solve_tise(pot(C2=-0.002), n_levels=5)
    G = sol.wavefunctions.T @ sol.wavefunctions * sol.dx
    assert np.allclose(G, np.eye(5), atol=1e-10)
    for n in range(5):
        psi = sol.wavefunctions[:, n]
        assert np.allclose(psi[::-1], (-1) ** n * psi, atol=1e-8)
    assert sol.phi_mean(0) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=20)
@given(st.floats(-3e-6, 3e-6), st.floats(-4e-3, 2e-3), st.floats(-5e-3, 5e-3))
def test_mirror_symmetry(C1, C2, C3):
    a = quantum.solve_tise(pot(C1, C2, C3), n_levels=3)
    b = quantum.solve_tise(pot(-C1, C2, -C3), n_levels=3)
    assert np.allclose(a.energies, b.energies, rtol=1e-6, atol=1e-3 * (a.energies[2] - a.energies[0]))
    assert np.all(np.diff(a.energies) > 0)


def test_resolution_error_on_coarse_grid():
    with pytest.raises(ResolutionError):
        quantum.solve_tise(pot(C2=-0.005), n_levels=4, n_points=64)
    with pytest.raises(ResolutionError):
        quantum.solve_tise(pot(C2=-0.005), n_levels=4, half_width=0.02)  # wavefunctions hit the wall


@pytest.mark.parametrize("bad", [pot(C4=-1.0), pot(C4=0.0, C2=-0.1), pot(hbar=0.0)])
def test_non_confining_rejected(bad):
    with pytest.raises(DomainError):
        quantum.solve_tise(bad)


def test_turning_point():
    p = pot(C2=0.01, C4=0.0)
    assert quantum.turning_point(p, 0.5e-4) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        quantum.turning_point(pot(C2=-0.01), -1.0)


def test_hz_conversion(fam):
    sol = quantum.solve_family(fam, 5e3, n_levels=3)
    nu_zz = math.sqrt((765e3**2 - 760e3**2))
    # far on the linear side: harmonic with nu_zz = nu_z sqrt(C2)
    assert sol.splitting_hz() == pytest.approx(nu_zz, rel=1e-3)
    with pytest.raises(DomainError):
        quantum.solve_tise(fam.at_detuning(0.0)).to_hz(1.0)


def test_level_scan_shape(fam):
    out = quantum.level_scan(fam, [-200.0, 0.0, 200.0], n_levels=4)
    assert out.shape == (3, 3)
    assert np.all(out > 0)


def test_localization_unbiased_and_biased(fam):
    sol0 = quantum.solve_family(fam, -300.0, n_levels=2)
    assert quantum.localization(sol0) == pytest.approx(0.5, abs=1e-7)
    assert quantum.localization(sol0, "well") == pytest.approx(0.5, abs=1e-7)
    sol = quantum.solve_family(fam.with_bias(C1=5e-7), -300.0, n_levels=2)
    # positive C1 lowers the phi < 0 well
    assert quantum.localization(sol) > 0.6
    assert quantum.localization(sol, "well") > 0.6
    assert sol.phi_mean() < 0
    with pytest.raises(DomainError):
        quantum.localization(sol, "bogus")


def test_optimum_point_is_boundary(fam):
    opt = quantum.optimum_tunneling_point(fam)
    assert opt.dnu_y < 0
    assert quantum._barrier_margin(opt.pot) < 0
    assert quantum._barrier_margin(fam.at_detuning(opt.dnu_y + 0.05)) >= 0
    assert opt.phi_mean == pytest.approx(math.sqrt(-opt.C2 / fam.C4), rel=1e-9)
    assert 0 < opt.phi_localized < opt.phi_mean


def test_tanh_profile():
    x = np.linspace(0, 1, 101)
    s = quantum.tanh_profile(x, 3.0)
    assert s[0] == pytest.approx(0.0, abs=1e-15) and s[-1] == pytest.approx(1.0)
    assert np.all(np.diff(s) > 0)
    assert quantum.tanh_profile(0.5, 3.0) == pytest.approx(0.5)


def test_two_stage_ramp(fam):
    r = quantum.TwoStageTanhRamp(dnu_end=-150.0)
    t = np.array([0.0, r.t1, r.duration])
    assert r.detuning(fam, t) == pytest.approx([10e3, 1e3, -150.0], abs=1e-6)
    tt = np.linspace(0, r.duration, 501)
    assert np.all(np.diff(r.c2(fam, tt)) <= 0)
    with pytest.raises(DomainError):
        quantum.TwoStageTanhRamp(dnu_end=0.0, t2=0.0)
    with pytest.raises(DomainError):
        quantum.TwoStageTanhRamp(dnu_end=0.0, kappa=-1.0)


def test_stationary_state_stays_put(fam):
    res = quantum.solve_tdse(fam.with_bias(C1=3e-7), quantum.ConstantRamp(dnu=-100.0, duration=2e-4))
    assert res.populations[:, 0] == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(res.norm - 1.0)) < 1e-9


def test_sudden_quench_overlap_matches_harmonic_formula(fam):
    # deep on the linear side the quartic term is negligible
    d1, d2 = 20e3, 10e3
    init = quantum.solve_family(fam, d1, n_levels=2)
    res = quantum.solve_tdse(fam, quantum.ConstantRamp(dnu=d2, duration=1e-5), initial=init, n_snapshots=3)
    w1 = math.sqrt(float(fam.c2_of_nu_y(fam.nu_yc + d1)))
    w2 = math.sqrt(float(fam.c2_of_nu_y(fam.nu_yc + d2)))
    expected = 2 * math.sqrt(w1 * w2) / (w1 + w2)
    assert res.populations[0, 0] == pytest.approx(expected, abs=5e-5)
    assert res.populations[-1, 0] == pytest.approx(expected, abs=5e-5)


def test_slow_linear_side_ramp_is_adiabatic(fam):
    ramp = quantum.TwoStageTanhRamp(dnu_end=2e3, dnu_mid=5e3)
    res = quantum.solve_tdse(fam, ramp)
    assert res.ground_change < 1e-4
    assert res.times[0] == pytest.approx(ramp.t1)
    full = quantum.solve_tdse(fam, ramp, final_stage_only=False, n_snapshots=5)
    assert full.times[0] == 0.0 and full.ground_change < 1e-3


def test_step_budget(fam):
    with pytest.raises(IntegrationError):
        quantum.solve_tdse(fam, quantum.TwoStageTanhRamp(dnu_end=-100.0), max_steps=10)


def test_endpoint_scan(fam):
    out = quantum.endpoint_scan(fam.with_bias(C1=3.3e-7), [-50.0, -250.0], n_levels=4)
    assert out.shape == (2, 4)
    assert out[0, 0] > out[1, 0]


def test_sensing_gain_linear_side(fam):
    d = 5e3
    nu_y = fam.nu_yc + d
    classical = nu_y / math.sqrt(nu_y**2 - fam.nu_yc**2)
    assert quantum.sensing_gain(fam, d) == pytest.approx(classical, rel=1e-2)


def test_minimum_splitting(fam):
    d, f = quantum.minimum_splitting(fam.with_bias(C1=3.3e-7), window_hz=(-400, 200), n_scan=31)
    assert -400 < d < 0
    assert 0 < f < 3e3


def test_csv_writers(tmp_path, fam):
    sol = quantum.solve_family(fam, 0.0, n_levels=3)
    quantum.write_wavefunctions_csv(sol, tmp_path / "wf.csv")
    rows = list(csv.reader(open(tmp_path / "wf.csv")))
    assert rows[0] == ["phi", "psi0", "psi1", "psi2"] and len(rows) == sol.phi.size + 1
    quantum.write_levels_csv(tmp_path / "lv.csv", [0.0, 100.0], np.ones((2, 2)))
    quantum.write_populations_csv(tmp_path / "p.csv", [-100.0], np.array([[0.9, 0.1]]))
    assert "P1" in open(tmp_path / "p.csv").read()
