import math

import numpy as np
import pytest

from lzcrystal import crystal
from lzcrystal.effective import PotentialFamily, ZigzagPotential
from lzcrystal.errors import DomainError, UsageError
from lzcrystal.quantum import solve_family, solve_tise
from lzcrystal.spectroscopy import (RamanConfig, Spectrum, effective_rabi, matrix_element, synthesize_spectrum,
                                    transitions)

HBAR = 5.27e-6


@pytest.fixture(scope="module")
def harmonic():
    # C2 = 1, negligible quartic: exact harmonic-oscillator matrix elements apply
    p = ZigzagPotential(C1=0.0, C2=1.0, C3=0.0, C4=0.0, alpha=7.0, alpha_c=6.0, hbar_eff=HBAR, N=5)
    return solve_tise(p, n_levels=4, nu_z=303e3)


def test_matrix_elements_harmonic(harmonic):
    cfg = RamanConfig.uniform(5, HBAR, eta=0.1)
    k = abs(cfg.k_eff_az[0])
    eta = 0.1
    assert abs(matrix_element(harmonic, 0, 0, k)) == pytest.approx(math.exp(-eta**2 / 2), rel=1e-6)
    assert abs(matrix_element(harmonic, 0, 1, k)) == pytest.approx(eta * math.exp(-eta**2 / 2), rel=1e-5)
    # <0|e^{ikx}|2> = exp(-eta^2/2) (i eta)^2 / sqrt 2
    assert abs(matrix_element(harmonic, 0, 2, k)) == pytest.approx(eta**2 * math.exp(-eta**2 / 2) / math.sqrt(2),
                                                                   rel=1e-4)
    assert abs(matrix_element(harmonic, 1, 2, 0.0)) == pytest.approx(0.0, abs=1e-10)
    assert effective_rabi(harmonic, 0, 1, cfg) == pytest.approx(cfg.Omega_0 * math.sqrt(5) * eta
                                                               * math.exp(-eta**2 / 2), rel=1e-5)
    with pytest.raises(DomainError):
        matrix_element(harmonic, 0, 7, k)


def test_uniform_signs_follow_zigzag():
    cfg = RamanConfig.uniform(5, HBAR)
    assert np.sign(cfg.k_eff_az).tolist() == [1, -1, 1, -1, 1]
    assert cfg.N == 5
    assert 2 * math.pi * cfg.Omega_0 * cfg.pulse_time == pytest.approx(math.pi)


def test_from_modes_projects_on_zigzag():
    N = 3
    s = crystal.equilibrium(N, crystal.critical_alpha_pseudo(N) + 0.2)
    m = crystal.normal_modes(s)
    cfg = RamanConfig.from_modes(m, 50.0)
    assert np.abs(cfg.k_eff_az) == pytest.approx([50.0] * N)
    assert np.sign(cfg.k_eff_az).tolist() == [-1, 1, -1]
    with pytest.warns(RuntimeWarning):
        RamanConfig.from_modes(m, 50.0, nu_zz=80e3)


def test_config_validation():
    with pytest.raises(DomainError):
        RamanConfig((1.0,), Omega_0=1e3, pulse_time=1e-3)  # 2 pi area
    RamanConfig((1.0,), Omega_0=1e3, pulse_time=1e-3, allow_strong_drive=True)
    with pytest.raises(DomainError):
        RamanConfig((), Omega_0=1e3, pulse_time=1e-4)
    with pytest.raises(DomainError):
        RamanConfig((1.0,), Omega_0=1e3, pulse_time=1e-4, gamma_1=-1.0)
    cfg = RamanConfig((1.0,), Omega_0=1e3, pulse_time=1e-4, gamma_car=1.0, gamma_1=2.0, gamma_2=3.0)
    assert [cfg.gamma(k) for k in (0, 1, -1, 2, 3)] == [1.0, 2.0, 2.0, 3.0, 3.0]


def test_spectrum_validation_and_csv(tmp_path):
    with pytest.raises(DomainError):
        Spectrum([0.0, 0.0], [0.1, 0.2])
    with pytest.raises(DomainError):
        Spectrum([0.0, 1.0], [0.1, 1.2])
    with pytest.raises(DomainError):
        Spectrum([0.0, 1.0], [0.1])
    s = Spectrum(np.linspace(-1e3, 1e3, 11), np.linspace(0, 1, 11))
    n1 = s.with_noise(0.05, seed=3)
    n2 = s.with_noise(0.05, seed=3)
    assert np.array_equal(n1.excitation, n2.excitation)
    assert n1.excitation.min() >= 0 and n1.excitation.max() <= 1
    n1.to_csv(tmp_path / "s.csv")
    back = Spectrum.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.excitation, n1.excitation)
    assert np.array_equal(back.sigma, n1.sigma)
    (tmp_path / "bad.csv").write_text("f,p\n1,0.1\n")
    with pytest.raises(UsageError):
        Spectrum.from_csv(tmp_path / "bad.csv")


@pytest.fixture(scope="module")
def family():
    return PotentialFamily.for_ions(5, nu_z=303e3, nu_yc=760e3, C1=3.3e-7)


def test_transition_list(family):
    sol = solve_family(family, -50.0, n_levels=6)
    cfg = RamanConfig.uniform(5, family.hbar_eff)
    tr = transitions(sol, cfg, [0.7, 0.1, 0.2])
    pairs = sorted((t.n, t.m) for t in tr)
    assert pairs == sorted([(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (1, 3), (1, 0), (2, 2), (2, 3), (2, 4), (2, 1)])
    car = [t for t in tr if t.order == 0]
    assert all(t.center == 0.0 for t in car)
    sb = {(t.n, t.m): t for t in tr}
    assert sb[(1, 0)].center == pytest.approx(-sb[(0, 1)].center)
    assert sb[(1, 0)].rabi == pytest.approx(sb[(0, 1)].rabi, rel=1e-9)


def test_synthesized_carrier_and_sideband(family):
    sol = solve_family(family, 500.0, n_levels=5)
    cfg = RamanConfig.uniform(5, family.hbar_eff)
    f01 = sol.transition_hz(0, 1)
    det = np.array([0.0, 0.5 * f01, f01])
    s = synthesize_spectrum(sol, cfg, [1.0], det)
    # carrier Rabi frequency is reduced by the Debye-Waller factor
    car = effective_rabi(sol, 0, 0, cfg)
    assert s.excitation[0] == pytest.approx(math.sin(math.pi * car * cfg.pulse_time) ** 2, abs=5e-4)  # sideband tails
    sb = effective_rabi(sol, 0, 1, cfg)
    assert s.excitation[2] == pytest.approx(math.sin(math.pi * sb * cfg.pulse_time) ** 2, abs=5e-3)
    assert s.metadata["N"] == 5
    with pytest.raises(DomainError):
        synthesize_spectrum(sol, cfg, [0.5, 0.2], det)
    with pytest.raises(DomainError):
        synthesize_spectrum(sol, cfg, np.full(6, 1 / 6), det)
