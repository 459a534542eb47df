import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lzcrystal import crystal
from lzcrystal.errors import DomainError, InstabilityError


def test_two_ion_critical_point_is_one():
    # spacing d^3 = 2 and transverse zigzag curvature alpha - 2/d^3
    assert crystal.critical_alpha_pseudo(2) == pytest.approx(1.0, abs=1e-10)


def test_two_ion_positions():
    s = crystal.linear_configuration(2, alpha=3.0)
    assert s.z[1] - s.z[0] == pytest.approx(2 ** (1 / 3), rel=1e-10)
    assert np.allclose(s.y, 0.0)
    assert s.phase_label == crystal.LINEAR


@pytest.mark.parametrize("N", [3, 4, 5])
def test_gradient_and_hessian_match_finite_differences(N):
    rng = np.random.default_rng(N)
    x = np.concatenate([0.1 * rng.standard_normal(N), np.linspace(-1.5, 1.5, N) + 0.05 * rng.standard_normal(N)])
    lam = {(1, 2): 3e-3, (2, 1): -2e-3, (0, 3): 1e-3, (3, 0): 4e-3}
    e, g, h = crystal.potential(x, 2.7, lam)
    eps = 1e-6
    g_fd = np.empty_like(x)
    h_fd = np.empty((x.size, x.size))
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = eps
        ep, gp, _ = crystal.potential(x + dx, 2.7, lam)
        em, gm, _ = crystal.potential(x - dx, 2.7, lam)
        g_fd[k] = (ep - em) / (2 * eps)
        h_fd[:, k] = (gp - gm) / (2 * eps)
    assert np.allclose(g, g_fd, atol=1e-7)
    assert np.allclose(h, h_fd, atol=1e-6)


@pytest.mark.parametrize("N", [2, 3, 5, 7])
def test_centre_of_mass_and_breathing_modes(N):
    alpha = 1.5 * crystal.critical_alpha_pseudo(N)
    s = crystal.equilibrium(N, alpha)
    m = crystal.normal_modes(s)
    f = np.sort(m.frequencies)
    # axial COM at 1, breathing at sqrt(3), transverse COM at sqrt(alpha)
    for target in (1.0, math.sqrt(3.0), math.sqrt(alpha)):
        assert np.min(np.abs(f - target)) < 1e-8
    assert np.allclose(m.vectors.T @ m.vectors, np.eye(2 * N), atol=1e-10)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_zigzag_frequency_linear_in_alpha(N):
    ac = crystal.critical_alpha_pseudo(N)
    for da in (0.05, 0.3):
        m = crystal.normal_modes(crystal.equilibrium(N, ac + da))
        assert m.zigzag_frequency ** 2 == pytest.approx(da, rel=1e-8)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_zigzag_vector_orientation(N):
    ac = crystal.critical_alpha_pseudo(N)
    m = crystal.normal_modes(crystal.equilibrium(N, ac + 0.1))
    v = m.zigzag_vector
    assert v[(N - 1) // 2] > 0
    # transverse, alternating in sign for the symmetric chain
    assert np.allclose(v[N:], 0.0, atol=1e-10)
    assert np.all(np.diff(np.sign(v[:N])) != 0)


@pytest.mark.parametrize("N", [3, 4, 5])
def test_below_threshold_branches(N):
    ac = crystal.critical_alpha_pseudo(N)
    lin = crystal.linear_configuration(N, ac - 0.2)
    left = crystal.equilibrium(N, ac - 0.2, seed_hint=crystal.ZIGZAG_L)
    right = crystal.equilibrium(N, ac - 0.2, seed_hint=crystal.ZIGZAG_R)
    assert {left.phase_label, right.phase_label} == {crystal.ZIGZAG_L, crystal.ZIGZAG_R}
    assert right.y[0] > 0 > left.y[0]
    assert left.energy == pytest.approx(right.energy, rel=1e-12)
    assert right.energy < lin.energy
    # mirror images of each other
    assert np.allclose(left.y, -right.y, atol=1e-8)
    m = crystal.normal_modes(right)
    assert np.all(m.eigenvalues > 0)
    with pytest.raises(InstabilityError):
        crystal.normal_modes(lin)


def test_default_seed_above_threshold_is_linear():
    s = crystal.equilibrium(4, 5.0)
    assert s.phase_label == crystal.LINEAR


@settings(max_examples=15)
@given(st.integers(2, 6), st.floats(0.5, 1.5))
def test_equilibrium_is_stationary(N, scale):
    alpha = scale * crystal.critical_alpha_pseudo(N)
    s = crystal.equilibrium(N, alpha)
    _, g, _ = crystal.potential(s.coords, alpha)
    assert np.max(np.abs(g)) < 1e-8
    assert np.all(np.diff(s.z) > 0)


def test_odd_lambda_breaks_symmetry():
    N = 3
    ac = crystal.critical_alpha_pseudo(N)
    s = crystal.equilibrium(N, ac + 0.5, lam={(1, 2): 1e-4})
    assert np.max(np.abs(s.y)) > 0  # pushed off the axis
    assert s.phase_label == crystal.LINEAR


def test_linear_modes_report_unstable_mode():
    N = 4
    ac = crystal.critical_alpha_pseudo(N)
    _, m = crystal.linear_modes(N, ac - 0.1)
    assert m.eigenvalues[m.zigzag_index] == pytest.approx(-0.1, abs=1e-9)
    assert m.frequencies[m.zigzag_index] < 0


@pytest.mark.parametrize("call", [
    lambda: crystal.critical_alpha_pseudo(1),
    lambda: crystal.equilibrium(0, 1.0),
    lambda: crystal.equilibrium(3, -1.0),
    lambda: crystal.equilibrium(3, 1.0, seed_hint="diagonal"),
])
def test_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_csv_writers(tmp_path):
    s = crystal.equilibrium(3, 3.0)
    m = crystal.normal_modes(s)
    crystal.write_positions_csv(s, tmp_path / "pos.csv")
    crystal.write_modes_csv(m, 303e3, tmp_path / "modes.csv")
    rows = list(csv.reader(open(tmp_path / "pos.csv")))
    assert rows[0] == ["ion", "y", "z"] and len(rows) == 4
    rows = list(csv.reader(open(tmp_path / "modes.csv")))
    assert len(rows) == 7
    assert sum(int(r[2]) for r in rows[1:]) == 1
