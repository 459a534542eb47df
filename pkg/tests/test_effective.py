import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lzcrystal import crystal, effective
from lzcrystal.effective import PotentialFamily, ZigzagPotential
from lzcrystal.errors import DegeneracyError, DomainError


# ---------------------------------------------------------------------------
# independent oracle: minimise the full crystal potential with phi held fixed
# ---------------------------------------------------------------------------


def constrained_energy(N, alpha, phi, lam=None):
    state, modes = crystal.linear_modes(N, alpha)
    B = modes.vectors
    zz = modes.zigzag_index
    b = B[:, zz]
    Q = np.delete(B, zz, axis=1)
    x0 = state.coords
    q = np.zeros(Q.shape[1])
    for _ in range(50):
        e, g, h = crystal.potential(x0 + phi * b + Q @ q, alpha, lam)
        gq = Q.T @ g
        if np.max(np.abs(gq)) < 1e-15:
            break
        q -= np.linalg.solve(Q.T @ h @ Q, gq)
    e0, _, _ = crystal.potential(x0, alpha, lam)
    return e - e0


def fitted_coefficients(N, alpha, lam=None, span=0.03, deg=8):
    phis = np.linspace(-span, span, 41)
    U = np.array([constrained_energy(N, alpha, p, lam) for p in phis])
    c = np.polynomial.polynomial.polyfit(phis, U, deg)
    return c  # c[k] multiplies phi^k


@pytest.mark.parametrize("N", [3, 4, 5])
def test_quartic_matches_constrained_minimisation(N):
    ac = crystal.critical_alpha_pseudo(N)
    c = fitted_coefficients(N, ac)
    _, C4 = effective.ideal_coefficients(N)
    assert abs(c[2]) < 1e-8
    assert C4 == pytest.approx(4 * c[4], rel=1e-5)


@pytest.mark.parametrize("N, term", [(3, (1, 2)), (4, (1, 3)), (5, (1, 4)), (5, (1, 2)), (3, (3, 0)), (4, (3, 0))])
def test_bias_sensitivity_matches_constrained_minimisation(N, term):
    ac = crystal.critical_alpha_pseudo(N)
    lam = 1e-4  # third-order terms in lambda matter for strongly cancelling sums
    cp = fitted_coefficients(N, ac, {term: lam})
    cm = fitted_coefficients(N, ac, {term: -lam})
    d = (cp - cm) / (2 * lam)  # first order in lambda
    dC1, dC3 = effective.bias_sensitivity(N, term)
    assert dC1 == pytest.approx(d[1], rel=1e-5, abs=1e-9)
    assert dC3 == pytest.approx(3 * d[3], rel=1e-4, abs=1e-4)


@pytest.mark.parametrize("N", [3, 5])
def test_zigzag_amplitude_below_threshold(N):
    # U minimum at phi^2 = -C2 / C4 near the critical point
    ac = crystal.critical_alpha_pseudo(N)
    eps = 1e-4
    lin = crystal.linear_configuration(N, ac - eps)
    zz = crystal.equilibrium(N, ac - eps, seed_hint=crystal.ZIGZAG_R)
    _, modes = crystal.linear_modes(N, ac - eps)
    phi = abs(modes.zigzag_vector @ (zz.coords - lin.coords))
    _, C4 = effective.ideal_coefficients(N)
    assert phi**2 == pytest.approx(eps / C4, rel=5e-3)


def test_linear_response_to_bias():
    # on the linear side a small C1 displaces the chain by -C1 / C2
    N, term, lam, delta = 3, (1, 2), 1e-7, 0.3
    ac = crystal.critical_alpha_pseudo(N)
    s0 = crystal.linear_configuration(N, ac + delta)
    s1 = crystal.equilibrium(N, ac + delta, lam={term: lam})
    _, modes = crystal.linear_modes(N, ac + delta)
    phi = modes.zigzag_vector @ (s1.coords - s0.coords)
    dC1, _ = effective.bias_sensitivity(N, term)
    assert phi == pytest.approx(-dC1 * lam / delta, rel=1e-4)


# ---------------------------------------------------------------------------
# tensor machinery
# ---------------------------------------------------------------------------


def test_pair_derivatives_closed_forms():
    d = -1.7
    D = effective.pair_derivatives(d, 4)
    ad = abs(d)
    assert D[0, 0] == pytest.approx(1 / ad)
    assert D[0, 1] == pytest.approx(-math.copysign(1, d) / ad**2)
    assert D[0, 2] == pytest.approx(2 / ad**3)
    assert D[2, 0] == pytest.approx(-1 / ad**3)
    assert D[2, 2] == pytest.approx(-12 / ad**5)
    assert D[4, 0] == pytest.approx(9 / ad**5)
    assert np.all(D[1::2] == 0)


@pytest.mark.parametrize("N", [3, 4])
def test_cubic_tensor_matches_hessian_differences(N):
    ac = crystal.critical_alpha_pseudo(N)
    state, modes = crystal.linear_modes(N, ac)
    tens = effective.expand_modes(state, modes, order=5)
    B = modes.vectors
    eps = 1e-5
    for k in range(2 * N):
        _, _, hp = crystal.potential(state.coords + eps * B[:, k], ac)
        _, _, hm = crystal.potential(state.coords - eps * B[:, k], ac)
        fd = B.T @ (hp - hm) @ B / (2 * eps)
        assert np.allclose(tens.cubic()[:, :, k], fd, atol=1e-6)
    # full symmetry under index permutations
    T4 = tens.quartic()
    assert np.allclose(T4, np.transpose(T4, (1, 0, 2, 3)))
    assert np.allclose(T4, np.transpose(T4, (3, 2, 1, 0)))


def test_orders_agree_on_quartic():
    ac = crystal.critical_alpha_pseudo(4)
    state, modes = crystal.linear_modes(4, ac)
    c5 = effective.reduce_to_zigzag(effective.expand_modes(state, modes, order=5)).C4
    c6 = effective.reduce_to_zigzag(effective.expand_modes(state, modes, order=6)).C4
    assert c5 == pytest.approx(c6, rel=1e-12)


def test_expand_modes_validation():
    state, modes = crystal.linear_modes(3, 3.0)
    with pytest.raises(DomainError):
        effective.expand_modes(state, modes, order=4)
    zz = crystal.equilibrium(3, 1.5)
    with pytest.raises(DomainError):
        effective.expand_modes(zz, crystal.normal_modes(zz))


def test_soft_spectator_mode_raises():
    state, modes = crystal.linear_modes(3, 2.4)
    tens = effective.expand_modes(state, modes)
    w = tens.eigenvalues.copy()
    other = (tens.zigzag_index + 1) % w.size
    w[other] = 0.0
    with pytest.raises(DegeneracyError):
        effective.elimination_path(replace(tens, eigenvalues=w))


def test_reduce_sets_c2_and_warns_far_from_threshold():
    ac, tens = effective._ideal_expansion(3)
    pot = effective.reduce_to_zigzag(tens, alpha=ac + 0.2)
    assert pot.C2 == pytest.approx(0.2)
    assert pot.C1 == 0 and pot.C3 == 0
    with pytest.warns(RuntimeWarning):
        effective.reduce_to_zigzag(tens, alpha=ac + 1.0)


def test_expansion_away_from_threshold_recovers_critical_point():
    N = 3
    ac = crystal.critical_alpha_pseudo(N)
    state, modes = crystal.linear_modes(N, ac + 0.3)
    pot = effective.reduce_to_zigzag(effective.expand_modes(state, modes))
    assert pot.alpha_c == pytest.approx(ac, abs=1e-9)
    assert pot.C4 == pytest.approx(effective.ideal_coefficients(N)[1], rel=1e-9)


def test_even_parity_terms_do_not_bias():
    # lambda_{0,m} has no y dependence; lambda_{3,0} cannot bias a chain with
    # an even number of ions (the zigzag pattern sums to zero)
    for N in (3, 4, 5):
        assert effective.bias_sensitivity(N, (0, 3)) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert effective.bias_sensitivity(4, (3, 0))[1] == pytest.approx(0.0, abs=1e-12)
    assert effective.bias_sensitivity(3, (3, 0))[1] != 0.0


def test_lambda_shifts_are_reported_but_not_applied():
    pot = effective.zigzag_potential(5, effective.ideal_coefficients(5)[0], lam={(0, 2): 1e-3, (2, 2): 1e-3})
    assert pot.C2 == 0.0
    assert pot.C4 == pytest.approx(effective.ideal_coefficients(5)[1])
    assert pot.delta_C2 != 0.0 and pot.delta_C4 != 0.0


@pytest.mark.parametrize("N, term", [(1, (1, 2)), (8, (1, 2)), (3, (1, 0)), (3, (4, 3)), (3, (-1, 3))])
def test_bias_sensitivity_domain(N, term):
    with pytest.raises(DomainError):
        effective.bias_sensitivity(N, term)


def test_sensitivity_table_and_json():
    table = effective.sensitivity_table([3], [(1, 2)])
    assert set(table) == {"3,1,2"}
    assert table["3,1,2"]["dC1"] == pytest.approx(effective.bias_sensitivity(3, (1, 2))[0])
    pot = effective.zigzag_potential(3, 2.4)
    assert '"C4"' in effective.potential_json(pot, nu_z_hz=1.0)


# ---------------------------------------------------------------------------
# classical analysis of U(phi)
# ---------------------------------------------------------------------------


def _pot(C1=0.0, C2=-0.01, C3=0.0, C4=4.54):
    return ZigzagPotential(C1=C1, C2=C2, C3=C3, C4=C4, alpha=1.0, alpha_c=1.0, hbar_eff=1e-5, N=5)


def test_symmetric_double_well():
    p = _pot()
    mins = effective.classical_minima(p)
    assert [b.phi for b in mins] == pytest.approx([-math.sqrt(0.01 / 4.54), math.sqrt(0.01 / 4.54)])
    top = effective.barrier(p)
    assert top.phi == pytest.approx(0.0, abs=1e-15)
    assert mins[0].U == pytest.approx(-0.01**2 / (4 * 4.54))
    assert mins[0].curvature == pytest.approx(0.02)


def test_single_well():
    p = _pot(C2=0.01)
    assert len(effective.classical_minima(p)) == 1
    assert effective.barrier(p) is None


@settings(max_examples=60)
@given(st.floats(-1e-4, 1e-4), st.floats(-0.05, 0.05), st.floats(-1e-2, 1e-2), st.floats(0.5, 8.0))
def test_stationary_points_are_roots(C1, C2, C3, C4):
    p = _pot(C1, C2, C3, C4)
    pts = effective.stationary_points(p)
    assert 1 <= len(pts) <= 3
    for b in pts:
        assert abs(float(p.dU(b.phi))) < 1e-12
    assert [b.phi for b in pts] == sorted(b.phi for b in pts)


def test_derivatives_consistent():
    p = _pot(1e-5, -0.01, 3e-3, 4.5)
    x = np.linspace(-0.1, 0.1, 7)
    h = 1e-6
    assert np.allclose(p.dU(x), (p.U(x + h) - p.U(x - h)) / (2 * h), atol=1e-9)
    assert np.allclose(p.d2U(x), (p.dU(x + h) - p.dU(x - h)) / (2 * h), atol=1e-7)


def test_validity_warning():
    with pytest.warns(RuntimeWarning):
        effective.check_validity(_pot(C2=-0.1), 303e3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        effective.check_validity(_pot(C2=-0.001), 303e3)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


def test_family_mapping():
    fam = PotentialFamily.for_ions(5, nu_z=303e3, nu_yc=760e3, C1=1e-7)
    assert fam.alpha_c == pytest.approx((760 / 303) ** 2)
    p = fam.at_detuning(-100.0)
    assert p.C2 == pytest.approx((759.9e3**2 - 760e3**2) / 303e3**2)
    assert p.C1 == 1e-7
    assert float(fam.nu_y_of_c2(p.C2)) == pytest.approx(759.9e3)
    assert float(fam.energy_to_hz(fam.hbar_eff)) == pytest.approx(303e3)
    assert fam.with_bias(C1=0.0).at_c2(0.0).C1 == 0.0


def test_family_defaults():
    ac0, _ = effective.ideal_coefficients(3)
    fam = PotentialFamily.for_ions(3, nu_yc=750e3)
    assert fam.nu_z == pytest.approx(750e3 / math.sqrt(ac0))
    from lzcrystal.trap import PAPER_TRAP
    f2 = PotentialFamily.for_ions(5, trap=PAPER_TRAP, micromotion=True)
    assert f2.nu_z == PAPER_TRAP.nu_z0
    assert f2.alpha_c > effective.ideal_coefficients(5)[0]
    with pytest.raises(DomainError):
        PotentialFamily.for_ions(3)
