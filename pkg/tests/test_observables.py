import math

import numpy as np
import pytest

from qdsf.bath import oracle_kernels, oracle_stats
from qdsf.coupling import CouplingSpec, make_mode
from qdsf.observables import (ObservableDomainError, ThermalSpec, characteristic_function,
                              evolution_kernels, free_field_kernels, ground_state_stats, mean_square_field,
                              mean_square_field_scan, thermal_moments, thermal_occupation)
from qdsf.spectral import build_density, moment_set

SPEC = CouplingSpec(0.1 * math.pi, 5.0)
MODE = make_mode(SPEC, 0.0, 1.0)
# Richardson extrapolation of the N = 2000, 4000 finite-bath occupation at T = 2
ORACLE_OCCUPATION_T2 = 2.5410909178387437


@pytest.fixture(scope="module")
def density():
    return build_density(SPEC, MODE)


@pytest.fixture(scope="module")
def moments(density):
    return moment_set(density)


@pytest.fixture(scope="module")
def weak():
    spec = CouplingSpec(1e-5, 5.0)
    d = build_density(spec, make_mode(spec, 0.0, 1.0))
    return d, moment_set(d)


def test_ground_state(moments):
    g = ground_state_stats(moments)
    assert g.var_phi == pytest.approx(moments.mean_inv_omega / 2)
    assert g.var_pi == pytest.approx(moments.mean_omega / 2)
    assert g.energy > 0.5 and g.energy_excess > 0
    assert g.uncertainty_product >= 0.25


def test_free_limit_ground_state(weak):
    g = ground_state_stats(weak[1])
    assert g.var_phi == pytest.approx(0.5, rel=1e-4)
    assert g.var_pi == pytest.approx(0.5, rel=1e-4)
    assert 0.5 < g.energy < 0.5 + 1e-5


def test_characteristic_function(moments, weak):
    assert characteristic_function(moments, 0.0, 0.0) == 1.0
    er, ei = np.meshgrid(np.linspace(-3, 3, 13), np.linspace(-3, 3, 13))
    chi = characteristic_function(moments, er, ei)
    assert np.all(chi > 0) and np.all(chi <= 1)
    assert np.all(np.log(chi)[(er != 0) | (ei != 0)] < 0)
    free = characteristic_function(weak[1], 1.2, -0.7)
    assert free == pytest.approx(math.exp(-(1.2**2 + 0.7**2) / 2), rel=1e-4)


def test_kernels_at_zero(density):
    ek = evolution_kernels(density, [0.0, 1.0])
    assert ek.K_cos[0] == pytest.approx(1.0, abs=1e-6)
    assert ek.K_sin_over_omega[0] == 0.0 and ek.K_omega_sin[0] == 0.0
    phi, pi = ek.propagate(0.7, -0.2)
    assert phi[0] == pytest.approx(0.7, abs=1e-6) and pi[0] == pytest.approx(-0.2, abs=1e-6)


@pytest.fixture(scope="module")
def kernels_and_oracle(density, canonical_bath):
    t = np.linspace(0.0, 50.0, 501)
    bath = canonical_bath
    return evolution_kernels(density, t), oracle_kernels(bath, t), oracle_stats(bath, 2.0)


def test_kernels_against_finite_bath(kernels_and_oracle):
    ek, (kc, ks, kw), _ = kernels_and_oracle
    assert np.abs(ek.K_cos - kc).max() <= 1e-3
    assert np.abs(ek.K_sin_over_omega - ks).max() <= 1e-3
    assert np.abs(ek.K_omega_sin - kw).max() <= 1e-3
    assert np.all(np.abs(ek.K_cos) <= 1 + 1e-9)


def test_kernel_decay(density):
    t1 = 20.0
    t = np.linspace(0.0, 2 * t1, 801)
    kc = evolution_kernels(density, t).K_cos
    assert np.abs(kc[t > t1]).max() < np.abs(kc[t <= t1]).max()


def test_free_limit_first_principles_dynamics(weak):
    d, _ = weak
    t = np.linspace(0.0, 20.0, 201)
    ek = evolution_kernels(d, t, "first-principles")
    c, s, ws = free_field_kernels(1.0, t)
    phi, pi = ek.propagate(0.3, 0.8)
    assert np.abs(phi - (c * 0.3 + s * 0.8)).max() <= 1e-3
    assert np.abs(pi - (c * 0.8 - ws * 0.3)).max() <= 1e-3


def test_as_printed_propagation_is_not_free_motion(weak):
    # compared, not asserted equal: the printed prefactor halves the pi0 term at omega_k = 1
    d, _ = weak
    ek = evolution_kernels(d, np.array([math.pi / 2]), "as-printed")
    phi, _ = ek.propagate(0.0, 1.0)
    assert phi[0] == pytest.approx(0.5, abs=1e-3)


def test_thermal_variants_against_oracle(moments, kernels_and_oracle):
    st = kernels_and_oracle[2]
    fp = thermal_occupation(moments, 2.0, "first-principles")
    ap = thermal_occupation(moments, 2.0, "as-printed")
    assert fp == pytest.approx(st.occupation, rel=1e-2)
    assert fp == pytest.approx(ORACLE_OCCUPATION_T2, rel=1e-8)
    assert abs(ap - st.occupation) / st.occupation > 1e-2


def test_thermal_zero_temperature(moments):
    assert thermal_moments(moments, 0.0) == (0.0, 0.0)
    expected = moments.mean_omega / 4 + moments.mean_inv_omega / 4 - 0.5
    assert thermal_occupation(moments, ThermalSpec(0.0)) == pytest.approx(expected)
    assert expected >= 0


def test_thermal_monotone_in_T(moments):
    for variant in ("first-principles", "as-printed"):
        occ = [thermal_occupation(moments, T, variant) for T in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(b > a for a, b in zip(occ, occ[1:]))


def test_thermal_free_limit(weak):
    n = 1 / math.expm1(1.0)
    assert thermal_occupation(weak[1], 1.0, "first-principles") == pytest.approx(n, rel=1e-4)
    assert thermal_occupation(weak[1], 1.0, "as-printed") == pytest.approx(n, rel=1e-4)


def test_thermal_domain_errors(moments):
    with pytest.raises(ObservableDomainError):
        ThermalSpec(-1.0)
    with pytest.raises(ObservableDomainError):
        thermal_occupation(moments, -0.5)
    with pytest.raises(ValueError):
        thermal_occupation(moments, 1.0, "printed")


def test_superohmic_thermal_is_integrable():
    spec = CouplingSpec(0.2, 2.0, s=2.0)
    ms = moment_set(build_density(spec, make_mode(spec, 0.0, 1.0)))
    assert thermal_occupation(ms, 1.0) > thermal_occupation(ms, 0.0)


def test_mean_square_field_log_growth():
    scan = mean_square_field_scan(SPEC, 1.0, [25.0, 50.0, 100.0, 200.0])
    vals = np.array([s.value for s in scan])
    steps = np.diff(vals)
    # each doubling adds ln2 / (4 pi^2): (1/2pi^2) * (1/2) * ln 2 from the free-field bracket 1/(2 w_k)
    assert np.allclose(steps, math.log(2) / (4 * math.pi**2), rtol=5e-3)
    single = mean_square_field(SPEC, 1.0, k_max=50.0, n_k=24)
    assert single.value == pytest.approx(vals[1], rel=1e-6) and single.k_max == 50.0


def test_mean_square_field_independent_of_t():
    a = mean_square_field(SPEC, 1.0, x=0.3, t=0.0, k_max=10.0, n_k=12)
    b = mean_square_field(SPEC, 1.0, x=0.3, t=7.5, k_max=10.0, n_k=12)
    assert a.value == b.value


def test_mean_square_field_requires_mass_and_cutoff():
    with pytest.raises(ObservableDomainError):
        mean_square_field(SPEC, 0.0, k_max=10.0)
    with pytest.raises(ObservableDomainError):
        mean_square_field(SPEC, 1.0, k_max=0.0)


def test_kernel_csv(density):
    ek = evolution_kernels(density, np.linspace(0, 1, 3))
    lines = ek.to_csv("h", 1.0, 0.0).splitlines()
    assert lines[1] == "t,K_cos,K_sin_over_omega,K_omega_sin,phi,pi" and len(lines) == 5
