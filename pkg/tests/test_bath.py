import dataclasses
import math

import numpy as np
import pytest

from qdsf.bath import (InstabilityError, bose_einstein, diagonalize, discretize, oracle_kernels,
                       oracle_stats)
from qdsf.coupling import CouplingSpec, check_positivity, make_mode, omega_k
from qdsf.spectral import build_density, moment_set

SPEC = CouplingSpec(0.1 * math.pi, 5.0)
MODE = make_mode(SPEC, 0.0, 1.0)


def test_discrete_coupling_sum_converges():
    for N in (100, 1000, 4000):
        b = discretize(SPEC, MODE, N)
        exact = SPEC.gamma * SPEC.cutoff / math.pi
        assert abs(b.coupling_sum() - exact) / exact <= 10 / N
        assert b.frequencies[0] == pytest.approx(b.omega_max / (2 * N))


def test_two_level_and_one_level_cases():
    b = diagonalize(discretize(SPEC, MODE, 2))
    assert b.eigenvalues.size == 3 and b.interlaces()
    b1 = diagonalize(discretize(SPEC, MODE, 1))
    wk2, w2, c = 1.0, b1.frequencies[0] ** 2, b1.couplings[0]
    disc = math.sqrt((wk2 - w2) ** 2 + 4 * c * c)
    assert np.allclose(np.sort(b1.eigenvalues), [(wk2 + w2 - disc) / 2, (wk2 + w2 + disc) / 2], rtol=1e-13)


def test_zero_coupling_is_block_diagonal():
    spec = CouplingSpec(0.0, 5.0)
    b = diagonalize(discretize(spec, make_mode(spec, 2.0, 1.0), 300))
    wk = omega_k(2.0, 1.0)
    i = int(np.argmax(b.weights_u2))
    assert b.weights_u2[i] == 1.0 and b.eigenfrequencies[i] == pytest.approx(wk, rel=1e-15)
    assert oracle_stats(b).var_phi == pytest.approx(1 / (2 * wk), rel=1e-15)


def test_coupling_sign_is_irrelevant():
    b = discretize(SPEC, MODE, 500)
    flipped = dataclasses.replace(b, couplings=-b.couplings)
    d1, d2 = diagonalize(b), diagonalize(flipped)
    assert np.allclose(d1.eigenvalues, d2.eigenvalues, rtol=1e-12)
    assert np.allclose(d1.weights_u2, d2.weights_u2, atol=1e-13)


def test_exactness_invariants():
    b = diagonalize(discretize(SPEC, MODE, 1500, scheme="log"))
    assert abs(b.weights_u2.sum() - 1) <= 1e-10
    assert b.residual <= 1e-10
    assert b.interlaces()
    assert np.all(b.eigenvalues >= 0)


@pytest.fixture(scope="module")
def continuum():
    return moment_set(build_density(SPEC, MODE))


def test_convergence_in_N(continuum, canonical_bath):
    ref = continuum.mean_inv_omega / 2
    errs = [abs(oracle_stats(diagonalize(discretize(SPEC, MODE, N))).var_phi - ref) for N in (500, 1000, 2000)]
    errs.append(abs(oracle_stats(canonical_bath).var_phi - ref))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] / ref <= 1e-2


def test_log_and_uniform_schemes_agree(canonical_bath):
    u = oracle_stats(canonical_bath)
    g = oracle_stats(diagonalize(discretize(SPEC, MODE, 4000, scheme="log")))
    assert g.var_phi == pytest.approx(u.var_phi, rel=1e-2)
    assert g.var_pi == pytest.approx(u.var_pi, rel=1e-2)


@pytest.mark.parametrize("frac", [0.5, 0.9, 1.1, 1.5])
def test_positivity_equivalence(frac):
    probe = CouplingSpec(1.0, 5.0)
    spec = probe.with_gamma(frac * probe.critical_gamma(1.0))
    stable = bool(check_positivity(spec, 0.0, 1.0))
    try:
        diagonalize(discretize(spec, (0.0, 1.0), 1000))
        discrete_stable = True
    except InstabilityError as exc:
        discrete_stable = False
        assert exc.min_eigenvalue < 0
    assert stable == discrete_stable


def test_kernels_at_zero_and_finite_sums():
    b = diagonalize(discretize(SPEC, MODE, 300))
    kc, ks, kw = oracle_kernels(b, np.array([0.0, 1.0]))
    assert kc[0] == pytest.approx(1.0, abs=1e-12) and ks[0] == 0 and kw[0] == 0
    assert kc[1] == pytest.approx(np.sum(b.weights_u2 * np.cos(b.eigenfrequencies)), rel=1e-12)


def test_thermal_stats_and_errors():
    b = diagonalize(discretize(SPEC, MODE, 300))
    s0, s2 = oracle_stats(b, 0.0), oracle_stats(b, 2.0)
    assert s0.thermal_var_phi == pytest.approx(s0.var_phi)
    assert s2.occupation > s0.occupation >= 0
    with pytest.raises(ValueError):
        oracle_stats(b, -1.0)
    assert bose_einstein(np.array([1.0]), 0.0)[0] == 0.0
    assert bose_einstein(1.0, 1.0) == pytest.approx(1 / math.expm1(1.0))


def test_spectrum_json_round_trip():
    import json
    b = diagonalize(discretize(SPEC, MODE, 50))
    rec = json.loads(b.to_json())
    assert len(rec["eigenfrequencies"]) == 51 and sum(rec["u_sq"]) == pytest.approx(1.0)
    with pytest.raises(RuntimeError):
        discretize(SPEC, MODE, 10).eigenfrequencies
