import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdsf import quad
from qdsf.coupling import (CouplingSpec, InvalidCouplingError, Mode, check_positivity, eval_f, eval_v,
                           eval_v_sq, make_mode, omega_k, renormalized_frequency_sq)

specs = st.builds(CouplingSpec,
                  gamma=st.floats(1e-4, 10.0),
                  cutoff=st.floats(0.05, 50.0),
                  s=st.floats(1.0, 3.0))


def test_f_values():
    assert eval_f(CouplingSpec(math.pi / 2, 1.0), 0.0) == 0.0
    assert eval_f(CouplingSpec(math.pi / 2, 1.0), 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert eval_f(CouplingSpec(2 * math.pi, 3.0, s=2.0), 3.0) == pytest.approx(6 * math.exp(-1), rel=1e-14)


def test_f_rejects_negative_frequency():
    with pytest.raises(ValueError):
        eval_f(CouplingSpec(1.0, 1.0), -0.1)
    with pytest.raises(ValueError):
        eval_f(CouplingSpec(1.0, 1.0), np.array([1.0, -1.0]))


def test_v_values():
    spec = CouplingSpec(math.pi / 2, 1.0)
    assert eval_v(spec, make_mode(spec, 1.0, 0.0), 1.0) == pytest.approx(math.exp(-1) / 2, rel=1e-14)
    assert eval_v(spec, make_mode(spec, 4.0, 3.0), 1.0) == pytest.approx(math.exp(-1) / (2 * math.sqrt(5)), rel=1e-14)
    assert eval_v(spec, 1.0, 0.0) == 0.0
    assert eval_v(spec, 1.0, 1e-300) < 1e-140


def test_spec_validation():
    for bad in (dict(gamma=-1.0, cutoff=1.0), dict(gamma=1.0, cutoff=0.0), dict(gamma=1.0, cutoff=1.0, s=0.5),
                dict(gamma=math.nan, cutoff=1.0), dict(gamma=1.0, cutoff=1.0, family="lorentzian")):
        with pytest.raises(ValueError):
            CouplingSpec(**bad)


def test_renormalized_frequency():
    assert renormalized_frequency_sq(CouplingSpec(math.pi, 1.0), 0.0, 2.0) == pytest.approx(3.0, rel=1e-15)
    assert renormalized_frequency_sq(CouplingSpec(math.pi, 1.0, s=2.0), 0.0, 2.0) == pytest.approx(3.5, rel=1e-15)
    assert renormalized_frequency_sq(CouplingSpec(0.0, 1.0), 3.0, 4.0) == 25.0


@pytest.mark.parametrize("s", [1.0, 1.3, 2.0, 2.7])
def test_coupling_integral_closed_form_matches_quadrature(s):
    spec = CouplingSpec(0.7, 2.5, s)
    num = quad.integrate_semi_infinite(lambda w: eval_f(spec, w) ** 2 / w**2, 1e-12, scale=2.5)
    assert spec.coupling_integral() == pytest.approx(float(num.value), rel=1e-10)


def test_positivity_verdicts():
    ok = check_positivity(CouplingSpec(math.pi, 1.0), 0.0, 2.0)
    assert ok and ok.label == "PASS" and ok.margin == pytest.approx(3.0)
    bad = check_positivity(CouplingSpec(5 * math.pi, 1.0), 0.0, 2.0)
    assert not bad and bad.label == "FAIL" and bad.margin == pytest.approx(-1.0)
    assert check_positivity(CouplingSpec(0.0, 1.0), 0.3, 0.0)


def test_mode_construction_rejected_on_fail():
    with pytest.raises(InvalidCouplingError) as info:
        make_mode(CouplingSpec(5 * math.pi, 1.0), 0.0, 2.0)
    assert info.value.margin == pytest.approx(-1.0)
    with pytest.raises(InvalidCouplingError):
        Mode(0.0, 1.0, 1.0, 0.0)


def test_critical_gamma_is_the_boundary():
    spec = CouplingSpec(0.3, 4.0, 1.5)
    wk = omega_k(1.0, 2.0)
    gc = spec.critical_gamma(wk)
    assert check_positivity(spec.with_gamma(gc * (1 - 1e-9)), 1.0, 2.0)
    assert not check_positivity(spec.with_gamma(gc * (1 + 1e-9)), 1.0, 2.0)


@settings(max_examples=60, deadline=None)
@given(spec=specs, wk=st.floats(0.1, 20.0), w=st.floats(0.0, 100.0))
def test_v_f_identity(spec, wk, w):
    f2 = eval_f(spec, w) ** 2
    assert eval_v_sq(spec, wk, w) * 4 * w * wk == pytest.approx(f2, rel=1e-12, abs=1e-300)
    assert eval_f(spec, w) >= 0


@settings(max_examples=60, deadline=None)
@given(spec=specs, k=st.floats(0.0, 5.0), m=st.floats(0.0, 5.0), frac=st.floats(0.0, 1.0))
def test_positivity_monotone_in_gamma(spec, k, m, frac):
    if check_positivity(spec, k, m):
        assert check_positivity(spec.with_gamma(spec.gamma * frac), k, m)


def test_mode_frequency_bounds():
    mode = make_mode(CouplingSpec(0.01, 1.0), 3.0, 4.0)
    assert mode.omega_k == 5.0 and mode.omega_k >= mode.m and mode.omega_k >= mode.k
