import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fqsearch.errors import InsufficientPoints, NonPositiveValue
from fqsearch.lattice import FractalSpec, metrics
from fqsearch.scaling import (ScalingFit, evaluate_hypotheses, fit_log_correction,
                              fit_power_law, integer_dimension_bound, regime, spectral_bound)

NS = [12, 144, 1728, 20736, 248832]


def fit_of(exponent, stderr=0.0):
    return ScalingFit(exponent, stderr, 0.0, ())


def test_exact_power_law():
    f = fit_power_law([(n, n**0.5) for n in NS])
    assert abs(f.exponent - 0.5) < 1e-12
    assert f.stderr < 1e-12
    f = fit_power_law([(n, 3.0 * n**-0.0350) for n in NS])
    assert abs(f.exponent + 0.0350) < 1e-12
    assert f.intercept == pytest.approx(math.log(3.0), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2), st.floats(1e-3, 1e3))
def test_exponent_scale_invariant(b, c):
    pts = [(n, n**b * (1 + 0.01 * i)) for i, n in enumerate(NS)]
    a = fit_power_law(pts)
    scaled = fit_power_law([(n, c * v) for n, v in pts])
    assert scaled.exponent == pytest.approx(a.exponent, abs=1e-9)
    assert scaled.intercept - a.intercept == pytest.approx(math.log(c), abs=1e-9)


def test_power_law_errors():
    with pytest.raises(InsufficientPoints):
        fit_power_law([(12, 1.0), (144, 2.0)])
    with pytest.raises(InsufficientPoints):
        fit_power_law([(12, 1.0), (12, 2.0), (144, 3.0)])
    with pytest.raises(NonPositiveValue):
        fit_power_law([(12, 1.0), (144, 0.0), (1728, 3.0)])
    with pytest.raises(NonPositiveValue):
        fit_power_law([(-1, 1.0), (144, 2.0), (1728, 3.0)])


def test_two_point_fit_when_allowed():
    f = fit_power_law([(56, 0.5), (3136, 0.5 * 56**-0.16)], allow_two_point=True)
    assert f.exponent == pytest.approx(-0.16, abs=1e-12)
    assert math.isnan(f.stderr)
    assert f.to_dict()["stderr"] is None


def test_log_correction_exact():
    ns = np.array(NS, dtype=float)
    f = fit_log_correction(list(zip(ns, np.sqrt(ns) * np.log(ns))))
    assert f.epsilon == pytest.approx(1.0, abs=1e-10)
    f = fit_log_correction(list(zip(ns, 2 * np.sqrt(ns))))
    assert f.epsilon == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(InsufficientPoints):
        fit_log_correction([(12, 3.0), (144, 12.0)])
    with pytest.raises(NonPositiveValue):
        fit_log_correction([(2, 1.0), (144, 12.0), (1728, 40.0)])


def test_gamma_error_in_quadrature():
    m = metrics(FractalSpec("carpet", 4, 2, 1))
    rep = evaluate_hypotheses(fit_of(0.60, 0.02), fit_of(-0.24, 0.03), m, 1.62, 0.02, s=4, s_prime=2)
    assert rep.gamma == pytest.approx(0.60 + 0.12)
    assert rep.gamma_err == pytest.approx(math.sqrt(0.02**2 + 0.03**2 / 4))
    assert rep.deltas["alphaMinus2BetaPlus1"][1] == pytest.approx(math.sqrt(0.03**2 + 0.04**2))


def test_example_beta_matches_inverse_ds():
    m = metrics(FractalSpec("carpet", 5, 3, 1))
    rep = evaluate_hypotheses(fit_of(0.64, 0.01), fit_of(-0.2), m, 1 / 0.64, s=5, s_prime=3)
    assert rep.deltas["betaMinusInvDs"][0] == pytest.approx(0.0, abs=1e-12)
    assert rep.regime == "inverse-spectral"


def test_example_alpha_relation():
    m = metrics(FractalSpec("sponge", 4, 2, 1))
    rep = evaluate_hypotheses(fit_of(0.552, 0.009), fit_of(-0.10, 0.04), m, 2.2, s=4, s_prime=2)
    assert round(rep.deltas["alphaMinus2BetaPlus1"][0], 2) == 0.00
    assert rep.predictions["alphaPred"][0] == pytest.approx(0.104)


def test_example_gamma_double_prime():
    m = metrics(FractalSpec("carpet", 6, 4, 1))
    # gamma = beta + alpha/2 = 0.84
    rep = evaluate_hypotheses(fit_of(0.70), fit_of(-0.28), m, 1.51, s=6, s_prime=4)
    g2 = rep.predictions["gammaDoublePrime"][0]
    assert g2 == pytest.approx(0.5 * (1.51 + math.log(20) / math.log(6) - 1.5))
    assert round(g2, 2) == 0.84
    assert abs(rep.deltas["gammaMinusGammaDoublePrime"][0]) < 0.01
    assert rep.predictions["gammaPrime"][0] == pytest.approx(1.51 + m.d_f - 6)


def test_sponge_uses_embedding_dimension():
    m = metrics(FractalSpec("sponge", 3, 1, 1))
    rep = evaluate_hypotheses(fit_of(0.51), fit_of(-0.035), m, 2.55, s=3, s_prime=1)
    assert rep.predictions["gammaPrime"][0] == pytest.approx(2.55 / 2 + m.d_f - 3)
    assert rep.regime == "grover"
    d = rep.to_dict()
    assert d["d_e"] == 3 and set(d["deltas"]) >= {"alphaMinus2BetaPlus1", "gammaMinusGammaPrime"}


@pytest.mark.parametrize("d_s,expected", [
    (1.62, "inverse-spectral"), (1.86, "critical"), (2.0, "critical"),
    (2.14, "critical"), (2.2, "grover"), (2.55, "grover"),
])
def test_regime(d_s, expected):
    assert regime(d_s) == expected


def test_bounds():
    assert integer_dimension_bound(4096, 2) == pytest.approx(128)
    assert integer_dimension_bound(10**9, 3) == pytest.approx(math.pi * 10**4.5 / 4)
    assert integer_dimension_bound(1000, 3) == pytest.approx(30)
    assert integer_dimension_bound(10**6, 1) == 10**6
    assert spectral_bound(1728, 1.62) == pytest.approx(1728 ** (1 / 1.62))
    assert spectral_bound(10**6, 2.55) == pytest.approx(math.pi * 1000 / 4)
