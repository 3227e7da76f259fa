import csv
import math

import numpy as np
import pytest

from orbitstat.gauge import frobenius
from orbitstat.volumes import (
    Method, StabilizerModel, VolumeSample, c_factor, de_sitter_section, fit_exponents, fit_growth,
    haar_ball_volume, holder_check, skew_ball_volume, theta_estimate, write_volume_csv,
)

SO11, SO12, SL2R, TORUS = (StabilizerModel(k) for k in ("SO11", "SO12", "SL2R", "TORUS"))


def test_so11_closed_form():
    v = haar_ball_volume(SO11, None, 5.0)
    assert v.method is Method.CLOSED_FORM
    assert v.value == pytest.approx(math.acosh(math.exp(10) / 2), rel=1e-12)
    assert v.value == pytest.approx(10.0, abs=1e-3)


def test_so11_quadrature_matches_closed_form():
    g = np.eye(2)
    for t in (1.5, 4.0, 7.0):
        q = skew_ball_volume(SO11, g, g, None, t)
        assert q.value == pytest.approx(haar_ball_volume(SO11, None, t).value, rel=1e-9)


def test_so12_growth_ratio():
    for t in (10.0, 11.0):
        r = haar_ball_volume(SO12, None, t + 1).value / haar_ball_volume(SO12, None, t).value
        assert r == pytest.approx(math.e, rel=0.01)


def test_sl2r_slope():
    ts = np.arange(3.0, 6.01, 0.5)
    vals = [haar_ball_volume(SL2R, None, t, seed=11).value for t in ts]
    assert np.polyfit(ts, np.log(vals), 1)[0] == pytest.approx(2.0, abs=0.05)


def test_skew_identity_equals_plain():
    for model, t in ((SO12, 6.0), (TORUS, 5.0)):
        g = np.eye(model.default_gauge().ambient_dim)
        assert skew_ball_volume(model, g, g, None, t).value == pytest.approx(haar_ball_volume(model, None, t).value,
                                                                              rel=1e-9)
    a = skew_ball_volume(SL2R, np.eye(2), np.eye(2), None, 4.0, seed=3)
    b = haar_ball_volume(SL2R, None, 4.0, seed=4)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)


def test_skew_de_sitter_ratio():
    skew = skew_ball_volume(SO12, de_sitter_section(3, 1.0), de_sitter_section(3, 0.0), None, 12.0)
    assert skew.value / haar_ball_volume(SO12, None, 12.0).value == pytest.approx(0.648054, rel=0.02)


def test_theta_examples():
    th = theta_estimate(SO12, de_sitter_section(3, 1.0), de_sitter_section(3, 1.0), None, 12.0)
    assert th.value == pytest.approx(0.420074, rel=0.02)
    assert th.stabilized
    for model in (SO11, SO12):
        g = np.eye(model.default_gauge().ambient_dim)
        assert theta_estimate(model, g, g, None, 6.0).value == pytest.approx(1.0, rel=1e-12)


def test_theta_k_invariance():
    g1 = de_sitter_section(3, 0.5)
    k = np.eye(4)
    a = 0.9
    k[:3, :3] = [[math.cos(a), math.sin(a), 0], [-math.sin(a), math.cos(a), 0], [0, 0, 1]]
    g2 = de_sitter_section(3, 1.0)
    base = theta_estimate(SO12, g1, g2, None, 10.0).value
    assert theta_estimate(SO12, g1, g2 @ k, None, 10.0).value == pytest.approx(base, rel=0.02)


def test_c_factor():
    assert c_factor(0, 0) == 1.0
    assert 1 / c_factor(1, 0) == pytest.approx(1 / math.cosh(1))


def test_mc_bit_reproducible():
    a = haar_ball_volume(SL2R, None, 3.0, seed=123)
    b = haar_ball_volume(SL2R, None, 3.0, seed=123)
    c = haar_ball_volume(SL2R, None, 3.0, seed=124)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value != c.value
    assert a.method is Method.MONTE_CARLO and a.admissible


def test_fit_growth_examples():
    cases = ((SO11, np.arange(4.0, 12.01), (0, 1)), (SO12, np.arange(4.0, 12.01), (1, 0)))
    for model, ts, (a, b) in cases:
        fit = fit_growth([haar_ball_volume(model, None, t) for t in ts])
        assert fit.b_hat == b and fit.a_hat == pytest.approx(a, abs=0.1)
    ts = np.arange(2.0, 6.01, 0.5)
    fit = fit_growth([haar_ball_volume(SL2R, None, t, seed=int(10 * t)) for t in ts])
    assert fit.b_hat == 0 and fit.a_hat == pytest.approx(2.0, abs=0.1)


def test_fit_exponents_synthetic():
    t = np.linspace(3, 12, 10)
    fit = fit_exponents(t, 5.0 * np.exp(1.5 * t) * t)
    assert fit.b_hat == 1 and fit.a_hat == pytest.approx(1.5, abs=1e-9)
    assert math.exp(fit.logc_hat) == pytest.approx(5.0)


def test_fit_growth_errors():
    with pytest.raises(ValueError):
        fit_exponents([1.0, 1.5, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_growth([VolumeSample(t, 1.0, Method.QUADRATURE) for t in range(5)])
    noisy = [VolumeSample(float(t), 1.0, Method.MONTE_CARLO, stderr=0.5) for t in range(10)]
    assert not noisy[0].admissible
    with pytest.raises(ValueError):
        fit_growth(noisy)


def test_holder():
    fit = holder_check(SO11, None, [3.0, 4.0, 5.0, 6.0, 7.0], [0.05, 0.1, 0.2, 0.4])
    assert fit.theta_hat == pytest.approx(1.0, abs=0.05)
    # relative increment ~ 2 eps / (2 t)
    assert fit.increments[2, 1] == pytest.approx(0.1 / 5.0, rel=0.05)
    fit = holder_check(SO12, None, [3.0, 4.0, 5.0, 6.0, 7.0], [0.05, 0.1, 0.2, 0.4], k_nodes=128)
    assert fit.theta_hat >= 0.9


def test_holder_small_eps_increment_vanishes():
    fit = holder_check(SO11, None, [3.0, 4.0, 5.0, 6.0, 7.0], [1e-6, 1e-3])
    assert np.all(fit.increments[:, 0] < 1e-6)


def test_input_validation():
    with pytest.raises(ValueError):
        haar_ball_volume(SO12, None, 0.5)
    with pytest.raises(ValueError):
        skew_ball_volume(SO12, np.zeros((4, 4)), np.eye(4), None, 3.0)


def test_gauge_passthrough():
    a = haar_ball_volume(SO11, frobenius(3), 4.0)
    assert a.gauge == "frobenius3" and a.value > 0


def test_csv(tmp_path):
    samples = [haar_ball_volume(SO11, None, 3.0), haar_ball_volume(SL2R, None, 3.0, seed=9)]
    write_volume_csv(tmp_path / "v.csv", samples)
    with open(tmp_path / "v.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == ["model", "gauge", "t", "g1_id", "g2_id", "value", "stderr", "method", "seed"]
    assert rows[1]["method"] == "monte-carlo" and rows[1]["seed"] == "9"
