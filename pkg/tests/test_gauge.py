import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbitstat.gauge import (
    GaugeDomainError, GaugeFunction, GaugeKind, affine_embed, block, frobenius, frobenius_threshold, height,
    in_ball,
)


def test_height_examples():
    assert height(frobenius(), np.eye(2)) == pytest.approx(0.5 * math.log(2), abs=1e-15)
    assert height(frobenius(), np.array([[2, 1], [1, 1]])) == pytest.approx(0.5 * math.log(7), abs=1e-15)
    assert height(block(2), affine_embed(np.eye(2, dtype=int), [0, 0])) == pytest.approx(0.5 * math.log(3))


def test_block_accepts_pairs():
    assert height(block(2), (np.eye(2, dtype=int), np.array([1, 2]))) == pytest.approx(0.5 * math.log(8))


def test_in_ball_examples():
    I = np.eye(2, dtype=int)
    assert in_ball(frobenius(), I, 0.3466)
    assert not in_ball(frobenius(), I, 0.3)
    assert in_ball(frobenius(), np.array([[0, 1], [-1, 0]]), 0.5 * math.log(2))
    assert in_ball(frobenius(), I.astype(float), 0.5 * math.log(2))


def test_zero_matrix_rejected():
    with pytest.raises(GaugeDomainError):
        height(frobenius(), np.zeros((2, 2)))
    with pytest.raises(GaugeDomainError):
        in_ball(frobenius(), np.zeros((2, 2), dtype=int), 1.0)


def test_dimension_mismatch():
    with pytest.raises(GaugeDomainError):
        height(frobenius(2), np.eye(3))


def test_gauge_validation():
    with pytest.raises(ValueError):
        GaugeFunction(GaugeKind.POLYNOMIAL, 3, 2)
    with pytest.raises(ValueError):
        GaugeFunction(GaugeKind.FROBENIUS, 2, 2)


def test_complex_entries_use_modulus():
    m = np.array([[1j, 0], [0, -1j]])
    assert height(frobenius(), m) == pytest.approx(0.5 * math.log(2))


def test_threshold_is_exact_at_integers():
    for s in (2, 7, 144, 10**6 + 3):
        assert frobenius_threshold(0.5 * math.log(s)) == s


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4).filter(lambda v: sum(x * x for x in v) > 1e-6),
       st.sampled_from([2.0, 0.5, -3.0]))
def test_homogeneity(entries, lam):
    m = np.array(entries).reshape(2, 2)
    assert abs(height(frobenius(), lam * m) - (height(frobenius(), m) + math.log(abs(lam)))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4).filter(lambda v: sum(x * x for x in v) > 1e-6),
       st.sampled_from([2, 4]))
def test_polynomial_gauge_homogeneity(entries, deg):
    g = GaugeFunction(GaugeKind.POLYNOMIAL, deg, 2)
    m = np.array(entries).reshape(2, 2)
    assert g(2.5 * m) == pytest.approx(2.5 ** deg * g(m), rel=1e-12)
    assert g(m) > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50))
def test_adjugate_symmetry(a, b, c):
    # complete to det 1 when possible: a d - b c = 1
    if a == 0 or (1 + b * c) % a:
        return
    d = (1 + b * c) // a
    m = np.array([[a, b], [c, d]])
    inv = np.array([[d, -b], [-c, a]])
    assert height(frobenius(), m) == height(frobenius(), inv)


def test_submultiplicative_sandwich():
    rng = np.random.default_rng(3)
    g = frobenius()
    for _ in range(200):
        g1, g2 = rng.normal(size=(2, 2)) * 0.3 + np.eye(2), rng.normal(size=(2, 2)) * 0.3 + np.eye(2)
        h = rng.normal(size=(2, 2)) * 5
        c = math.log(np.linalg.norm(g1, 2) * np.linalg.norm(g2, 2))
        assert height(g, g1 @ h @ g2) <= height(g, h) + c + 1e-12
