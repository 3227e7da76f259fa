import io
import math

import numpy as np
import pytest

from orbitstat.arithmetic_groups import (
    CheckedArithmeticError, Family, GroupElement, GroupSpec, ball_count, brute_force_oracle, canonical_sorted,
    dump_ball, enumerate_ball, identity, spin_action, spin_matrix, sym_square,
)
from orbitstat.gauge import frobenius, in_ball


def _mats(spec, t):
    return list(enumerate_ball(spec, t))


def test_sl2z_smallest_ball():
    els = _mats(GroupSpec(Family.SL2Z), 0.5 * math.log(2))
    got = {tuple(e.matrix().ravel()) for e in els}
    assert got == {(1, 0, 0, 1), (-1, 0, 0, -1), (0, 1, -1, 0), (0, -1, 1, 0)}
    assert ball_count(GroupSpec(Family.SL2Z), 0.5 * math.log(2)) == 4


def test_gaussian_smallest_ball():
    els = _mats(GroupSpec(Family.SL2ZI), 0.5 * math.log(2))
    assert len(els) == 8
    got = {tuple(e.matrix().ravel()) for e in els}
    for u in (1, -1, 1j, -1j):
        assert (u, 0, 0, 1 / u) in got
    for b, c in ((1, -1), (-1, 1), (1j, 1j), (-1j, -1j)):
        assert (0, b, c, 0) in got


def test_solvable_t0():
    els = _mats(GroupSpec(Family.SOLVABLE), 0.0)
    assert len(els) == 5
    assert all(e.power == 0 for e in els)
    assert {e.translation for e in els} == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


@pytest.mark.parametrize("family,t", [(Family.SL2Z, math.log(8)), (Family.SL2ZI, 0.5 * math.log(5)),
                                      (Family.SL2Z, 0.5 * math.log(2)), (Family.SL2ZI, math.log(3))])
def test_oracle_equality(family, t):
    spec = GroupSpec(family)
    assert _mats(spec, t) == brute_force_oracle(spec, t)


@pytest.mark.parametrize("family", list(Family))
def test_count_matches_enumeration_and_members_in_ball(family):
    spec = GroupSpec(family)
    t = {Family.SOLVABLE: 2.0, Family.AFFINE: 1.2}.get(family, 1.5)
    els = _mats(spec, t)
    assert len(els) == ball_count(spec, t)
    assert len(set(e.canonical_key() for e in els)) == len(els)
    if family in (Family.SL2Z, Family.SL2ZI):
        for e in els:
            assert in_ball(frobenius(), e.matrix() if not e.is_gaussian else np.array(
                [[complex(*z) for z in e.gaussian_entries()[:2]], [complex(*z) for z in e.gaussian_entries()[2:]]]), t)


def test_canonical_order():
    els = _mats(GroupSpec(Family.SL2Z), 2.0)
    assert els == canonical_sorted(els)


def test_inverse_closure():
    els = _mats(GroupSpec(Family.SL2Z), 2.5)
    keys = {e.canonical_key() for e in els}
    assert all(e.inverse().canonical_key() in keys for e in els)


@pytest.mark.parametrize("family", [Family.SL2Z, Family.SL2ZI, Family.SYM_SQUARE, Family.AFFINE])
@pytest.mark.parametrize("t", [1.0, 1.7, 2.3])
def test_monotone(family, t):
    spec = GroupSpec(family)
    small = {e.canonical_key() for e in enumerate_ball(spec, t)}
    big = {e.canonical_key() for e in enumerate_ball(spec, t + 0.1)}
    assert small <= big


def test_chunking_does_not_change_stream():
    spec = GroupSpec(Family.SL2ZI)
    assert list(enumerate_ball(spec, 2.0, chunk_size=37)) == list(enumerate_ball(spec, 2.0))


def test_sym_square_examples():
    assert np.array_equal(sym_square(identity()), np.eye(3, dtype=np.int64))
    u = GroupElement.from_matrix([[1, 1], [0, 1]])
    m = sym_square(u)
    # (alpha, beta, delta) -> (alpha, 2 alpha + beta, alpha + beta + delta)
    assert np.array_equal(np.array([1, 0, 0]) @ m, [1, 2, 1])
    assert np.array_equal(np.array([0, 1, 0]) @ m, [0, 1, 1])
    assert np.array_equal(np.array([0, 0, 1]) @ m, [0, 0, 1])


def test_spin_examples():
    x = np.array([0.3, 1.2, -0.4, 2.0])
    assert np.allclose(spin_action(identity(), x), x)
    u = GroupElement.from_matrix([[1, 1], [0, 1]])
    y = spin_action(u, [0.0, 1.0, 0.0, 0.0])
    # Lorentz form -x0^2 + x1^2 + x2^2 + x3^2 is preserved
    assert -y[0] ** 2 + y[1] ** 2 + y[2] ** 2 + y[3] ** 2 == pytest.approx(1.0)
    assert np.allclose(y, [1, 1, 0, 1])


def _random_elements(spec, n, rng):
    pool = list(enumerate_ball(spec, 2.0))
    return [pool[i] for i in rng.integers(len(pool), size=n)]


def test_homomorphisms():
    rng = np.random.default_rng(0)
    for fam, img in ((Family.SL2Z, sym_square), (Family.SL2ZI, spin_matrix)):
        a = _random_elements(GroupSpec(fam), 100, rng)
        b = _random_elements(GroupSpec(fam), 100, rng)
        for g, h in zip(a, b):
            assert np.allclose(img(g @ h), img(g) @ img(h), atol=1e-9)


def test_checked_arithmetic():
    big = GroupElement.from_matrix([[2**40, 2**40 - 1], [1, 1]])
    with pytest.raises(CheckedArithmeticError):
        big @ big
    with pytest.raises(ValueError):
        GroupElement.from_matrix([[2, 0], [0, 1]])


def test_oracle_refuses_large_t():
    with pytest.raises(ValueError):
        brute_force_oracle(GroupSpec(Family.SL2Z), 10.0)


def test_dump_ball_format():
    buf = io.StringIO()
    n = dump_ball(GroupSpec(Family.SL2Z), 0.5 * math.log(2), buf)
    lines = buf.getvalue().splitlines()
    assert n == 4
    fam, t, count = lines[0].split()
    assert fam == "sl2z" and int(count) == 4 and len(lines) == 5
    assert all(all(tok.lstrip("-").isdigit() for tok in ln.split()) for ln in lines[1:])


def test_hyperbolic_generator_required():
    with pytest.raises(ValueError):
        GroupSpec(Family.SOLVABLE, generator=((1, 1), (0, 1)))


def test_growth_exponent_small():
    spec = GroupSpec(Family.SL2Z)
    ts = np.arange(4.0, 5.51, 0.25)
    counts = [ball_count(spec, t) for t in ts]
    slope = np.polyfit(ts, np.log(counts), 1)[0]
    assert abs(slope - 2) < 0.1
