import math

import numpy as np
import pytest

from orbitstat.sampling import (
    Normalization, OrbitAverageRequest, RateModel, ZeroDenominatorError, continuous_comparison,
    convergence_report, domain_restricted_affine_sum, fit_rates, normalizer, orbit_average, orbit_sums,
    ratio_average, report_rows, restricted_sums,
)
from orbitstat.spaces import SpaceModel, box_function, bump_function, radial_function


def _box_near(rng, center, w=1.0):
    lo = np.asarray(center) + rng.uniform(-1.5, 0.5, size=2)
    return box_function(lo, lo + rng.uniform(0.3, w, size=2))


def test_empty_ball_gives_zero():
    model = SpaceModel("punctured-plane")
    req = OrbitAverageRequest(model, np.array([1.0, 0.5]), box_function((2.0, 2.0), (3.0, 3.0)), 0.0)
    assert orbit_average(req) == 0.0


def test_linearity():
    model = SpaceModel("de-sitter-2")
    x = model.from_chart([0.2, 1.0])
    phi = bump_function((-1.0, 0.0), (1.0, 3.0))
    a = orbit_average(OrbitAverageRequest(model, x, phi, 4.0))
    b = orbit_average(OrbitAverageRequest(model, x, phi.scaled(2.0), 4.0))
    assert abs(b - 2 * a) <= 1e-12 * max(1.0, abs(a))


@pytest.mark.parametrize("kind", ["affine-sl2z", "affine-solvable"])
def test_restricted_equals_naive(kind):
    model = SpaceModel(kind)
    rng = np.random.default_rng(21)
    t = 3.0
    for _ in range(10):
        x = rng.uniform(-2, 2, size=2)
        phi = [box_function, bump_function, radial_function][rng.integers(3)]((0, 0), (1, 1))
        phi = phi.shifted(rng.uniform(-2, 2, size=2))
        naive = orbit_average(OrbitAverageRequest(model, x, phi, t))
        fast = domain_restricted_affine_sum(model, x, phi, t)
        assert abs(naive - fast) <= 1e-12


def test_restricted_many_levels_equal_naive():
    model = SpaceModel("affine-sl2z")
    xs = np.array([[0.31, -0.72], [1.4, 0.2]])
    phis = [box_function((0, 0), (1, 1)), bump_function((-1, 0.5), (0.5, 2))]
    ts = [1.0, 2.0, 2.5, 3.0]
    a = orbit_sums(model, xs, phis, ts)
    b = restricted_sums(model, xs, phis, ts, with_ball_counts=True)
    assert np.max(np.abs(a.raw - b.raw)) <= 1e-12
    assert np.array_equal(a.returns, b.returns)
    assert np.array_equal(a.ball_counts, b.ball_counts)


def test_repeatable_and_chunking_stable():
    model = SpaceModel("de-sitter-3")
    xs = model.sample_points(np.random.default_rng(3), 3, (-0.5, 0.3, 0.0), (0.5, 2.8, 6.0))
    phis = [bump_function((-1.0, 0.0, 0.0), (1.0, math.pi, 2 * math.pi))]
    a = orbit_sums(model, xs, phis, [2.0, 3.0, 3.5])
    b = orbit_sums(model, xs, phis, [2.0, 3.0, 3.5])
    c = orbit_sums(model, xs, phis, [2.0, 3.0, 3.5], chunk_size=1000)
    assert np.array_equal(a.raw, b.raw)
    assert np.allclose(a.raw, c.raw, rtol=1e-12, atol=0)
    assert np.array_equal(a.returns, c.returns)


def test_positivity_and_monotonicity():
    model = SpaceModel("punctured-plane")
    x = np.array([0.7, -0.4])
    small = box_function((0.5, 0.5), (1.5, 1.5))
    big = box_function((0.2, 0.2), (2.0, 2.0))
    s = orbit_sums(model, x, [small, big], [2.0, 3.0, 4.0, 5.0])
    assert np.all(s.raw[0, 0] <= s.raw[0, 1])
    assert np.all(np.diff(s.raw[0]) >= 0)
    assert np.all(np.diff(s.returns[0]) >= 0)
    assert np.all(s.raw >= 0)


def test_ratio_properties():
    model = SpaceModel("de-sitter-2")
    x = model.from_chart([0.1, 0.5])
    psi = box_function((-1.0, 0.0), (1.0, 3.0))
    phi = bump_function((0.0, 1.0), (1.5, 4.0))
    assert ratio_average(model, x, psi, psi, 5.0) == 1.0
    assert ratio_average(model, x, psi.scaled(2.0), psi, 5.0) == 2.0
    r1 = ratio_average(model, x, phi, psi, 5.0)
    r2 = ratio_average(model, x, psi, phi, 5.0)
    assert abs(r1 * r2 - 1) <= 1e-12


def test_zero_denominator_carries_t():
    model = SpaceModel("punctured-plane")
    far = box_function((50.0, 50.0), (51.0, 51.0))
    with pytest.raises(ZeroDenominatorError) as err:
        ratio_average(model, [1.0, 0.0], far, far, 1.5)
    assert err.value.t == 1.5
    assert "1.5" in str(err.value)


def test_solvable_converges_to_one():
    model = SpaceModel("affine-solvable")
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 1, size=(10, 2))
    s = restricted_sums(model, xs, [box_function((0, 0), (1, 1))], [30.0])
    est = s.raw[:, 0, 0] / normalizer(model, 30.0, "volume")
    assert abs(np.median(est) - 1) < 0.1


def test_normalizers():
    model = SpaceModel("de-sitter-3")
    assert normalizer(model, 3.0, "model") == pytest.approx(math.exp(3))
    assert normalizer(model, 3.0, "raw") == 1.0
    assert normalizer(SpaceModel("affine-solvable"), 10.0, Normalization.VOLUME) == pytest.approx(
        20 / math.log((3 + math.sqrt(5)) / 2))


def test_fit_rates_power():
    t = np.linspace(4, 20, 12)
    best, alt = fit_rates(t, 2.5 + 3 / t)
    assert best.model is RateModel.POWER
    assert best.limit == pytest.approx(2.5, rel=0.01)
    assert best.parameter == pytest.approx(1.0, abs=0.1)
    assert alt.model is RateModel.EXPONENTIAL


def test_fit_rates_exponential():
    t = np.linspace(2, 16, 12)
    best, _ = fit_rates(t, 1.7 + np.exp(-0.4 * t))
    assert best.model is RateModel.EXPONENTIAL
    assert best.parameter == pytest.approx(0.4, abs=0.05)
    assert best.limit == pytest.approx(1.7, rel=0.01)


def test_convergence_report():
    model = SpaceModel("affine-sl2z")
    rep = convergence_report(model, np.array([0.3, 0.4]), box_function((0, 0), (1, 1)),
                             [2.0, 2.5, 3.0, 3.5, 4.0, 4.5])
    assert len(rep.estimates) == 6 and all(np.isfinite(rep.estimates))
    assert np.all(np.diff(rep.return_counts) >= 0)
    assert rep.to_json()["fitted_rate"]["model"] in ("power", "exponential")
    with pytest.raises(ValueError):
        convergence_report(model, np.array([0.3, 0.4]), box_function((0, 0), (1, 1)), [2.0, 3.0, 4.0])


def test_report_rows_schema():
    model = SpaceModel("projective-line")
    s = orbit_sums(model, model.from_chart([[0.4]]), [box_function((0.5,), (1.0,), "b")], [2.0, 3.0])
    rows = report_rows(model, s, ["x0"], [box_function((0.5,), (1.0,), "b")])
    assert list(rows[0]) == ["model", "lattice", "x_id", "phi_id", "t", "raw_sum", "normalized", "return_count",
                             "ball_count"]
    assert len(rows) == 2


def test_continuous_comparison_zero():
    model = SpaceModel("de-sitter-3")
    phi = bump_function((-0.5, 0.0, 0.0), (0.5, math.pi, 2 * math.pi)).scaled(0.0)
    assert continuous_comparison(model, model.from_polar(0.0, [1.0, 0.0, 0.0]), phi, 6.0) == 0.0


def test_continuous_comparison_de_sitter_origin():
    model = SpaceModel("de-sitter-3")
    phi = bump_function((-0.5, 0.0, 0.0), (0.5, math.pi, 2 * math.pi))
    x = model.from_polar(0.0, [0.0, 0.0, 1.0])
    finite = continuous_comparison(model, x, phi, 12.0, nodes=8)
    limit = phi.integrate(model, weight=lambda u: model.limit_density_chart(x, u))
    assert finite == pytest.approx(limit, rel=0.02)
    # at r = r' = 0 the kernel is 1, so this is close to the plain integral as well
    assert finite == pytest.approx(phi.integrate(model), rel=0.05)


def test_continuous_comparison_closed_form_models():
    model = SpaceModel("projective-line")
    phi = box_function((0.2,), (0.9,))
    assert continuous_comparison(model, [1.0, 0.0], phi, 5.0) == pytest.approx(0.7 / math.pi)


def test_duality_gap_decreases():
    model = SpaceModel("de-sitter-3")
    x = model.from_chart([0.2, 1.2, 0.7])
    phi = bump_function((-0.5, 0.0, 0.0), (0.5, math.pi, 2 * math.pi))
    ts = [4.0, 5.0, 6.0]
    s = orbit_sums(model, x, [phi], ts)
    disc = s.raw[0, 0] / np.array([model.V(t) for t in ts])
    cont = np.array([continuous_comparison(model, x, phi, t, nodes=6, k_nodes=32) for t in ts])
    q = disc / cont
    C = q[-1]
    gaps = np.abs(q / C - 1)
    assert gaps[0] >= gaps[1] >= 0
