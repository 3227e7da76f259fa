"""Normalised orbit sums (1/V(t)) sum_{gamma in Gamma_t} phi(x gamma) and relatives.

All sums share one engine: the ball at the largest requested height is
streamed once in partition order, every element is tagged with the first
grid level containing it, and per-level partial sums are kept for every
(base point, test function) pair. Within a chunk values are summed in
element order; chunk partials are combined with math.fsum at the end. The
chunking depends only on the ball, never on the worker count, so results are
bit-reproducible.
"""
from __future__ import annotations

import bisect
import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from numba import njit
from scipy.optimize import OptimizeWarning, curve_fit

from .arithmetic_groups import (
    DEFAULT_CHUNK, Family, GroupSpec, _disk_count, ball_count, _disk_fill, _sum_sq_rows,
    iter_chunks, linear_bound, sl2_chunks,
)
from .spaces import ModelKind, SpaceModel, TestFunction, TestFunctionKind
from .gauge import block, frobenius, frobenius_threshold
from .volumes import (
    StabilizerKind, StabilizerModel, haar_ball_volume, skew_ball_volume,
)


class Normalization(str, Enum):
    MODEL = "model"      # V(t) = e^{at} t^b from the model
    RAW = "raw"          # plain sum
    VOLUME = "volume"    # rho(H_t) from the volume module


class SamplingError(RuntimeError):
    pass


class ZeroDenominatorError(SamplingError):
    def __init__(self, t: float):
        super().__init__(f"denominator sum vanishes at t={t}")
        self.t = t


# stabilizer and gauge whose Haar ball volume normalises each model
_STABILIZER = {
    ModelKind.AFFINE_SOLVABLE: (StabilizerKind.TORUS, frobenius(3)),
    ModelKind.AFFINE_LATTICE: (StabilizerKind.SL2R, block(2)),
    ModelKind.DE_SITTER2: (StabilizerKind.SO11, frobenius(3)),
    ModelKind.DE_SITTER3: (StabilizerKind.SO12, frobenius(4)),
}


def stabilizer_for(model: SpaceModel) -> tuple[StabilizerModel, object]:
    try:
        kind, gauge = _STABILIZER[model.kind]
    except KeyError:
        raise SamplingError(f"no stabilizer volume available for {model.kind.value}") from None
    if kind is StabilizerKind.TORUS:
        return StabilizerModel(kind, model.spec.generator), gauge
    return StabilizerModel(kind), gauge


def normalizer(model: SpaceModel, t: float, how: Normalization | str) -> float:
    how = Normalization(how)
    if how is Normalization.RAW:
        return 1.0
    if how is Normalization.MODEL:
        return model.V(t)
    if t < 1:
        raise SamplingError(f"volume normalisation needs t >= 1, got {t}")
    stab, gauge = stabilizer_for(model)
    return haar_ball_volume(stab, gauge, t).value


# ---------------------------------------------------------------- requests and results

@dataclass
class OrbitAverageRequest:
    model: SpaceModel
    x: np.ndarray
    phi: TestFunction
    t: float
    normalization: Normalization = Normalization.MODEL
    spec: GroupSpec | None = None

    def __post_init__(self):
        self.normalization = Normalization(self.normalization)
        if self.spec is None:
            self.spec = self.model.spec
        self.x = self.model.check_point(self.x)
        self.phi.validate_for(self.model)


@dataclass
class OrbitSums:
    """Per-level results of one engine pass.

    ``raw[i, j, k]`` is the sum of phi_j(x_i gamma) over the ball of height
    t_grid[k]; ``returns`` counts orbit points in the support box.
    """

    t_grid: np.ndarray
    raw: np.ndarray
    returns: np.ndarray
    ball_counts: np.ndarray


def _levels(spec: GroupSpec, t_grid) -> np.ndarray:
    return np.array([linear_bound(spec, float(t)) for t in t_grid], dtype=np.int64)


def _merge(partials: list[np.ndarray], shape) -> np.ndarray:
    """fsum per cell across chunk partials, then cumulative over levels."""
    if not partials:
        return np.zeros(shape)
    stack = np.stack(partials)
    flat = stack.reshape(len(partials), -1)
    merged = np.array([math.fsum(flat[:, c]) for c in range(flat.shape[1])]).reshape(shape)
    # cumulative over the level axis, exactly rounded per prefix
    out = np.empty_like(merged)
    for k in range(shape[-1]):
        out[..., k] = np.array([math.fsum(v) for v in merged[..., :k + 1].reshape(-1, k + 1)]).reshape(shape[:-1])
    return out


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be a non-empty increasing sequence")
    return t


def orbit_sums(model: SpaceModel, xs, phis: list[TestFunction], t_grid, *, spec: GroupSpec | None = None,
               chunk_size: int = DEFAULT_CHUNK) -> OrbitSums:
    """Naive streaming sums over the full ball (every element is acted on)."""
    spec = spec or model.spec
    t_grid = _check_grid(t_grid)
    xs = np.atleast_2d(model.check_point(xs))
    for p in phis:
        p.validate_for(model)
    if spec.family is Family.SOLVABLE:
        return _solvable_naive(model, spec, xs, phis, t_grid)
    bounds = _levels(spec, t_grid)
    n_t = len(t_grid)
    shape = (len(xs), len(phis), n_t)
    partial_raw, partial_ret = [], []
    counts = np.zeros(n_t, dtype=np.int64)
    for chunk in iter_chunks(spec, float(t_grid[-1]), chunk_size):
        if len(chunk) == 0:
            continue
        key = _sum_sq_rows(chunk.lin)
        if chunk.trans is not None:
            key = key + chunk.trans[:, 0] ** 2 + chunk.trans[:, 1] ** 2
        lev = np.searchsorted(bounds, key, side="left")
        counts += np.bincount(lev, minlength=n_t)[:n_t]
        raw = np.zeros(shape)
        ret = np.zeros(shape)
        for i, x in enumerate(xs):
            pts = model.act_chunk(x, chunk)
            for j, phi in enumerate(phis):
                mask = model.coarse_mask(pts, phi.lo, phi.hi)
                idx = np.nonzero(mask)[0]
                if len(idx) == 0:
                    continue
                u = model.to_chart(pts[idx])
                inside = np.all((u >= np.array(phi.lo)) & (u <= np.array(phi.hi)), axis=-1)
                vals = phi(u)
                raw[i, j] = np.bincount(lev[idx], weights=vals, minlength=n_t)[:n_t]
                ret[i, j] = np.bincount(lev[idx][inside], minlength=n_t)[:n_t]
        partial_raw.append(raw)
        partial_ret.append(ret)
    return OrbitSums(t_grid, _merge(partial_raw, shape),
                     np.rint(_merge(partial_ret, shape)).astype(np.int64), np.cumsum(counts))


# ---------------------------------------------------------------- solvable group

def _solvable_levels(spec: GroupSpec, t_grid):
    """n-ranges and exact |v|^2 bounds per level (Python ints, no budget)."""
    ranges = [spec.power_range(float(t)) for t in t_grid]
    bounds = [frobenius_threshold(float(t)) for t in t_grid]
    return ranges, bounds


def _level_of_power(ranges, n: int) -> int:
    for k, (lo, hi) in enumerate(ranges):
        if lo <= n <= hi:
            return k
    return len(ranges)


def _exact_image(spec: GroupSpec, xf, n: int):
    am = spec.generator_power(n)
    return (xf[0] * am[0][0] + xf[1] * am[1][0], xf[0] * am[0][1] + xf[1] * am[1][1])


def _solvable_naive(model, spec, xs, phis, t_grid) -> OrbitSums:
    ranges, bounds = _solvable_levels(spec, t_grid)
    bounds = np.array(bounds, dtype=np.int64)
    n_t = len(t_grid)
    shape = (len(xs), len(phis), n_t)
    S = int(bounds[-1])
    disk = np.empty((_disk_count(S), 2), dtype=np.int64)
    _disk_fill(S, disk, 0)
    vlev = np.searchsorted(bounds, disk[:, 0] ** 2 + disk[:, 1] ** 2, side="left")
    lo, hi = ranges[-1]
    partial_raw, partial_ret = [], []
    counts = np.zeros(n_t, dtype=np.int64)
    for n in range(lo, hi + 1):
        nlev = _level_of_power(ranges, n)
        lev = np.maximum(vlev, nlev)
        counts += np.bincount(lev, minlength=n_t)[:n_t]
        raw = np.zeros(shape)
        ret = np.zeros(shape)
        for i, x in enumerate(xs):
            xf = [Fraction(float(c)) for c in x]
            y = _exact_image(spec, xf, n)
            yf = np.array([float(y[0]), float(y[1])])
            approx = yf[None, :] + disk
            margin = 1e-9 * (1.0 + float(np.max(np.abs(yf))))
            for j, phi in enumerate(phis):
                near = np.all((approx >= np.array(phi.lo) - margin) & (approx <= np.array(phi.hi) + margin), axis=1)
                idx = np.nonzero(near)[0]
                if len(idx) == 0:
                    continue
                u = np.array([[float(y[0] + int(disk[k, 0])), float(y[1] + int(disk[k, 1]))] for k in idx])
                inside = np.all((u >= np.array(phi.lo)) & (u <= np.array(phi.hi)), axis=-1)
                raw[i, j] = np.bincount(lev[idx], weights=phi(u), minlength=n_t)[:n_t]
                ret[i, j] = np.bincount(lev[idx][inside], minlength=n_t)[:n_t]
        partial_raw.append(raw)
        partial_ret.append(ret)
    return OrbitSums(t_grid, _merge(partial_raw, shape),
                     np.rint(_merge(partial_ret, shape)).astype(np.int64), np.cumsum(counts))


def _solvable_restricted(model, spec, xs, phis, t_grid) -> OrbitSums:
    """Only the n-interval is iterated; translations solve v in D - x a^n."""
    ranges, bounds = _solvable_levels(spec, t_grid)
    n_t = len(t_grid)
    shape = (len(xs), len(phis), n_t)
    lo, hi = ranges[-1]
    partial_raw, partial_ret = [], []
    for n in range(lo, hi + 1):
        nlev = _level_of_power(ranges, n)
        raw = np.zeros(shape)
        ret = np.zeros(shape)
        for i, x in enumerate(xs):
            xf = [Fraction(float(c)) for c in x]
            y = _exact_image(spec, xf, n)
            for j, phi in enumerate(phis):
                # Fraction arithmetic throughout: |y| far exceeds 2^53 at large n
                lo = [Fraction(v) for v in phi.lo]
                hi = [Fraction(v) for v in phi.hi]
                r0 = range(math.floor(lo[0] - y[0]) - 1, math.floor(hi[0] - y[0]) + 2)
                r1 = range(math.floor(lo[1] - y[1]) - 1, math.floor(hi[1] - y[1]) + 2)
                vs = [(a, b) for a in r0 for b in r1 if a * a + b * b <= bounds[-1]]
                if not vs:
                    continue
                u = np.array([[float(y[0] + a), float(y[1] + b)] for a, b in vs])
                inside = np.all((u >= np.array(phi.lo)) & (u <= np.array(phi.hi)), axis=-1)
                if not inside.any():
                    continue
                vals = phi(u)
                lev = np.array([max(nlev, bisect.bisect_left(bounds, a * a + b * b)) for a, b in vs])
                keep = lev < n_t
                raw[i, j] = np.bincount(lev[keep], weights=vals[keep], minlength=n_t)[:n_t]
                ret[i, j] = np.bincount(lev[keep & inside], minlength=n_t)[:n_t]
        partial_raw.append(raw)
        partial_ret.append(ret)
    counts = np.array([_solvable_ball(spec, float(t)) for t in t_grid], dtype=np.int64)
    return OrbitSums(t_grid, _merge(partial_raw, shape),
                     np.rint(_merge(partial_ret, shape)).astype(np.int64), counts)


def _solvable_ball(spec, t):
    lo, hi = spec.power_range(t)
    try:
        n = max(hi - lo + 1, 0) * int(_disk_count(linear_bound(spec, t)))
    except OverflowError:
        return -1  # beyond the checked budget; not needed by the fast path
    return n if n < 2**63 else -1


# ---------------------------------------------------------------- SL2(Z) affine fast path

_KIND_CODE = {TestFunctionKind.BOX: 0, TestFunctionKind.BUMP: 1, TestFunctionKind.RADIAL: 2}


@njit(cache=True)
def _phi_value(kind, u0, u1, lo0, lo1, hi0, hi1, scale):
    c0 = 0.5 * (lo0 + hi0)
    c1 = 0.5 * (lo1 + hi1)
    w0 = 0.5 * (hi0 - lo0)
    w1 = 0.5 * (hi1 - lo1)
    if kind == 0:
        return scale * 1.0
    if kind == 1:
        s0 = (u0 - c0) / w0
        s1 = (u1 - c1) / w1
        f0 = max(1.0 - s0 * s0, 0.0)
        f1 = max(1.0 - s1 * s1, 0.0)
        return scale * ((f0 ** 2) * (f1 ** 2))
    rho = min(w0, w1)
    dist = math.sqrt((u0 - c0) ** 2 + (u1 - c1) ** 2)
    return scale * max(1.0 - dist / rho, 0.0)


@njit(cache=True)
def _affine_kernel(lin, x0, x1, bounds, kind, lo0, lo1, hi0, hi1, scale, sums, rets):
    n_t = bounds.shape[0]
    bmax = bounds[n_t - 1]
    for i in range(lin.shape[0]):
        a = lin[i, 0]
        b = lin[i, 1]
        c = lin[i, 2]
        d = lin[i, 3]
        sh = a * a + b * b + c * c + d * d
        if sh > bmax:
            continue
        y0 = x0 * a + x1 * c
        y1 = x0 * b + x1 * d
        for v0 in range(int(math.floor(lo0 - y0)) - 1, int(math.floor(hi0 - y0)) + 2):
            u0 = y0 + v0
            if u0 < lo0 or u0 > hi0:
                continue
            for v1 in range(int(math.floor(lo1 - y1)) - 1, int(math.floor(hi1 - y1)) + 2):
                s = sh + v0 * v0 + v1 * v1
                if s > bmax:
                    continue
                u1 = y1 + v1
                if u1 < lo1 or u1 > hi1:
                    continue
                k = 0
                while bounds[k] < s:
                    k += 1
                sums[k] += _phi_value(kind, u0, u1, lo0, lo1, hi0, hi1, scale)
                rets[k] += 1


def _affine_restricted(model, spec, xs, phis, t_grid, chunk_size, with_ball_counts) -> OrbitSums:
    bounds = _levels(spec, t_grid)
    n_t = len(t_grid)
    shape = (len(xs), len(phis), n_t)
    partial_raw, partial_ret = [], []
    # every h with ||h||^2 <= max bound; the affine bound already excludes the 1
    for lin in sl2_chunks(int(bounds[-1]), False, chunk_size):
        raw = np.zeros(shape)
        ret = np.zeros(shape)
        for i, x in enumerate(xs):
            for j, phi in enumerate(phis):
                s = np.zeros(n_t)
                r = np.zeros(n_t, dtype=np.int64)
                _affine_kernel(lin, float(x[0]), float(x[1]), bounds, _KIND_CODE[phi.kind],
                               phi.lo[0], phi.lo[1], phi.hi[0], phi.hi[1], phi.scale, s, r)
                raw[i, j] = s
                ret[i, j] = r
        partial_raw.append(raw)
        partial_ret.append(ret)
    if with_ball_counts:
        counts = np.array([ball_count(spec, float(t)) for t in t_grid], dtype=np.int64)
    else:
        counts = np.full(n_t, -1, dtype=np.int64)
    return OrbitSums(t_grid, _merge(partial_raw, shape),
                     np.rint(_merge(partial_ret, shape)).astype(np.int64), counts)


def restricted_sums(model: SpaceModel, xs, phis: list[TestFunction], t_grid, *, spec: GroupSpec | None = None,
                    chunk_size: int = DEFAULT_CHUNK, with_ball_counts: bool = False) -> OrbitSums:
    """Fast path for affine models; identical values to :func:`orbit_sums`.

    ``ball_counts`` are only computed when requested (they cost a full count).
    """
    spec = spec or model.spec
    if model.kind not in (ModelKind.AFFINE_LATTICE, ModelKind.AFFINE_SOLVABLE):
        raise SamplingError("domain-restricted summation needs an affine model")
    t_grid = _check_grid(t_grid)
    xs = np.atleast_2d(model.check_point(xs))
    for p in phis:
        p.validate_for(model)
    if spec.family is Family.SOLVABLE:
        return _solvable_restricted(model, spec, xs, phis, t_grid)
    return _affine_restricted(model, spec, xs, phis, t_grid, chunk_size, with_ball_counts)


# ---------------------------------------------------------------- public operations

def orbit_average(req: OrbitAverageRequest) -> float:
    """(1 / V(t)) sum_{gamma in Gamma_t} phi(x gamma) by full enumeration."""
    sums = orbit_sums(req.model, req.x, [req.phi], [req.t], spec=req.spec)
    return float(sums.raw[0, 0, 0]) / normalizer(req.model, req.t, req.normalization)


def domain_restricted_affine_sum(model: SpaceModel, x, phi: TestFunction, t: float,
                                 normalization: Normalization | str = Normalization.MODEL) -> float:
    """Same value as :func:`orbit_average`, iterating only linear parts."""
    sums = restricted_sums(model, x, [phi], [t])
    return float(sums.raw[0, 0, 0]) / normalizer(model, t, normalization)


def ratio_average(model: SpaceModel, x, phi: TestFunction, psi: TestFunction, t: float, *,
                  spec: GroupSpec | None = None) -> float:
    """sum phi(x gamma) / sum psi(x gamma) over Gamma_t."""
    if psi.scale <= 0:
        raise ValueError("psi must be non-zero on its support")
    fast = model.kind in (ModelKind.AFFINE_LATTICE, ModelKind.AFFINE_SOLVABLE)
    run = restricted_sums if fast else orbit_sums
    sums = run(model, x, [phi, psi], [t], spec=spec)
    num, den = float(sums.raw[0, 0, 0]), float(sums.raw[0, 1, 0])
    if den == 0.0:
        raise ZeroDenominatorError(t)
    return num / den


def de_sitter_kernel(model: SpaceModel, rx: float, ry, t: float, *, k_nodes: int = 64):
    """rho(H_t[s(x), s(y)]) / rho(H_t) as a function of the radial coordinates.

    The Frobenius norm is invariant under the maximal compact subgroup on
    both sides, so the kernel only sees r(x) and r(y).
    """
    from .volumes import de_sitter_section
    stab, gauge = stabilizer_for(model)
    d = model.de_sitter_dim
    plain = haar_ball_volume(stab, gauge, t, k_nodes=k_nodes).value
    g1 = de_sitter_section(d, rx)
    out = []
    for r in np.atleast_1d(ry):
        g2 = de_sitter_section(d, float(r))
        out.append(skew_ball_volume(stab, g1, g2, gauge, t, k_nodes=k_nodes).value / plain)
    return np.array(out)


def continuous_comparison(model: SpaceModel, x, phi: TestFunction, t: float, *, nodes: int = 12,
                          k_nodes: int = 64) -> float:
    """Integral of phi against the finite-t kernel ratio over supp(phi).

    de Sitter models use skew ball volumes; the other models use their
    closed-form limiting kernel.
    """
    phi.validate_for(model)
    x = model.check_point(x)
    if phi.scale == 0:
        return 0.0
    if not model.is_de_sitter:
        return phi.integrate(model, weight=lambda u: model.limit_density_chart(x, u), nodes=nodes)
    rx = float(model.polar_chart(x)[0])
    x1, _ = np.polynomial.legendre.leggauss(nodes)
    lo, hi = phi.lo[0], phi.hi[0]
    c = 0.5 * (lo + hi)
    rs = np.concatenate([0.5 * (b - a) * x1 + 0.5 * (a + b) for a, b in ((lo, c), (c, hi))])
    table = dict(zip(rs.tolist(), de_sitter_kernel(model, rx, rs, t, k_nodes=k_nodes).tolist()))

    def weight(u):
        flat = u[..., 0].ravel()
        return np.array([table[v] for v in flat.tolist()]).reshape(u.shape[:-1])

    return phi.integrate(model, weight=weight, nodes=nodes)


# ---------------------------------------------------------------- convergence reports

class RateModel(str, Enum):
    POWER = "power"
    EXPONENTIAL = "exponential"


@dataclass
class RateFit:
    model: RateModel
    limit: float
    coefficient: float
    parameter: float
    residual: float


@dataclass
class ConvergenceReport:
    model: str
    x: list
    phi_id: str
    t_grid: list
    estimates: list
    fitted_limit: float
    fitted_rate: RateFit
    alternative: RateFit | None
    return_counts: list
    ball_counts: list
    raw_sums: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["fitted_rate"]["model"] = self.fitted_rate.model.value
        if self.alternative is not None:
            d["alternative"]["model"] = self.alternative.model.value
        return d


def _power(t, L, C, beta):
    return L + C * np.power(t, -beta)


def _expo(t, L, C, delta):
    return L + C * np.exp(-delta * t)


def fit_rates(t, a) -> tuple[RateFit, RateFit]:
    """Fit L + C t^-beta and L + C e^-delta t; the lower-residual fit comes first."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise SamplingError("non-finite estimates cannot be fitted")
    fits = []
    for kind, f, starts in ((RateModel.POWER, _power, (0.5, 1.0, 2.0, 3.0)),
                            (RateModel.EXPONENTIAL, _expo, (0.05, 0.2, 0.5, 1.0, 2.0))):
        best = None
        for p0 in starts:
            try:
                guess = (a[-1], (a[0] - a[-1]) / max(f(t[0], 0, 1, p0) - f(t[-1], 0, 1, p0), 1e-300), p0)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", OptimizeWarning)  # exact fits have no covariance
                    popt, _ = curve_fit(f, t, a, p0=guess, maxfev=20000)
            except (RuntimeError, ValueError, OverflowError):
                continue
            res = float(np.sqrt(np.mean((f(t, *popt) - a) ** 2)))
            if np.isfinite(res) and (best is None or res < best.residual):
                best = RateFit(kind, float(popt[0]), float(popt[1]), float(popt[2]), res)
        if best is None:
            best = RateFit(kind, float(a[-1]), 0.0, float("nan"), float("inf"))
        fits.append(best)
    fits.sort(key=lambda r: r.residual)
    return fits[0], fits[1]


def convergence_report(model: SpaceModel, x, phi: TestFunction, t_grid, *, spec: GroupSpec | None = None,
                       normalization: Normalization | str = Normalization.MODEL) -> ConvergenceReport:
    t_grid = _check_grid(t_grid)
    if len(t_grid) < 6:
        raise ValueError("a convergence report needs at least 6 grid points")
    fast = model.kind in (ModelKind.AFFINE_LATTICE, ModelKind.AFFINE_SOLVABLE)
    sums = (restricted_sums(model, x, [phi], t_grid, spec=spec, with_ball_counts=True) if fast
            else orbit_sums(model, x, [phi], t_grid, spec=spec))
    return report_from_sums(model, x, phi, sums, 0, 0, normalization)


def report_from_sums(model, x, phi, sums: OrbitSums, i: int, j: int,
                     normalization=Normalization.MODEL) -> ConvergenceReport:
    t_grid = sums.t_grid
    raw = sums.raw[i, j]
    est = np.array([raw[k] / normalizer(model, float(t), normalization) for k, t in enumerate(t_grid)])
    best, alt = fit_rates(t_grid, est)
    return ConvergenceReport(model.kind.value, np.asarray(x, dtype=float).ravel().tolist(),
                             phi.name or phi.kind.value, t_grid.tolist(), est.tolist(),
                             best.limit, best, alt, sums.returns[i, j].tolist(),
                             sums.ball_counts.tolist(), raw.tolist())


REPORT_COLUMNS = ["model", "lattice", "x_id", "phi_id", "t", "raw_sum", "normalized", "return_count", "ball_count"]


def write_report_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if isinstance(r[k], float) else r[k]) for k in REPORT_COLUMNS})


def report_rows(model: SpaceModel, sums: OrbitSums, x_ids, phis, normalization=Normalization.MODEL) -> list[dict]:
    rows = []
    norms = [normalizer(model, float(t), normalization) for t in sums.t_grid]
    for i, xid in enumerate(x_ids):
        for j, phi in enumerate(phis):
            for k, t in enumerate(sums.t_grid):
                rows.append(dict(model=model.kind.value, lattice=model.spec.family.value, x_id=xid,
                                 phi_id=phi.name or f"phi{j}", t=float(t), raw_sum=float(sums.raw[i, j, k]),
                                 normalized=float(sums.raw[i, j, k]) / norms[k],
                                 return_count=int(sums.returns[i, j, k]),
                                 ball_count=int(sums.ball_counts[k])))
    return rows


def write_report_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Enum):
        return o.value
    raise TypeError(type(o))
