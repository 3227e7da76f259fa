"""Haar volumes of stabilizer balls H_t and skew balls H_t[g1, g2].

Stabilizer models and their parameterisations:

SO11    d = 2 de Sitter stabilizer {b_s : s in R}, measure ds. The plain ball
        has the closed form arccosh(e^{2t}/2) in the 2x2 block gauge.
SO12    d = 3 de Sitter stabilizer K0 B+ K0, measure dk1 sinh(s) ds dk2.
SL2R    SL2(R) in KAK coordinates, measure sinh(2a) da dtheta dphi
        (angles as probability measures); Monte Carlo.
TORUS   one-parameter group {a^s} acting with translations (solvable
        affine model), measure ds normalised so that one generator step has
        volume 1.

For SO11, SO12 and TORUS the membership ||g1^-1 k1 b_s k2 g2|| <= e^t is, for
fixed compact angles, the sublevel set of a quartic in z = e^s, so the
s-integral is evaluated exactly from its real roots; the K0 angles use a
periodic trapezoid rule. Only SL2R uses sampling.

Orientation: volumes are right-invariant-agnostic ratios; every reported
comparison is a ratio, so Haar normalisations cancel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .gauge import HEIGHT_TOL, GaugeFunction, frobenius
from .spaces import lorentz_boost

K_NODES = 256
MC_SAMPLES = 1_000_000
MC_BATCH = 1 << 17
MC_RETRIES = 3
MAX_REL_STDERR = 0.01
STABILIZATION = 0.01


class Method(str, Enum):
    CLOSED_FORM = "closed-form"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte-carlo"


class StabilizerKind(str, Enum):
    SO11 = "SO11"
    SO12 = "SO12"
    SL2R = "SL2R"
    TORUS = "TORUS"


class VolumeError(RuntimeError):
    pass


@dataclass(frozen=True)
class StabilizerModel:
    kind: StabilizerKind
    # solvable generator for TORUS
    generator: tuple = ((2, 1), (1, 1))

    def __post_init__(self):
        object.__setattr__(self, "kind", StabilizerKind(self.kind))

    def default_gauge(self) -> GaugeFunction:
        return {
            StabilizerKind.SO11: frobenius(2),
            StabilizerKind.SO12: frobenius(4),
            StabilizerKind.SL2R: frobenius(2),
            StabilizerKind.TORUS: frobenius(3),
        }[self.kind]

    @property
    def log_lambda(self) -> float:
        ev = np.abs(np.linalg.eigvals(np.array(self.generator, dtype=float)))
        return float(math.log(ev.max()))


@dataclass
class VolumeSample:
    t: float
    value: float
    method: Method
    stderr: float = 0.0
    seed: int | None = None
    g1_id: str = "I"
    g2_id: str = "I"
    model: str = ""
    gauge: str = ""

    @property
    def admissible(self) -> bool:
        return self.value > 0 and self.stderr <= MAX_REL_STDERR * self.value


# ---------------------------------------------------------------- quartic sublevel sets

def _poly_eval(c, z):
    return (((c[:, 0] * z + c[:, 1]) * z + c[:, 2]) * z + c[:, 3]) * z + c[:, 4]


def _quartic_real_roots(c: np.ndarray) -> np.ndarray:
    """Real roots of c0 z^4 + ... + c4 (rows), nan-padded to shape (n, 4)."""
    n = len(c)
    lead = c[:, 0:1]
    comp = np.zeros((n, 4, 4))
    comp[:, 0, :] = -c[:, 1:] / lead
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    roots = np.linalg.eigvals(comp)
    real = np.abs(roots.imag) <= 1e-7 * (1.0 + np.abs(roots.real))
    z = np.where(real, roots.real, np.nan)
    # two Newton steps polish roots found through the eigenproblem
    dc = c[:, :4] * np.array([4.0, 3.0, 2.0, 1.0])
    for _ in range(2):
        for j in range(4):
            zj = z[:, j]
            f = _poly_eval(c, zj)
            fp = ((dc[:, 0] * zj + dc[:, 1]) * zj + dc[:, 2]) * zj + dc[:, 3]
            step = np.where(np.abs(fp) > 0, f / np.where(fp == 0, 1.0, fp), 0.0)
            z[:, j] = zj - step
    return z


def _sublevel_measure(c: np.ndarray, zmin: np.ndarray, zmax: np.ndarray, F) -> np.ndarray:
    """Sum of F(z_hi) - F(z_lo) over components of {z in [zmin, zmax] : p(z) <= 0}."""
    roots = _quartic_real_roots(c)
    roots = np.where((roots > zmin[:, None]) & (roots < zmax[:, None]), roots, np.nan)
    pts = np.concatenate([zmin[:, None], roots, zmax[:, None]], axis=1)
    # nan sorts last; replace by zmax so they form empty segments
    pts = np.where(np.isnan(pts), zmax[:, None], pts)
    pts.sort(axis=1)
    total = np.zeros(len(c))
    for j in range(pts.shape[1] - 1):
        lo, hi = pts[:, j], pts[:, j + 1]
        mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), lo * 2 + 1)
        inside = (_poly_eval(c, mid) <= 0) & (hi > lo)
        with np.errstate(invalid="ignore"):  # inf - inf on masked empty segments
            total += np.where(inside, F(hi) - F(lo), 0.0)
    return total


def _inner(X, Y):
    return np.einsum("...ij,...ij->...", X, Y)


def _boost_parts(n: int, i: int, j: int):
    """b_s = P0 + z E+ + z^-1 E- for the boost mixing axes i, j (j time)."""
    P0 = np.eye(n)
    P0[i, i] = P0[j, j] = 0.0
    Ep = np.zeros((n, n))
    Ep[i, i] = Ep[j, j] = Ep[i, j] = Ep[j, i] = 0.5
    Em = np.zeros((n, n))
    Em[i, i] = Em[j, j] = 0.5
    Em[i, j] = Em[j, i] = -0.5
    return P0, Ep, Em


def _quartic_coeffs(A, B, parts, R2):
    """Coefficients of z^2 (||A b_s B||^2 - R2) in descending powers."""
    P0, Ep, Em = parts
    U0 = A @ P0 @ B
    Up = A @ Ep @ B
    Um = A @ Em @ B
    c = np.stack([
        _inner(Up, Up),
        2 * _inner(U0, Up),
        _inner(U0, U0) + 2 * _inner(Up, Um) - R2,
        2 * _inner(U0, Um),
        _inner(Um, Um),
    ], axis=-1)
    return c.reshape(-1, 5)


def _rotation(n: int, i: int, j: int, th: np.ndarray) -> np.ndarray:
    k = np.broadcast_to(np.eye(n), th.shape + (n, n)).copy()
    c, s = np.cos(th), np.sin(th)
    k[..., i, i] = c
    k[..., j, j] = c
    k[..., i, j] = s
    k[..., j, i] = -s
    return k


def _so_volume(model: StabilizerModel, gauge: GaugeFunction, g1, g2, t: float, k_nodes: int) -> float:
    n = gauge.ambient_dim
    R2 = math.exp(2 * (t + HEIGHT_TOL))
    g1 = np.eye(n) if g1 is None else np.asarray(g1, dtype=float)
    g2 = np.eye(n) if g2 is None else np.asarray(g2, dtype=float)
    if g1.shape != (n, n) or g2.shape != (n, n):
        raise ValueError(f"g1, g2 must be {n}x{n} for this gauge")
    g1inv = np.linalg.inv(g1)
    if model.kind is StabilizerKind.SO11:
        if n not in (2, 3):
            raise ValueError("SO11 gauge must be 2x2 (block) or 3x3 (ambient)")
        i, j = n - 2, n - 1
        parts = _boost_parts(n, i, j)
        c = _quartic_coeffs(g1inv[None], g2[None], parts, R2)
        zmin = np.full(1, 1e-300)
        zmax = np.full(1, np.inf)
        return float(_sublevel_measure(c, zmin, zmax, np.log)[0])
    if n not in (3, 4):
        raise ValueError("SO12 gauge must be 3x3 (block) or 4x4 (ambient)")
    # axes: K0 rotates (n-3, n-2); b_s boosts (n-2, n-1)
    parts = _boost_parts(n, n - 2, n - 1)
    th = 2 * math.pi * np.arange(k_nodes) / k_nodes
    K = _rotation(n, n - 3, n - 2, th)
    A = g1inv[None] @ K            # g1^-1 k1
    B = K @ g2[None]               # k2 g2
    A = np.repeat(A[:, None], k_nodes, axis=1)
    B = np.repeat(B[None, :], k_nodes, axis=0)
    c = _quartic_coeffs(A, B, parts, R2)
    zmin = np.ones(len(c))
    zmax = np.full(len(c), np.inf)
    vals = _sublevel_measure(c, zmin, zmax, lambda z: np.where(np.isinf(z), np.inf, 0.5 * (z + 1 / z)))
    # periodic trapezoid on K0 x K0 with probability measures
    return float(math.fsum(vals) / len(vals))


def _torus_decompose(model: StabilizerModel, g):
    """Split a 3x3 affine element [[a^u, 0], [x, 1]] into (u, x)."""
    if g is None:
        return 0.0, np.zeros(2)
    g = np.asarray(g, dtype=float)
    a = np.array(model.generator, dtype=float)
    w, V = np.linalg.eig(a.T)
    kmax = int(np.argmax(np.abs(w)))
    left = V[:, kmax].real  # left eigenvector of a: left @ a = lam left
    img = left @ g[:2, :2]
    lam = float(w[kmax].real)
    ratio = float(np.dot(img, left) / np.dot(left, left))
    if ratio <= 0 or abs(lam) <= 0:
        raise ValueError("torus elements need a positive power of the generator")
    u = math.log(ratio) / math.log(abs(lam))
    return u, g[2, :2]


def _torus_volume(model: StabilizerModel, g1, g2, t: float) -> float:
    """s-measure of {s : sigma = s - u1 + u2 in the n-interval, ||x2 - x1 a^sigma|| <= e^t}."""
    L = model.log_lambda
    u1, x1 = _torus_decompose(model, g1)
    u2, x2 = _torus_decompose(model, g2)
    lo, hi = -t / L - HEIGHT_TOL, t / L + HEIGHT_TOL
    if not np.any(x1) and not np.any(x2):
        return hi - lo
    a = np.array(model.generator, dtype=float)
    w, V = np.linalg.eig(a)
    order = np.argsort(-np.abs(w))
    w, V = w[order].real, V[:, order].real
    # row convention: x1 a^sigma = alpha lam^sigma r+ + beta lam^-sigma r-
    Vinv = np.linalg.inv(V)
    coeff = x1 @ V  # components along right eigenvectors transposed
    rp = coeff[0] * Vinv[0]
    rm = coeff[1] * Vinv[1]
    # ||x2 - z rp - z^-1 rm||^2 - R2, times z^2
    R2 = math.exp(2 * (t + HEIGHT_TOL))
    c = np.array([[rp @ rp, -2 * (x2 @ rp), x2 @ x2 + 2 * (rp @ rm) - R2, -2 * (x2 @ rm), rm @ rm]])
    if c[0, 0] == 0:
        c[0, 0] = 1e-300
    zmin = np.array([math.exp(lo * L)])
    zmax = np.array([math.exp(hi * L)])
    return float(_sublevel_measure(c, zmin, zmax, lambda z: np.log(z) / L)[0])


# ---------------------------------------------------------------- SL2(R) Monte Carlo

def _kak(theta, a, phi):
    c1, s1 = np.cos(theta), np.sin(theta)
    c2, s2 = np.cos(phi), np.sin(phi)
    ea, ema = np.exp(a), np.exp(-a)
    # k(theta) diag(e^a, e^-a) k(phi), k = [[c, s], [-s, c]]
    h = np.empty(theta.shape + (2, 2))
    h[..., 0, 0] = c1 * ea * c2 - s1 * ema * s2
    h[..., 0, 1] = c1 * ea * s2 + s1 * ema * c2
    h[..., 1, 0] = -s1 * ea * c2 - c1 * ema * s2
    h[..., 1, 1] = -s1 * ea * s2 + c1 * ema * c2
    return h


def _sl2r_mc(gauge: GaugeFunction, g1, g2, t: float, samples: int, seed: int):
    n = gauge.ambient_dim
    g1 = np.eye(n) if g1 is None else np.asarray(g1, dtype=float)
    g2 = np.eye(n) if g2 is None else np.asarray(g2, dtype=float)
    g1inv = np.linalg.inv(g1)
    R2 = math.exp(2 * (t + HEIGHT_TOL))
    # ||h_emb|| <= ||g1|| e^t ||g2^-1||; then 2 cosh 2a = ||h||^2
    bound = (np.linalg.norm(g1) * np.linalg.norm(np.linalg.inv(g2))) ** 2 * R2
    if n == 3:
        bound -= 1.0
    A = 0.5 * math.acosh(max(bound / 2.0, 1.0))
    Z = 0.5 * (math.cosh(2 * A) - 1.0)  # int_0^A sinh 2a da
    ss = np.random.SeedSequence(seed)
    hits = 0
    done = 0
    batches = ss.spawn(-(-samples // MC_BATCH))
    for b, child in enumerate(batches):
        m = min(MC_BATCH, samples - done)
        rng = np.random.Generator(np.random.PCG64(child))
        u = rng.random((3, m))
        a = 0.5 * np.arccosh(1.0 + u[0] * (math.cosh(2 * A) - 1.0))
        h = _kak(2 * math.pi * u[1], a, 2 * math.pi * u[2])
        if n == 3:
            emb = np.zeros((m, 3, 3))
            emb[:, :2, :2] = h
            emb[:, 2, 2] = 1.0
            h = emb
        M = g1inv[None] @ h @ g2[None]
        hits += int(np.count_nonzero(np.sum(M * M, axis=(1, 2)) <= R2))
        done += m
    p = hits / done
    value = Z * p
    stderr = Z * math.sqrt(max(p * (1 - p), 0.0) / done)
    return value, stderr


# ---------------------------------------------------------------- public API

def skew_ball_volume(model: StabilizerModel, g1, g2, gauge: GaugeFunction | None, t: float, *,
                     k_nodes: int = K_NODES, samples: int = MC_SAMPLES, seed: int = 0,
                     g1_id: str = "g1", g2_id: str = "g2") -> VolumeSample:
    """rho(H_t[g1, g2]) = rho{h in H : log P(g1^-1 h g2) <= t}."""
    model = model if isinstance(model, StabilizerModel) else StabilizerModel(model)
    gauge = gauge or model.default_gauge()
    if t < 1:
        raise ValueError(f"volumes are defined for t >= 1, got {t}")
    for g in (g1, g2):
        if g is not None and abs(np.linalg.det(np.asarray(g, dtype=float))) < 1e-12:
            raise ValueError("g1 and g2 must be invertible")
    common = dict(g1_id=g1_id, g2_id=g2_id, model=model.kind.value, gauge=_gauge_id(gauge))
    kind = model.kind
    if kind in (StabilizerKind.SO11, StabilizerKind.SO12):
        plain = g1 is None and g2 is None
        if kind is StabilizerKind.SO11 and plain:
            return VolumeSample(t, _so11_closed(gauge, t), Method.CLOSED_FORM, **common)
        if kind is StabilizerKind.SO11:
            return VolumeSample(t, _so_volume(model, gauge, g1, g2, t, k_nodes), Method.CLOSED_FORM, **common)
        return VolumeSample(t, _so_volume(model, gauge, g1, g2, t, k_nodes), Method.QUADRATURE, **common)
    if kind is StabilizerKind.TORUS:
        return VolumeSample(t, _torus_volume(model, g1, g2, t), Method.CLOSED_FORM, **common)
    budget = samples
    for attempt in range(MC_RETRIES + 1):
        value, err = _sl2r_mc(gauge, g1, g2, t, budget, seed)
        if value > 0 and err <= MAX_REL_STDERR * value:
            return VolumeSample(t, value, Method.MONTE_CARLO, err, seed, **common)
        budget *= 2
    raise VolumeError(f"Monte Carlo did not reach {MAX_REL_STDERR:.0%} relative stderr at t={t}")


def haar_ball_volume(model: StabilizerModel, gauge: GaugeFunction | None, t: float, **kw) -> VolumeSample:
    """rho(H_t) for the plain ball."""
    kw.setdefault("g1_id", "I")
    kw.setdefault("g2_id", "I")
    return skew_ball_volume(model, None, None, gauge, t, **kw)


def _so11_closed(gauge: GaugeFunction, t: float) -> float:
    R2 = math.exp(2 * (t + HEIGHT_TOL))
    # ||b_s||^2 = 2 cosh 2s (block) or 1 + 2 cosh 2s (ambient 3x3)
    y = R2 / 2 if gauge.ambient_dim == 2 else (R2 - 1) / 2
    return math.acosh(y) if y >= 1 else 0.0


def _gauge_id(gauge: GaugeFunction) -> str:
    return f"{gauge.kind.value}{gauge.ambient_dim}"


@dataclass
class ThetaEstimate:
    value: float
    previous: float
    stabilized: bool
    t_max: float
    stderr: float = 0.0

    def __float__(self):
        return self.value


def theta_estimate(model: StabilizerModel, g1, g2, gauge: GaugeFunction | None, t_max: float,
                   **kw) -> ThetaEstimate:
    """rho(H_t[g1, g2]) / rho(H_t) at t_max, with the t_max - 1 stabilization check."""
    vals = []
    errs = []
    for t in (t_max - 1, t_max):
        skew = skew_ball_volume(model, g1, g2, gauge, t, **kw)
        plain = haar_ball_volume(model, gauge, t, **{k: v for k, v in kw.items() if k != "g1_id" and k != "g2_id"})
        r = skew.value / plain.value
        vals.append(r)
        errs.append(r * math.hypot(skew.stderr / skew.value, plain.stderr / plain.value))
    stab = abs(vals[1] - vals[0]) < STABILIZATION * abs(vals[1])
    return ThetaEstimate(vals[1], vals[0], stab, t_max, errs[1])


@dataclass
class GrowthFit:
    a_hat: float
    b_hat: int
    logc_hat: float
    residual: float
    t_range: tuple[float, float]
    residuals: dict = field(default_factory=dict)


def fit_growth(samples: list[VolumeSample]) -> GrowthFit:
    """Least squares of log rho - b log t = a t + log c, b snapped to {0, 1}."""
    adm = [s for s in samples if s.admissible]
    if len(adm) < 8:
        raise ValueError(f"fit_growth needs >= 8 admissible samples, got {len(adm)}")
    return fit_exponents([s.t for s in adm], [s.value for s in adm])


def fit_exponents(t, values, min_range: float = 3.0) -> GrowthFit:
    """Fit values ~ c e^{a t} t^b with b in {0, 1} chosen by residual."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if t.max() - t.min() < min_range:
        raise ValueError(f"growth fits need a t-range of length >= {min_range}")
    X = np.column_stack([t, np.ones_like(t)])
    if np.linalg.matrix_rank(X) < 2:
        raise ValueError("rank-deficient growth design")
    best = None
    res_by_b = {}
    for b in (0, 1):
        target = y - b * np.log(t)
        coef, *_ = np.linalg.lstsq(X, target, rcond=None)
        r = float(np.sqrt(np.mean((X @ coef - target) ** 2)))
        res_by_b[b] = r
        if best is None or r < best[3]:
            best = (coef[0], b, coef[1], r)
    return GrowthFit(float(best[0]), best[1], float(best[2]), best[3], (float(t.min()), float(t.max())), res_by_b)


@dataclass
class HolderFit:
    theta_hat: float
    constant: float
    increments: np.ndarray


def holder_check(model: StabilizerModel, gauge: GaugeFunction | None, t_grid, eps_grid, **kw) -> HolderFit:
    """Fit rel. increment (rho(t+eps) - rho(t)) / rho(t) ~ c eps^theta.

    One common slope with a separate intercept per t.
    """
    t_grid = list(t_grid)
    eps_grid = list(eps_grid)
    if len(t_grid) < 5:
        raise ValueError("holder_check needs at least 5 t values")
    if any(not 0 < e < 1 for e in eps_grid):
        raise ValueError("eps values must lie in (0, 1)")
    rel = np.zeros((len(t_grid), len(eps_grid)))
    for i, t in enumerate(t_grid):
        base = haar_ball_volume(model, gauge, t, **kw)
        for j, e in enumerate(eps_grid):
            up = haar_ball_volume(model, gauge, t + e, **kw)
            inc = up.value - base.value
            tol = 3 * math.hypot(up.stderr, base.stderr)
            if inc < -tol:
                raise VolumeError(f"negative volume increment at t={t}, eps={e}")
            rel[i, j] = max(inc, 0.0) / base.value
    le = np.log(eps_grid)
    rows, ys = [], []
    for i in range(len(t_grid)):
        for j in range(len(eps_grid)):
            if rel[i, j] > 0:
                onehot = np.zeros(len(t_grid))
                onehot[i] = 1.0
                rows.append(np.concatenate([[le[j]], onehot]))
                ys.append(math.log(rel[i, j]))
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(ys), rcond=None)
    theta = float(coef[0])
    c = float(np.max(rel / np.power(np.array(eps_grid)[None, :], theta)))
    return HolderFit(theta, c, rel)


CSV_COLUMNS = ["model", "gauge", "t", "g1_id", "g2_id", "value", "stderr", "method", "seed"]


def write_volume_csv(path, samples: list[VolumeSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for s in samples:
            w.writerow([s.model, s.gauge, repr(float(s.t)), s.g1_id, s.g2_id, repr(float(s.value)),
                        repr(float(s.stderr)), s.method.value, "" if s.seed is None else s.seed])


def de_sitter_section(d: int, r: float, theta: float = 0.0) -> np.ndarray:
    """s(x) = a_r k_omega in standard coordinates (time last) for d = 2, 3.

    ``theta`` rotates omega within the first two spatial axes.
    """
    n = d + 1
    k = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    k[0, 0] = k[1, 1] = c
    k[0, 1], k[1, 0] = s, -s
    return lorentz_boost(n, 0, r) @ k


def c_factor(r1: float, r2: float) -> float:
    """(1 + sinh^2 r1)^(1/2) (1 + sinh^2 r2)^(1/2)."""
    return math.sqrt(1 + math.sinh(r1) ** 2) * math.sqrt(1 + math.sinh(r2) ** 2)
