"""Exact elements and ball enumeration for the lattices used by the models.

Families: SL2(Z), SL2(Z[i]), their images in SO(2,1) (symmetric square) and
SO(3,1) (spin action), the affine group SL2(Z) x| Z^2 and the cyclic solvable
group <a> x| Z^2.

Enumeration uses column completion. For every primitive first column (a, c)
one Bezout solution (b0, d0) of ad - bc = 1 is found with the (Gaussian)
Euclidean algorithm; all other solutions are (b0 + k a, d0 + k c), and the
admissible k form an interval (a disk for Z[i]) fixed by the Frobenius
bound. The hot loops are numba kernels partitioned by Re(a); each partition
writes into its own slice, so the output is identical for any thread count.

Linear parts are stored as 8 integers ``(Re a, Im a, Re b, Im b, Re c, Im c,
Re d, Im d)``. Ball membership for the SO(2,1) and SO(3,1) images uses the
exact identities ||sym2(g)||^2 = S^2 - 1 and ||spin(g)||^2 = S^2 with
S = sum |g_ij|^2; :func:`brute_force_oracle` checks them independently by
forming the image matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator

import numba
import numpy as np
from numba import njit, prange

from .gauge import INT_BUDGET, GaugeFunction, block, frobenius, frobenius_threshold

# leaves a factor 16 of headroom for the intermediate b = b0 + k a values
ENTRY_BUDGET = INT_BUDGET >> 4
DEFAULT_CHUNK = 2_000_000


class CheckedArithmeticError(OverflowError):
    """An integer quantity left the 64-bit budget."""


class Family(str, Enum):
    SL2Z = "sl2z"
    SL2ZI = "sl2zi"
    SYM_SQUARE = "sl2z-sym2"
    SPIN = "sl2zi-spin"
    AFFINE = "sl2z-affine"
    SOLVABLE = "solvable"


def _check(x: int) -> int:
    if abs(x) >= INT_BUDGET:
        raise CheckedArithmeticError(f"integer {x} exceeds the 2^62 entry budget")
    return x


# ---------------------------------------------------------------- Gaussian integers

def gauss_mul(x: tuple[int, int], y: tuple[int, int]) -> tuple[int, int]:
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def gauss_norm(x: tuple[int, int]) -> int:
    return x[0] * x[0] + x[1] * x[1]


def _round_div(p: int, q: int) -> int:
    """Nearest integer to p/q (q > 0), ties towards +inf."""
    return (2 * p + q) // (2 * q)


def gauss_divmod(x, y):
    """Nearest-rounding division in Z[i]: x = q y + r with N(r) <= N(y)/2."""
    n = gauss_norm(y)
    if n == 0:
        raise ZeroDivisionError("Gaussian division by zero")
    num = gauss_mul(x, (y[0], -y[1]))
    q = (_round_div(num[0], n), _round_div(num[1], n))
    qy = gauss_mul(q, y)
    return q, (x[0] - qy[0], x[1] - qy[1])


def gauss_xgcd(x, y):
    """Return (g, s, u) with s x + u y = g, g a gcd of x and y in Z[i]."""
    r0, r1 = tuple(x), tuple(y)
    s0, s1 = (1, 0), (0, 0)
    u0, u1 = (0, 0), (1, 0)
    while r1 != (0, 0):
        q, r = gauss_divmod(r0, r1)
        qs, qu = gauss_mul(q, s1), gauss_mul(q, u1)
        r0, r1 = r1, r
        s0, s1 = s1, (s0[0] - qs[0], s0[1] - qs[1])
        u0, u1 = u1, (u0[0] - qu[0], u0[1] - qu[1])
    return r0, s0, u0


# ---------------------------------------------------------------- elements

@dataclass(frozen=True)
class GroupElement:
    """An exact lattice element.

    ``entries`` holds the 2x2 linear part as (re, im) pairs of a, b, c, d; it
    is empty for the solvable family, where the linear part a^n is recorded
    by ``power`` instead (a^n leaves the 64-bit range quickly).
    """

    entries: tuple[int, ...] = ()
    translation: tuple[int, int] | None = None
    power: int | None = None

    @classmethod
    def from_matrix(cls, m, translation=None, power=None) -> "GroupElement":
        arr = np.asarray(m)
        if arr.shape != (2, 2):
            raise ValueError("linear part must be 2x2")
        vals = []
        for z in arr.ravel():
            z = complex(z) if arr.dtype.kind == "c" else z
            if isinstance(z, complex):
                re, im = int(round(z.real)), int(round(z.imag))
            else:
                re, im = int(z), 0
            vals += [_check(re), _check(im)]
        el = cls(tuple(vals), None if translation is None else tuple(int(v) for v in translation), power)
        if el.det() != (1, 0):
            raise ValueError(f"determinant {el.det()} is not 1")
        return el

    @property
    def is_gaussian(self) -> bool:
        return any(self.entries[1::2])

    def gaussian_entries(self):
        e = self.entries
        return (e[0], e[1]), (e[2], e[3]), (e[4], e[5]), (e[6], e[7])

    def det(self) -> tuple[int, int]:
        a, b, c, d = self.gaussian_entries()
        ad, bc = gauss_mul(a, d), gauss_mul(b, c)
        return (ad[0] - bc[0], ad[1] - bc[1])

    def matrix(self) -> np.ndarray:
        e = self.entries
        if self.is_gaussian:
            return np.array([[complex(e[0], e[1]), complex(e[2], e[3])],
                             [complex(e[4], e[5]), complex(e[6], e[7])]])
        return np.array([[e[0], e[2]], [e[4], e[6]]], dtype=np.int64)

    def frobenius_sq(self) -> int:
        s = sum(x * x for x in self.entries)
        if self.translation is not None:
            s += self.translation[0] ** 2 + self.translation[1] ** 2 + 1
        return s

    def _lin_mul(self, other: "GroupElement") -> tuple[int, ...]:
        a, b, c, d = self.gaussian_entries()
        p, q, r, s = other.gaussian_entries()

        def add(x, y):
            return (_check(x[0] + y[0]), _check(x[1] + y[1]))

        out = (add(gauss_mul(a, p), gauss_mul(b, r)), add(gauss_mul(a, q), gauss_mul(b, s)),
               add(gauss_mul(c, p), gauss_mul(d, r)), add(gauss_mul(c, q), gauss_mul(d, s)))
        return tuple(x for z in out for x in z)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if self.power is not None or other.power is not None:
            raise TypeError("solvable elements multiply through GroupSpec.multiply")
        lin = self._lin_mul(other)
        if self.translation is None and other.translation is None:
            return GroupElement(lin)
        v = self.translation or (0, 0)
        w = other.translation or (0, 0)
        p, _, r, _, q, _, s, _ = other.entries
        # (h, v)(h', w) = (h h', v h' + w)
        tr = (_check(v[0] * p + v[1] * q + w[0]), _check(v[0] * r + v[1] * s + w[1]))
        return GroupElement(lin, tr)

    def inverse(self) -> "GroupElement":
        if self.power is not None:
            return GroupElement((), None, -self.power) if self.translation is None else NotImplemented
        a, b, c, d = self.gaussian_entries()
        lin = (d[0], d[1], -b[0], -b[1], -c[0], -c[1], a[0], a[1])
        if self.translation is None:
            return GroupElement(lin)
        v = self.translation
        # (h, v)^-1 = (h^-1, -v h^-1)
        hi = GroupElement(lin)
        p, _, r, _, q, _, s, _ = hi.entries
        return GroupElement(lin, (-(v[0] * p + v[1] * q), -(v[0] * r + v[1] * s)))

    def canonical_key(self) -> tuple:
        return (self.entries, self.translation or (), () if self.power is None else (self.power,))


def identity(gaussian: bool = False) -> GroupElement:
    return GroupElement((1, 0, 0, 0, 0, 0, 1, 0))


# ---------------------------------------------------------------- group specs

PHI_SQ = (3 + math.sqrt(5)) / 2


@dataclass(frozen=True)
class GroupSpec:
    family: Family
    generator: tuple[tuple[int, int], tuple[int, int]] = ((2, 1), (1, 1))
    gauge: GaugeFunction = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if self.gauge is None:
            default = {
                Family.SL2Z: frobenius(2), Family.SL2ZI: frobenius(2),
                Family.SYM_SQUARE: frobenius(3), Family.SPIN: frobenius(4),
                Family.AFFINE: block(2), Family.SOLVABLE: frobenius(2),
            }[fam]
            object.__setattr__(self, "gauge", default)
        if fam is Family.SOLVABLE:
            a = np.array(self.generator, dtype=np.int64)
            if round(np.linalg.det(a)) != 1:
                raise ValueError("generator must have determinant 1")
            tr = int(a[0, 0] + a[1, 1])
            if abs(tr) <= 2:
                raise ValueError(f"generator {self.generator} is not hyperbolic (|trace| <= 2)")

    @property
    def is_gaussian(self) -> bool:
        return self.family in (Family.SL2ZI, Family.SPIN)

    # eigenvalue moduli of the solvable generator
    @property
    def lambdas(self) -> tuple[float, float]:
        ev = np.abs(np.linalg.eigvals(np.array(self.generator, dtype=float)))
        return float(ev.max()), float(ev.min())

    def power_range(self, t: float) -> tuple[int, int]:
        """Integer n in [t / log lambda_min, t / log lambda_max]."""
        lmax, lmin = self.lambdas
        from .gauge import HEIGHT_TOL
        hi = math.floor(t / math.log(lmax) + HEIGHT_TOL)
        lo = math.ceil(t / math.log(lmin) - HEIGHT_TOL)
        return lo, hi

    def generator_power(self, n: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """a^n as exact Python integers (negative n uses the adjugate)."""
        (p, q), (r, s) = self.generator
        base = ((p, q), (r, s)) if n >= 0 else ((s, -q), (-r, p))
        out = ((1, 0), (0, 1))
        for _ in range(abs(n)):
            out = ((out[0][0] * base[0][0] + out[0][1] * base[1][0],
                    out[0][0] * base[0][1] + out[0][1] * base[1][1]),
                   (out[1][0] * base[0][0] + out[1][1] * base[1][0],
                    out[1][0] * base[0][1] + out[1][1] * base[1][1]))
        return out

    def multiply(self, g: GroupElement, h: GroupElement) -> GroupElement:
        if self.family is not Family.SOLVABLE:
            return g @ h
        am = self.generator_power(h.power)
        v = g.translation
        w = h.translation
        tr = (v[0] * am[0][0] + v[1] * am[1][0] + w[0], v[0] * am[0][1] + v[1] * am[1][1] + w[1])
        return GroupElement((), tr, g.power + h.power)


def linear_bound(spec: GroupSpec, t: float) -> int:
    """Largest admissible S = sum |g_ij|^2 for the SL2 linear part at height t.

    For the affine family this bounds ||h||^2 + 1 (translation zero).
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    n = frobenius_threshold(t)
    if n > INT_BUDGET:
        raise CheckedArithmeticError(f"t={t} exceeds the checked-integer budget")
    fam = spec.family
    if fam in (Family.SL2Z, Family.SL2ZI, Family.SOLVABLE):
        s = n
    elif fam is Family.SYM_SQUARE:
        s = math.isqrt(n + 1)
    elif fam is Family.SPIN:
        s = math.isqrt(n)
    elif fam is Family.AFFINE:
        s = n - 1
    else:  # pragma: no cover
        raise ValueError(fam)
    if s > ENTRY_BUDGET:
        raise CheckedArithmeticError(f"t={t} exceeds the enumeration entry budget")
    return s


# ---------------------------------------------------------------- numba kernels

@njit(cache=True)
def _isqrt(n):
    if n < 0:
        return -1
    r = np.int64(math.sqrt(float(n)))
    while r * r > n:
        r -= 1
    while (r + 1) * (r + 1) <= n:
        r += 1
    return r


@njit(cache=True)
def _xgcd(a, b):
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b != 0:
        q = a // b
        a, b = b, a - q * b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


@njit(cache=True)
def _rdiv(p, q):
    return (2 * p + q) // (2 * q)


@njit(cache=True)
def _gdivmod(xr, xi, yr, yi):
    n = yr * yr + yi * yi
    nr = xr * yr + xi * yi
    ni = xi * yr - xr * yi
    qr = _rdiv(nr, n)
    qi = _rdiv(ni, n)
    rr = xr - (qr * yr - qi * yi)
    ri = xi - (qr * yi + qi * yr)
    return qr, qi, rr, ri


@njit(cache=True)
def _gxgcd(ar, ai, br, bi):
    r0r, r0i, r1r, r1i = ar, ai, br, bi
    s0r, s0i, s1r, s1i = 1, 0, 0, 0
    u0r, u0i, u1r, u1i = 0, 0, 1, 0
    while r1r != 0 or r1i != 0:
        qr, qi, rr, ri = _gdivmod(r0r, r0i, r1r, r1i)
        ns_r = s0r - (qr * s1r - qi * s1i)
        ns_i = s0i - (qr * s1i + qi * s1r)
        nu_r = u0r - (qr * u1r - qi * u1i)
        nu_i = u0i - (qr * u1i + qi * u1r)
        r0r, r0i, r1r, r1i = r1r, r1i, rr, ri
        s0r, s0i, s1r, s1i = s1r, s1i, ns_r, ns_i
        u0r, u0i, u1r, u1i = u1r, u1i, nu_r, nu_i
    return r0r, r0i, s0r, s0i, u0r, u0i


@njit(cache=True)
def _sl2z_column(a, c, N, out, pos, write):
    """Emit or count all (b, d) completing column (a, c) within the bound N."""
    g, x, y = _xgcd(a, c)
    if g != 1:
        return 0
    n = a * a + c * c
    M = N - n
    if M < 1:
        return 0
    b0 = -y
    d0 = x
    m = a * b0 + c * d0
    k0 = (-2 * m + n) // (2 * n)
    b0 += k0 * a
    d0 += k0 * c
    m += k0 * n
    rad = math.sqrt(max(float(n) * float(M) - 1.0, 0.0))
    klo = np.int64(math.floor((-m - rad) / n)) - 1
    khi = np.int64(math.ceil((-m + rad) / n)) + 1
    while klo <= khi:
        b = b0 + klo * a
        d = d0 + klo * c
        if b * b + d * d <= M:
            break
        klo += 1
    while khi >= klo:
        b = b0 + khi * a
        d = d0 + khi * c
        if b * b + d * d <= M:
            break
        khi -= 1
    cnt = 0
    for k in range(klo, khi + 1):
        if write:
            out[pos + cnt, 0] = a
            out[pos + cnt, 1] = b0 + k * a
            out[pos + cnt, 2] = c
            out[pos + cnt, 3] = d0 + k * c
        cnt += 1
    return cnt


@njit(cache=True)
def _sl2z_partition(a, N, out, pos, write):
    rem = N - 1 - a * a
    if rem < 0:
        return 0
    cm = _isqrt(rem)
    cnt = 0
    for c in range(-cm, cm + 1):
        cnt += _sl2z_column(a, c, N, out, pos + cnt, write)
    return cnt


@njit(cache=True, parallel=True)
def _sl2z_counts(avals, N):
    res = np.zeros(avals.shape[0], dtype=np.int64)
    dummy = np.zeros((1, 4), dtype=np.int64)
    for i in prange(avals.shape[0]):
        res[i] = _sl2z_partition(avals[i], N, dummy, 0, False)
    return res


@njit(cache=True, parallel=True)
def _sl2z_fill(avals, N, offsets, out):
    for i in prange(avals.shape[0]):
        _sl2z_partition(avals[i], N, out, offsets[i], True)


@njit(cache=True)
def _gauss_ok(b0r, b0i, d0r, d0i, ar, ai, cr, ci, kr, ki, M):
    br = b0r + kr * ar - ki * ai
    bi = b0i + kr * ai + ki * ar
    dr = d0r + kr * cr - ki * ci
    di = d0i + kr * ci + ki * cr
    return br * br + bi * bi + dr * dr + di * di <= M


@njit(cache=True)
def _sl2zi_column(ar, ai, cr, ci, N, out, pos, write):
    gr, gi, sr, si, ur, ui = _gxgcd(ar, ai, cr, ci)
    if gr * gr + gi * gi != 1:
        return 0
    n = ar * ar + ai * ai + cr * cr + ci * ci
    M = N - n
    if M < 1:
        return 0
    # unit inverse of g is its conjugate; d0 = s/g, b0 = -u/g
    d0r = sr * gr + si * gi
    d0i = si * gr - sr * gi
    b0r = -(ur * gr + ui * gi)
    b0i = -(ui * gr - ur * gi)
    # m = conj(a) b0 + conj(c) d0
    mr = ar * b0r + ai * b0i + cr * d0r + ci * d0i
    mi = ar * b0i - ai * b0r + cr * d0i - ci * d0r
    k0r = (-2 * mr + n) // (2 * n)
    k0i = (-2 * mi + n) // (2 * n)
    nb0r = b0r + k0r * ar - k0i * ai
    nb0i = b0i + k0r * ai + k0i * ar
    nd0r = d0r + k0r * cr - k0i * ci
    nd0i = d0i + k0r * ci + k0i * cr
    b0r, b0i, d0r, d0i = nb0r, nb0i, nd0r, nd0i
    mr += k0r * n
    mi += k0i * n
    # admissible k: |n k + m|^2 <= n M - 1
    rad = math.sqrt(max(float(n) * float(M) - 1.0, 0.0)) / n
    cre = -mr / n
    cim = -mi / n
    krlo = np.int64(math.floor(cre - rad)) - 1
    krhi = np.int64(math.ceil(cre + rad)) + 1
    cnt = 0
    for kr in range(krlo, krhi + 1):
        dx = kr - cre
        r2 = rad * rad - dx * dx
        h = math.sqrt(r2) if r2 > 0.0 else 0.0
        kilo = np.int64(math.floor(cim - h)) - 1
        kihi = np.int64(math.ceil(cim + h)) + 1
        while kilo <= kihi and not _gauss_ok(b0r, b0i, d0r, d0i, ar, ai, cr, ci, kr, kilo, M):
            kilo += 1
        while kihi >= kilo and not _gauss_ok(b0r, b0i, d0r, d0i, ar, ai, cr, ci, kr, kihi, M):
            kihi -= 1
        for ki in range(kilo, kihi + 1):
            if write:
                q = pos + cnt
                out[q, 0] = ar
                out[q, 1] = ai
                out[q, 2] = b0r + kr * ar - ki * ai
                out[q, 3] = b0i + kr * ai + ki * ar
                out[q, 4] = cr
                out[q, 5] = ci
                out[q, 6] = d0r + kr * cr - ki * ci
                out[q, 7] = d0i + kr * ci + ki * cr
            cnt += 1
    return cnt


@njit(cache=True)
def _sl2zi_partition(ar, N, out, pos, write):
    cnt = 0
    rem0 = N - 1 - ar * ar
    if rem0 < 0:
        return 0
    aim = _isqrt(rem0)
    for ai in range(-aim, aim + 1):
        rem1 = rem0 - ai * ai
        crm = _isqrt(rem1)
        for cr in range(-crm, crm + 1):
            rem2 = rem1 - cr * cr
            cim = _isqrt(rem2)
            for ci in range(-cim, cim + 1):
                cnt += _sl2zi_column(ar, ai, cr, ci, N, out, pos + cnt, write)
    return cnt


@njit(cache=True, parallel=True)
def _sl2zi_counts(avals, N):
    res = np.zeros(avals.shape[0], dtype=np.int64)
    dummy = np.zeros((1, 8), dtype=np.int64)
    for i in prange(avals.shape[0]):
        res[i] = _sl2zi_partition(avals[i], N, dummy, 0, False)
    return res


@njit(cache=True, parallel=True)
def _sl2zi_fill(avals, N, offsets, out):
    for i in prange(avals.shape[0]):
        _sl2zi_partition(avals[i], N, out, offsets[i], True)


@njit(cache=True)
def _disk_count(R):
    """Number of integer points v with |v|^2 <= R."""
    if R < 0:
        return 0
    m = _isqrt(R)
    tot = 0
    for x in range(-m, m + 1):
        tot += 2 * _isqrt(R - x * x) + 1
    return tot


@njit(cache=True)
def _disk_fill(R, out, pos):
    m = _isqrt(R)
    cnt = 0
    for x in range(-m, m + 1):
        ym = _isqrt(R - x * x)
        for y in range(-ym, ym + 1):
            out[pos + cnt, 0] = x
            out[pos + cnt, 1] = y
            cnt += 1
    return cnt


@njit(cache=True)
def _circle_cumulative(R):
    """G[r] = #{v in Z^2 : |v|^2 <= r} for all 0 <= r <= R."""
    r2 = np.zeros(R + 1, dtype=np.int64)
    m = _isqrt(R)
    for x in range(-m, m + 1):
        ym = _isqrt(R - x * x)
        for y in range(-ym, ym + 1):
            r2[x * x + y * y] += 1
    return np.cumsum(r2)


@njit(cache=True)
def _sum_sq_rows(lin):
    out = np.empty(lin.shape[0], dtype=np.int64)
    for i in range(lin.shape[0]):
        s = 0
        for j in range(lin.shape[1]):
            s += lin[i, j] * lin[i, j]
        out[i] = s
    return out


def set_workers(n: int | None) -> None:
    """Set the numba thread count; results do not depend on it."""
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------- partitioned pipeline

@dataclass
class ElementChunk:
    """A block of elements as integer arrays, in partition order.

    ``lin`` has 4 columns (a, b, c, d) for integer families and 8 for
    Gaussian ones; ``trans`` and ``power`` appear for the affine families.
    """

    lin: np.ndarray | None
    trans: np.ndarray | None = None
    power: np.ndarray | None = None

    def __len__(self):
        for arr in (self.lin, self.trans, self.power):
            if arr is not None:
                return arr.shape[0]
        return 0


class _SL2Partitions:
    def __init__(self, bound: int, gaussian: bool):
        self.N = int(bound)
        self.gaussian = gaussian
        amax = math.isqrt(self.N - 1) if self.N >= 1 else -1
        self.avals = np.arange(-amax, amax + 1, dtype=np.int64)
        counter = _sl2zi_counts if gaussian else _sl2z_counts
        self.counts = counter(self.avals, np.int64(self.N)) if len(self.avals) else np.zeros(0, np.int64)

    def total(self) -> int:
        return int(self.counts.sum())

    def chunk_ranges(self, chunk_size: int):
        lo, acc = 0, 0
        for i, c in enumerate(self.counts):
            if acc and acc + c > chunk_size:
                yield lo, i
                lo, acc = i, 0
            acc += int(c)
        if lo < len(self.counts):
            yield lo, len(self.counts)

    def fill(self, lo: int, hi: int) -> np.ndarray:
        counts = self.counts[lo:hi]
        offsets = np.zeros(len(counts), dtype=np.int64)
        np.cumsum(counts[:-1], out=offsets[1:])
        out = np.empty((int(counts.sum()), 8 if self.gaussian else 4), dtype=np.int64)
        fill = _sl2zi_fill if self.gaussian else _sl2z_fill
        if len(out):
            fill(self.avals[lo:hi], np.int64(self.N), offsets, out)
        return out


def sl2_chunks(bound: int, gaussian: bool = False, chunk_size: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
    """Yield all g in SL2(Z) (or SL2(Z[i])) with sum |g_ij|^2 <= bound."""
    parts = _SL2Partitions(bound, gaussian)
    for lo, hi in parts.chunk_ranges(chunk_size):
        yield parts.fill(lo, hi)


def sl2_count(bound: int, gaussian: bool = False) -> int:
    return _SL2Partitions(bound, gaussian).total() if bound >= 1 else 0


def iter_chunks(spec: GroupSpec, t: float, chunk_size: int = DEFAULT_CHUNK) -> Iterator[ElementChunk]:
    """Stream the ball of height t in deterministic partition order."""
    fam = spec.family
    S = linear_bound(spec, t)
    if fam in (Family.SL2Z, Family.SL2ZI, Family.SYM_SQUARE, Family.SPIN):
        for lin in sl2_chunks(S, spec.is_gaussian, chunk_size):
            yield ElementChunk(lin)
    elif fam is Family.AFFINE:
        for lin in sl2_chunks(S, False, chunk_size):
            rem = S - _sum_sq_rows(lin)
            sizes = np.array([_disk_count(r) for r in rem], dtype=np.int64)
            trans = np.empty((int(sizes.sum()), 2), dtype=np.int64)
            pos = 0
            for r in rem:
                pos += _disk_fill(r, trans, pos)
            yield ElementChunk(np.repeat(lin, sizes, axis=0), trans)
    elif fam is Family.SOLVABLE:
        lo, hi = spec.power_range(t)
        disk = np.empty((_disk_count(S), 2), dtype=np.int64)
        _disk_fill(S, disk, 0)
        for n in range(lo, hi + 1):
            yield ElementChunk(None, disk.copy(), np.full(len(disk), n, dtype=np.int64))


def _chunk_elements(chunk: ElementChunk, gaussian: bool) -> list[GroupElement]:
    els = []
    n = len(chunk)
    for i in range(n):
        if chunk.lin is not None:
            row = chunk.lin[i].tolist()
            if not gaussian:
                row = [row[0], 0, row[1], 0, row[2], 0, row[3], 0]
            entries = tuple(row)
        else:
            entries = ()
        tr = None if chunk.trans is None else tuple(chunk.trans[i].tolist())
        pw = None if chunk.power is None else int(chunk.power[i])
        els.append(GroupElement(entries, tr, pw))
    return els


@dataclass
class BallEnumeration:
    spec: GroupSpec
    t: float
    chunk_size: int = DEFAULT_CHUNK

    def chunks(self) -> Iterator[ElementChunk]:
        return iter_chunks(self.spec, self.t, self.chunk_size)

    def __iter__(self) -> Iterator[GroupElement]:
        """Elements in canonical (lexicographic) order."""
        for chunk in self.chunks():
            els = _chunk_elements(chunk, self.spec.is_gaussian)
            els.sort(key=GroupElement.canonical_key)
            yield from els

    def count(self) -> int:
        return ball_count(self.spec, self.t)


def enumerate_ball(spec: GroupSpec, t: float, chunk_size: int = DEFAULT_CHUNK) -> BallEnumeration:
    linear_bound(spec, t)  # validates t and the integer budget eagerly
    return BallEnumeration(spec, t, chunk_size)


def ball_count(spec: GroupSpec, t: float) -> int:
    """|Gamma_t| without materialising the ball."""
    fam = spec.family
    S = linear_bound(spec, t)
    if fam in (Family.SL2Z, Family.SL2ZI, Family.SYM_SQUARE, Family.SPIN):
        return sl2_count(S, spec.is_gaussian)
    if fam is Family.SOLVABLE:
        lo, hi = spec.power_range(t)
        return max(hi - lo + 1, 0) * int(_disk_count(S))
    # affine: sum over h of the disk counts, via a histogram of ||h||^2
    if S < 2:
        return 0
    G = _circle_cumulative(S - 2)
    total = 0
    for lin in sl2_chunks(S):
        rem = S - _sum_sq_rows(lin)
        total += int(G[rem].sum())
    return total


def canonical_sorted(elements) -> list[GroupElement]:
    return sorted(elements, key=GroupElement.canonical_key)


# ---------------------------------------------------------------- image representations

# standard coordinates x = (beta, alpha - delta, alpha + delta) on binary forms
_FORM_TO_STD = np.array([[0, 1, 1], [1, 0, 0], [0, -1, 1]], dtype=np.int64)  # row (al, be, de) -> x


def sym_square(g: GroupElement | np.ndarray) -> np.ndarray:
    """Substitution action on binary forms (alpha, beta, delta), row convention.

    ``q @ sym_square(g)`` are the coefficients of q(a u + b w, c u + d w);
    the map preserves beta^2 - 4 alpha delta and is a homomorphism.
    """
    if isinstance(g, GroupElement):
        if g.is_gaussian:
            raise ValueError("sym_square needs an integer matrix")
        a, b, c, d = g.entries[0], g.entries[2], g.entries[4], g.entries[6]
    else:
        (a, b), (c, d) = np.asarray(g).tolist()
    return np.array([
        [a * a, 2 * a * b, b * b],
        [a * c, a * d + b * c, b * d],
        [c * c, 2 * c * d, d * d],
    ], dtype=np.int64 if isinstance(a, (int, np.integer)) else float)


def sym_square_std(g) -> np.ndarray:
    """sym_square in coordinates where the invariant form is x1^2 + x2^2 - x3^2.

    Entries are half-integers; returned as floats (exact in binary).
    """
    P = _FORM_TO_STD.astype(float)
    return np.linalg.solve(P, sym_square(g).astype(float) @ P)


def sym_square_std_exact(g: GroupElement) -> list[list[Fraction]]:
    P = [[Fraction(int(x)) for x in row] for row in _FORM_TO_STD]
    # inverse of P, computed by hand: x -> (alpha, beta, delta)
    Pinv = [[Fraction(0), Fraction(1), Fraction(0)],
            [Fraction(1, 2), Fraction(0), Fraction(-1, 2)],
            [Fraction(1, 2), Fraction(0), Fraction(1, 2)]]
    S = [[Fraction(int(x)) for x in row] for row in sym_square(g)]

    def mm(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)] for i in range(3)]

    return mm(mm(Pinv, S), P)


def _hermitian(x):
    x0, x1, x2, x3 = x
    return np.array([[x0 + x3, x1 + 1j * x2], [x1 - 1j * x2, x0 - x3]])


def _unhermitian(H):
    x0 = 0.5 * (H[0, 0] + H[1, 1]).real
    x3 = 0.5 * (H[0, 0] - H[1, 1]).real
    return np.array([x0, H[0, 1].real, H[0, 1].imag, x3])


def spin_action(g: GroupElement | np.ndarray, x) -> np.ndarray:
    """Coordinates of g H g^* where H = [[x0+x3, x1+i x2], [x1-i x2, x0-x3]].

    Preserves x1^2 + x2^2 + x3^2 - x0^2.
    """
    G = g.matrix().astype(complex) if isinstance(g, GroupElement) else np.asarray(g, dtype=complex)
    return _unhermitian(G @ _hermitian(np.asarray(x, dtype=float)) @ G.conj().T)


def spin_matrix(g) -> np.ndarray:
    """4x4 real matrix S(g) with spin_action(g, x) = S(g) @ x; a homomorphism."""
    return np.column_stack([spin_action(g, e) for e in np.eye(4)])


def spin_matrix_exact(g: GroupElement) -> list[list[Fraction]]:
    """S(g) in exact rationals, built from Gaussian integer arithmetic."""
    a, b, c, d = g.gaussian_entries()
    G = [[a, b], [c, d]]
    basis = [((1, 0), (0, 0), (0, 0), (1, 0)),   # x0: I
             ((0, 0), (1, 0), (1, 0), (0, 0)),   # x1
             ((0, 0), (0, 1), (0, -1), (0, 0)),  # x2
             ((1, 0), (0, 0), (0, 0), (-1, 0))]  # x3
    cols = []
    for hb in basis:
        H = [[hb[0], hb[1]], [hb[2], hb[3]]]
        GH = [[tuple(map(sum, zip(gauss_mul(G[i][0], H[0][j]), gauss_mul(G[i][1], H[1][j]))))
               for j in range(2)] for i in range(2)]
        Gs = [[(G[j][i][0], -G[j][i][1]) for j in range(2)] for i in range(2)]
        R = [[tuple(map(sum, zip(gauss_mul(GH[i][0], Gs[0][j]), gauss_mul(GH[i][1], Gs[1][j]))))
              for j in range(2)] for i in range(2)]
        cols.append([Fraction(R[0][0][0] + R[1][1][0], 2), Fraction(R[0][1][0]),
                     Fraction(R[0][1][1]), Fraction(R[0][0][0] - R[1][1][0], 2)])
    return [[cols[j][i] for j in range(4)] for i in range(4)]


# ---------------------------------------------------------------- brute-force oracle

ORACLE_MAX_EXP_T = 16.0


def _oracle_sl2z_tuples(B: int) -> np.ndarray:
    r = np.arange(-B, B + 1, dtype=np.int64)
    a, b, c, d = np.meshgrid(r, r, r, r, indexing="ij")
    m = (a * d - b * c) == 1
    return np.column_stack([a[m], b[m], c[m], d[m]])


def _gauss_disk(R: int) -> np.ndarray:
    m = math.isqrt(R)
    r = np.arange(-m, m + 1, dtype=np.int64)
    x, y = np.meshgrid(r, r, indexing="ij")
    keep = x * x + y * y <= R
    return np.column_stack([x[keep], y[keep]])


def _oracle_sl2zi_tuples(R: int) -> np.ndarray:
    """All Gaussian (a, b, c, d) with det 1 and every |entry|^2 <= R and
    |a|^2+|b|^2+|c|^2+|d|^2 <= R, scanning (a, b, c) and solving for d."""
    disk = _gauss_disk(R)
    nd = (disk ** 2).sum(1)
    rows = []
    for (ar, ai), na in zip(disk, nd):
        sel = nd <= R - na
        bs = disk[sel]
        nb = nd[sel]
        bi_, ci_ = np.meshgrid(np.arange(len(bs)), np.arange(len(bs)), indexing="ij")
        bi_, ci_ = bi_.ravel(), ci_.ravel()
        keep = nb[bi_] + nb[ci_] <= R - na
        bi_, ci_ = bi_[keep], ci_[keep]
        br, bim = bs[bi_, 0], bs[bi_, 1]
        cr, cim = bs[ci_, 0], bs[ci_, 1]
        # 1 + b c
        pr = 1 + br * cr - bim * cim
        pi_ = br * cim + bim * cr
        room = R - na - nb[bi_] - nb[ci_]
        if na == 0:
            # a = 0 needs b c = -1, then d is free in the remaining disk
            ok = (pr == 0) & (pi_ == 0)
            for j in np.nonzero(ok)[0]:
                for dr, di in disk[nd <= room[j]]:
                    rows.append((ar, ai, br[j], bim[j], cr[j], cim[j], dr, di))
            continue
        # d = (1 + b c) / a = (1 + b c) conj(a) / |a|^2
        qr = pr * ar + pi_ * ai
        qi = pi_ * ar - pr * ai
        ok = (qr % na == 0) & (qi % na == 0)
        dr, di = qr // na, qi // na
        ok &= dr * dr + di * di <= room
        for j in np.nonzero(ok)[0]:
            rows.append((ar, ai, br[j], bim[j], cr[j], cim[j], dr[j], di[j]))
    return np.array(rows, dtype=np.int64).reshape(-1, 8)


def _image_frobenius_sq_times4(spec: GroupSpec, el: GroupElement) -> int:
    if spec.family is Family.SYM_SQUARE:
        M = sym_square_std_exact(el)
    else:
        M = spin_matrix_exact(el)
    return int(4 * sum(x * x for row in M for x in row))


def brute_force_oracle(spec: GroupSpec, t: float) -> list[GroupElement]:
    """Exhaustive scan of entry tuples; independent of the column-completion path.

    Returns the canonical sorted list of elements with det 1 inside the ball.
    """
    if math.exp(t) > ORACLE_MAX_EXP_T + 1e-9:
        raise ValueError(f"oracle refused: e^t = {math.exp(t):.3f} > {ORACLE_MAX_EXP_T}")
    if t < 0:
        raise ValueError("t must be non-negative")
    N = frobenius_threshold(t)
    fam = spec.family
    out: list[GroupElement] = []
    if fam is Family.SL2Z:
        for a, b, c, d in _oracle_sl2z_tuples(math.isqrt(N)):
            if a * a + b * b + c * c + d * d <= N:
                out.append(GroupElement((int(a), 0, int(b), 0, int(c), 0, int(d), 0)))
    elif fam is Family.SL2ZI:
        for row in _oracle_sl2zi_tuples(N):
            out.append(GroupElement(tuple(int(x) for x in row)))
    elif fam in (Family.SYM_SQUARE, Family.SPIN):
        # sigma_max(image) = sigma_max(g)^2 >= ||g||^2 / 2 bounds the scan
        R = 2 * math.isqrt(N) + 2
        if fam is Family.SYM_SQUARE:
            cands = (GroupElement((int(a), 0, int(b), 0, int(c), 0, int(d), 0))
                     for a, b, c, d in _oracle_sl2z_tuples(math.isqrt(R)))
        else:
            cands = (GroupElement(tuple(int(x) for x in row)) for row in _oracle_sl2zi_tuples(R))
        for el in cands:
            if _image_frobenius_sq_times4(spec, el) <= 4 * N:
                out.append(el)
    elif fam is Family.SOLVABLE:
        lo, hi = spec.power_range(t)
        B = math.isqrt(N)
        for n in range(lo, hi + 1):
            for x in range(-B, B + 1):
                for y in range(-B, B + 1):
                    if x * x + y * y <= N:
                        out.append(GroupElement((), (x, y), n))
    elif fam is Family.AFFINE:
        B = math.isqrt(N)
        for a, b, c, d in _oracle_sl2z_tuples(B):
            for x in range(-B, B + 1):
                for y in range(-B, B + 1):
                    if a * a + b * b + c * c + d * d + x * x + y * y + 1 <= N:
                        out.append(GroupElement((int(a), 0, int(b), 0, int(c), 0, int(d), 0), (x, y)))
    return canonical_sorted(out)


# ---------------------------------------------------------------- text dump

def dump_ball(spec: GroupSpec, t: float, fh) -> int:
    """Write ``family t count`` then one element per line in canonical order."""
    els = list(enumerate_ball(spec, t))
    fh.write(f"{spec.family.value} {t!r} {len(els)}\n")
    for el in els:
        parts = list(el.entries)
        if el.translation is not None:
            parts += list(el.translation)
        if el.power is not None:
            parts.append(el.power)
        fh.write(" ".join(str(p) for p in parts) + "\n")
    return len(els)
