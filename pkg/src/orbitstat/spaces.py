"""Homogeneous-space models X = H\\G with right lattice actions.

Every model fixes a point representation, a chart with its reference density,
a section into G (where the volume module needs one), and the closed-form
limiting density. Actions use the row-vector convention x -> x M(g)
throughout, so ``act(act(x, g1), g2) == act(x, g1 @ g2)``.

Models
------
affine-solvable   R^2 with <a> x| Z^2,  V(t) = t
affine-sl2z       R^2 with SL2(Z) x| Z^2,  V(t) = e^{2t}
punctured-plane   R^2 minus 0 with SL2(Z),  V(t) = e^{t}
projective-line   P^1(R) with SL2(Z),  V(t) = e^{2t}
de-sitter-2       x1^2 + x2^2 - x3^2 = 1 with sym2(SL2(Z)),  V(t) = t
de-sitter-3       x1^2 + x2^2 + x3^2 - x0^2 = 1 with spin(SL2(Z[i])),  V(t) = e^{t}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from numba import njit

from .arithmetic_groups import ElementChunk, Family, GroupElement, GroupSpec

VARIETY_TOL = 1e-10
SINGULARITY_MARGIN = 0.05


class SpaceDomainError(ValueError):
    """A point is off the model's variety or outside the chart."""


class ModelKind(str, Enum):
    AFFINE_SOLVABLE = "affine-solvable"
    AFFINE_LATTICE = "affine-sl2z"
    PUNCTURED_PLANE = "punctured-plane"
    PROJECTIVE_LINE = "projective-line"
    DE_SITTER2 = "de-sitter-2"
    DE_SITTER3 = "de-sitter-3"


_FAMILY = {
    ModelKind.AFFINE_SOLVABLE: Family.SOLVABLE,
    ModelKind.AFFINE_LATTICE: Family.AFFINE,
    ModelKind.PUNCTURED_PLANE: Family.SL2Z,
    ModelKind.PROJECTIVE_LINE: Family.SL2Z,
    ModelKind.DE_SITTER2: Family.SYM_SQUARE,
    ModelKind.DE_SITTER3: Family.SPIN,
}

# V(t) = e^{a t} t^b
_EXPONENTS = {
    ModelKind.AFFINE_SOLVABLE: (0, 1),
    ModelKind.AFFINE_LATTICE: (2, 0),
    ModelKind.PUNCTURED_PLANE: (1, 0),
    ModelKind.PROJECTIVE_LINE: (2, 0),
    ModelKind.DE_SITTER2: (0, 1),
    ModelKind.DE_SITTER3: (1, 0),
}

_COORDS = {
    ModelKind.AFFINE_SOLVABLE: ("x1", "x2"),
    ModelKind.AFFINE_LATTICE: ("x1", "x2"),
    ModelKind.PUNCTURED_PLANE: ("x1", "x2"),
    ModelKind.PROJECTIVE_LINE: ("theta",),
    ModelKind.DE_SITTER2: ("r", "theta"),
    ModelKind.DE_SITTER3: ("r", "theta", "phi"),
}

# closed chart ranges; None means unbounded
_RANGES = {
    ModelKind.PROJECTIVE_LINE: ((0.0, math.pi),),
    ModelKind.DE_SITTER2: ((None, None), (0.0, 2 * math.pi)),
    ModelKind.DE_SITTER3: ((None, None), (0.0, math.pi), (0.0, 2 * math.pi)),
}


@dataclass(frozen=True)
class SpaceModel:
    kind: ModelKind
    spec: GroupSpec = field(default=None)  # type: ignore[assignment]
    # exponent of (1 + |x|^2) in the affine-sl2z limit density
    affine_exponent: float = 0.5

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.spec is None:
            object.__setattr__(self, "spec", GroupSpec(_FAMILY[kind]))
        elif self.spec.family is not _FAMILY[kind]:
            raise ValueError(f"{kind.value} needs the {_FAMILY[kind].value} family")

    @property
    def normalization_exponents(self) -> tuple[int, int]:
        return _EXPONENTS[self.kind]

    @property
    def coordinate_names(self) -> tuple[str, ...]:
        return _COORDS[self.kind]

    @property
    def point_dim(self) -> int:
        return {ModelKind.DE_SITTER2: 3, ModelKind.DE_SITTER3: 4}.get(self.kind, 2)

    @property
    def chart_dim(self) -> int:
        return len(self.coordinate_names)

    @property
    def is_de_sitter(self) -> bool:
        return self.kind in (ModelKind.DE_SITTER2, ModelKind.DE_SITTER3)

    @property
    def de_sitter_dim(self) -> int:
        return {ModelKind.DE_SITTER2: 2, ModelKind.DE_SITTER3: 3}[self.kind]

    def V(self, t: float) -> float:
        a, b = self.normalization_exponents
        return math.exp(a * t) * t ** b

    def chart_range(self, i: int):
        return _RANGES.get(self.kind, ((None, None),) * self.chart_dim)[i]

    # ------------------------------------------------------------ varieties

    def quadric(self, pts) -> np.ndarray:
        """Defining form evaluated on points (de Sitter models)."""
        p = np.asarray(pts, dtype=float)
        if self.kind is ModelKind.DE_SITTER2:
            return p[..., 0] ** 2 + p[..., 1] ** 2 - p[..., 2] ** 2
        if self.kind is ModelKind.DE_SITTER3:
            return p[..., 1] ** 2 + p[..., 2] ** 2 + p[..., 3] ** 2 - p[..., 0] ** 2
        raise TypeError(f"{self.kind.value} has no quadric")

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.point_dim or not np.all(np.isfinite(x)):
            raise SpaceDomainError(f"point {x} is not a finite {self.point_dim}-vector")
        if self.is_de_sitter:
            scale = 1.0 + np.sum(x ** 2, axis=-1)
            if np.any(np.abs(self.quadric(x) - 1.0) > VARIETY_TOL * scale):
                raise SpaceDomainError(f"point {x} is off the de Sitter quadric")
        elif self.kind is ModelKind.PROJECTIVE_LINE:
            if np.any(np.abs(np.sum(x ** 2, axis=-1) - 1.0) > VARIETY_TOL):
                raise SpaceDomainError(f"point {x} is not a normalised P^1 representative")
        elif self.kind is ModelKind.PUNCTURED_PLANE:
            if np.any(np.sum(x ** 2, axis=-1) == 0):
                raise SpaceDomainError("the origin is not in the punctured plane")
        return x

    # ------------------------------------------------------------ charts

    def from_chart(self, coords) -> np.ndarray:
        u = np.asarray(coords, dtype=float)
        k = self.kind
        if k is ModelKind.PROJECTIVE_LINE:
            th = u[..., 0]
            return np.stack([np.cos(th), np.sin(th)], axis=-1)
        if k is ModelKind.DE_SITTER2:
            r, th = u[..., 0], u[..., 1]
            return np.stack([np.cos(th) * np.cosh(r), np.sin(th) * np.cosh(r), np.sinh(r)], axis=-1)
        if k is ModelKind.DE_SITTER3:
            r, th, ph = u[..., 0], u[..., 1], u[..., 2]
            ch = np.cosh(r)
            return np.stack([np.sinh(r), ch * np.sin(th) * np.cos(ph),
                             ch * np.sin(th) * np.sin(ph), ch * np.cos(th)], axis=-1)
        return u.copy()

    def to_chart(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float)
        k = self.kind
        if k is ModelKind.PROJECTIVE_LINE:
            return np.mod(np.arctan2(p[..., 1], p[..., 0]), math.pi)[..., None]
        if k is ModelKind.DE_SITTER2:
            r = np.arcsinh(p[..., 2])
            th = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * math.pi)
            return np.stack([r, th], axis=-1)
        if k is ModelKind.DE_SITTER3:
            r = np.arcsinh(p[..., 0])
            ch = np.cosh(r)
            th = np.arccos(np.clip(p[..., 3] / ch, -1.0, 1.0))
            ph = np.mod(np.arctan2(p[..., 2], p[..., 1]), 2 * math.pi)
            return np.stack([r, th, ph], axis=-1)
        return p.copy()

    def polar_chart(self, pts):
        """(r, omega) with omega the unit spatial direction (de Sitter models)."""
        p = self.check_point(pts)
        if self.kind is ModelKind.DE_SITTER2:
            r = np.arcsinh(p[..., 2])
            return r, p[..., :2] / np.cosh(r)[..., None]
        if self.kind is ModelKind.DE_SITTER3:
            r = np.arcsinh(p[..., 0])
            return r, p[..., 1:] / np.cosh(r)[..., None]
        raise TypeError("polar chart is defined for de Sitter models only")

    def from_polar(self, r, omega) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if self.kind is ModelKind.DE_SITTER2:
            return np.concatenate([omega * np.cosh(r)[..., None], np.sinh(r)[..., None]], axis=-1)
        if self.kind is ModelKind.DE_SITTER3:
            return np.concatenate([np.sinh(r)[..., None], omega * np.cosh(r)[..., None]], axis=-1)
        raise TypeError("polar chart is defined for de Sitter models only")

    def chart_density(self, coords) -> np.ndarray:
        """Density of the reference measure xi in chart coordinates.

        Angular factors are normalised to probability measures; the plane
        models carry Lebesgue measure (vol(R^2/Z^2) = 1).
        """
        u = np.asarray(coords, dtype=float)
        k = self.kind
        if k is ModelKind.PROJECTIVE_LINE:
            return np.full(u.shape[:-1], 1.0 / math.pi)
        if k is ModelKind.DE_SITTER2:
            return np.cosh(u[..., 0]) / (2 * math.pi)
        if k is ModelKind.DE_SITTER3:
            return np.cosh(u[..., 0]) ** 2 * np.sin(u[..., 1]) / (4 * math.pi)
        return np.ones(u.shape[:-1])

    def coarse_mask(self, pts, lo, hi) -> np.ndarray:
        """Cheap superset test for chart-box membership before full charting."""
        p = pts
        k = self.kind
        if k is ModelKind.DE_SITTER2:
            return (p[:, 2] >= math.sinh(lo[0]) - 1e-12) & (p[:, 2] <= math.sinh(hi[0]) + 1e-12)
        if k is ModelKind.DE_SITTER3:
            return (p[:, 0] >= math.sinh(lo[0]) - 1e-12) & (p[:, 0] <= math.sinh(hi[0]) + 1e-12)
        if k is ModelKind.PROJECTIVE_LINE:
            return np.ones(len(p), dtype=bool)
        return ((p[:, 0] >= lo[0]) & (p[:, 0] <= hi[0]) & (p[:, 1] >= lo[1]) & (p[:, 1] <= hi[1]))

    # ------------------------------------------------------------ sections

    def section(self, x) -> np.ndarray:
        """A group element s(x) with base_point . s(x) = x.

        de Sitter: a_r k_omega in standard coordinates (spatial coordinates
        first, time last) as used by the volume module. Affine models:
        the 3x3 embedding of (e, x).
        """
        x = self.check_point(x)
        if self.is_de_sitter:
            d = self.de_sitter_dim
            r, om = self.polar_chart(x)
            return lorentz_boost(d + 1, 0, float(r)) @ _rotation_to(np.asarray(om), d + 1)
        if self.kind in (ModelKind.AFFINE_LATTICE, ModelKind.AFFINE_SOLVABLE):
            g = np.eye(3)
            g[2, :2] = x
            return g
        raise TypeError(f"no section implemented for {self.kind.value}")

    # ------------------------------------------------------------ limit densities

    def limit_density(self, x, y) -> float:
        """Theta~(x, y): density of nu_x against xi, up to one model constant."""
        k = self.kind
        if self.is_de_sitter:
            d = self.de_sitter_dim
            rx, _ = self.polar_chart(x)
            ry, _ = self.polar_chart(y)
            c = math.sqrt(1 + math.sinh(rx) ** 2) * math.sqrt(1 + math.sinh(ry) ** 2)
            return c ** (-(d - 2))
        if k in (ModelKind.PROJECTIVE_LINE, ModelKind.AFFINE_SOLVABLE):
            self.check_point(x)
            self.check_point(y)
            return 1.0
        if k is ModelKind.PUNCTURED_PLANE:
            nx = math.hypot(*np.asarray(x, dtype=float))
            ny = math.hypot(*np.asarray(y, dtype=float))
            if nx == 0 or ny == 0:
                raise SpaceDomainError("the punctured-plane density has a pole at the origin")
            return 1.0 / (nx * ny)
        if k is ModelKind.AFFINE_LATTICE:
            self.check_point(y)
            nx2 = float(np.sum(np.asarray(x, dtype=float) ** 2))
            return (1.0 + nx2) ** (-self.affine_exponent)
        raise TypeError(k)

    def limit_density_chart(self, x, coords) -> np.ndarray:
        """Vectorised Theta~(x, .) at chart coordinates."""
        u = np.asarray(coords, dtype=float)
        k = self.kind
        if self.is_de_sitter:
            d = self.de_sitter_dim
            rx, _ = self.polar_chart(x)
            return (np.cosh(rx) * np.cosh(u[..., 0])) ** (-(d - 2))
        if k is ModelKind.PUNCTURED_PLANE:
            nx = math.hypot(*np.asarray(x, dtype=float))
            return 1.0 / (nx * np.hypot(u[..., 0], u[..., 1]))
        if k is ModelKind.AFFINE_LATTICE:
            nx2 = float(np.sum(np.asarray(x, dtype=float) ** 2))
            return np.full(u.shape[:-1], (1.0 + nx2) ** (-self.affine_exponent))
        return np.ones(u.shape[:-1])

    # ------------------------------------------------------------ actions

    def act(self, x, g: GroupElement) -> np.ndarray:
        """Right action x . g for a single element."""
        x = self.check_point(x)
        k = self.kind
        if k is ModelKind.AFFINE_SOLVABLE:
            return solvable_act(self.spec, x, g.power, g.translation)
        if k is ModelKind.AFFINE_LATTICE:
            h = g.matrix().astype(float)
            v = np.asarray(g.translation or (0, 0), dtype=float)
            return x @ h + v
        if k is ModelKind.PUNCTURED_PLANE:
            return x @ g.matrix().astype(float)
        if k is ModelKind.PROJECTIVE_LINE:
            y = x @ g.matrix().astype(float)
            return _normalise_p1(y)
        if k is ModelKind.DE_SITTER2:
            return _sym2_chunk(x, np.array([g.entries[0::2]], dtype=np.int64))[0]
        if k is ModelKind.DE_SITTER3:
            return _spin_chunk(x, np.array([g.entries], dtype=np.int64))[0]
        raise TypeError(k)

    def act_chunk(self, x, chunk: ElementChunk) -> np.ndarray:
        """x . g for every element of a chunk; returns shape (n, point_dim).

        The solvable family is handled exactly elsewhere (see sampling).
        """
        k = self.kind
        lin = chunk.lin
        if k is ModelKind.DE_SITTER3:
            return _spin_chunk(np.asarray(x, dtype=float), lin)
        if k is ModelKind.DE_SITTER2:
            return _sym2_chunk(np.asarray(x, dtype=float), lin)
        a, b, c, d = (lin[:, i].astype(float) for i in range(4))
        y1 = x[0] * a + x[1] * c
        y2 = x[0] * b + x[1] * d
        if k is ModelKind.AFFINE_LATTICE:
            y1 = y1 + chunk.trans[:, 0]
            y2 = y2 + chunk.trans[:, 1]
            return np.stack([y1, y2], axis=-1)
        y = np.stack([y1, y2], axis=-1)
        if k is ModelKind.PROJECTIVE_LINE:
            return _normalise_p1(y)
        return y

    def sample_points(self, rng: np.random.Generator, n: int, lo, hi) -> np.ndarray:
        """Seeded base points, uniform in a chart box."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        u = lo + (hi - lo) * rng.random((n, len(lo)))
        return self.from_chart(u)


def _normalise_p1(y):
    y = np.asarray(y, dtype=float)
    th = np.mod(np.arctan2(y[..., 1], y[..., 0]), math.pi)
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


@njit(cache=True)
def _sym2_point(x0, x1, x2, a, b, c, d, out, i):
    """x . sym2(g) in coordinates (beta, alpha - delta, alpha + delta)."""
    al = 0.5 * (x1 + x2)
    be = x0
    de = 0.5 * (x2 - x1)
    # q(a u + b w, c u + d w)
    al2 = al * a * a + be * a * c + de * c * c
    be2 = 2 * al * a * b + be * (a * d + b * c) + 2 * de * c * d
    de2 = al * b * b + be * b * d + de * d * d
    out[i, 0] = be2
    out[i, 1] = al2 - de2
    out[i, 2] = al2 + de2


@njit(cache=True)
def _spin_point(x, ar, ai, br, bi, cr, ci, dr, di, out, i):
    """x . S(g) = coordinates of g^* H g (S(g)^T = S(g^*))."""
    # H = [[p, z], [conj z, q]]
    p = x[0] + x[3]
    q = x[0] - x[3]
    zr, zi = x[1], x[2]
    # (g^* H g)_{11} = p|a|^2 + q|c|^2 + 2 Re(conj(a) z c)
    h11 = p * (ar * ar + ai * ai) + q * (cr * cr + ci * ci) + 2 * (
        (ar * cr + ai * ci) * zr - (ar * ci - ai * cr) * zi)
    h22 = p * (br * br + bi * bi) + q * (dr * dr + di * di) + 2 * (
        (br * dr + bi * di) * zr - (br * di - bi * dr) * zi)
    # (g^* H g)_{12} = p conj(a) b + conj(a) z d + conj(c) conj(z) b + q conj(c) d
    ab_r = ar * br + ai * bi
    ab_i = ar * bi - ai * br
    ad_r = ar * dr + ai * di
    ad_i = ar * di - ai * dr
    cb_r = cr * br + ci * bi
    cb_i = cr * bi - ci * br
    cd_r = cr * dr + ci * di
    cd_i = cr * di - ci * dr
    out[i, 0] = 0.5 * (h11 + h22)
    out[i, 1] = p * ab_r + (ad_r * zr - ad_i * zi) + (cb_r * zr + cb_i * zi) + q * cd_r
    out[i, 2] = p * ab_i + (ad_r * zi + ad_i * zr) + (cb_i * zr - cb_r * zi) + q * cd_i
    out[i, 3] = 0.5 * (h11 - h22)


@njit(cache=True)
def _sym2_chunk(x, lin):
    out = np.empty((lin.shape[0], 3))
    for i in range(lin.shape[0]):
        _sym2_point(x[0], x[1], x[2], float(lin[i, 0]), float(lin[i, 1]), float(lin[i, 2]),
                    float(lin[i, 3]), out, i)
    return out


@njit(cache=True)
def _spin_chunk(x, lin):
    out = np.empty((lin.shape[0], 4))
    for i in range(lin.shape[0]):
        _spin_point(x, float(lin[i, 0]), float(lin[i, 1]), float(lin[i, 2]), float(lin[i, 3]),
                    float(lin[i, 4]), float(lin[i, 5]), float(lin[i, 6]), float(lin[i, 7]), out, i)
    return out


def solvable_act(spec: GroupSpec, x, n: int, v) -> np.ndarray:
    """x a^n + v computed exactly, rounded once at the end."""
    xf = [Fraction(float(c)) for c in np.asarray(x, dtype=float)]
    am = spec.generator_power(int(n))
    y = [xf[0] * am[0][0] + xf[1] * am[1][0], xf[0] * am[0][1] + xf[1] * am[1][1]]
    return np.array([float(y[0] + v[0]), float(y[1] + v[1])])


# ---------------------------------------------------------------- Lorentz helpers

def lorentz_boost(n: int, i: int, r: float) -> np.ndarray:
    """Boost mixing spatial axis i with the time axis (last) by rapidity r."""
    m = np.eye(n)
    m[i, i] = m[n - 1, n - 1] = math.cosh(r)
    m[i, n - 1] = m[n - 1, i] = math.sinh(r)
    return m


def _rotation_to(omega: np.ndarray, n: int) -> np.ndarray:
    """A rotation k of the spatial block with e1 k = omega (time axis fixed)."""
    d = n - 1
    om = omega / np.linalg.norm(omega)
    k = np.eye(n)
    if d == 2:
        c, s = om
        k[:2, :2] = [[c, s], [-s, c]]
        return k
    # Householder-free construction: complete omega to an orthonormal basis
    basis = [om]
    for e in np.eye(d):
        w = e - sum(np.dot(e, b) * b for b in basis)
        if np.linalg.norm(w) > 1e-8:
            basis.append(w / np.linalg.norm(w))
        if len(basis) == d:
            break
    R = np.array(basis)
    if np.linalg.det(R) < 0:
        R[-1] *= -1
    k[:d, :d] = R
    return k


# ---------------------------------------------------------------- test functions

class TestFunctionKind(str, Enum):
    BOX = "box"
    BUMP = "bump"
    RADIAL = "radial"


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported, bounded, non-negative function on a chart box.

    box     indicator of the closed box [lo, hi]
    bump    product of biweights (1 - s^2)^2 over the box
    radial  max(0, 1 - |u - c| / rho) with c the box centre and rho half the
            smallest side (a cone; continuous and piecewise analytic)
    """

    __test__ = False  # not a pytest class

    kind: TestFunctionKind
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", TestFunctionKind(self.kind))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"invalid support box {self.lo} .. {self.hi}")
        if self.scale < 0:
            raise ValueError("test functions must be non-negative")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (np.array(self.hi) - np.array(self.lo))

    def scaled(self, s: float) -> "TestFunction":
        return TestFunction(self.kind, self.lo, self.hi, self.scale * s, self.name)

    def shifted(self, delta) -> "TestFunction":
        d = np.asarray(delta, dtype=float)
        return TestFunction(self.kind, tuple(np.array(self.lo) + d), tuple(np.array(self.hi) + d),
                            self.scale, self.name)

    def __call__(self, coords) -> np.ndarray:
        u = np.asarray(coords, dtype=float)
        if u.ndim == 1:
            u = u[None, :]
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        inside = np.all((u >= lo) & (u <= hi), axis=-1)
        if self.kind is TestFunctionKind.BOX:
            return self.scale * inside.astype(float)
        s = (u - self.center) / self.halfwidth
        if self.kind is TestFunctionKind.BUMP:
            w = np.prod(np.clip(1.0 - s * s, 0.0, None) ** 2, axis=-1)
            return self.scale * np.where(inside, w, 0.0)
        rho = float(np.min(self.halfwidth))
        dist = np.sqrt(np.sum((u - self.center) ** 2, axis=-1))
        return self.scale * np.where(inside, np.clip(1.0 - dist / rho, 0.0, None), 0.0)

    def validate_for(self, model: SpaceModel) -> None:
        if len(self.lo) != model.chart_dim:
            raise SpaceDomainError(
                f"support box has {len(self.lo)} coordinates, {model.kind.value} needs {model.chart_dim}")
        for i in range(model.chart_dim):
            rlo, rhi = model.chart_range(i)
            if (rlo is not None and self.lo[i] < rlo - 1e-12) or (rhi is not None and self.hi[i] > rhi + 1e-12):
                raise SpaceDomainError(
                    f"support {self.lo}..{self.hi} leaves the chart of {model.kind.value}")
        if model.kind is ModelKind.PUNCTURED_PLANE:
            # distance from the origin to the box
            gap = np.linalg.norm(np.clip(0.0, self.lo, self.hi))
            if gap < SINGULARITY_MARGIN:
                raise SpaceDomainError(
                    f"support must keep distance {SINGULARITY_MARGIN} from the origin")

    def evaluate_points(self, model: SpaceModel, pts: np.ndarray) -> np.ndarray:
        """phi at model points (shape (n, point_dim)); exact zeros off support."""
        out = np.zeros(len(pts))
        mask = model.coarse_mask(pts, self.lo, self.hi)
        idx = np.nonzero(mask)[0]
        if len(idx):
            out[idx] = self(model.to_chart(pts[idx]))
        return out

    def integrate(self, model: SpaceModel, weight=None, nodes: int = 48) -> float:
        """Integral of phi * weight against xi over the support.

        Tensor Gauss-Legendre on the box, split at the centre so that the
        kinks of bump/radial profiles sit on panel edges.
        """
        dim = len(self.lo)
        x1, w1 = np.polynomial.legendre.leggauss(nodes)
        pts_1d = []
        wts_1d = []
        for i in range(dim):
            lo, hi, c = self.lo[i], self.hi[i], 0.5 * (self.lo[i] + self.hi[i])
            p, w = [], []
            for a, b in ((lo, c), (c, hi)):
                p.append(0.5 * (b - a) * x1 + 0.5 * (a + b))
                w.append(0.5 * (b - a) * w1)
            pts_1d.append(np.concatenate(p))
            wts_1d.append(np.concatenate(w))
        grids = np.meshgrid(*pts_1d, indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=-1)
        wts = np.ones(len(coords))
        for i, g in enumerate(np.meshgrid(*wts_1d, indexing="ij")):
            wts = wts * g.ravel()
        vals = self(coords) * model.chart_density(coords)
        if weight is not None:
            vals = vals * weight(coords)
        return float(np.sum(vals * wts))


def box_function(lo, hi, name="") -> TestFunction:
    return TestFunction(TestFunctionKind.BOX, tuple(lo), tuple(hi), 1.0, name)


def bump_function(lo, hi, name="") -> TestFunction:
    return TestFunction(TestFunctionKind.BUMP, tuple(lo), tuple(hi), 1.0, name)


def radial_function(lo, hi, name="") -> TestFunction:
    return TestFunction(TestFunctionKind.RADIAL, tuple(lo), tuple(hi), 1.0, name)
