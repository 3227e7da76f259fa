"""Height functions t = log P on matrix spaces and closed-ball predicates.

Three gauge kinds are supported:

* ``frobenius``: P(m) = sqrt(sum |m_ij|^2), a norm (degree 1).
* ``polynomial``: P(m) = sum m_ij^deg for an even degree, homogeneous of that degree.
* ``block``: the Frobenius norm of the affine embedding
  ``[[h, 0], [v, 1]]`` of a pair (h, v) into one-larger matrices.

Heights are natural logarithms. Float comparisons use an absolute tolerance
``HEIGHT_TOL``; integer matrices are decided exactly through
:func:`frobenius_threshold`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import mpmath
import numpy as np

HEIGHT_TOL = 1e-12

# sums of squares must stay below this so doubling them cannot overflow int64
INT_BUDGET = 2**62


class GaugeKind(str, Enum):
    FROBENIUS = "frobenius"
    POLYNOMIAL = "polynomial"
    BLOCK = "block"


class GaugeDomainError(ValueError):
    """Raised for inputs on which a height is undefined (e.g. the zero matrix)."""


@dataclass(frozen=True)
class GaugeFunction:
    kind: GaugeKind = GaugeKind.FROBENIUS
    degree: int = 1
    ambient_dim: int = 2

    def __post_init__(self):
        kind = GaugeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        if kind is GaugeKind.POLYNOMIAL:
            if self.degree < 2 or self.degree % 2:
                raise ValueError("polynomial gauge needs an even degree >= 2")
        elif self.degree != 1:
            raise ValueError(f"{kind.value} gauge is a norm; degree must be 1")

    def __call__(self, m) -> float:
        return gauge_value(self, m)


FROBENIUS2 = GaugeFunction(GaugeKind.FROBENIUS, 1, 2)


def frobenius(dim: int = 2) -> GaugeFunction:
    return GaugeFunction(GaugeKind.FROBENIUS, 1, dim)


def block(dim: int = 2) -> GaugeFunction:
    """Gauge of affine pairs (h, v), h of size dim, embedded in dim+1."""
    return GaugeFunction(GaugeKind.BLOCK, 1, dim + 1)


def affine_embed(h, v) -> np.ndarray:
    """Row-vector embedding (h, v) -> [[h, 0], [v, 1]]."""
    h = np.asarray(h)
    v = np.asarray(v)
    d = h.shape[0]
    dtype = np.result_type(h, v, np.int64)
    out = np.zeros((d + 1, d + 1), dtype=dtype)
    out[:d, :d] = h
    out[d, :d] = v
    out[d, d] = 1
    return out


def _as_matrix(gauge: GaugeFunction, m) -> np.ndarray:
    if gauge.kind is GaugeKind.BLOCK and isinstance(m, tuple) and len(m) == 2:
        m = affine_embed(*m)
    arr = np.asarray(m)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise GaugeDomainError(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] != gauge.ambient_dim:
        raise GaugeDomainError(
            f"matrix of size {arr.shape[0]} does not match gauge dimension {gauge.ambient_dim}"
        )
    if not np.all(np.isfinite(arr.astype(complex))):
        raise GaugeDomainError("matrix entries must be finite")
    return arr


def squared_modulus_sum(m) -> float | int:
    """sum |m_ij|^2, exact (Python int) for integer input."""
    arr = np.asarray(m)
    if arr.dtype.kind in "iu":
        return sum(int(x) * int(x) for x in arr.ravel())
    if arr.dtype.kind == "O":
        return sum(abs(x) ** 2 for x in arr.ravel())
    return float(np.sum(np.abs(arr) ** 2))


def gauge_value(gauge: GaugeFunction, m) -> float:
    """P(m) as a float."""
    arr = _as_matrix(gauge, m)
    if gauge.kind is GaugeKind.POLYNOMIAL:
        # |z|^deg keeps complex entries real and non-negative
        return float(np.sum(np.abs(arr.astype(complex)) ** gauge.degree))
    return math.sqrt(squared_modulus_sum(arr))


def height(gauge: GaugeFunction, m) -> float:
    """t = log P(m). The zero matrix has no height."""
    arr = _as_matrix(gauge, m)
    if gauge.kind is GaugeKind.POLYNOMIAL:
        p = float(np.sum(np.abs(arr.astype(complex)) ** gauge.degree))
        if p == 0.0:
            raise GaugeDomainError("height of the zero matrix is undefined")
        return math.log(p)
    s = squared_modulus_sum(arr)
    if s == 0:
        raise GaugeDomainError("height of the zero matrix is undefined")
    # math.log accepts arbitrarily large ints exactly rounded
    return 0.5 * math.log(s)


def frobenius_threshold(t: float) -> int:
    """Largest integer S with (1/2) log S <= t + HEIGHT_TOL.

    Integer matrices lie in the closed Frobenius ball of height t exactly
    when their sum of squared moduli is at most this value.
    """
    if not math.isfinite(t):
        raise GaugeDomainError("t must be finite")
    with mpmath.workdps(60):
        return int(mpmath.floor(mpmath.exp(2 * (mpmath.mpf(t) + HEIGHT_TOL))))


def in_ball(gauge: GaugeFunction, m, t: float) -> bool:
    """Closed-ball membership log P(m) <= t.

    Integer input under a norm gauge is decided exactly via
    :func:`frobenius_threshold`; everything else with tolerance HEIGHT_TOL.
    """
    arr = _as_matrix(gauge, m)
    if gauge.kind is not GaugeKind.POLYNOMIAL and arr.dtype.kind in "iuO":
        s = squared_modulus_sum(arr)
        if s == 0:
            raise GaugeDomainError("height of the zero matrix is undefined")
        if isinstance(s, int):
            return s <= frobenius_threshold(t)
    return height(gauge, arr) <= t + HEIGHT_TOL


def batch_heights(gauge: GaugeFunction, ms: np.ndarray) -> np.ndarray:
    """Vectorised heights for a stack of matrices with shape (n, d, d)."""
    ms = np.asarray(ms)
    if gauge.kind is GaugeKind.POLYNOMIAL:
        p = np.sum(np.abs(ms) ** gauge.degree, axis=(-2, -1))
        return np.log(p)
    return 0.5 * np.log(np.sum(np.abs(ms) ** 2, axis=(-2, -1)))
