"""Real spherical harmonics: evaluation, quadrature projection and rotation.

Conventions
-----------
Directions are given by colatitude ``theta`` in [0, pi] and azimuth ``phi`` in
[0, 2 pi) with ``x = r sin(theta) cos(phi)``, ``y = r sin(theta) sin(phi)``,
``z = r cos(theta)``.

The associated Legendre functions carry no Condon-Shortley phase; the factor
``(-1)**m`` appears in the complex harmonics only.  Real harmonics are

    S_l^m = N_l^|m| P_l^|m|(cos theta) * sqrt(2) cos(m phi)     m > 0
    S_l^0 = N_l^0 P_l^0(cos theta)
    S_l^m = N_l^|m| P_l^|m|(cos theta) * sqrt(2) sin(|m| phi)   m < 0

and are orthonormal on the unit sphere.  Coefficients of a series truncated at
degree ``L`` are stored flat, ``(l, m)`` at index ``l*l + l + m``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "SphericalDirection",
    "ShCoefficients",
    "Rotation3",
    "DegreeBlockRotation",
    "sh_index",
    "sh_degree_order",
    "num_coefficients",
    "assoc_legendre",
    "norm_constant",
    "real_basis",
    "complex_basis",
    "real_basis_matrix",
    "eval_series",
    "sphere_quadrature",
    "fit_coefficients",
    "rotation_operator",
    "rotate_coefficients",
]

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
Y00 = 1.0 / math.sqrt(4.0 * math.pi)


class SphericalDirection(NamedTuple):
    """A unit direction as (colatitude, azimuth)."""

    theta: float
    phi: float

    @classmethod
    def normalized(cls, theta: float, phi: float) -> "SphericalDirection":
        theta = float(theta)
        if not 0.0 <= theta <= math.pi:
            raise ValueError(f"theta={theta} outside [0, pi]")
        phi = float(phi) % TWO_PI
        if phi == TWO_PI:  # -tiny % 2pi rounds up
            phi = 0.0
        return cls(theta, phi)


def num_coefficients(degree: int) -> int:
    return (degree + 1) ** 2


def sh_index(l: int, m: int) -> int:
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid (l, m) = ({l}, {m})")
    return l * l + l + m


def sh_degree_order(index: int) -> tuple[int, int]:
    """Inverse of :func:`sh_index`."""
    if index < 0:
        raise ValueError("index must be non-negative")
    l = math.isqrt(index)
    return l, index - l * l - l


def _degree_from_length(n: int) -> int:
    degree = math.isqrt(n) - 1
    if n == 0 or (degree + 1) ** 2 != n:
        raise ValueError(f"{n} is not a valid coefficient count (L+1)^2")
    return degree


@dataclass(frozen=True)
class ShCoefficients:
    """Weights of a real spherical-harmonics series up to ``degree``."""

    degree: int
    weights: np.ndarray

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size != num_coefficients(self.degree):
            raise ValueError(
                f"degree {self.degree} needs {num_coefficients(self.degree)} weights, got {w.size}"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, degree: int) -> "ShCoefficients":
        return cls(degree, np.zeros(num_coefficients(degree)))

    @classmethod
    def sphere(cls, radius: float, degree: int = 0) -> "ShCoefficients":
        w = np.zeros(num_coefficients(degree))
        w[0] = radius / Y00
        return cls(degree, w)

    @classmethod
    def from_vector(cls, weights: Sequence[float]) -> "ShCoefficients":
        weights = np.asarray(weights, dtype=float).reshape(-1)
        return cls(_degree_from_length(weights.size), weights)

    def __getitem__(self, lm: tuple[int, int]) -> float:
        return float(self.weights[sh_index(*lm)])

    def with_degree(self, degree: int) -> "ShCoefficients":
        """Truncate or zero-pad to another degree."""
        w = np.zeros(num_coefficients(degree))
        n = min(w.size, self.weights.size)
        w[:n] = self.weights[:n]
        return ShCoefficients(degree, w)

    def degree_norms(self) -> np.ndarray:
        return np.array(
            [np.linalg.norm(self.weights[l * l:(l + 1) ** 2]) for l in range(self.degree + 1)]
        )

    def to_dict(self) -> dict:
        return {"degree": self.degree, "weights": [float(v) for v in self.weights]}

    @classmethod
    def from_dict(cls, data: dict) -> "ShCoefficients":
        return cls(int(data["degree"]), np.asarray(data["weights"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ShCoefficients":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Legendre functions and basis


def assoc_legendre(l: int, m: int, x: float) -> float:
    """Associated Legendre function P_l^m(x), without Condon-Shortley phase.

    Uses the upward recurrence in ``l`` starting from
    ``P_m^m = (2m-1)!! (1-x^2)^(m/2)``.
    """
    if m < 0 or m > l:
        raise ValueError(f"need 0 <= m <= l, got l={l}, m={m}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [-1, 1]")
    s = math.sqrt((1.0 - x) * (1.0 + x))
    pmm = 1.0
    for k in range(1, m + 1):
        pmm *= (2 * k - 1) * s
    if l == m:
        return pmm
    pm1 = x * (2 * m + 1) * pmm
    for ll in range(m + 2, l + 1):
        pmm, pm1 = pm1, (x * (2 * ll - 1) * pm1 - (ll + m - 1) * pmm) / (ll - m)
    return pm1


def norm_constant(l: int, m: int) -> float:
    """N_l^m = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!)."""
    if abs(m) > l:
        raise ValueError(f"|m| > l for l={l}, m={m}")
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))


def real_basis(l: int, m: int, theta: float, phi: float) -> float:
    """Real spherical harmonic S_l^m at a single direction."""
    if abs(m) > l:
        raise ValueError(f"|m| > l for l={l}, m={m}")
    am = abs(m)
    radial = norm_constant(l, am) * assoc_legendre(l, am, math.cos(theta))
    if m > 0:
        return radial * SQRT2 * math.cos(m * phi)
    if m < 0:
        return radial * SQRT2 * math.sin(am * phi)
    return radial


def complex_basis(l: int, m: int, theta: float, phi: float) -> complex:
    """Complex spherical harmonic Y_l^m = (-1)^m N_l^m P_l^m(cos theta) e^{i m phi}.

    Negative orders follow ``Y_l^{-m} = (-1)^m conj(Y_l^m)``.
    """
    if abs(m) > l:
        raise ValueError(f"|m| > l for l={l}, m={m}")
    if m < 0:
        return (-1) ** m * complex_basis(l, -m, theta, phi).conjugate()
    value = (-1) ** m * norm_constant(l, m) * assoc_legendre(l, m, math.cos(theta))
    return value * complex(math.cos(m * phi), math.sin(m * phi))


@lru_cache(maxsize=None)
def _recurrence_coefficients(degree: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.zeros((degree + 1, degree + 1))
    b = np.zeros((degree + 1, degree + 1))
    for m in range(degree + 1):
        for l in range(m + 2, degree + 1):
            a[l, m] = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b[l, m] = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
    return a, b


def _normalized_legendre(x: np.ndarray, s: np.ndarray, degree: int):
    """Yield ``(l, m, N_l^m P_l^m(x))`` for 0 <= m <= l <= degree, m-major.

    The recurrence runs on the normalized values directly, which stay
    bounded for large degrees.
    """
    a, b = _recurrence_coefficients(degree)
    pmm = np.full(x.shape, Y00)
    for m in range(degree + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        yield m, m, pmm
        if m == degree:
            break
        p_prev2, p_prev = pmm, math.sqrt(2 * m + 3) * x * pmm
        yield m + 1, m, p_prev
        for l in range(m + 2, degree + 1):
            p = a[l, m] * (x * p_prev - b[l, m] * p_prev2)
            yield l, m, p
            p_prev2, p_prev = p_prev, p


def _flat_inputs(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shape = np.broadcast_shapes(theta.shape, phi.shape)
    x = np.broadcast_to(np.cos(theta), shape).reshape(-1)
    s = np.broadcast_to(np.sin(theta), shape).reshape(-1)
    ph = np.broadcast_to(phi, shape).reshape(-1)
    return shape, x, s, ph


def real_basis_matrix(theta, phi, degree: int) -> np.ndarray:
    """All real harmonics up to ``degree`` at many directions.

    Returns an array of shape ``theta.shape + ((degree+1)**2,)``.
    """
    shape, x, s, ph = _flat_inputs(theta, phi)
    out = np.empty((x.size, num_coefficients(degree)))
    trig_m = -1
    for l, m, p in _normalized_legendre(x, s, degree):
        if m == 0:
            out[:, l * l + l] = p
            continue
        if m != trig_m:
            cos_m, sin_m = SQRT2 * np.cos(m * ph), SQRT2 * np.sin(m * ph)
            trig_m = m
        out[:, l * l + l + m] = p * cos_m
        out[:, l * l + l - m] = p * sin_m
    return out.reshape(shape + (out.shape[-1],))


def eval_series(coeffs: ShCoefficients, theta, phi):
    """Radial function sum_l sum_m w_l^m S_l^m(theta, phi).

    Accepts scalars or arrays; returns a float for scalar input.  Sums are
    accumulated per order, so no basis matrix is formed.
    """
    shape, x, s, ph = _flat_inputs(theta, phi)
    w = coeffs.weights
    total = np.zeros(x.size)
    acc_c = np.zeros(x.size)
    acc_s = np.zeros(x.size)
    current = 0
    for l, m, p in _normalized_legendre(x, s, coeffs.degree):
        if m != current:
            if current > 0:
                total += SQRT2 * (acc_c * np.cos(current * ph) + acc_s * np.sin(current * ph))
            acc_c[:] = 0.0
            acc_s[:] = 0.0
            current = m
        if m == 0:
            total += w[l * l + l] * p
        else:
            acc_c += w[l * l + l + m] * p
            acc_s += w[l * l + l - m] * p
    if current > 0:
        total += SQRT2 * (acc_c * np.cos(current * ph) + acc_s * np.sin(current * ph))
    if not shape:
        return float(total[0])
    return total.reshape(shape)


# --------------------------------------------------------------------------
# Quadrature and projection


@lru_cache(maxsize=64)
def sphere_quadrature(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Product rule integrating spherical polynomials up to degree ``order`` exactly.

    Gauss-Legendre in cos(theta) times the trapezoid rule in phi.  Returns
    flat ``(theta, phi, weights)`` arrays; the weights sum to 4 pi.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    n_theta = order // 2 + 1
    n_phi = order + 1
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    theta = np.arccos(x)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ww = np.repeat(wx * (TWO_PI / n_phi), n_phi)
    for arr in (tt, pp, ww):
        arr.setflags(write=False)
    return tt.reshape(-1), pp.reshape(-1), ww


RadialFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def fit_coefficients(radial: RadialFunction, degree: int, order: int | None = None) -> ShCoefficients:
    """Project a radial function onto the harmonics up to ``degree``.

    ``radial`` is called once with flat arrays ``(theta, phi)``.  The default
    quadrature order is generous so that non-smooth inputs (boxes) are
    projected accurately; band-limited inputs are recovered exactly whenever
    ``order >= 2 * degree + 1``.
    """
    if order is None:
        order = max(2 * degree + 1, 96)
    if order < 2 * degree + 1:
        raise ValueError(f"quadrature order {order} too low for degree {degree} (need >= {2 * degree + 1})")
    theta, phi, w = sphere_quadrature(order)
    values = np.asarray(radial(theta, phi), dtype=float)
    basis = real_basis_matrix(theta, phi, degree)
    return ShCoefficients(degree, basis.T @ (w * values))


# --------------------------------------------------------------------------
# Rotations


@dataclass(frozen=True)
class Rotation3:
    """A proper rotation of 3-space stored as a 3x3 matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        R = np.array(self.matrix, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-12) or abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise ValueError("matrix is not a proper rotation")
        R.setflags(write=False)
        object.__setattr__(self, "matrix", R)

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls(np.eye(3))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation3":
        k = np.asarray(axis, dtype=float)
        nk = np.linalg.norm(k)
        if nk == 0.0:
            raise ValueError("rotation axis must be non-zero")
        k = k / nk
        K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
        R = np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)
        # re-orthogonalize to keep the 1e-12 contract for any angle
        u, _, vt = np.linalg.svd(R)
        return cls(u @ vt)

    def inverse(self) -> "Rotation3":
        return Rotation3(self.matrix.T)

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.matrix.T

    def __matmul__(self, other: "Rotation3") -> "Rotation3":
        return Rotation3(self.matrix @ other.matrix)


@dataclass(frozen=True)
class DegreeBlockRotation:
    """Block-diagonal action of a rotation on coefficient vectors."""

    degree: int
    blocks: tuple[np.ndarray, ...]

    def matrix(self) -> np.ndarray:
        n = num_coefficients(self.degree)
        out = np.zeros((n, n))
        for l, block in enumerate(self.blocks):
            out[l * l:(l + 1) ** 2, l * l:(l + 1) ** 2] = block
        return out


def _directions_to_unit(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def _unit_to_directions(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(u[..., 1], u[..., 0]), TWO_PI)
    return theta, phi


def rotation_operator(rot: Rotation3, degree: int) -> DegreeBlockRotation:
    """Per-degree matrices mapping coefficients of f to those of f(R^-1 .).

    Entry ``(m', m)`` of block ``l`` is the integral of
    ``S_l^m'(u) S_l^m(R^-1 u)`` over the sphere, computed with a product
    quadrature that is exact for degree ``2 * degree + 2``.
    """
    theta, phi, w = sphere_quadrature(2 * degree + 2)
    u = _directions_to_unit(theta, phi)
    t_rot, p_rot = _unit_to_directions(rot.inverse().apply(u))
    basis = real_basis_matrix(theta, phi, degree)
    basis_rot = real_basis_matrix(t_rot, p_rot, degree)
    blocks = []
    for l in range(degree + 1):
        sl = slice(l * l, (l + 1) ** 2)
        block = (basis[:, sl] * w[:, None]).T @ basis_rot[:, sl]
        block.setflags(write=False)
        blocks.append(block)
    return DegreeBlockRotation(degree, tuple(blocks))


def rotate_coefficients(coeffs: ShCoefficients, op: DegreeBlockRotation) -> ShCoefficients:
    if coeffs.degree != op.degree:
        raise ValueError(f"degree mismatch: coefficients {coeffs.degree}, operator {op.degree}")
    out = np.empty_like(coeffs.weights)
    for l, block in enumerate(op.blocks):
        sl = slice(l * l, (l + 1) ** 2)
        out[sl] = block @ coeffs.weights[sl]
    return ShCoefficients(coeffs.degree, out)
