"""Joint position and shape estimation of a star-convex extended object.

The state is ``[p1, p2, p3, w_0^0, w_1^-1, w_1^0, w_1^1, ...]``: the star
point followed by the spherical-harmonics weights in flat ``l*l + l + m``
order.  Each measured surface point is associated greedily with the surface
point on the ray from the star point through the measurement.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import ukf
from .geometry import ShShape
from .sh import (
    Rotation3,
    ShCoefficients,
    num_coefficients,
    real_basis_matrix,
    rotation_operator,
    sh_degree_order,
)

__all__ = [
    "TrackState",
    "RotationInput",
    "TrackerConfig",
    "state_layout",
    "system_random_walk",
    "system_rotation",
    "gam_measurement_fn",
    "initialize_belief",
    "process_frame",
    "belief_to_json",
    "belief_from_json",
]

log = logging.getLogger(__name__)

DEGENERATE_RANGE = 1e-9
# static shapes settle within ~20 frames of 60 points at these levels
DEFAULT_COEFF_STD = 0.002
DEFAULT_COEFF_STD_MOTION = 0.002


@dataclass(frozen=True, eq=False)
class TrackState:
    position: np.ndarray
    coeffs: ShCoefficients

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.position, dtype=float), self.coeffs.weights])

    @classmethod
    def from_vector(cls, x, degree: int | None = None) -> "TrackState":
        x = np.asarray(x, dtype=float).reshape(-1)
        coeffs = ShCoefficients.from_vector(x[3:])
        if degree is not None and coeffs.degree != degree:
            raise ValueError(f"state vector holds degree {coeffs.degree}, expected {degree}")
        return cls(x[:3].copy(), coeffs)

    def shape(self) -> ShShape:
        return ShShape(self.coeffs, self.position)


def state_layout(degree: int) -> list[str]:
    names = ["p1", "p2", "p3"]
    for i in range(num_coefficients(degree)):
        l, m = sh_degree_order(i)
        names.append(f"w_{l}^{m}")
    return names


@dataclass(frozen=True)
class RotationInput:
    """Known rotation of the object per time step about an axis through its star point."""

    axis: tuple[float, float, float]
    rate: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if axis.shape != (3,) or norm == 0:
            raise ValueError("rotation axis must be a non-zero 3-vector")
        object.__setattr__(self, "axis", tuple(float(v) for v in axis / norm))
        object.__setattr__(self, "rate", float(self.rate))

    def rotation(self, steps: float = 1.0) -> Rotation3:
        return Rotation3.from_axis_angle(self.axis, self.rate * steps)


@dataclass(frozen=True)
class TrackerConfig:
    """Filter settings.  Standard deviations are per time step where applicable.

    ``coefficient_process_std`` of ``None`` selects ``DEFAULT_COEFF_STD`` for
    the random-walk model and ``DEFAULT_COEFF_STD_MOTION`` when a known
    rotation drives the prediction.
    """

    degree: int = 8
    measurement_std: float = 0.1
    position_process_std: float = 0.005
    coefficient_process_std: float | None = None
    initial_radius: float = 1.0
    initial_position_std: float = 0.2
    initial_coefficient_std: float = 0.3
    ukf: ukf.UkfParams = field(default_factory=ukf.UkfParams)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        stds = [self.measurement_std, self.position_process_std, self.initial_radius,
                self.initial_position_std, self.initial_coefficient_std]
        if self.coefficient_process_std is not None:
            stds.append(self.coefficient_process_std)
        if min(stds) <= 0:
            raise ValueError("standard deviations and the initial radius must be positive")

    @property
    def dim(self) -> int:
        return 3 + num_coefficients(self.degree)

    def coefficient_std(self, motion: RotationInput | None) -> float:
        if self.coefficient_process_std is not None:
            return self.coefficient_process_std
        return DEFAULT_COEFF_STD_MOTION if motion is not None else DEFAULT_COEFF_STD

    def process_noise(self, motion: RotationInput | None = None) -> np.ndarray:
        var = np.full(self.dim, self.coefficient_std(motion) ** 2)
        var[:3] = self.position_process_std**2
        return np.diag(var)

    def measurement_noise(self) -> np.ndarray:
        return self.measurement_std**2 * np.eye(3)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrackerConfig":
        data = dict(data)
        if "ukf" in data and isinstance(data["ukf"], dict):
            data["ukf"] = ukf.UkfParams(**data["ukf"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown tracker settings: {sorted(unknown)}")
        return cls(**data)


# ----------------------------------------------------------------- models


def system_random_walk(x: np.ndarray) -> np.ndarray:
    return x


@lru_cache(maxsize=32)
def _rotation_matrix(axis: tuple, angle: float, degree: int) -> np.ndarray:
    m = rotation_operator(Rotation3.from_axis_angle(axis, angle), degree).matrix()
    m.setflags(write=False)
    return m


def system_rotation(x: np.ndarray, motion: RotationInput) -> np.ndarray:
    """Rotate the shape coefficients by one step of ``motion``; the position is kept.

    Works on a single state vector or a stack with one state per row.
    """
    x = np.asarray(x, dtype=float)
    degree = math.isqrt(x.shape[-1] - 3) - 1
    if motion.rate == 0.0:
        return x.copy()
    op = _rotation_matrix(motion.axis, motion.rate, degree)
    out = x.copy()
    out[..., 3:] = x[..., 3:] @ op.T
    return out


def gam_measurement_fn(x: np.ndarray, y) -> np.ndarray:
    """Predicted measurement: the surface point on the ray from the star point through ``y``.

    ``x`` may be one state vector or a stack of states (one per row); the
    ray direction is recomputed from each state's own position.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    degree = math.isqrt(X.shape[1] - 3) - 1
    p = X[:, :3]
    z = np.asarray(y, dtype=float) - p
    dist = np.linalg.norm(z, axis=1)
    ok = dist > DEGENERATE_RANGE
    unit = np.zeros_like(z)
    unit[ok] = z[ok] / dist[ok, None]
    rho = np.hypot(unit[:, 0], unit[:, 1])
    theta = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
    phi = np.where(rho > 0, np.arctan2(unit[:, 1], unit[:, 0]), 0.0)
    basis = real_basis_matrix(theta, phi, degree)
    radius = np.einsum("ij,ij->i", basis, X[:, 3:])
    out = p + unit * radius[:, None]
    return out[0] if single else out


# --------------------------------------------------------------- pipeline


def initialize_belief(points, config: TrackerConfig) -> ukf.GaussianBelief:
    """Sphere of the configured radius centred on the centroid of the first frame."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot initialize from an empty frame")
    coeffs = ShCoefficients.sphere(config.initial_radius, config.degree)
    mean = np.concatenate([pts.mean(axis=0), coeffs.weights])
    var = np.full(config.dim, config.initial_coefficient_std**2)
    var[:3] = config.initial_position_std**2
    return ukf.GaussianBelief(mean, np.diag(var))


def process_frame(
    belief: ukf.GaussianBelief,
    points,
    config: TrackerConfig,
    motion: RotationInput | None = None,
) -> tuple[ukf.GaussianBelief, int]:
    """One prediction followed by a sequential update per measured point.

    Returns the new belief and the number of skipped measurements
    (non-finite, or coinciding with the current star point).
    """
    if belief.dim != config.dim:
        raise ValueError(f"belief has dimension {belief.dim}, config expects {config.dim}")
    if motion is None:
        belief = ukf.predict(belief, system_random_walk, config.process_noise(None), config.ukf, vectorized=True)
    else:
        belief = ukf.predict(
            belief, lambda X: system_rotation(X, motion), config.process_noise(motion), config.ukf, vectorized=True
        )
    R = config.measurement_noise()
    skipped = 0
    for y in np.asarray(points, dtype=float).reshape(-1, 3):
        if not np.all(np.isfinite(y)) or np.linalg.norm(y - belief.mean[:3]) < DEGENERATE_RANGE:
            skipped += 1
            continue
        belief = ukf.update(belief, lambda X, y=y: gam_measurement_fn(X, y), y, R, config.ukf, vectorized=True)
    if skipped:
        log.debug("skipped %d measurements", skipped)
    return belief, skipped


def belief_to_json(belief: ukf.GaussianBelief, degree: int) -> str:
    data = {"degree": degree, "layout": state_layout(degree)}
    data.update(belief.to_dict())
    return json.dumps(data)


def belief_from_json(text: str) -> tuple[ukf.GaussianBelief, int]:
    data = json.loads(text)
    belief = ukf.GaussianBelief.from_dict(data)
    degree = int(data["degree"])
    if belief.dim != 3 + num_coefficients(degree):
        raise ValueError("belief dimension does not match its degree")
    return belief, degree
