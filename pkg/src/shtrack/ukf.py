"""Unscented Kalman filter with additive Gaussian noise.

Beliefs are immutable values: :func:`predict` and :func:`update` return new
:class:`GaussianBelief` objects and never modify their inputs.  Models may be
given row-wise (``fn(x) -> y``) or vectorized over a stack of sigma points
(``fn(X) -> Y`` with one point per row, pass ``vectorized=True``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

__all__ = [
    "UkfParams",
    "GaussianBelief",
    "SigmaPointSet",
    "FilterError",
    "SingularInnovationError",
    "matrix_sqrt",
    "sigma_points",
    "predict",
    "update",
]

log = logging.getLogger(__name__)

JITTER_STEPS = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class FilterError(RuntimeError):
    pass


class SingularInnovationError(FilterError):
    """Innovation covariance could not be factorized; no update was applied."""


@dataclass(frozen=True)
class UkfParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    def lam(self, n: int) -> float:
        lam = self.alpha**2 * (n + self.kappa) - n
        if n + lam <= 0:
            raise ValueError(f"n + lambda = {n + lam} must be positive")
        return lam

    def weights(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        lam = self.lam(n)
        wm = np.full(2 * n + 1, 0.5 / (n + lam))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + 1.0 - self.alpha**2 + self.beta
        return wm, wc


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianBelief":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["covariance"], dtype=float))


@dataclass(frozen=True, eq=False)
class SigmaPointSet:
    points: np.ndarray
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    def mean(self) -> np.ndarray:
        return self.mean_weights @ self.points

    def covariance(self) -> np.ndarray:
        d = self.points - self.mean()
        return (d * self.cov_weights[:, None]).T @ d


def matrix_sqrt(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding escalating diagonal jitter if needed."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    n = cov.shape[0]
    scale = max(float(np.trace(cov)) / n, np.finfo(float).tiny)
    for eps in JITTER_STEPS:
        try:
            factor = np.linalg.cholesky(cov + eps * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        log.debug("covariance repaired with jitter %.1e * trace/n", eps)
        return factor
    raise FilterError("covariance is not positive semi-definite (Cholesky failed after jitter)")


def sigma_points(belief: GaussianBelief, params: UkfParams = UkfParams()) -> SigmaPointSet:
    n = belief.dim
    wm, wc = params.weights(n)
    offsets = np.sqrt(n + params.lam(n)) * matrix_sqrt(belief.covariance).T
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1:n + 1] = belief.mean + offsets
    points[n + 1:] = belief.mean - offsets
    return SigmaPointSet(points, wm, wc)


def _propagate(fn: Callable, points: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        out = np.asarray(fn(points), dtype=float)
    else:
        out = np.array([np.asarray(fn(p), dtype=float).reshape(-1) for p in points])
    if out.ndim != 2 or out.shape[0] != points.shape[0]:
        raise FilterError(f"model returned shape {out.shape} for {points.shape[0]} sigma points")
    if not np.all(np.isfinite(out)):
        raise FilterError("model produced non-finite values")
    return out


def predict(
    belief: GaussianBelief,
    system_fn: Callable,
    process_noise: np.ndarray,
    params: UkfParams = UkfParams(),
    vectorized: bool = False,
) -> GaussianBelief:
    """Time update: propagate sigma points through ``system_fn`` and add Q."""
    sp = sigma_points(belief, params)
    prop = _propagate(system_fn, sp.points, vectorized)
    mean = sp.mean_weights @ prop
    d = prop - mean
    cov = (d * sp.cov_weights[:, None]).T @ d + np.asarray(process_noise, dtype=float)
    return GaussianBelief(mean, cov)


def update(
    belief: GaussianBelief,
    meas_fn: Callable,
    y,
    meas_noise: np.ndarray,
    params: UkfParams = UkfParams(),
    vectorized: bool = False,
) -> GaussianBelief:
    """Measurement update with additive noise covariance R."""
    sp = sigma_points(belief, params)
    pred = _propagate(meas_fn, sp.points, vectorized)
    y = np.asarray(y, dtype=float).reshape(-1)
    if pred.shape[1] != y.size:
        raise FilterError(f"measurement function returned size {pred.shape[1]}, measurement has {y.size}")
    y_hat = sp.mean_weights @ pred
    dy = pred - y_hat
    dx = sp.points - belief.mean
    wdy = dy * sp.cov_weights[:, None]
    S = wdy.T @ dy + np.asarray(meas_noise, dtype=float)
    Pxy = dx.T @ wdy
    try:
        cs = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError:
        raise SingularInnovationError("innovation covariance is not positive definite") from None
    gain = cho_solve((cs, True), Pxy.T).T
    mean = belief.mean + gain @ (y - y_hat)
    cov = belief.covariance - gain @ S @ gain.T
    return GaussianBelief(mean, cov)
