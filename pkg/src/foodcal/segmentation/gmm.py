"""Weighted full-covariance color mixtures for foreground/background modeling.

Fitting is the hard-assignment scheme used by box-initialized segmentation:
seeded k-means for the initial partition, then alternating reassignment and
per-component re-estimation. Covariances are regularized by adding a small
multiple of the data's mean channel variance to the diagonal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_COV_REG_SCALE = 1e-3
_COV_REG_FLOOR = 1e-3
_DENSITY_FLOOR = 1e-300


@dataclass
class GmmModel:
    """K weighted 3-D Gaussians over RGB; weights sum to one."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 3)
    covs: np.ndarray  # (K, 3, 3)
    _inv_covs: np.ndarray = field(init=False, repr=False)
    _log_norm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise ValueError(f"component weights sum to {self.weights.sum()}, not 1")
        self._inv_covs = np.linalg.inv(self.covs)
        sign, logdet = np.linalg.slogdet(self.covs)
        if np.any(sign <= 0):
            raise ValueError("covariance not positive-definite after regularization")
        self._log_norm = -0.5 * (3 * np.log(2 * np.pi) + logdet)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def component_log_densities(self, pixels: np.ndarray) -> np.ndarray:
        """log of weighted per-component densities, shape (N, K)."""
        x = np.asarray(pixels, dtype=np.float64)
        out = np.empty((x.shape[0], self.n_components))
        for k in range(self.n_components):
            d = x - self.means[k]
            maha = np.einsum("ij,ij->i", d @ self._inv_covs[k], d)
            out[:, k] = np.log(self.weights[k]) + self._log_norm[k] - 0.5 * maha
        return out

    def density(self, pixels: np.ndarray) -> np.ndarray:
        """Mixture density per pixel, floored away from zero."""
        logs = self.component_log_densities(pixels)
        peak = logs.max(axis=1, keepdims=True)
        dens = np.exp(peak[:, 0]) * np.exp(logs - peak).sum(axis=1)
        return np.maximum(dens, _DENSITY_FLOOR)

    def assign(self, pixels: np.ndarray) -> np.ndarray:
        return np.argmax(self.component_log_densities(pixels), axis=1)

    def log_likelihood(self, pixels: np.ndarray, assignments: np.ndarray) -> float:
        logs = self.component_log_densities(pixels)
        return float(logs[np.arange(len(assignments)), assignments].sum())


def _regularization(pixels: np.ndarray) -> float:
    mean_var = float(np.mean(np.var(pixels, axis=0)))
    eps = _COV_REG_SCALE * mean_var
    return eps if eps > 0 else _COV_REG_FLOOR


def _estimate(pixels: np.ndarray, assignments: np.ndarray, k: int, eps: float) -> GmmModel:
    """Components from a hard partition; empty components are dropped."""
    weights, means, covs = [], [], []
    for c in range(k):
        members = pixels[assignments == c]
        if members.shape[0] == 0:
            continue
        weights.append(members.shape[0] / pixels.shape[0])
        means.append(members.mean(axis=0))
        if members.shape[0] > 1:
            cov = np.cov(members, rowvar=False, bias=True)
        else:
            cov = np.zeros((3, 3))
        covs.append(cov + eps * np.eye(3))
    return GmmModel(
        weights=np.asarray(weights),
        means=np.asarray(means).reshape(len(weights), 3),
        covs=np.asarray(covs).reshape(len(weights), 3, 3),
    )


def _kmeans_init(pixels: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10) -> np.ndarray:
    centers = pixels[rng.choice(pixels.shape[0], size=k, replace=False)].astype(np.float64)
    assignments = np.zeros(pixels.shape[0], dtype=np.int64)
    sq = (pixels ** 2).sum(axis=1, keepdims=True)
    for _ in range(iters):
        d2 = sq - 2.0 * pixels @ centers.T + (centers ** 2).sum(axis=1)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, assignments):
            break
        assignments = new
        for c in range(k):
            members = pixels[assignments == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return assignments


def fit_gmm(pixels: np.ndarray, n_components: int, seed: int, max_iters: int = 20) -> GmmModel:
    """Fit one side's color model by seeded k-means plus hard reassignment.

    If fewer pixels than components are supplied the component count is
    clamped with a warning. The hard-assignment log-likelihood is
    non-decreasing over iterations (each step re-solves one block exactly).
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if pixels.shape[0] == 0:
        raise ValueError("cannot fit a color model to zero pixels")
    k = n_components
    if pixels.shape[0] < k:
        log.warning("only %d pixels for %d components; clamping K", pixels.shape[0], k)
        k = pixels.shape[0]

    rng = np.random.default_rng(seed)
    eps = _regularization(pixels)
    assignments = _kmeans_init(pixels, k, rng)
    model = _estimate(pixels, assignments, k, eps)
    for _ in range(max_iters):
        new = model.assign(pixels)
        if model.n_components == k and np.array_equal(new, assignments):
            break
        assignments, k = new, model.n_components
        model = _estimate(pixels, new, k, eps)
    return model


def refit(model: GmmModel, pixels: np.ndarray) -> GmmModel:
    """One reassignment + re-estimation pass against new pixels."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if pixels.shape[0] == 0:
        return model
    assignments = model.assign(pixels)
    return _estimate(pixels, assignments, model.n_components, _regularization(pixels))
