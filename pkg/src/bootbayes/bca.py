"""Bias-corrected accelerated reweighting of bootstrap replications.

Instead of quantile-mapping the bootstrap histogram, the BCa correction is
expressed as per-replication weights

    w_i = phi(z_i/(1+a z_i) - z0) / [ (1+a z_i)^2 phi(z_i + z0) ],
    z_i = Phi^-1(G(t_i)) - z0,

with G the bootstrap CDF.  Dividing the weights by the conversion factor R
exposes the implied prior, so BCa intervals slot into the same machinery as
any other reweighted posterior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .expfam import CapabilityMissing, MlePoint, NumericalFailure
from .posterior import (Interval, Prior, WeightVector, credible_interval,
                        importance_weights, log_conversion)
from .sampler import BootstrapRun

__all__ = [
    "BcaConstants",
    "z0_estimate",
    "jackknife_acceleration",
    "family_skew_acceleration",
    "acceleration",
    "bca_prior",
    "bca_weights",
    "bca_interval",
]


@dataclass(frozen=True)
class BcaConstants:
    """Bias correction z0 and acceleration a, with the method that produced a."""

    z0: float
    a: float
    source: str = "fixed"

    def __post_init__(self):
        if abs(self.z0) >= 3.0:
            warnings.warn(
                f"z0={self.z0:.3f} is extreme; the bootstrap distribution "
                "barely overlaps the estimate", stacklevel=2)


def z0_estimate(run: BootstrapRun, statistic_id: str, theta_hat: float) -> float:
    """Bias-correction constant from the bootstrap CDF at the observed value.

    Ties at theta_hat count half, keeping the estimate symmetric under sign
    flips of the statistic.
    """
    t = run.statistic_values(statistic_id)
    if t.size < 100:
        warnings.warn(f"z0 from only B={t.size} replications is noisy", stacklevel=2)
    p = (np.sum(t < theta_hat) + 0.5 * np.sum(t == theta_hat)) / t.size
    if p <= 0.0 or p >= 1.0:
        raise NumericalFailure(
            f"all replications on one side of the estimate (p={p}); increase B")
    return float(norm.ppf(p))


def jackknife_acceleration(rows, statistic) -> float:
    """Acceleration from leave-one-out skewness of the statistic over rows."""
    rows = np.asarray(rows)
    n = rows.shape[0]
    if n < 3:
        raise ValueError("jackknife needs at least three rows")
    loo = np.array([float(statistic(np.delete(rows, i, axis=0)))
                    for i in range(n)])
    dev = loo.mean() - loo
    denom = np.sum(dev**2) ** 1.5
    if denom == 0.0:
        raise NumericalFailure("statistic is constant under row deletion")
    return float(np.sum(dev**3) / (6.0 * denom))


def family_skew_acceleration(family, mle, stat_of_flat,
                             rel_step: float = 1e-5) -> float:
    """Acceleration a = gamma/6 from the family's directional skewness.

    The direction is the gradient of the statistic in the flat replication
    coordinate, premultiplied by the inverse covariance (the least-favorable
    direction); the skewness uses the family's third cumulant.
    """
    if isinstance(mle, MlePoint):
        beta_hat, alpha_hat, v = mle.beta_hat, mle.alpha_hat, mle.v_hat
    else:
        beta_hat = family.flatten(mle)
        alpha_hat = family.alpha_of(mle)
        v = family.covariance(alpha_hat)
    steps = rel_step * np.sqrt(np.diag(v))
    grad = np.empty(beta_hat.size)
    for j in range(beta_hat.size):
        e = np.zeros_like(beta_hat)
        e[j] = steps[j]
        grad[j] = (stat_of_flat(beta_hat + e) - stat_of_flat(beta_hat - e)) / (2 * steps[j])
    c = np.linalg.solve(v, grad)
    scale = float(c @ v @ c)
    if scale <= 0.0:
        raise NumericalFailure("statistic gradient vanishes at the estimate")
    gamma = family.third_cumulant(alpha_hat, c) / scale**1.5
    return float(gamma / 6.0)


def acceleration(method: str = "jackknife_a", *, rows=None, statistic=None,
                 family=None, mle=None, stat_of_flat=None) -> tuple[float, str]:
    """Dispatch to one of the acceleration estimates; returns (a, source)."""
    if method == "jackknife_a":
        if rows is None or statistic is None:
            raise ValueError("jackknife_a needs rows and a row statistic")
        return jackknife_acceleration(rows, statistic), "jackknife_a"
    if method == "family_skew_a":
        if family is None or mle is None or stat_of_flat is None:
            raise ValueError("family_skew_a needs family, mle and stat_of_flat")
        try:
            return family_skew_acceleration(family, mle, stat_of_flat), "family_skew_a"
        except CapabilityMissing:
            raise
    raise ValueError(f"unknown acceleration method {method!r}")


def _log_bca_weights(run: BootstrapRun, statistic_id: str,
                     constants: BcaConstants) -> np.ndarray:
    t = run.statistic_values(statistic_id)
    z0, a = constants.z0, constants.a
    g = rankdata(t, method="average") / (t.size + 1.0)
    z = norm.ppf(g) - z0
    denom = 1.0 + a * z
    if np.any(denom <= 0.0):
        bad = int(np.argmin(denom))
        raise NumericalFailure(
            f"acceleration a={a} folds the transform at replication {bad} "
            f"(1 + a z = {denom[bad]:.3e})")
    u = z / denom - z0
    v = z + z0
    return (v * v - u * u) / 2.0 - 2.0 * np.log(denom)


def bca_prior(run: BootstrapRun, statistic_id: str,
              constants: BcaConstants) -> Prior:
    """The prior implied by BCa weights: log pi_i = log w_i - log R_i.

    Feeding this prior back through importance_weights reproduces the BCa
    weight vector exactly, since that is how bca_weights is defined.
    """
    lp = _log_bca_weights(run, statistic_id, constants) - log_conversion(run)
    return Prior.from_values(f"bca[{statistic_id}]", lp)


def bca_weights(run: BootstrapRun, statistic_id: str, constants: BcaConstants,
                truncate: float | None = None) -> WeightVector:
    return importance_weights(run, bca_prior(run, statistic_id, constants),
                              truncate)


def bca_interval(run: BootstrapRun, statistic_id: str, constants: BcaConstants,
                 level: float = 0.95) -> Interval:
    w = bca_weights(run, statistic_id, constants)
    return credible_interval(run, w, statistic_id, level)
