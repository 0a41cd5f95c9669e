"""Exponential-family machinery.

A family is described by its canonical parameter ``alpha``, the expectation
parameter ``beta`` (the mean of the sufficient statistic), the normalizer
``psi(alpha)`` and the sufficient-statistic covariance ``V(alpha)``.  All the
reweighting logic downstream reduces to a handful of maps between these two
coordinate systems:

* ``delta(beta, mle)``        exponent of the conversion factor
* ``log_xi(beta, mle)``       Jacobian-like volume ratio sqrt(|V|/|V_hat|)
* ``deviance(beta1, beta2)``  twice the KL divergence between members
* ``log_density_ratio``       log f_{b1}(t) - log f_{b2}(t) at a statistic t

The conversion factor R = xi * exp(delta) turns bootstrap sampling density
into posterior density; a Jeffreys prior cancels xi exactly, which is why the
sampler records delta and log_xi separately.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalFailure",
    "CapabilityMissing",
    "MlePoint",
    "FamilyModel",
    "chol_logdet",
    "cubic_delta_approx",
]


class NumericalFailure(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class CapabilityMissing(NotImplementedError):
    """The family does not provide this optional capability."""


def chol_logdet(mat: np.ndarray) -> float:
    """Log determinant of a symmetric positive definite matrix.

    Raises NumericalFailure instead of LinAlgError so callers can map the
    condition to a diagnostic exit path.
    """
    try:
        c = np.linalg.cholesky(np.asarray(mat, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"matrix not positive definite: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(c))))


@dataclass(frozen=True)
class MlePoint:
    """Maximum-likelihood anchor of a bootstrap run.

    Carries the estimate in both coordinate systems plus the covariance at the
    estimate, so per-replication quantities need no refitting.
    """

    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    v_hat: np.ndarray
    logdet_v_hat: float

    @classmethod
    def from_estimate(cls, family: "FamilyModel", beta_hat) -> "MlePoint":
        beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
        if not family.in_expectation_space(beta_hat):
            raise ValueError(
                f"estimate {beta_hat} outside the expectation space of {family.family_id}"
            )
        alpha_hat = family.canonical(beta_hat)
        v_hat = family.covariance(alpha_hat)
        return cls(beta_hat, alpha_hat, v_hat, chol_logdet(v_hat))


class FamilyModel(abc.ABC):
    """Canonical exponential family with an explicit parameterization.

    Subclasses supply the five family-specific maps; the generic conversion
    machinery is implemented here once.  Points of such a family are plain
    beta vectors, so ``flatten``/``unflatten`` are identities.
    """

    @property
    @abc.abstractmethod
    def family_id(self) -> str: ...

    @property
    @abc.abstractmethod
    def param_dim(self) -> int: ...

    @abc.abstractmethod
    def psi(self, alpha: np.ndarray) -> float:
        """Cumulant normalizer at a canonical parameter."""

    @abc.abstractmethod
    def mean(self, alpha: np.ndarray) -> np.ndarray:
        """Expectation parameter beta(alpha) = grad psi."""

    @abc.abstractmethod
    def canonical(self, beta: np.ndarray) -> np.ndarray:
        """Inverse map alpha(beta)."""

    @abc.abstractmethod
    def covariance(self, alpha: np.ndarray) -> np.ndarray:
        """Covariance V(alpha) of the sufficient statistic, shape (p, p)."""

    @abc.abstractmethod
    def sample_sufficient(self, alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One draw of the sufficient statistic under alpha."""

    def third_cumulant(self, alpha: np.ndarray, direction: np.ndarray) -> float:
        """Directional third cumulant U^(v); optional capability."""
        raise CapabilityMissing(f"{self.family_id} has no third-cumulant map")

    def in_expectation_space(self, beta) -> bool:
        return bool(np.all(np.isfinite(beta)))

    # run surface -----------------------------------------------------------

    def mle(self, beta_hat) -> MlePoint:
        return MlePoint.from_estimate(self, beta_hat)

    def sample_replication(self, at, rng: np.random.Generator):
        """One bootstrap replication at an MlePoint or a raw beta vector."""
        alpha = at.alpha_hat if isinstance(at, MlePoint) else self.canonical(
            np.atleast_1d(np.asarray(at, dtype=float)))
        return self.sample_sufficient(alpha, rng)

    def flatten(self, point) -> np.ndarray:
        return np.atleast_1d(np.asarray(point, dtype=float))

    def unflatten(self, vec: np.ndarray):
        return np.atleast_1d(np.asarray(vec, dtype=float))

    def alpha_of(self, point):
        return self.canonical(self.flatten(point))

    def deviance(self, beta1, beta2) -> float:
        """D(beta1, beta2) = 2 E_{beta1} log(f_{beta1}/f_{beta2}), always >= 0."""
        b1 = np.atleast_1d(np.asarray(beta1, dtype=float))
        b2 = np.atleast_1d(np.asarray(beta2, dtype=float))
        a1, a2 = self.canonical(b1), self.canonical(b2)
        return float(2.0 * ((a1 - a2) @ b1 - (self.psi(a1) - self.psi(a2))))

    def delta(self, point, mle: MlePoint) -> float:
        """Half the deviance difference [D(b, b_hat) - D(b_hat, b)] / 2."""
        beta = self.flatten(point)
        a = self.canonical(beta)
        return float((a - mle.alpha_hat) @ (beta + mle.beta_hat)
                     - 2.0 * (self.psi(a) - self.psi(mle.alpha_hat)))

    def log_xi(self, point, mle: MlePoint) -> float:
        a = self.canonical(self.flatten(point))
        return 0.5 * (chol_logdet(self.covariance(a)) - mle.logdet_v_hat)

    def log_density_ratio(self, point_num, point_den, at) -> float:
        """log f_{num}(t)/f_{den}(t) at a sufficient-statistic value t."""
        a1 = self.canonical(self.flatten(point_num))
        a2 = self.canonical(self.flatten(point_den))
        t = np.atleast_1d(np.asarray(at, dtype=float))
        return float((a1 - a2) @ t - (self.psi(a1) - self.psi(a2)))

    def sample_data(self, point, rng: np.random.Generator):
        """One future-data draw at a parameter point; optional capability."""
        raise CapabilityMissing(f"{self.family_id} has no data sampler")

    def log_bab_multipliers(self, run, gamma_point) -> np.ndarray:
        """Per-replication log reweighting multipliers toward an outer MLE.

        For canonical families the density ratio collapses to the inner
        product (alpha_i - alpha_hat)'(gamma_k - beta_hat).
        """
        if run.alphas is None:
            raise CapabilityMissing("run carries no canonical coordinates")
        gamma = self.flatten(gamma_point)
        return (run.alphas - run.mle.alpha_hat) @ (gamma - run.mle.beta_hat)

    def meta(self) -> dict:
        """JSON-safe description sufficient to rebuild the family."""
        raise CapabilityMissing(f"{self.family_id} does not serialize")

    def mle_meta(self, mle: MlePoint) -> dict:
        return {"beta_hat": np.asarray(mle.beta_hat).tolist()}

    def mle_from_meta(self, obj: dict) -> MlePoint:
        return MlePoint.from_estimate(self, np.asarray(obj["beta_hat"], dtype=float))


def cubic_delta_approx(mle: MlePoint, skewness_hat: float, beta,
                       direction=None) -> float:
    """Leading skewness term of delta, gamma_hat * Z**3 / 6.

    Z is the standardized deviation of beta from the estimate along
    ``direction`` (the sole axis when the family is one-dimensional).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if direction is None:
        if beta.size != 1:
            raise ValueError("direction required for multiparameter families")
        v = np.ones(1)
    else:
        v = np.atleast_1d(np.asarray(direction, dtype=float))
    num = float(v @ (beta - mle.beta_hat))
    scale = float(v @ mle.v_hat @ v)
    if scale <= 0:
        raise NumericalFailure("direction has nonpositive variance")
    z = num / np.sqrt(scale)
    return skewness_hat * z**3 / 6.0
