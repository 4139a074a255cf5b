"""Arrival-process models for the saturated-port base family.

A model holds a base rate matrix nu on the fully loaded face (all row and
column sums equal to 1) and a load parameter epsilon in (0, 1); the per-queue
mean is (1 - epsilon) * nu_ij.  Three integer-valued laws are supported, each
with exact analytic moments and a support bound a_max.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .wlinalg import CostMatrix, cdot, col_generator, row_generator

__all__ = [
    "ArrivalModel",
    "MomentVector",
    "face_check",
    "law_moments",
    "uniform_nu",
    "KINDS",
]

KINDS = ("bernoulli", "uniform-integer", "truncated-poisson")

FACE_TOL = 1e-12


def uniform_nu(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


def face_check(nu, cost: CostMatrix | None = None) -> bool:
    """True iff nu sits on the fully loaded face.

    The face pairing conditions reduce to unit row and column sums, so the
    answer does not depend on the weights; passing a cost matrix evaluates
    the pairings literally instead (used to assert that independence).
    """
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 2 or nu.shape[0] != nu.shape[1]:
        return False
    if np.any(nu < 0):
        return False
    n = nu.shape[0]
    if cost is not None:
        row = [cdot(nu, row_generator(cost, i), cost) for i in range(n)]
        col = [cdot(nu, col_generator(cost, j), cost) for j in range(n)]
        sums = np.array(row + col)
    else:
        sums = np.concatenate([nu.sum(axis=1), nu.sum(axis=0)])
    return bool(np.all(np.abs(sums - 1.0) <= FACE_TOL))


@dataclass
class MomentVector:
    mean: np.ndarray
    var: np.ndarray
    second_moment: np.ndarray

    def __post_init__(self):
        if np.any(self.var < -1e-15):
            raise ValueError("negative variance")


def _trunc_poisson_pmf(rate: float, a_max: int) -> np.ndarray:
    k = np.arange(a_max + 1)
    logp = k * np.log(rate) - rate - np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, a_max + 1))]))
    p = np.exp(logp - logp.max())
    return p / p.sum()


def _trunc_poisson_mean(rate: float, a_max: int) -> float:
    if rate <= 0:
        return 0.0
    p = _trunc_poisson_pmf(rate, a_max)
    return float((np.arange(a_max + 1) * p).sum())


def _calibrate_trunc_poisson(target: float, a_max: int) -> float:
    """Rate whose a_max-truncated Poisson law has the requested mean."""
    if target <= 0:
        raise ValueError("target mean must be positive")
    if target >= a_max:
        raise ValueError(f"target mean {target} not reachable with support bound {a_max}")
    hi = max(4.0 * target, 1.0)
    while _trunc_poisson_mean(hi, a_max) < target:
        hi *= 2.0
    return brentq(lambda r: _trunc_poisson_mean(r, a_max) - target, 1e-300, hi, xtol=1e-15, rtol=1e-15)


def law_moments(kind: str, mean: np.ndarray, a_max: int, rates: np.ndarray | None = None) -> MomentVector:
    """Analytic moments of one arrival law given its (entrywise) mean.

    bernoulli: E[A^2] = mean.  uniform-integer is a zero-inflated uniform on
    {0..a_max} hit with probability q = 2 mean / a_max, so E[A^2] =
    q * a_max (2 a_max + 1) / 6.  truncated-poisson moments come from the
    renormalized pmf at the calibrated rates.
    """
    mean = np.array(mean, dtype=float)
    if kind == "bernoulli":
        second = mean.copy()
    elif kind == "uniform-integer":
        q = 2.0 * mean / a_max
        if np.any(q > 1.0 + 1e-12):
            raise ValueError("mean not reachable: need a_max >= 2 * mean")
        second = q * a_max * (2 * a_max + 1) / 6.0
    elif kind == "truncated-poisson":
        if rates is None:
            rates = np.empty_like(mean)
            for idx, m in np.ndenumerate(mean):
                rates[idx] = _calibrate_trunc_poisson(float(m), a_max)
        k = np.arange(a_max + 1)
        second = np.empty_like(mean)
        for idx, r in np.ndenumerate(rates):
            p = _trunc_poisson_pmf(float(r), a_max)
            second[idx] = float((k * k * p).sum())
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return MomentVector(mean=mean, var=second - mean**2, second_moment=second)


@dataclass(eq=False)
class ArrivalModel:
    """IID per-queue integer arrivals with mean (1 - epsilon) * nu."""

    kind: str
    nu: np.ndarray
    epsilon: float
    a_max: int
    _rates: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        nu = np.array(self.nu, dtype=float)
        if not face_check(nu):
            raise ValueError("nu must have unit row and column sums")
        if nu.min() <= 0:
            raise ValueError("nu must be strictly positive")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.a_max < 1:
            raise ValueError("a_max must be a positive integer")
        nu.flags.writeable = False
        self.nu = nu
        # Feasibility is checked against the epsilon -> 0 mean (nu itself) so
        # that every epsilon in (0, 1), and the limit law, stay realizable.
        if self.kind == "bernoulli":
            if self.a_max != 1:
                raise ValueError("bernoulli arrivals have support bound 1")
            if nu.max() > 1.0:
                raise ValueError("bernoulli mean above 1")
        elif self.kind == "uniform-integer":
            if 2.0 * nu.max() / self.a_max > 1.0:
                raise ValueError("mean not reachable: need a_max >= 2 * nu")
        else:
            if nu.max() >= self.a_max:
                raise ValueError("need nu < a_max for the truncated law")
            mean = self.mean
            rates = np.empty_like(mean)
            for idx, m in np.ndenumerate(mean):
                rates[idx] = _calibrate_trunc_poisson(float(m), self.a_max)
            self._rates = rates

    # -------- constructors --------

    @classmethod
    def bernoulli(cls, nu, epsilon: float) -> "ArrivalModel":
        return cls(kind="bernoulli", nu=nu, epsilon=epsilon, a_max=1)

    @classmethod
    def uniform_integer(cls, nu, epsilon: float, a_max: int = 2) -> "ArrivalModel":
        return cls(kind="uniform-integer", nu=nu, epsilon=epsilon, a_max=a_max)

    @classmethod
    def truncated_poisson(cls, nu, epsilon: float, a_max: int = 10) -> "ArrivalModel":
        return cls(kind="truncated-poisson", nu=nu, epsilon=epsilon, a_max=a_max)

    # -------- accessors --------

    @property
    def n(self) -> int:
        return self.nu.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return (1.0 - self.epsilon) * self.nu

    def with_epsilon(self, epsilon: float) -> "ArrivalModel":
        return ArrivalModel(kind=self.kind, nu=self.nu, epsilon=epsilon, a_max=self.a_max)

    def moments(self) -> MomentVector:
        """Exact mean / variance / second moment of the configured law."""
        return law_moments(self.kind, self.mean, self.a_max, rates=self._rates)

    def limit_moments(self) -> MomentVector:
        """Moments of the epsilon -> 0 law (mean nu); variance limit used in
        the heavy-traffic constant."""
        if self.kind == "truncated-poisson":
            rates = np.empty_like(self.nu)
            for idx, m in np.ndenumerate(self.nu):
                rates[idx] = _calibrate_trunc_poisson(float(m), self.a_max)
            return law_moments(self.kind, np.array(self.nu), self.a_max, rates=rates)
        return law_moments(self.kind, np.array(self.nu), self.a_max)

    # -------- sampling --------

    def sample_block(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """(count, n*n) int64 array of independent slots."""
        n2 = self.n * self.n
        mean = self.mean.ravel()
        if self.kind == "bernoulli":
            return (rng.random((count, n2)) < mean[None, :]).astype(np.int64)
        if self.kind == "uniform-integer":
            q = 2.0 * mean / self.a_max
            on = rng.random((count, n2)) < q[None, :]
            vals = rng.integers(0, self.a_max + 1, size=(count, n2))
            return np.where(on, vals, 0).astype(np.int64)
        rates = self._rates.ravel()
        out = rng.poisson(lam=np.broadcast_to(rates, (count, n2)))
        bad = out > self.a_max
        while bad.any():
            out[bad] = rng.poisson(lam=np.broadcast_to(rates, (count, n2))[bad])
            bad = out > self.a_max
        return out.astype(np.int64)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One slot of arrivals as an (n, n) integer matrix."""
        return self.sample_block(rng, 1)[0].reshape(self.n, self.n)
