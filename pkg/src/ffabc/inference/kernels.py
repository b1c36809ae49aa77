"""Uniform box priors and truncated Gaussian perturbation kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cholesky, LinAlgError, solve_triangular

MAX_KERNEL_TRIES = 1000


class KernelDegenerate(RuntimeError):
    """The kernel keeps proposing outside the prior box."""


class SingularCovariance(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform priors, one ``(name, lower, upper)`` per dimension."""

    bounds: tuple[tuple[str, float, float], ...]
    units: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((str(n), float(lo), float(hi)) for n, lo, hi in self.bounds))
        if not self.bounds:
            raise ValueError("prior needs at least one dimension")
        for name, lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"prior bounds for {name!r} need lower < upper, got [{lo}, {hi}]")

    @classmethod
    def uniform(cls, **ranges) -> "PriorSpec":
        return cls(tuple((k, lo, hi) for k, (lo, hi) in ranges.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(b[0] for b in self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[2] for b in self.bounds])

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, phi) -> np.ndarray | bool:
        phi = np.asarray(phi, dtype=float)
        inside = np.all((phi >= self.lower) & (phi <= self.upper), axis=-1)
        return inside

    def pdf(self, phi) -> np.ndarray | float:
        return np.where(self.contains(phi), 1.0 / self.volume, 0.0)

    def sample(self, n: int, rng) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(rng)
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


def prior_sample(prior: PriorSpec, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws from ``prior`` as an ``(n, d)`` array."""
    return prior.sample(n, np.random.default_rng(seed))


class PerturbationKernel:
    """Gaussian kernel truncated to the prior box.

    Sampling rejects out-of-box draws. :meth:`density` is the *untruncated*
    normal density: the truncation constant depends on the centre and is
    deliberately left out of importance weights.
    """

    def __init__(self, center, covariance, prior: PriorSpec):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        d = len(self.center)
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d}")
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=0.0):
            raise ValueError("covariance must be symmetric")
        self.covariance = cov
        self.prior = prior
        try:
            self._chol = cholesky(cov, lower=True) if np.any(cov) else None
        except LinAlgError:
            raise SingularCovariance("covariance is not positive definite") from None

    def sample(self, rng, max_tries: int = MAX_KERNEL_TRIES) -> np.ndarray:
        rng = np.random.default_rng(rng)
        if self._chol is None:
            return self.center.copy()
        for _ in range(max_tries):
            x = self.center + self._chol @ rng.standard_normal(len(self.center))
            if self.prior.contains(x):
                return x
        raise KernelDegenerate(
            f"{max_tries} consecutive kernel draws fell outside the prior box; "
            "the covariance is far wider than the box"
        )

    def density(self, x) -> np.ndarray | float:
        return mvn_density(x, self.center, self.covariance)


def kernel_sample(kernel: PerturbationKernel, seed) -> np.ndarray:
    return kernel.sample(np.random.default_rng(seed))


def kernel_density(kernel: PerturbationKernel, x) -> float:
    return kernel.density(x)


def mvn_density(x, centers, covariance) -> np.ndarray:
    """Normal density of covariance ``covariance`` at ``x`` for every centre.

    ``x`` is ``(d,)`` or ``(m, d)``, ``centers`` ``(d,)`` or ``(k, d)``; the
    result has shape ``(m, k)`` with singleton dimensions squeezed.
    """
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = cov.shape[0]
    x2 = np.asarray(x, dtype=float).reshape(-1, d)
    c2 = np.asarray(centers, dtype=float).reshape(-1, d)
    try:
        chol = cholesky(cov, lower=True)
    except LinAlgError:
        raise SingularCovariance("covariance is singular") from None
    diff = x2[:, None, :] - c2[None, :, :]
    z = solve_triangular(chol, diff.reshape(-1, d).T, lower=True)
    maha = np.sum(z * z, axis=0).reshape(len(x2), len(c2))
    log_norm = 0.5 * d * np.log(2 * np.pi) + np.sum(np.log(np.diag(chol)))
    out = np.exp(-0.5 * maha - log_norm)
    if out.size == 1:
        return float(out[0, 0])
    return out.squeeze()


def weighted_covariance(phi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sample covariance (reliability weights), always ``(d, d)``."""
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mu = w @ phi
    diff = phi - mu
    v1, v2 = 1.0, float(np.sum(w * w))
    denom = v1 - v2 if v1 - v2 > 0 else 1.0
    return (diff.T * w) @ diff / denom


def regularize(cov: np.ndarray, prior: PriorSpec, floor: float = 1e-10) -> np.ndarray:
    """Make ``cov`` safely positive definite relative to the prior box scale."""
    scale = np.diag((prior.upper - prior.lower) ** 2)
    cov = 0.5 * (cov + cov.T)
    try:
        cho_factor(cov)
        if np.all(np.diag(cov) > floor * np.diag(scale)):
            return cov
    except LinAlgError:
        pass
    return cov + floor * scale
