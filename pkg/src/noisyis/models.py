"""Targets, test functions and noise models for noisy importance sampling.

A noise model describes the random realization ``m~(x)`` returned in place of
an exact target evaluation. Only its first two moments enter the theory:
``mean(x) = E[m~(x)]`` and ``variance(x) = Var[m~(x)]``. All callables are
vectorized over 1D arrays of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .errors import NoisyISError

Array = np.ndarray
ScalarFn = Callable[[Array], Array]

#: Positive stand-in for an exact zero realization. Draws must stay strictly
#: positive; this value is far below any weight the estimators can resolve.
POSITIVE_FLOOR = 1e-300


@dataclass(frozen=True)
class TargetFunction:
    """Unnormalized density ``p(x) >= 0`` on a finite interval."""

    eval: ScalarFn
    support: tuple[float, float]
    dim: int = 1
    name: str = "target"

    def __post_init__(self):
        lo, hi = self.support
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise NoisyISError(f"models: support must be a finite interval, got {self.support}")
        if self.dim < 1:
            raise NoisyISError(f"models: dim must be positive, got {self.dim}")

    def __call__(self, x) -> Array:
        values = np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)
        if np.any(values < 0):
            raise NoisyISError(f"models: target {self.name} returned a negative density")
        return values


@dataclass(frozen=True)
class VectorFunction:
    """Integrand ``f: x -> R^d_f``; ``eval`` maps shape ``(n,)`` to ``(n, d_f)``."""

    eval: Callable[[Array], Array]
    d_f: int
    name: str = "f"

    def __call__(self, x) -> Array:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.asarray(self.eval(x), dtype=float)
        if out.ndim == 1 and self.d_f == 1:
            out = out[:, None]
        if out.shape != (x.shape[0], self.d_f):
            raise NoisyISError(
                f"models: {self.name} returned shape {out.shape}, expected {(x.shape[0], self.d_f)}"
            )
        return out


def identity_function() -> VectorFunction:
    return VectorFunction(lambda x: x[:, None], 1, name="x")


def constant_function(c: float = 1.0) -> VectorFunction:
    return VectorFunction(lambda x: np.full((x.shape[0], 1), float(c)), 1, name=f"const({c})")


def one_and_x_function() -> VectorFunction:
    """``f(x) = (1, x)``."""
    return VectorFunction(lambda x: np.column_stack([np.ones_like(x), x]), 2, name="(1,x)")


def uniform_target(a: float = 0.1, b: float = 10.0) -> TargetFunction:
    height = 1.0 / (b - a)

    def density(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= a) & (x <= b), height, 0.0)

    return TargetFunction(density, (a, b), name=f"uniform[{a},{b}]")


def gaussian_target(trunc: float = 12.0, mu: float = 0.0, sd: float = 1.0) -> TargetFunction:
    """Normal density restricted to ``[mu - trunc, mu + trunc]`` (not renormalized)."""
    norm = 1.0 / (sd * np.sqrt(2.0 * np.pi))

    def density(x):
        z = (np.asarray(x, dtype=float) - mu) / sd
        return norm * np.exp(-0.5 * z * z)

    return TargetFunction(density, (mu - trunc, mu + trunc), name=f"normal({mu},{sd})")


@dataclass(frozen=True)
class NoiseModel:
    """Mean function, variance function and sampler of a noisy realization.

    ``draw(x, rng)`` returns one independent realization per entry of ``x``.
    """

    mean: ScalarFn
    variance: ScalarFn
    draw: Callable[[Array, np.random.Generator], Array]
    target: TargetFunction
    name: str = "noise"
    params: dict = field(default_factory=dict)

    @property
    def support(self) -> tuple[float, float]:
        return self.target.support

    def second_moment(self, x) -> Array:
        """``m(x)^2 + s(x)^2``."""
        m = self.mean(x)
        return m * m + self.variance(x)


def _positive(values: Array) -> Array:
    return np.where(values > 0, values, POSITIVE_FLOOR)


def zero_noise(target: TargetFunction) -> NoiseModel:
    """Exact evaluations: ``m~(x) = p(x)``."""

    def draw(x, rng):
        return _positive(target(x))

    return NoiseModel(
        mean=target,
        variance=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        draw=draw,
        target=target,
        name="none",
    )


def make_bernoulli_noise(target: TargetFunction, p_max: float) -> NoiseModel:
    """``m~(x) = p_max * Bernoulli(p(x) / p_max)``.

    The zero outcome is replaced by :data:`POSITIVE_FLOOR`; estimators count
    how often that happens.
    """
    if not p_max > 0:
        raise NoisyISError(f"models: bernoulli p_max must be positive, got {p_max}")
    p_max = float(p_max)

    def checked(x):
        p = target(x)
        if np.any(p > p_max):
            raise NoisyISError(
                f"models: bernoulli p_max={p_max!r} is below target value {float(np.max(p))!r}"
            )
        return p

    def variance(x):
        p = checked(x)
        return p * (p_max - p)

    def draw(x, rng):
        p = checked(x)
        hit = rng.random(p.shape) < p / p_max
        return np.where(hit, p_max, POSITIVE_FLOOR)

    return NoiseModel(checked, variance, draw, target, "bernoulli", {"p_max": p_max})


def make_folded_gaussian_noise(target: TargetFunction, sigma: float) -> NoiseModel:
    """``m~(x) = |p(x) + eps|`` with ``eps ~ N(0, sigma^2)``."""
    if not sigma > 0:
        raise NoisyISError(f"models: folded-gaussian sigma must be positive, got {sigma}")
    sigma = float(sigma)

    def mean(x):
        p = target(x)
        return (sigma * np.sqrt(2.0 / np.pi) * np.exp(-p * p / (2.0 * sigma * sigma))
                + p * (1.0 - 2.0 * ndtr(-p / sigma)))

    def variance(x):
        p = target(x)
        m = mean(x)
        return np.maximum(p * p + sigma * sigma - m * m, 0.0)

    def draw(x, rng):
        p = target(x)
        return _positive(np.abs(p + sigma * rng.standard_normal(p.shape)))

    return NoiseModel(mean, variance, draw, target, "folded-gaussian", {"sigma": sigma})


def _lognormal_noise(target, log_var, name, params):
    """``m~(x) = p(x) exp(eps)`` with ``eps ~ N(-v(x)/2, v(x))``, unbiased for p."""

    def checked_var(x):
        v = np.asarray(log_var(np.asarray(x, dtype=float)), dtype=float)
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise NoisyISError(f"models: {name} noise log-variance must be finite and >= 0")
        return v

    def variance(x):
        p = target(x)
        return p * p * np.expm1(checked_var(x))

    def draw(x, rng):
        p = target(x)
        v = np.broadcast_to(checked_var(x), p.shape)
        eps = np.sqrt(v) * rng.standard_normal(p.shape) - 0.5 * v
        return _positive(p * np.exp(eps))

    return NoiseModel(target, variance, draw, target, name, params)


def make_multiplicative_lognormal_noise(target: TargetFunction, sigma_fn: ScalarFn) -> NoiseModel:
    """Lognormal multiplicative noise with log-scale standard deviation ``sigma_fn(x)``."""

    def log_var(x):
        s = np.asarray(sigma_fn(x), dtype=float)
        if np.any(s < 0):
            raise NoisyISError("models: multiplicative sigma_fn returned a negative value")
        return s * s

    return _lognormal_noise(target, log_var, "multiplicative", {"sigma_fn": sigma_fn})


def make_latent_variable_noise(target: TargetFunction, gamma_sq_fn: ScalarFn, R: int) -> NoiseModel:
    """Lognormal approximation to a product of inner IS estimators with ``R`` samples each.

    ``log m~(x) ~ N(log p(x) - gamma^2(x) / (2R), gamma^2(x) / R)``. Points with
    ``p(x) = 0`` draw :data:`POSITIVE_FLOOR`.
    """
    if int(R) != R or R < 1:
        raise NoisyISError(f"models: latent-variable R must be a positive integer, got {R}")
    R = int(R)

    def log_var(x):
        return np.asarray(gamma_sq_fn(x), dtype=float) / R

    return _lognormal_noise(target, log_var, "latent", {"gamma_sq_fn": gamma_sq_fn, "R": R})


def log_sigma(A: float) -> ScalarFn:
    """``sigma(x) = A |log x|``, the uniform experiment's noise profile."""
    return lambda x: A * np.abs(np.log(x))


def sqrt_sigma(A: float) -> ScalarFn:
    """``sigma(x) = A |x|^(1/2)``, the Gaussian experiment's noise profile."""
    return lambda x: A * np.sqrt(np.abs(x))


def constant_fn(value: float) -> ScalarFn:
    return lambda x: np.full(np.shape(x), float(value))
