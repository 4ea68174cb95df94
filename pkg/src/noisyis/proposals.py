"""Normalized, exactly samplable proposal densities on a finite interval.

A shape function is tabulated on an equally spaced grid and the proposal is
the piecewise-linear interpolant of the tabulated values, normalized by its
trapezoid integral. Within each cell that density is linear, so its CDF is
quadratic and is inverted in closed form: the sampler draws exactly from the
density that :meth:`Proposal.density` reports, which keeps importance weights
unbiased at any grid size.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoisyISError
from .models import NoiseModel, VectorFunction

DEFAULT_GRID = 4096


@dataclass(frozen=True)
class GridTable:
    nodes: np.ndarray
    unnorm_values: np.ndarray
    cdf: np.ndarray
    norm_const: float

    @property
    def step(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def density_values(self) -> np.ndarray:
        return self.unnorm_values / self.norm_const


def tabulate(shape: Callable, support: tuple[float, float], G: int = DEFAULT_GRID) -> GridTable:
    lo, hi = map(float, support)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise NoisyISError(f"proposals: support must be a finite interval, got {support}")
    if G < 1:
        raise NoisyISError(f"proposals: grid size must be >= 1, got {G}")
    nodes = np.linspace(lo, hi, G + 1)
    values = np.asarray(shape(nodes), dtype=float)
    if values.shape != nodes.shape:
        raise NoisyISError(f"proposals: shape returned {values.shape}, expected {nodes.shape}")
    bad = ~np.isfinite(values)
    if bad.any():
        raise NoisyISError(f"proposals: shape is not finite at x={float(nodes[bad][0])!r}")
    if np.any(values < 0):
        raise NoisyISError(f"proposals: shape is negative at x={float(nodes[values < 0][0])!r}")
    cells = 0.5 * (values[1:] + values[:-1]) * (hi - lo) / G
    norm_const = float(cells.sum())
    if not norm_const > 0 or not np.isfinite(norm_const):
        raise NoisyISError(f"proposals: shape has zero or non-finite mass on [{lo}, {hi}]")
    cdf = np.concatenate([[0.0], np.cumsum(cells)]) / norm_const
    cdf[-1] = 1.0
    return GridTable(nodes, values, cdf, norm_const)


class Proposal:
    """Density ``q`` on ``[lo, hi]`` with an exact inverse-CDF sampler."""

    def __init__(self, grid: GridTable, name: str = "q"):
        self.grid = grid
        self.name = name
        self._dens = grid.density_values

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid.nodes[0]), float(self.grid.nodes[-1])

    def __repr__(self):
        lo, hi = self.support
        return f"Proposal({self.name!r}, [{lo}, {hi}], G={len(self.grid.nodes) - 1})"

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.grid.nodes, self._dens, left=0.0, right=0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        nodes, d = self.grid.nodes, self._dens
        h = self.grid.step
        k = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
        t = np.clip(x - nodes[k], 0.0, h)
        slope = (d[k + 1] - d[k]) / h
        out = self.grid.cdf[k] + d[k] * t + 0.5 * slope * t * t
        return np.clip(out, 0.0, 1.0)

    def inverse_cdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        nodes, d, cdf = self.grid.nodes, self._dens, self.grid.cdf
        h = self.grid.step
        # side="right" skips zero-mass cells, so flat CDF stretches are never sampled
        k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(nodes) - 2)
        r = np.maximum(u - cdf[k], 0.0)
        slope = (d[k + 1] - d[k]) / h
        disc = np.sqrt(np.maximum(d[k] * d[k] + 2.0 * slope * r, 0.0))
        denom = d[k] + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom > 0, 2.0 * r / denom, 0.0)
        return nodes[k] + np.clip(t, 0.0, h)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return self.inverse_cdf(rng.random(size))

    def to_csv(self, path, x=None) -> None:
        """Write two columns ``x, density`` (grid nodes unless ``x`` is given)."""
        x = self.grid.nodes if x is None else np.asarray(x, dtype=float)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "density"])
            for xi, qi in zip(x, self.density(x)):
                writer.writerow([f"{xi:.17g}", f"{qi:.17g}"])


def build_proposal_from_shape(shape: Callable, support, G: int = DEFAULT_GRID,
                              name: str = "q") -> Proposal:
    """Normalize a non-negative ``shape`` over ``support`` into a :class:`Proposal`."""
    return Proposal(tabulate(shape, support, G), name=name)


def _root_second_moment(noise: NoiseModel) -> Callable:
    return lambda x: np.sqrt(noise.second_moment(x))


def target_proposal(noise: NoiseModel, support=None, G: int = DEFAULT_GRID) -> Proposal:
    """``q = m / Z``: the optimal proposal when evaluations are exact."""
    return build_proposal_from_shape(noise.mean, support or noise.support, G, name="mean")


def optimal_proposal_for_z(noise: NoiseModel, support=None, G: int = DEFAULT_GRID) -> Proposal:
    """Minimum-variance proposal for the normalizing-constant estimate, ``q ∝ sqrt(m^2 + s^2)``."""
    return build_proposal_from_shape(_root_second_moment(noise), support or noise.support, G,
                                     name="optimal-z")


def optimal_proposal_for_std(noise: NoiseModel, f: VectorFunction, support=None,
                             G: int = DEFAULT_GRID) -> Proposal:
    """``q ∝ ||f(x)|| sqrt(m^2 + s^2)``, minimizing the summed variance of ``I_std``."""
    root = _root_second_moment(noise)

    def shape(x):
        return np.linalg.norm(f(x), axis=1) * root(x)

    return build_proposal_from_shape(shape, support or noise.support, G, name="optimal-std")


def optimal_proposal_for_self(noise: NoiseModel, f: VectorFunction, i_pilot, support=None,
                              G: int = DEFAULT_GRID) -> Proposal:
    """``q ∝ ||f(x) - I|| sqrt(m^2 + s^2)`` with ``I`` replaced by a pilot estimate."""
    i_pilot = np.atleast_1d(np.asarray(i_pilot, dtype=float))
    if i_pilot.shape != (f.d_f,):
        raise NoisyISError(f"proposals: i_pilot has shape {i_pilot.shape}, expected ({f.d_f},)")
    root = _root_second_moment(noise)

    def shape(x):
        return np.linalg.norm(f(x) - i_pilot, axis=1) * root(x)

    return build_proposal_from_shape(shape, support or noise.support, G, name="optimal-self")


def uniform_mixture_proposal(support, weights, intervals, G: int = DEFAULT_GRID) -> Proposal:
    """Mixture of uniforms ``sum_k w_k U(intervals[k])`` on ``support``."""
    weights = np.asarray(weights, dtype=float)
    intervals = [tuple(map(float, iv)) for iv in intervals]

    def shape(x):
        out = np.zeros_like(x)
        for w, (a, b) in zip(weights, intervals):
            out += np.where((x >= a) & (x <= b), w / (b - a), 0.0)
        return out

    return build_proposal_from_shape(shape, support, G, name="uniform-mixture")


def random_uniform_mixture(rng: np.random.Generator, support, n_components: int = 3,
                           G: int = DEFAULT_GRID) -> Proposal:
    """Random mixture with a full-support component so every point stays covered."""
    lo, hi = map(float, support)
    cuts = np.sort(rng.uniform(lo, hi, size=(n_components, 2)), axis=1)
    widths = np.maximum(cuts[:, 1] - cuts[:, 0], 1e-3 * (hi - lo))
    cuts[:, 1] = np.minimum(cuts[:, 0] + widths, hi)
    cuts[:, 0] = cuts[:, 1] - widths
    weights = rng.dirichlet(np.ones(n_components + 1))
    weights[0] = max(weights[0], 0.05)
    intervals = [(lo, hi)] + [tuple(c) for c in cuts]
    return uniform_mixture_proposal(support, weights / weights.sum(), intervals, G)
