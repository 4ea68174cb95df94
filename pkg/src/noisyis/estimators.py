"""The noisy importance sampling loop and its estimators.

Each run draws ``x_n ~ q``, obtains one noisy realization per point and
weights it by ``w_n = m~(x_n) / q(x_n)``. The exact-evaluation twin weights
``m(x_n) / q(x_n)`` are kept alongside on the same points so the two
estimators can be compared with common random numbers.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NoisyISError
from .models import POSITIVE_FLOOR, NoiseModel, VectorFunction
from .proposals import Proposal
from .rng import replication_seed, stream


@dataclass(frozen=True)
class WeightedEnsemble:
    points: np.ndarray
    weights: np.ndarray
    proposal_id: str
    seed: int | None = None
    mean_weights: np.ndarray | None = None
    floor_hits: int = 0

    def __post_init__(self):
        if self.points.shape != self.weights.shape:
            raise NoisyISError("estimators: points and weights differ in length")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise NoisyISError("estimators: weights must be finite and non-negative")

    def __len__(self):
        return self.weights.shape[0]


def run_noisy_is(noise: NoiseModel, proposal: Proposal, N: int, rng: np.random.Generator,
                 seed: int | None = None) -> WeightedEnsemble:
    """Draw ``N`` points from ``proposal`` and weight them with noisy realizations."""
    if N < 1:
        raise NoisyISError(f"estimators: N must be >= 1, got {N}")
    x = proposal.sample(rng, N)
    q = proposal.density(x)
    if np.any(q <= 0):
        raise NoisyISError(
            f"estimators: proposal {proposal.name} has zero density at drawn x={float(x[q <= 0][0])!r}"
        )
    realization = noise.draw(x, rng)
    return WeightedEnsemble(
        points=x,
        weights=realization / q,
        proposal_id=proposal.name,
        seed=seed,
        mean_weights=noise.mean(x) / q,
        floor_hits=int(np.count_nonzero(realization == POSITIVE_FLOOR)),
    )


def estimate_z(ens: WeightedEnsemble) -> float:
    return float(np.mean(ens.weights))


def _weighted_sum(ens: WeightedEnsemble, f: VectorFunction) -> np.ndarray:
    return ens.weights @ f(ens.points)


def estimate_i_std(ens: WeightedEnsemble, f: VectorFunction, z_bar: float) -> np.ndarray:
    """``(1/(N Z)) Σ w_n f(x_n)`` with a known normalizing constant ``z_bar``."""
    if not z_bar > 0:
        raise NoisyISError(f"estimators: z_bar must be positive, got {z_bar}")
    return _weighted_sum(ens, f) / (len(ens) * z_bar)


def estimate_i_self(ens: WeightedEnsemble, f: VectorFunction) -> np.ndarray:
    """Self-normalized estimate ``Σ w_n f(x_n) / Σ w_n``."""
    total = float(np.sum(ens.weights))
    if not total > 0:
        raise NoisyISError("estimators: weights sum to zero; self-normalized estimate undefined")
    return _weighted_sum(ens, f) / total


def ess_proxy(weights: np.ndarray) -> float:
    """``(Σ w)^2 / Σ w^2``, between 1 and N."""
    w = np.asarray(weights, dtype=float)
    # rescale first: raw weights can overflow when squared
    scale = np.max(w)
    if not scale > 0:
        return float("nan")
    w = w / scale
    return float(np.sum(w) ** 2 / np.sum(w * w))


@dataclass(frozen=True)
class EstimatorReport:
    z_hat: float
    i_self: np.ndarray
    n: int
    ess_proxy: float
    i_std: np.ndarray | None = None
    z_clean: float = float("nan")
    floor_hits: int = 0


def report(ens: WeightedEnsemble, f: VectorFunction, z_bar: float | None = None) -> EstimatorReport:
    z_hat = estimate_z(ens)
    i_self = estimate_i_self(ens, f) if z_hat > 0 else np.full(f.d_f, np.nan)
    return EstimatorReport(
        z_hat=z_hat,
        i_self=i_self,
        n=len(ens),
        ess_proxy=ess_proxy(ens.weights),
        i_std=None if z_bar is None else estimate_i_std(ens, f, z_bar),
        z_clean=float(np.mean(ens.mean_weights)) if ens.mean_weights is not None else float("nan"),
        floor_hits=ens.floor_hits,
    )


def variance_with_stderr(values: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its standard error from the fourth central moment."""
    v = np.asarray(values, dtype=float)
    M = v.shape[0]
    if M < 2:
        raise NoisyISError(f"estimators: need at least 2 values for a variance, got {M}")
    c = v - v.mean()
    s2 = float(np.sum(c * c) / (M - 1))
    if M < 4:
        return s2, float("nan")
    mu2 = float(np.mean(c * c))
    mu4 = float(np.mean(c**4))
    var_s2 = (mu4 - (M - 3) / (M - 1) * mu2 * mu2) / M
    return s2, float(np.sqrt(max(var_s2, 0.0)))


@dataclass
class ReplicationSummary:
    per_rep: list[EstimatorReport]
    base_seed: int
    mean_z: float = field(init=False)
    var_z: float = field(init=False)
    stderr_var_z: float = field(init=False)
    stderr_mean_z: float = field(init=False)

    def __post_init__(self):
        z = self.z_hats
        self.mean_z = float(np.mean(z))
        self.var_z, self.stderr_var_z = variance_with_stderr(z)
        self.stderr_mean_z = float(np.sqrt(self.var_z / len(z)))

    @property
    def M(self) -> int:
        return len(self.per_rep)

    @property
    def z_hats(self) -> np.ndarray:
        return np.array([r.z_hat for r in self.per_rep])

    @property
    def z_clean(self) -> np.ndarray:
        return np.array([r.z_clean for r in self.per_rep])

    @property
    def i_self(self) -> np.ndarray:
        return np.array([r.i_self for r in self.per_rep])

    @property
    def i_std(self) -> np.ndarray | None:
        if self.per_rep[0].i_std is None:
            return None
        return np.array([r.i_std for r in self.per_rep])

    def summary(self) -> dict:
        out = {
            "M": self.M,
            "N": self.per_rep[0].n,
            "base_seed": self.base_seed,
            "mean_z": self.mean_z,
            "stderr_mean_z": self.stderr_mean_z,
            "var_z": self.var_z,
            "stderr_var_z": self.stderr_var_z,
            "var_z_clean": float(np.var(self.z_clean, ddof=1)),
            "mean_i_self": self.i_self.mean(axis=0).tolist(),
            "var_i_self": self.i_self.var(axis=0, ddof=1).tolist(),
            "floor_hits": int(sum(r.floor_hits for r in self.per_rep)),
        }
        if self.i_std is not None:
            out["mean_i_std"] = self.i_std.mean(axis=0).tolist()
            out["var_i_std"] = self.i_std.var(axis=0, ddof=1).tolist()
        return out

    def csv_rows(self) -> tuple[list[str], list[list[str]]]:
        d_f = len(self.per_rep[0].i_self)
        header = ["rep", "seed", "z_hat", "z_clean", "ess_proxy"]
        header += [f"i_self_{p}" for p in range(d_f)]
        has_std = self.per_rep[0].i_std is not None
        if has_std:
            header += [f"i_std_{p}" for p in range(d_f)]
        rows = []
        for i, r in enumerate(self.per_rep):
            vals = [r.z_hat, r.z_clean, r.ess_proxy, *r.i_self]
            if has_std:
                vals += list(r.i_std)
            rows.append([str(i), str(replication_seed(self.base_seed, i))] + [fmt(v) for v in vals])
        return header, rows

    def to_csv(self, path) -> None:
        header, rows = self.csv_rows()
        write_csv(path, header, rows)

    def to_json(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def fmt(value: float) -> str:
    return f"{float(value):.17g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _one_replication(noise, proposal, f, N, seed, z_bar):
    ens = run_noisy_is(noise, proposal, N, stream(seed), seed=seed)
    return report(ens, f, z_bar)


def replicate(noise: NoiseModel, proposal: Proposal, f: VectorFunction, N: int, M: int,
              base_seed: int, z_bar: float | None = None, threads: int | None = 1
              ) -> ReplicationSummary:
    """Run ``M`` independent noisy IS estimates; replication ``i`` uses seed ``base_seed + i``.

    Results are folded in replication order, so the summary does not depend
    on ``threads``.
    """
    if M < 2:
        raise NoisyISError(f"estimators: M must be >= 2, got {M}")
    threads = threads or os.cpu_count() or 1

    def work(i):
        try:
            return _one_replication(noise, proposal, f, N, replication_seed(base_seed, i), z_bar)
        except NoisyISError as exc:
            raise NoisyISError(f"{exc} (replication {i})") from exc

    if threads == 1:
        reports = [work(i) for i in range(M)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(work, range(M)))
    return ReplicationSummary(reports, base_seed)
