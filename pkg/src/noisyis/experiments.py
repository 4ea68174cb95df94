"""Variance-ratio experiments with lognormal multiplicative noise.

Two targets are studied, each with ``m~(x) = p(x) e^eps``,
``eps ~ N(-sigma(x)^2 / 2, sigma(x)^2)``:

* ``uniform``: ``p = 1/(b - a)`` on ``[a, b]`` with ``sigma(x) = A |log x|``;
* ``gaussian``: ``p = N(x | 0, 1)`` truncated to ``[-c, c]`` with
  ``sigma(x) = A |x|^(1/2)``.

For every noise level ``A`` the variance of ``Z_hat`` under the noise-aware
optimal proposal is compared with the variance under ``q = p``, both from the
closed-form integrals and from replicated runs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoisyISError
from .estimators import fmt, replicate, write_csv
from .models import (
    NoiseModel,
    TargetFunction,
    gaussian_target,
    identity_function,
    log_sigma,
    make_multiplicative_lognormal_noise,
    sqrt_sigma,
    uniform_target,
)
from .proposals import (
    DEFAULT_GRID,
    Proposal,
    build_proposal_from_shape,
    optimal_proposal_for_z,
    target_proposal,
)
from .variance import DEFAULT_NODES, QuadratureSpec, quadrature, v_min, v_sub_opt, var_z_theoretical

DEFAULT_A_GRID = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)
KINDS = ("uniform", "gaussian")
TRUNCATION_TOLERANCE = 1e-8

RATIO_COLUMNS = [
    "A", "v_opt_theory", "v_subopt_theory", "ratio_theory",
    "v_opt_emp", "v_subopt_emp", "ratio_emp", "stderr_ratio_emp",
]


@dataclass
class ExperimentConfig:
    kind: str = "uniform"
    a: float = 0.1
    b: float = 10.0
    trunc: float = 12.0
    A_grid: tuple = DEFAULT_A_GRID
    N: int = 100
    M: int = 5000
    base_seed: int = 1
    grid_nodes: int = DEFAULT_GRID
    quad_nodes: int = DEFAULT_NODES
    closed_form: bool = False
    threads: int | None = 1

    def __post_init__(self):
        self.A_grid = tuple(float(A) for A in self.A_grid)
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise NoisyISError(f"experiments: kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise NoisyISError(f"experiments: need a < b, got a={self.a}, b={self.b}")
        if self.kind == "uniform" and self.a <= 0:
            raise NoisyISError(f"experiments: log noise profile needs a > 0, got a={self.a}")
        if not self.trunc > 0:
            raise NoisyISError(f"experiments: trunc must be positive, got {self.trunc}")
        bad = [A for A in self.A_grid if not A > 0]
        if bad:
            raise NoisyISError(f"experiments: every A must satisfy A > 0, got {bad[0]}")
        if self.N < 2:
            raise NoisyISError(f"experiments: N must be >= 2, got {self.N}")
        if self.M < 2:
            raise NoisyISError(f"experiments: M must be >= 2, got {self.M}")

    def target(self) -> TargetFunction:
        if self.kind == "uniform":
            return uniform_target(self.a, self.b)
        return gaussian_target(self.trunc)

    def sigma_fn(self, A: float):
        return log_sigma(A) if self.kind == "uniform" else sqrt_sigma(A)

    def noise(self, A: float) -> NoiseModel:
        return make_multiplicative_lognormal_noise(self.target(), self.sigma_fn(A))

    def quad_spec(self) -> QuadratureSpec:
        return QuadratureSpec(self.target().support, self.quad_nodes)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["A_grid"] = list(self.A_grid)
        # results never depend on the thread count
        d.pop("threads")
        return d


def truncation_mass_error(cfg: ExperimentConfig) -> float:
    """Mass of the Gaussian target lost by truncating to ``[-c, c]``, estimated against ``[-2c, 2c]``."""
    if cfg.kind != "gaussian":
        return 0.0
    p = gaussian_target(2 * cfg.trunc)
    inner = quadrature(p, QuadratureSpec((-cfg.trunc, cfg.trunc), cfg.quad_nodes))
    outer = quadrature(p, QuadratureSpec((-2 * cfg.trunc, 2 * cfg.trunc), 2 * cfg.quad_nodes - 1))
    return abs(outer - inner)


def closed_form_proposal(cfg: ExperimentConfig, A: float) -> Proposal:
    """Alternative shape ``p(x) exp(sigma(x)^2)``, kept for comparison with the optimum."""
    target, sigma = cfg.target(), cfg.sigma_fn(A)
    return build_proposal_from_shape(lambda x: target(x) * np.exp(sigma(x) ** 2),
                                     target.support, cfg.grid_nodes, name="closed-form")


def optimal_proposal(cfg: ExperimentConfig, A: float) -> Proposal:
    if cfg.closed_form:
        return closed_form_proposal(cfg, A)
    return optimal_proposal_for_z(cfg.noise(A), G=cfg.grid_nodes)


@dataclass(frozen=True)
class RatioPoint:
    A: float
    v_opt_theory: float
    v_subopt_theory: float
    ratio_theory: float
    v_opt_emp: float
    v_subopt_emp: float
    ratio_emp: float
    stderr_ratio_emp: float
    stderr_v_opt_emp: float = float("nan")
    stderr_v_subopt_emp: float = float("nan")

    def row(self) -> list[str]:
        return [fmt(getattr(self, c)) for c in RATIO_COLUMNS]


@dataclass
class RatioCurve:
    config: ExperimentConfig
    points: list[RatioPoint] = field(default_factory=list)
    truncation_error: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def to_csv(self, path) -> None:
        write_csv(path, RATIO_COLUMNS, [p.row() for p in self.points])

    def summary(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "seeds": {"base_seed": self.config.base_seed,
                      "replication_seeds": f"base_seed + i, i = 0..{self.config.M - 1}"},
            "truncation_error": self.truncation_error,
            "points": [asdict(p) for p in self.points],
        }

    def to_json(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def ratio_stderr(num: float, se_num: float, den: float, se_den: float) -> float:
    """Delta-method standard error of ``num / den`` for independent estimates."""
    r = num / den
    return abs(r) * float(np.hypot(se_num / num, se_den / den))


def ratio_point(cfg: ExperimentConfig, A: float, empirical: bool = True) -> RatioPoint:
    noise = cfg.noise(A)
    spec = cfg.quad_spec()
    q_opt = optimal_proposal(cfg, A)
    q_sub = target_proposal(noise, G=cfg.grid_nodes)
    if cfg.closed_form:
        v_opt = var_z_theoretical(noise, q_opt, cfg.N, spec)
    else:
        v_opt = v_min(noise, cfg.N, spec)
    v_sub = v_sub_opt(noise, cfg.N, spec)
    ratio = v_sub / v_opt if v_opt > 0 else float("nan")
    if not empirical:
        nan = float("nan")
        return RatioPoint(A, v_opt, v_sub, ratio, nan, nan, nan, nan)
    f = identity_function()
    opt = replicate(noise, q_opt, f, cfg.N, cfg.M, cfg.base_seed, threads=cfg.threads)
    sub = replicate(noise, q_sub, f, cfg.N, cfg.M, cfg.base_seed, threads=cfg.threads)
    return RatioPoint(
        A=A,
        v_opt_theory=v_opt,
        v_subopt_theory=v_sub,
        ratio_theory=ratio,
        v_opt_emp=opt.var_z,
        v_subopt_emp=sub.var_z,
        ratio_emp=sub.var_z / opt.var_z,
        stderr_ratio_emp=ratio_stderr(sub.var_z, sub.stderr_var_z, opt.var_z, opt.stderr_var_z),
        stderr_v_opt_emp=opt.stderr_var_z,
        stderr_v_subopt_emp=sub.stderr_var_z,
    )


def _run(cfg: ExperimentConfig, empirical: bool) -> RatioCurve:
    curve = RatioCurve(cfg, truncation_error=truncation_mass_error(cfg))
    if curve.truncation_error > TRUNCATION_TOLERANCE:
        warnings.warn(f"experiments: truncation mass error {curve.truncation_error:.3g} "
                      f"exceeds {TRUNCATION_TOLERANCE:g} at c={cfg.trunc}")
    for A in cfg.A_grid:
        try:
            curve.points.append(ratio_point(cfg, A, empirical))
        except NoisyISError as exc:
            raise NoisyISError(f"{exc} (A={A})") from exc
    return curve


def run_uniform_experiment(cfg: ExperimentConfig, empirical: bool = True) -> RatioCurve:
    if cfg.kind != "uniform":
        raise NoisyISError(f"experiments: expected kind 'uniform', got {cfg.kind!r}")
    return _run(cfg, empirical)


def run_gaussian_experiment(cfg: ExperimentConfig, empirical: bool = True) -> RatioCurve:
    if cfg.kind != "gaussian":
        raise NoisyISError(f"experiments: expected kind 'gaussian', got {cfg.kind!r}")
    return _run(cfg, empirical)


def run_experiment(cfg: ExperimentConfig, empirical: bool = True) -> RatioCurve:
    return (run_uniform_experiment if cfg.kind == "uniform" else run_gaussian_experiment)(cfg, empirical)


def plotting_grid(cfg: ExperimentConfig, n: int = 1000) -> np.ndarray:
    """``n`` plotting abscissae; the uniform grid contains x = 1 and the Gaussian grid is symmetric."""
    if cfg.kind == "uniform":
        extra = [1.0] if cfg.a < 1.0 < cfg.b else []
        base = np.linspace(cfg.a, cfg.b, n - len(extra))
        return np.union1d(base, extra)
    x = np.linspace(-cfg.trunc, cfg.trunc, n)
    return 0.5 * (x - x[::-1])


def emit_proposal_curves(cfg: ExperimentConfig, A_list=None, n: int = 1000):
    """Table with columns ``x, p, q_opt_A, s_A, ...`` over a plotting grid.

    ``p`` is the normalized target and ``s_A`` the noise standard deviation.
    """
    A_list = cfg.A_grid if A_list is None else tuple(float(A) for A in A_list)
    x = plotting_grid(cfg, n)
    target = cfg.target()
    z = quadrature(target, cfg.quad_spec())
    header = ["x", "p"]
    columns = [x, target(x) / z]
    for A in A_list:
        noise = cfg.noise(A)
        header += [f"q_opt_{A:g}", f"s_{A:g}"]
        columns += [optimal_proposal(cfg, A).density(x), np.sqrt(noise.variance(x))]
    table = np.column_stack(columns)
    return header, table


def write_proposal_curves(path, header, table) -> None:
    write_csv(path, header, [[fmt(v) for v in row] for row in table])
