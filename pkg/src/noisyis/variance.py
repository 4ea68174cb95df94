"""Theoretical variances of noisy IS estimators, evaluated by quadrature.

Expectations under the proposal are written as plain integrals before
discretizing, e.g. ``E_q[(m^2 + s^2) / q^2] = ∫ (m^2 + s^2) / q dx``, so the
proposal density never cancels numerically.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NoisyISError
from .models import NoiseModel, VectorFunction
from .proposals import Proposal

DEFAULT_NODES = 2**14 + 1
_Q_FLOOR = 1e-300


@dataclass(frozen=True)
class QuadratureSpec:
    interval: tuple[float, float]
    nodes: int = DEFAULT_NODES
    rule: str = "simpson"

    def __post_init__(self):
        if self.rule not in ("simpson", "trapezoid"):
            raise NoisyISError(f"variance: unknown quadrature rule {self.rule!r}")
        if self.rule == "simpson" and (self.nodes < 3 or self.nodes % 2 == 0):
            raise NoisyISError(f"variance: Simpson needs an odd node count >= 3, got {self.nodes}")
        if self.nodes < 2:
            raise NoisyISError(f"variance: need at least 2 nodes, got {self.nodes}")
        lo, hi = self.interval
        if not lo < hi:
            raise NoisyISError(f"variance: empty interval {self.interval}")

    def abscissae(self) -> np.ndarray:
        return np.linspace(self.interval[0], self.interval[1], self.nodes)

    def weights(self) -> np.ndarray:
        lo, hi = self.interval
        h = (hi - lo) / (self.nodes - 1)
        w = np.ones(self.nodes)
        if self.rule == "trapezoid":
            w[0] = w[-1] = 0.5
            return w * h
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * h / 3.0

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.interval, 2 * self.nodes - 1, self.rule)


def _spec_for(obj, spec: QuadratureSpec | None) -> QuadratureSpec:
    return spec if spec is not None else QuadratureSpec(obj.support)


def integrate_values(values: np.ndarray, spec: QuadratureSpec, x=None) -> float:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        x = spec.abscissae() if x is None else x
        raise NoisyISError(f"variance: integrand is not finite at node x={float(x[bad][0])!r}")
    return float(spec.weights() @ values)


def quadrature(g, spec: QuadratureSpec) -> float:
    """Composite-rule approximation of the integral of ``g`` over ``spec.interval``."""
    x = spec.abscissae()
    return integrate_values(np.asarray(g(x), dtype=float), spec, x)


def _ratio_to_q(numerator, qv, x, what="proposal"):
    """``numerator / q`` with a support check where ``numerator`` is non-zero."""
    bad = (np.abs(numerator) > 0) & (qv < _Q_FLOOR)
    if bad.any():
        raise NoisyISError(
            f"variance: {what} density vanishes at x={float(x[bad][0])!r} where the integrand does not"
        )
    out = np.zeros_like(numerator)
    ok = qv >= _Q_FLOOR
    out[ok] = numerator[ok] / qv[ok]
    return out


def z_bar(noise: NoiseModel, spec: QuadratureSpec | None = None) -> float:
    """``∫ m(x) dx``."""
    return quadrature(noise.mean, _spec_for(noise, spec))


def var_z_theoretical(noise: NoiseModel, q: Proposal, N: int,
                      spec: QuadratureSpec | None = None) -> float:
    """``Var[Z_hat] = (1/N) ∫ (m^2 + s^2) / q dx - Z^2 / N``."""
    spec = _spec_for(q, spec)
    x = spec.abscissae()
    m = noise.mean(x)
    second = m * m + noise.variance(x)
    z = integrate_values(m, spec, x)
    return (integrate_values(_ratio_to_q(second, q.density(x), x), spec, x) - z * z) / N


def var_z_decomposition(noise: NoiseModel, q: Proposal, N: int,
                        spec: QuadratureSpec | None = None) -> tuple[float, float]:
    """Split ``Var[Z_hat]`` into the noise term and the exact-evaluation IS variance.

    Returns ``((1/N) ∫ s^2 / q, (1/N)(∫ m^2 / q - Z^2))``.
    """
    spec = _spec_for(q, spec)
    x = spec.abscissae()
    m = noise.mean(x)
    qv = q.density(x)
    z = integrate_values(m, spec, x)
    noise_term = integrate_values(_ratio_to_q(noise.variance(x), qv, x), spec, x) / N
    classical = (integrate_values(_ratio_to_q(m * m, qv, x), spec, x) - z * z) / N
    return noise_term, classical


def v_min(noise: NoiseModel, N: int, spec: QuadratureSpec | None = None) -> float:
    """Smallest attainable ``Var[Z_hat]``: ``(1/N)[(∫ sqrt(m^2 + s^2))^2 - Z^2]``.

    Evaluated as ``(1/N)(∫ r - Z)(∫ r + Z)`` with ``r - m = s^2 / (r + m)``,
    which stays accurate when the noise is tiny.
    """
    spec = _spec_for(noise, spec)
    x = spec.abscissae()
    m = noise.mean(x)
    s2 = noise.variance(x)
    root = np.sqrt(m * m + s2)
    denom = root + m
    excess = np.divide(s2, denom, out=np.zeros_like(s2), where=denom > 0)
    z = integrate_values(m, spec, x)
    gap = integrate_values(excess, spec, x)
    return gap * (gap + 2.0 * z) / N


def v_sub_opt(noise: NoiseModel, N: int, spec: QuadratureSpec | None = None) -> float:
    """``Var[Z_hat]`` under ``q = m / Z``: ``(Z / N) ∫ s^2 / m dx``."""
    spec = _spec_for(noise, spec)
    x = spec.abscissae()
    m = noise.mean(x)
    s2 = noise.variance(x)
    bad = (s2 > 0) & (m <= 0)
    if bad.any():
        raise NoisyISError(f"variance: s^2 > 0 where m = 0 at x={float(x[bad][0])!r}; V_sub-opt undefined")
    ratio = np.divide(s2, m, out=np.zeros_like(s2), where=m > 0)
    return integrate_values(m, spec, x) * integrate_values(ratio, spec, x) / N


def _component(f: VectorFunction, x, p_index: int) -> np.ndarray:
    if not 0 <= p_index < f.d_f:
        raise NoisyISError(f"variance: component {p_index} out of range for d_f={f.d_f}")
    return f(x)[:, p_index]


def integral_of_f_times_mean(noise: NoiseModel, f: VectorFunction, p_index: int,
                             spec: QuadratureSpec | None = None) -> float:
    """``E_p = ∫ f_p(x) m(x) dx``."""
    spec = _spec_for(noise, spec)
    x = spec.abscissae()
    return integrate_values(_component(f, x, p_index) * noise.mean(x), spec, x)


def var_e_component(noise, q, f, p_index, e_p, N, spec=None) -> float:
    """``Var[E_hat_p] = (1/N) ∫ f_p^2 (m^2 + s^2) / q - E_p^2 / N``."""
    spec = _spec_for(q, spec)
    x = spec.abscissae()
    fp = _component(f, x, p_index)
    num = fp * fp * noise.second_moment(x)
    return (integrate_values(_ratio_to_q(num, q.density(x), x), spec, x) - e_p * e_p) / N


def var_i_std_component(noise: NoiseModel, q: Proposal, f: VectorFunction, p_index: int,
                        z_bar: float, i_p: float, N: int,
                        spec: QuadratureSpec | None = None) -> float:
    """Variance of the ``p``-th component of ``I_std`` (known normalizing constant)."""
    if not z_bar > 0:
        raise NoisyISError(f"variance: z_bar must be positive, got {z_bar}")
    return var_e_component(noise, q, f, p_index, i_p * z_bar, N, spec) / (z_bar * z_bar)


def cov_e_z(noise: NoiseModel, q: Proposal, f: VectorFunction, p_index: int, e_p: float,
            z_bar: float, N: int, spec: QuadratureSpec | None = None) -> float:
    """``Cov[E_hat_p, Z_hat] = (1/N) ∫ f_p (m^2 + s^2) / q - E_p Z / N``."""
    spec = _spec_for(q, spec)
    x = spec.abscissae()
    num = _component(f, x, p_index) * noise.second_moment(x)
    return (integrate_values(_ratio_to_q(num, q.density(x), x), spec, x) - e_p * z_bar) / N


def var_i_self_component(noise: NoiseModel, q: Proposal, f: VectorFunction, p_index: int,
                         N: int, spec: QuadratureSpec | None = None) -> float:
    """Delta-method variance of the ``p``-th self-normalized estimate.

    ``Var[E/Z] ≈ Var[E]/Z^2 - 2 E Cov[E, Z]/Z^3 + E^2 Var[Z]/Z^4``. Valid for
    large ``N``; see :func:`var_i_self_consolidated` for the equivalent
    single-integral form.
    """
    spec = _spec_for(q, spec)
    z = z_bar(noise, spec)
    e_p = integral_of_f_times_mean(noise, f, p_index, spec)
    var_e = var_e_component(noise, q, f, p_index, e_p, N, spec)
    cov = cov_e_z(noise, q, f, p_index, e_p, z, N, spec)
    var_z = var_z_theoretical(noise, q, N, spec)
    return var_e / z**2 - 2.0 * e_p * cov / z**3 + e_p**2 * var_z / z**4


def var_i_self_consolidated(noise: NoiseModel, q: Proposal, f: VectorFunction, p_index: int,
                            N: int, spec: QuadratureSpec | None = None) -> float:
    """``(1/(N Z^2)) ∫ (m^2 + s^2)(f_p - I_p)^2 / q dx``."""
    spec = _spec_for(q, spec)
    x = spec.abscissae()
    m = noise.mean(x)
    fp = _component(f, x, p_index)
    z = integrate_values(m, spec, x)
    i_p = integrate_values(fp * m, spec, x) / z
    num = noise.second_moment(x) * (fp - i_p) ** 2
    return integrate_values(_ratio_to_q(num, q.density(x), x), spec, x) / (N * z * z)


@dataclass(frozen=True)
class VarianceReport:
    v_q: float
    v_min: float
    v_sub_opt: float
    ratio: float
    n: int
    z_bar: float

    def as_dict(self) -> dict:
        return asdict(self)


def variance_report(noise: NoiseModel, q: Proposal, N: int,
                    spec: QuadratureSpec | None = None) -> VarianceReport:
    spec = _spec_for(noise, spec)
    vmin = v_min(noise, N, spec)
    vsub = v_sub_opt(noise, N, spec)
    ratio = vsub / vmin if vmin > 0 else float("nan")
    return VarianceReport(
        v_q=var_z_theoretical(noise, q, N, spec),
        v_min=vmin,
        v_sub_opt=vsub,
        ratio=ratio,
        n=N,
        z_bar=z_bar(noise, spec),
    )
