import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from conftest import gaussian_noise, uniform_noise
from noisyis.errors import NoisyISError
from noisyis.models import (
    TargetFunction,
    VectorFunction,
    constant_function,
    constant_fn,
    gaussian_target,
    identity_function,
    make_folded_gaussian_noise,
    make_multiplicative_lognormal_noise,
    one_and_x_function,
    uniform_target,
    zero_noise,
)
from noisyis.proposals import (
    build_proposal_from_shape,
    optimal_proposal_for_self,
    optimal_proposal_for_std,
    optimal_proposal_for_z,
    random_uniform_mixture,
    target_proposal,
)


def normalized_on_grid(shape, q):
    """Reference normalization: trapezoid over the proposal's own nodes."""
    nodes = q.grid.nodes
    return shape(nodes) / integrate.trapezoid(shape(nodes), nodes)


def test_uniform_inverse_cdf():
    q = build_proposal_from_shape(lambda x: np.ones_like(x), (0.0, 10.0))
    assert q.inverse_cdf(0.3) == pytest.approx(3.0, abs=1e-12)


def test_linear_shape_density():
    q = build_proposal_from_shape(lambda x: x, (0.0, 1.0))
    assert q.density(0.5) == pytest.approx(1.0, abs=1e-12)
    # linear density is represented exactly
    np.testing.assert_allclose(q.density(np.linspace(0, 1, 37)), 2 * np.linspace(0, 1, 37),
                               atol=1e-12)


def test_inverse_cdf_is_exact_inverse():
    q = optimal_proposal_for_z(gaussian_noise(1.5))
    u = np.linspace(0, 1, 2001)[1:-1]
    np.testing.assert_allclose(q.cdf(q.inverse_cdf(u)), u, atol=1e-12)


def test_flat_regions_never_sampled():
    q = build_proposal_from_shape(lambda x: np.where(x > 0.5, 1.0, 0.0), (0.0, 1.0), G=10)
    x = q.sample(np.random.default_rng(0), 10**5)
    assert x.min() >= 0.5 - 1e-12
    assert np.all(q.density(x) > 0)


@pytest.mark.parametrize("builder", [
    lambda: optimal_proposal_for_z(uniform_noise(1.2)),
    lambda: optimal_proposal_for_z(gaussian_noise(1.5)),
    lambda: target_proposal(gaussian_noise(0.6)),
    lambda: optimal_proposal_for_self(gaussian_noise(0.6), identity_function(), [0.0]),
], ids=["uniform-opt", "gauss-opt", "gauss-target", "gauss-self"])
def test_samples_pass_ks(builder):
    q = builder()
    x = q.sample(np.random.default_rng(11), 10**5)
    lo, hi = q.support
    assert x.min() >= lo and x.max() <= hi
    assert stats.kstest(x, q.cdf).pvalue > 0.01


@pytest.mark.parametrize("builder", [
    lambda: optimal_proposal_for_z(uniform_noise(1.2)),
    lambda: optimal_proposal_for_z(gaussian_noise(0.8)),
    lambda: random_uniform_mixture(np.random.default_rng(3), (0.1, 10.0)),
])
def test_normalization_independent_quadrature(builder):
    q = builder()
    lo, hi = q.support
    G = len(q.grid.nodes) - 1
    x = np.linspace(lo, hi, 4 * G + 1)
    assert integrate.simpson(q.density(x), x=x) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=1e-6, max_value=1e6))
def test_scale_invariance(c):
    shape = lambda x: np.exp(-x * x) * (1 + np.sin(3 * x) ** 2)
    q1 = build_proposal_from_shape(shape, (-3, 3), G=512)
    q2 = build_proposal_from_shape(lambda x: c * shape(x), (-3, 3), G=512)
    x = np.linspace(-3, 3, 1001)
    np.testing.assert_allclose(q2.density(x), q1.density(x), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("shape", [
    lambda x: np.zeros_like(x),
    lambda x: np.where(x > 0, np.inf, 1.0),
    lambda x: -np.ones_like(x),
], ids=["zero", "inf", "negative"])
def test_construction_errors(shape):
    with pytest.raises(NoisyISError):
        build_proposal_from_shape(shape, (-1, 1))


def test_optimal_z_without_noise_is_normalized_mean():
    target = gaussian_target(12.0)
    q = optimal_proposal_for_z(zero_noise(target))
    np.testing.assert_allclose(q.grid.density_values, normalized_on_grid(target, q), atol=1e-12)


def test_optimal_z_constant_multiplicative_matches_target():
    target = gaussian_target(12.0)
    noise = make_multiplicative_lognormal_noise(target, constant_fn(0.9))
    q = optimal_proposal_for_z(noise)
    np.testing.assert_allclose(q.grid.density_values, normalized_on_grid(target, q), atol=1e-12)


def test_optimal_z_folded_gaussian_shape():
    target = gaussian_target(6.0)
    sigma = 0.3
    q = optimal_proposal_for_z(make_folded_gaussian_noise(target, sigma))
    nodes = q.grid.nodes
    np.testing.assert_allclose(q.grid.unnorm_values, np.sqrt(target(nodes) ** 2 + sigma**2),
                               rtol=1e-12, atol=1e-12)


def test_std_constant_f_equals_z_proposal():
    noise = uniform_noise(0.8)
    f = VectorFunction(lambda x: np.tile([3.0, -4.0], (x.shape[0], 1)), 2)
    q_std = optimal_proposal_for_std(noise, f)
    q_z = optimal_proposal_for_z(noise)
    np.testing.assert_allclose(q_std.grid.density_values, q_z.grid.density_values, rtol=1e-12)


def test_std_linear_f_without_noise():
    target = TargetFunction(lambda x: np.ones_like(x), (0.0, 1.0))
    q = optimal_proposal_for_std(zero_noise(target), identity_function())
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(q.density(x), 2 * x, atol=1e-12)


def test_std_two_component_shape():
    noise = gaussian_noise(0.7)
    q = optimal_proposal_for_std(noise, one_and_x_function())
    x = q.grid.nodes
    expected = np.sqrt(1 + x * x) * np.sqrt(noise.mean(x) ** 2 + noise.variance(x))
    np.testing.assert_allclose(q.grid.unnorm_values, expected, rtol=1e-12, atol=1e-300)


def test_self_bimodal_around_pilot():
    target = TargetFunction(lambda x: np.full_like(x, 0.5), (-1.0, 1.0))
    q = optimal_proposal_for_self(zero_noise(target), identity_function(), [0.0])
    assert q.density(0.0) == 0.0
    x = np.linspace(0.1, 1, 10)
    np.testing.assert_allclose(q.density(x), q.density(-x), atol=1e-12)
    np.testing.assert_allclose(q.density(x), np.abs(x), atol=1e-12)


def test_self_degenerate_shape_rejected():
    with pytest.raises(NoisyISError):
        optimal_proposal_for_self(uniform_noise(0.5), constant_function(2.0), [2.0])


def test_self_gaussian_shape():
    noise = gaussian_noise(0.6)
    q = optimal_proposal_for_self(noise, identity_function(), [0.0])
    x = q.grid.nodes
    expected = np.abs(x) * np.sqrt(noise.mean(x) ** 2 + noise.variance(x))
    np.testing.assert_allclose(q.grid.unnorm_values, expected, rtol=1e-12, atol=1e-300)


def test_self_pilot_length_checked():
    with pytest.raises(NoisyISError):
        optimal_proposal_for_self(uniform_noise(0.5), identity_function(), [0.0, 1.0])


def test_csv_export(tmp_path):
    q = build_proposal_from_shape(lambda x: x, (0.0, 1.0), G=4)
    path = tmp_path / "q.csv"
    q.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,density"
    assert len(lines) == 6
    assert lines[-1] == "1,2"
