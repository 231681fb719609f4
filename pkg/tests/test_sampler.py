import numpy as np
import pytest

from spdflow import flow, sampler
from spdflow import geometry as geo
from spdflow.errors import DivergedTrajectory, InvalidInput
from spdflow.metrics import constraint_report

SCHEMES = sorted(sampler.TABLEAUX)


def constant_model(manifold, d, velocity):
    """Network whose output is ``velocity`` for every input."""
    model = flow.new_model(manifold, d, (0,), (), seed=0)
    model.params.weights[0][...] = 0.0
    model.params.biases[0][...] = velocity
    return model


def point_source(mean):
    m = mean.size
    return flow.ConditionalGaussianSource((0,), mean[None], np.zeros((1, m, m)), np.array([1]))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_zero_and_constant_fields(scheme):
    spec = sampler.IntegratorSpec(scheme, 7)
    z0 = np.array([1.0, -2.0])
    np.testing.assert_array_equal(sampler.integrate(lambda t, z, y: np.zeros_like(z), z0, 0, spec), z0)
    c = np.array([0.3, 0.1])
    np.testing.assert_allclose(sampler.integrate(lambda t, z, y: c + 0 * z, z0, 0, spec), z0 + c, atol=1e-15)


def test_exponential_growth():
    out = sampler.integrate(lambda t, z, y: z, np.array([1.0, 2.0]), 0, sampler.IntegratorSpec("rk4", 100))
    np.testing.assert_allclose(out, np.e * np.array([1.0, 2.0]), rtol=1e-8)


@pytest.mark.parametrize("scheme, order", [("euler", 1), ("midpoint", 2), ("rk4", 4)])
def test_convergence_order(scheme, order):
    def field(t, z, y):
        return np.sin(2 * z) + t * t

    z0 = np.array([0.5])
    ref = sampler.integrate(field, z0, 0, sampler.IntegratorSpec("rk4", 4096))
    steps = np.array([8, 16, 32, 64])
    errs = [np.abs(sampler.integrate(field, z0, 0, sampler.IntegratorSpec(scheme, n)) - ref)[0] for n in steps]
    slope = -np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert abs(slope - order) <= 0.5


def test_divergence():
    with pytest.raises(DivergedTrajectory) as info:
        sampler.integrate(lambda t, z, y: 50.0 * z, np.ones(2), 0, sampler.IntegratorSpec("euler", 10))
    assert 1 <= info.value.step <= 10


def test_path_shape():
    path = sampler.integrate(lambda t, z, y: z, np.ones((3, 2)), 0, sampler.IntegratorSpec("midpoint", 5), return_path=True)
    assert path.shape == (6, 3, 2)


def test_bad_spec():
    with pytest.raises(InvalidInput):
        sampler.IntegratorSpec("heun", 10)
    with pytest.raises(InvalidInput):
        sampler.IntegratorSpec("rk4", 0)


@pytest.mark.parametrize("manifold", geo.MANIFOLDS)
@pytest.mark.parametrize("seed", [0, 7])
def test_outputs_valid_for_random_weights(manifold, seed):
    # validity is exact in real arithmetic; in float64 it needs the decoded
    # spectrum to stay representable, which untrained networks easily do
    model = flow.new_model(manifold, 4, (0, 1), (32,), seed=seed)
    m = model.dim
    src = flow.fit_source(np.random.default_rng(0).standard_normal((40, m)), np.repeat([0, 1], 20))
    out = sampler.sample_manifold(model, src, 1, 1000, sampler.IntegratorSpec("rk4", 10), seed=0)
    assert tuple(constraint_report(out, manifold)) == (1.0, 1.0, 1.0)


@pytest.mark.parametrize("manifold", geo.MANIFOLDS)
def test_zero_network_returns_wrapped_source(manifold):
    model = constant_model(manifold, 3, 0.0)
    m = model.dim
    src = flow.fit_source(np.random.default_rng(1).standard_normal((30, m)), np.zeros(30, int))
    out = sampler.sample_manifold(model, src, 0, 5, seed=3)
    z0 = sampler.draw_sources(src, 0, 5, 3)
    np.testing.assert_allclose(out, geo.phi_inv(z0, manifold), atol=1e-12)


@pytest.mark.parametrize("manifold", geo.MANIFOLDS)
def test_constant_field_transport(manifold):
    rng = np.random.default_rng(2)
    m = geo.embed_dim(3, manifold)
    mu0, mu1 = rng.standard_normal(m), rng.standard_normal(m)
    model = constant_model(manifold, 3, mu1 - mu0)
    out = sampler.sample_manifold(model, point_source(mu0), 0, 4, sampler.IntegratorSpec("euler", 13))
    np.testing.assert_allclose(out, np.broadcast_to(geo.phi_inv(mu1, manifold), out.shape), atol=1e-8)


def test_per_sample_streams_do_not_depend_on_batch():
    src = flow.fit_source(np.random.default_rng(0).standard_normal((30, 3)), np.zeros(30, int))
    a = sampler.draw_sources(src, 0, 10, seed=4)
    b = sampler.draw_sources(src, 0, 3, seed=4)
    np.testing.assert_array_equal(a[:3], b)


class TestRiemannianIterates:
    @pytest.mark.parametrize("manifold", geo.MANIFOLDS)
    def test_zero_field_is_stationary(self, manifold):
        x0 = geo.phi_inv(np.full(geo.embed_dim(3, manifold), 0.2), manifold)
        its = sampler.riemannian_rk_oracle(constant_model(manifold, 3, 0.0), x0, 0, sampler.IntegratorSpec("rk4", 3))
        for x in its:
            np.testing.assert_allclose(x, x0, atol=1e-12)

    @pytest.mark.parametrize("manifold", geo.MANIFOLDS)
    def test_single_euler_step(self, manifold):
        model = flow.new_model(manifold, 3, (0,), (8,), seed=2)
        x0 = geo.phi_inv(np.full(model.dim, -0.1), manifold)
        spec = sampler.IntegratorSpec("euler", 4)
        u = geo.diffeo_jvp_inverse(x0, model.velocity(0.0, geo.phi(x0, manifold), 0), manifold)
        its = sampler.riemannian_rk_oracle(model, x0, 0, sampler.IntegratorSpec("euler", 1))
        expected = geo.pullback_exp(x0, u, manifold)
        np.testing.assert_allclose(its[1], expected, atol=1e-9)
        assert spec.h == 0.25

    @pytest.mark.parametrize("manifold", geo.MANIFOLDS)
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_matches_flat_iterates(self, manifold, scheme):
        model = flow.new_model(manifold, 3, (0, 1), (16,), seed=5)
        z0 = np.random.default_rng(8).standard_normal(model.dim) * 0.5
        spec = sampler.IntegratorSpec(scheme, 10)
        path = sampler.integrate(model.velocity, z0, 1, spec, return_path=True)
        its = sampler.riemannian_rk_oracle(model, geo.phi_inv(z0, manifold), 1, spec)
        err = max(np.linalg.norm(x - geo.phi_inv(z, manifold)) for x, z in zip(its, path))
        assert err <= 1e-5
