import numpy as np
import pytest
from helpers import random_corr, random_spd
from hypothesis import given
from hypothesis import strategies as st

from spdflow import baselines, flow
from spdflow import geometry as geo
from spdflow.data import SyntheticSpec, synth_generate
from spdflow.errors import InvalidInput, MissingClass
from spdflow.metrics import constraint_report, precision_recall_curves
from spdflow.sampler import IntegratorSpec, sample_manifold
from spdflow.triang import triang_embed, triang_restore, triang_unembed


def gaussian_source(mean, factor):
    return flow.ConditionalGaussianSource((0,), mean[None], factor[None], np.array([1]))


class TestDiffeoGauss:
    @pytest.mark.parametrize("manifold", geo.MANIFOLDS)
    def test_zero_covariance_gives_mean(self, manifold):
        m = geo.embed_dim(3, manifold)
        mu = np.linspace(-0.5, 0.5, m)
        out = baselines.diffeo_gauss_sample(gaussian_source(mu, np.zeros((m, m))), 0, 5, 0, manifold)
        np.testing.assert_allclose(out, np.broadcast_to(geo.phi_inv(mu, manifold), out.shape), atol=1e-14)

    def test_mean_of_many_samples(self):
        m = geo.embed_dim(3, "spd")
        mu = np.full(m, 0.2)
        out = baselines.diffeo_gauss_sample(gaussian_source(mu, np.eye(m)), 0, 10000, 1, "spd")
        assert np.linalg.norm(geo.frechet_mean(out, "spd") - geo.phi_inv(mu, "spd")) <= 0.05

    @pytest.mark.parametrize("manifold", geo.MANIFOLDS)
    def test_all_valid(self, manifold):
        ds = synth_generate(SyntheticSpec(manifold, 4, 2, 100, 0.5, seed=2))
        src = baselines.fit_diffeo_gauss(ds)
        out = baselines.diffeo_gauss_sample(src, 1, 10000, 3, manifold)
        assert tuple(constraint_report(out, manifold)) == (1.0, 1.0, 1.0)

    def test_unknown_class(self):
        src = gaussian_source(np.zeros(3), np.eye(3))
        with pytest.raises(MissingClass):
            baselines.diffeo_gauss_sample(src, 4, 2, 0, "spd")


class TestTriangular:
    def test_dimensions(self):
        c = random_corr(np.random.default_rng(0), 5)
        assert triang_embed(c, "corr").shape == (10,)
        assert triang_embed(c, "spd").shape == (15,)

    def test_spd_norm_is_frobenius(self):
        s = random_spd(np.random.default_rng(1), 4)
        assert abs(np.linalg.norm(triang_embed(s, "spd")) - np.linalg.norm(s)) <= 1e-12

    def test_bijective_onto_symmetric(self):
        v = np.random.default_rng(2).standard_normal(6)
        np.testing.assert_array_equal(triang_embed(triang_unembed(v, "corr"), "corr"), v)

    def test_valid_corr_round_trips(self):
        c = random_corr(np.random.default_rng(3), 4, spread=0.5)
        out = triang_restore(triang_embed(c, "corr"), "corr")
        np.testing.assert_allclose(out, c, atol=1e-15)

    @given(st.integers(0, 10000), st.integers(2, 6))
    def test_identity_on_valid_spd(self, seed, d):
        s = random_spd(np.random.default_rng(seed), d, spread=0.5)
        np.testing.assert_allclose(triang_restore(triang_embed(s, "spd"), "spd"), s, atol=1e-14)

    def test_invalid_vector_projected(self):
        out = triang_restore(np.array([1.1]), "corr")
        np.testing.assert_array_equal(np.diag(out), [1.0, 1.0])
        assert abs(np.linalg.eigvalsh(out)[0] - 1e-8) <= 1e-10

    def test_unprojected_can_be_invalid(self):
        out = triang_restore(np.array([1.1]), "corr", project=False)
        assert np.linalg.eigvalsh(out)[0] < 0


@pytest.fixture(scope="module")
def adversarial():
    """High-variance correlation target where straight lines in raw entries
    leave the elliptope."""
    ds = synth_generate(SyntheticSpec("corr", 8, 2, 200, 1.5, seed=0, separation=1.0))
    cfg = flow.TrainConfig(manifold="corr", epochs=30, hidden_dims=(64,), seed=0)
    model, src, _ = baselines.train_triang_cfm(ds, cfg)
    return ds, model, src


class TestTriangCfm:
    def test_projection_needed(self, adversarial):
        _, model, src = adversarial
        spec = IntegratorSpec("rk4", 20)
        raw = baselines.sample_triang_cfm(model, src, 0, 300, spec, seed=0, project=False)
        assert constraint_report(raw, "corr").positive_definite < 1.0
        fixed = baselines.sample_triang_cfm(model, src, 0, 300, spec, seed=0)
        assert tuple(constraint_report(fixed, "corr")) == (1.0, 1.0, 1.0)

    def test_deterministic(self, adversarial):
        ds, model, src = adversarial
        cfg = flow.TrainConfig(manifold="corr", epochs=30, hidden_dims=(64,), seed=0)
        model2, _, _ = baselines.train_triang_cfm(ds, cfg)
        for a, b in zip(model.params.arrays(), model2.params.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_quality_gap_against_chart_flow(self):
        # both flows get the same budget; the chart flow should fit at least as well
        ds = synth_generate(SyntheticSpec("corr", 6, 2, 300, 1.0, seed=4))
        cfg = flow.TrainConfig(manifold="corr", epochs=40, hidden_dims=(64,), seed=1)
        scores = {}
        for name in ("diffeocfm", "triangcfm"):
            model, src = baselines.fit_method(name, ds, cfg)
            gen = sample_manifold(model, src, 0, 300, IntegratorSpec("rk4", 20), seed=2)
            real = ds.matrices[ds.labels == 0]
            scores[name] = precision_recall_curves(geo.phi(real, "corr"), geo.phi(gen, "corr")).ab_f1
        assert scores["diffeocfm"] - scores["triangcfm"] > 0.3

    def test_unknown_method(self):
        with pytest.raises(InvalidInput):
            baselines.fit_method("corrgan", synth_generate(SyntheticSpec("spd", 2, 1, 4, 0.3)))
