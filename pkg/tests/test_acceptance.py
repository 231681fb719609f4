"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary under "acceptance criteria".
"""

import json
import time

import numpy as np
import pytest
from conftest import record_acceptance
from helpers import random_point, random_sym
from oracles import logistic_coordinate_descent, logistic_objective
from test_nn import max_rel_error

from spdflow import baselines, flow, metrics, nn, sampler
from spdflow import geometry as geo
from spdflow.cli import main
from spdflow.data import LabeledDataset, SyntheticSpec, synth_generate


def check(number, passed, detail):
    record_acceptance(number, passed, detail)
    assert passed, f"criterion {number}: {detail}"


def test_01_chart_round_trips():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    max_cond = 0.0
    spread = 0.5 * np.log(1e6)
    for manifold in geo.MANIFOLDS:
        dims = rng.integers(2, 17, size=1000)
        for d in np.unique(dims):
            count = int(np.sum(dims == d))
            pts = random_point(rng, int(d), manifold, n=count, spread=spread)
            lam = np.linalg.eigvalsh(pts)
            keep = lam[:, -1] / lam[:, 0] <= 1e6
            pts = pts[keep]
            while pts.shape[0] < count:
                extra = random_point(rng, int(d), manifold, spread=spread)
                lam = np.linalg.eigvalsh(extra)
                if lam[-1] / lam[0] <= 1e6:
                    pts = np.concatenate([pts, extra[None]])
            max_cond = max(max_cond, float(np.max(np.linalg.cond(pts))))
            back = geo.phi_inv(geo.phi(pts, manifold), manifold)
            err = np.linalg.norm(back - pts, axis=(1, 2)) / (1.0 + np.linalg.norm(pts, axis=(1, 2)))
            worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - start
    check(1, worst <= 1e-8 and elapsed < 10.0,
          f"2000 matrices, d in 2..16, cond <= {max_cond:.1e}: max rel error {worst:.2e} (<= 1e-8), {elapsed:.1f}s (< 10s)")


def test_02_loss_equivalence():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    cases = 0
    for manifold in geo.MANIFOLDS:
        for d in (2, 3, 4):
            for rep in range(20):
                model = flow.new_model(manifold, d, (0, 1, 2), (int(rng.integers(8, 33)),), seed=int(rng.integers(1 << 30)))
                for b in model.params.biases:
                    b[...] = 0.1 * rng.standard_normal(b.shape)
                m = model.dim
                z0, z1 = 0.6 * rng.standard_normal((4, m)), 0.6 * rng.standard_normal((4, m))
                y, t = rng.integers(0, 3, 4), rng.uniform(size=4)
                flat, _ = flow.cfm_loss_and_grad(model, z0, z1, y, t)
                riem = flow.riemannian_loss_oracle(model, z0, z1, y, t)
                worst = max(worst, abs(riem - flat) / flat)
                cases += 1
    elapsed = time.perf_counter() - start
    check(2, worst <= 1e-3 and elapsed < 60.0,
          f"{cases} (model, batch) cases, both manifolds, d in 2..4: max rel gap {worst:.2e} (<= 1e-3), {elapsed:.1f}s (< 60s)")


def test_03_runge_kutta_equivalence():
    start = time.perf_counter()
    worst = {}
    for manifold in geo.MANIFOLDS:
        ds = synth_generate(SyntheticSpec(manifold, 3, 2, 60, 0.4, seed=3))
        model, src, _ = flow.train(ds, flow.TrainConfig(manifold=manifold, epochs=20, hidden_dims=(32,), seed=1))
        z0 = sampler.draw_sources(src, 1, 1, seed=5)[0]
        for scheme in ("euler", "midpoint", "rk4"):
            spec = sampler.IntegratorSpec(scheme, 10)
            path = sampler.integrate(model.velocity, z0, 1, spec, return_path=True)
            its = sampler.riemannian_rk_oracle(model, geo.phi_inv(z0, manifold), 1, spec)
            worst[(manifold, scheme)] = max(np.linalg.norm(x - geo.phi_inv(z, manifold)) for x, z in zip(its, path))
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    check(3, top <= 1e-5 and elapsed < 120.0,
          f"euler/midpoint/rk4, L=10, d=3, both manifolds: max Frobenius gap {top:.2e} (<= 1e-5), {elapsed:.1f}s (< 120s)")


def test_04_rk4_order():
    rng = np.random.default_rng(11)
    m = geo.embed_dim(3, "spd")
    a = rng.standard_normal((m, m)) / np.sqrt(m)
    c = rng.standard_normal(m)

    def field(t, z, y):
        return np.tanh(z @ a.T) + np.cos(2.0 * t) * c

    z0 = geo.phi(random_point(rng, 3, "spd"), "spd")
    steps = np.array([4, 8, 16, 32])
    errs = []
    for n in steps:
        x_n = geo.phi_inv(sampler.integrate(field, z0, 0, sampler.IntegratorSpec("rk4", int(n))), "spd")
        z_ref = sampler.integrate(field, z0, 0, sampler.IntegratorSpec("rk4", int(4 * n)))
        errs.append(np.linalg.norm(geo.phi(x_n, "spd") - z_ref))
    slope = np.polyfit(np.log(1.0 / steps), np.log(errs), 1)[0]
    check(4, abs(slope - 4.0) <= 0.5, f"rk4 log-log slope over L in {steps.tolist()}: {slope:.3f} (4 +/- 0.5)")


def test_05_constraints():
    results = {}
    for manifold in geo.MANIFOLDS:
        ds = synth_generate(SyntheticSpec(manifold, 4, 2, 200, 0.5, seed=1))
        cfg = flow.TrainConfig(manifold=manifold, epochs=20, hidden_dims=(64,), seed=0)
        model, src, _ = flow.train(ds, cfg)
        gen = np.concatenate([sampler.sample_manifold(model, src, y, 500, sampler.IntegratorSpec("rk4", 20), seed=1) for y in (0, 1)])
        results[f"diffeocfm/{manifold}"] = tuple(metrics.constraint_report(gen, manifold))
        gauss = baselines.fit_diffeo_gauss(ds)
        gen = np.concatenate([baselines.diffeo_gauss_sample(gauss, y, 500, 2, manifold) for y in (0, 1)])
        results[f"diffeogauss/{manifold}"] = tuple(metrics.constraint_report(gen, manifold))
    ok = all(v == (1.0, 1.0, 1.0) for v in results.values())

    adv = synth_generate(SyntheticSpec("corr", 8, 2, 200, 1.5, seed=0, separation=1.0))
    model, src, _ = baselines.train_triang_cfm(adv, flow.TrainConfig(manifold="corr", epochs=30, hidden_dims=(64,), seed=0))
    raw = np.concatenate([
        baselines.sample_triang_cfm(model, src, y, 500, sampler.IntegratorSpec("rk4", 20), seed=0, project=False)
        for y in (0, 1)
    ])
    frac_pd = metrics.constraint_report(raw, "corr").positive_definite
    ok = ok and frac_pd < 1.0
    summary = ", ".join(f"{k} {v[0]:.2f}/{v[1]:.2f}/{v[2]:.2f}" for k, v in results.items())
    check(5, ok, f"1000 samples each: {summary}; unprojected triangcfm frac_pd {frac_pd:.3f} (< 1)")


def test_06_projection():
    rng = np.random.default_rng(6)
    eps = 1e-8
    worst_lam = 0.0
    diag_exact = True
    count = 0
    while count < 500:
        d = int(rng.integers(2, 11))
        a = random_sym(rng, d) * rng.uniform(0.3, 2.0)
        np.fill_diagonal(a, 1.0)
        if np.linalg.eigvalsh(a)[0] >= 0:
            continue
        out = geo.project_to_spd(a, eps)
        worst_lam = max(worst_lam, abs(np.linalg.eigvalsh(out)[0] - eps))
        diag_exact &= bool(np.all(np.diag(out) == 1.0))
        count += 1
    check(6, worst_lam <= 1e-10 and diag_exact,
          f"500 indefinite unit-diagonal inputs: max |lambda_min - eps| {worst_lam:.2e} (<= 1e-10), unit diagonal exact: {diag_exact}")


def test_07_gradient_check():
    rng = np.random.default_rng(77)
    worst = 0.0
    for k in range(50):
        hidden = [int(h) for h in rng.integers(1, 9, size=rng.integers(1, 3))]
        p = nn.mlp_init(k, int(rng.integers(1, 9)), hidden, int(rng.integers(1, 9)))
        for b in p.biases:
            b[...] = 0.1 * rng.standard_normal(b.shape)
        worst = max(worst, max_rel_error(p, k))
    check(7, worst <= 1e-4, f"50 random nets: max relative error {worst:.2e} (<= 1e-4)")


@pytest.mark.parametrize("manifold", geo.MANIFOLDS)
def test_08_synthetic_recovery(manifold):
    start = time.perf_counter()
    sigma = 0.3
    spec = SyntheticSpec(manifold, 4, 2, 400, sigma, seed=10, separation=3.0)
    train_set = synth_generate(spec)
    test_set = synth_generate(SyntheticSpec(manifold, 4, 2, 400, sigma, seed=11, separation=3.0))
    model, src, _ = flow.train(train_set, flow.TrainConfig(manifold=manifold, epochs=200, seed=0))
    spec_int = sampler.IntegratorSpec("rk4", 100)
    gens = {y: sampler.sample_manifold(model, src, y, 500, spec_int, seed=1) for y in (0, 1)}
    mean_err = max(
        np.linalg.norm(geo.phi(geo.frechet_mean(gens[y], manifold), manifold) - spec.class_means()[y]) for y in (0, 1)
    )
    gen_ds = LabeledDataset(manifold, np.concatenate([gens[0], gens[1]]), np.repeat([0, 1], 500))
    cas = metrics.cas_evaluate(gen_ds, test_set)
    f1s = [
        metrics.precision_recall_curves(
            geo.phi(train_set.matrices[train_set.labels == y], manifold), geo.phi(gens[y], manifold)
        ).ab_f1
        for y in (0, 1)
    ]
    elapsed = time.perf_counter() - start
    ok = mean_err <= 0.5 * sigma and cas.roc_auc >= 0.90 and min(f1s) >= 0.5 and elapsed < 600
    detail = (
        f"[{manifold}] mean error {mean_err / sigma:.3f} sigma (<= 0.5), CAS ROC-AUC {cas.roc_auc:.3f} (>= 0.90), "
        f"ab-F1 {min(f1s):.3f} (>= 0.5), {elapsed:.0f}s (< 600s)"
    )
    record_acceptance(8, ok, detail, merge=True)
    assert ok, detail


def test_09_ab_f1_anchor():
    value = metrics.ab_f1(0.77, 0.48)
    check(9, round(value, 2) == 0.59, f"ab_f1(0.77, 0.48) = {value:.4f} -> {round(value, 2)} (0.59)")


def test_10_metric_self_consistency():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2000, 6))
    rep = metrics.precision_recall_curves(x[:1000], x[1000:])
    dev = max(
        np.max(np.abs(np.array(rep.precision_curve) - metrics.DEFAULT_ALPHAS)),
        np.max(np.abs(np.array(rep.recall_curve) - metrics.DEFAULT_ALPHAS)),
    )
    feats = rng.standard_normal((2000, 6))
    labels = np.repeat([0, 1], 1000)
    cas = metrics.cas_evaluate_features(feats[:1000], rng.permutation(labels)[:1000], feats[1000:], rng.permutation(labels)[1000:])
    check(10, dev <= 0.1 and 0.45 <= cas.roc_auc <= 0.55,
          f"n=2000 halves: max |P(a) - a| {dev:.3f} (<= 0.1); shuffled-label ROC-AUC {cas.roc_auc:.3f} (in [0.45, 0.55])")


def test_11_logistic_optimality():
    rng = np.random.default_rng(12)
    worst = -np.inf
    for k in range(10):
        n, p = int(rng.integers(30, 120)), int(rng.integers(1, 6))
        y = (rng.uniform(size=n) < rng.uniform(0.2, 0.8)).astype(int)
        y[:2] = [0, 1]
        x = rng.standard_normal((n, p)) + rng.uniform(0, 1.5) * y[:, None]
        C = float(10.0 ** rng.uniform(-2, 2))
        model = metrics.logreg_fit(x, y, C)
        w, b = logistic_coordinate_descent(x, y, C)
        gap = logistic_objective(model.weights, model.intercept, x, y, C) - logistic_objective(w, b, x, y, C)
        worst = max(worst, gap)
    check(11, worst <= 1e-8, f"10 random problems: max objective excess over oracle {worst:.2e} (<= 1e-8)")


def test_12_cli_determinism(tmp_path):
    reports = []
    for run in ("a", "b"):
        root = tmp_path / run
        steps = [
            ["synth", "--out", root / "real", "--manifold", "spd", "--dim", 3, "--per-class", 80, "--seed", 4],
            ["train", "--data", root / "real", "--out", root / "model", "--epochs", 5, "--hidden", 32, "--seed", 2],
            ["sample", "--model", root / "model", "--n", 60, "--steps", 20, "--out", root / "gen", "--seed", 9],
            ["evaluate", "--real", root / "real", "--generated", root / "gen", "--out", root / "report.json"],
        ]
        codes = [main([str(a) for a in step]) for step in steps]
        assert codes == [0, 0, 0, 0]
        reports.append((root / "report.json").read_bytes())
    populated = json.loads(reports[0])["cas"] is not None
    check(12, reports[0] == reports[1] and populated, f"two runs of synth/train/sample/evaluate: reports byte-identical: {reports[0] == reports[1]}")
