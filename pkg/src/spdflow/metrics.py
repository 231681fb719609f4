"""Sample-quality and downstream-utility metrics.

Fidelity and coverage are measured with quantile balls: the alpha-support
of a sample is the ball around its mean that holds a fraction ``alpha`` of
it. Precision at ``alpha`` is the fraction of generated points inside the
real alpha-support; recall swaps the roles. For matching distributions both
curves sit on the diagonal, and the summary ``1 - 2 mean|curve - alpha|``
is 1.

The classification-accuracy score trains a class-balanced L2 logistic
regression on generated samples (C picked by stratified cross-validated
ROC-AUC) and scores it on real held-out data.

Both work on vectors. The dataset-level entry points (``cas_evaluate`` and
``evaluation_report``) feed them chart coordinates ``phi(X)``.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from . import geometry as geo
from .errors import DegenerateLabels, InvalidInput

DEFAULT_ALPHAS = np.round(np.arange(1, 20) * 0.05, 2)
DEFAULT_C_GRID = tuple(10.0 ** k for k in range(-4, 5))


# ---------------------------------------------------------------------------
# fidelity
# ---------------------------------------------------------------------------

@dataclass
class FidelityReport:
    alphas: list
    precision_curve: list
    recall_curve: list
    alpha_precision: float
    beta_recall: float
    ab_f1: float

    def to_dict(self):
        return asdict(self)


def ab_f1(p, r):
    """Harmonic mean of precision and recall summaries."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise InvalidInput("precision and recall must lie in [0, 1]")
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def support_curve(reference, query, alphas):
    """Fraction of ``query`` inside the alpha-quantile ball of ``reference``."""
    center = reference.mean(axis=0)
    ref_dist = np.linalg.norm(reference - center, axis=1)
    radii = np.quantile(ref_dist, alphas)
    q_dist = np.linalg.norm(query - center, axis=1)
    return (q_dist[None, :] <= radii[:, None]).mean(axis=1)


def _summary(curve, alphas):
    return float(np.clip(1.0 - 2.0 * np.mean(np.abs(curve - alphas)), 0.0, 1.0))


def precision_recall_curves(real, gen, alphas=None):
    """Alpha-precision and beta-recall curves of ``gen`` against ``real``.

    Parameters
    ----------
    real, gen : array_like of shape (n, m)
        Embedded samples.
    alphas : array_like, optional
        Quantile levels; defaults to 0.05, 0.10, ..., 0.95.
    """
    real = np.atleast_2d(np.asarray(real, dtype=np.float64))
    gen = np.atleast_2d(np.asarray(gen, dtype=np.float64))
    if real.shape[0] == 0 or gen.shape[0] == 0:
        raise InvalidInput("both sample sets must be non-empty")
    if real.shape[1] != gen.shape[1]:
        raise InvalidInput(f"dimension mismatch: {real.shape[1]} vs {gen.shape[1]}")
    alphas = DEFAULT_ALPHAS if alphas is None else np.asarray(alphas, dtype=np.float64)
    prec = support_curve(real, gen, alphas)
    rec = support_curve(gen, real, alphas)
    p = _summary(prec, alphas)
    r = _summary(rec, alphas)
    return FidelityReport(alphas.tolist(), prec.tolist(), rec.tolist(), p, r, ab_f1(p, r))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def roc_auc(scores, labels):
    """Area under the ROC curve as a rank statistic; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC-AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_score(predictions, labels):
    """F1 of the positive class (label 1)."""
    predictions = np.asarray(predictions).astype(bool)
    truth = np.asarray(labels) == 1
    tp = np.sum(predictions & truth)
    fp = np.sum(predictions & ~truth)
    fn = np.sum(~predictions & truth)
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float

    def decision(self, x):
        return np.asarray(x, dtype=np.float64) @ self.weights + self.intercept

    def predict_proba(self, x):
        return 1.0 / (1.0 + np.exp(-self.decision(x)))


def _sample_weights(y01, balanced):
    n = y01.size
    if not balanced:
        return np.ones(n)
    counts = np.bincount(y01, minlength=2)
    return n / (2.0 * counts[y01])


def logreg_objective(w, b, x, y01, C, balanced=True):
    """``|w|^2 / (2C) + sum_i s_i log(1 + exp(-y_i (w.x_i + b)))``, y in {-1, 1}."""
    s = _sample_weights(y01, balanced)
    ypm = 2.0 * y01 - 1.0
    margin = ypm * (x @ w + b)
    return float(0.5 * w @ w / C + np.sum(s * np.logaddexp(0.0, -margin)))


def logreg_fit(x, y, C=1.0, balanced=True, tol=1e-6, max_iter=200):
    """L2-regularized logistic regression by damped Newton iterations.

    Labels must be 0/1. The intercept is not penalized. Stops when the
    gradient's infinity norm drops to ``tol``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y01 = np.asarray(y).astype(np.int64)
    if set(np.unique(y01).tolist()) != {0, 1}:
        raise DegenerateLabels("logistic regression needs labels 0 and 1, both present")
    if C <= 0:
        raise InvalidInput("C must be positive")
    n, p = x.shape
    s = _sample_weights(y01, balanced)
    ypm = 2.0 * y01 - 1.0
    xa = np.hstack([x, np.ones((n, 1))])
    reg = np.full(p + 1, 1.0 / C)
    reg[-1] = 0.0
    theta = np.zeros(p + 1)

    def objective(th):
        margin = ypm * (xa @ th)
        return 0.5 * np.sum(reg * th * th) + np.sum(s * np.logaddexp(0.0, -margin))

    f = objective(theta)
    for _ in range(max_iter):
        margin = ypm * (xa @ theta)
        sig_neg = 0.5 * (1.0 - np.tanh(0.5 * margin))  # sigmoid(-margin)
        grad = reg * theta - xa.T @ (s * ypm * sig_neg)
        if np.max(np.abs(grad)) <= tol:
            break
        curv = s * sig_neg * (1.0 - sig_neg)
        hess = (xa * curv[:, None]).T @ xa + np.diag(reg)
        hess[np.diag_indices_from(hess)] += 1e-12 * (1.0 + np.trace(hess))
        step = np.linalg.solve(hess, grad)
        slope = grad @ step
        lr = 1.0
        while True:
            cand = theta - lr * step
            f_new = objective(cand)
            if f_new <= f - 1e-4 * lr * slope or lr < 1e-12:
                break
            lr *= 0.5
        theta, f = cand, f_new
    return LogisticModel(theta[:-1].copy(), float(theta[-1]))


def stratified_folds(y, k, seed=0):
    """Fold index per sample, balancing each class across ``k`` folds."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold = np.empty(y.size, dtype=np.intp)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


@dataclass
class CasReport:
    roc_auc: float
    f1: float
    chosen_C: float
    cv_scores: list

    def to_dict(self):
        return asdict(self)


def _binary(y, classes):
    return (np.asarray(y) == classes[1]).astype(np.int64)


def cas_evaluate_features(x_gen, y_gen, x_test, y_test, C_grid=DEFAULT_C_GRID, folds=5, seed=0):
    """Train on generated features, score on real ones.

    The positive class is the larger of the two labels. Features are
    standardized with statistics of the generated set.
    """
    classes = sorted(set(np.unique(y_gen).tolist()))
    if len(classes) != 2 or set(np.unique(y_test).tolist()) - set(classes):
        raise DegenerateLabels("CAS needs the same two classes in generated and test sets")
    yg = _binary(y_gen, classes)
    yt = _binary(y_test, classes)
    if len(np.unique(yt)) != 2:
        raise DegenerateLabels("test set must contain both classes")
    mu = x_gen.mean(axis=0)
    sd = x_gen.std(axis=0)
    sd[sd == 0.0] = 1.0
    xg = (x_gen - mu) / sd
    xt = (x_test - mu) / sd
    k = int(min(folds, np.bincount(yg).min()))
    if k < 2:
        raise DegenerateLabels("each class needs at least two generated samples")
    fold = stratified_folds(yg, k, seed)
    cv_scores = []
    for C in C_grid:
        scores = []
        for f in range(k):
            tr, va = fold != f, fold == f
            model = logreg_fit(xg[tr], yg[tr], C)
            scores.append(roc_auc(model.decision(xg[va]), yg[va]))
        cv_scores.append(float(np.mean(scores)))
    best = int(np.argmax(cv_scores))
    model = logreg_fit(xg, yg, C_grid[best])
    proba = model.predict_proba(xt)
    return CasReport(
        roc_auc(proba, yt),
        f1_score(proba >= 0.5, yt),
        float(C_grid[best]),
        cv_scores,
    )


def cas_evaluate(gen, real_test, C_grid=DEFAULT_C_GRID, folds=5, seed=0):
    """CAS on two ``LabeledDataset`` objects, using chart embeddings as features."""
    if gen.manifold != real_test.manifold:
        raise InvalidInput("generated and real datasets live on different manifolds")
    x_gen = geo.phi(gen.matrices, gen.manifold)
    x_test = geo.phi(real_test.matrices, real_test.manifold)
    return cas_evaluate_features(x_gen, gen.labels, x_test, real_test.labels, C_grid, folds, seed)


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

@dataclass
class ConstraintReport:
    symmetric: float
    positive_definite: float
    unit_diagonal: float

    def __iter__(self):
        return iter((self.symmetric, self.positive_definite, self.unit_diagonal))

    def to_dict(self):
        return asdict(self)


def constraint_report(samples, manifold, tol=1e-8):
    """Fractions of samples that are symmetric, positive definite and (for
    ``corr``) unit-diagonal. On ``spd`` the unit-diagonal fraction is 1 by
    convention since the constraint does not apply."""
    geo.check_manifold_tag(manifold)
    mats = np.asarray(samples, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.shape[0] == 0:
        raise InvalidInput("no samples to check")
    finite = np.all(np.isfinite(mats), axis=(1, 2))
    sym = finite & (np.max(np.abs(mats - np.swapaxes(mats, 1, 2)), axis=(1, 2)) <= tol)
    pd = np.zeros(mats.shape[0], dtype=bool)
    if finite.any():
        vals, _ = geo.sym_eig(mats[finite])
        pd[finite] = vals[:, 0] > 0.0
    pd &= sym
    if manifold == "corr":
        diag = np.diagonal(mats, axis1=1, axis2=2)
        unit = finite & np.all(np.abs(diag - 1.0) <= tol, axis=1)
    else:
        unit = np.ones(mats.shape[0], dtype=bool)
    return ConstraintReport(float(sym.mean()), float(pd.mean()), float(unit.mean()))


def evaluation_report(real, generated, C_grid=DEFAULT_C_GRID, folds=5, seed=0, alphas=None):
    """Every metric for one generated dataset against a real one, as a dict.

    If some generated matrices violate the manifold constraints, only the
    constraint fractions are filled in; the embedding-based metrics are
    ``None`` because the chart is undefined there.
    """
    if real.manifold != generated.manifold:
        raise InvalidInput("real and generated datasets live on different manifolds")
    cons = constraint_report(generated.matrices, generated.manifold)
    out = {
        "manifold": real.manifold,
        "d": int(real.d),
        "n_real": int(real.n),
        "n_generated": int(generated.n),
        "constraints": cons.to_dict(),
        "fidelity": None,
        "cas": None,
    }
    if min(cons) < 1.0:
        return out
    fid = precision_recall_curves(geo.phi(real.matrices, real.manifold), geo.phi(generated.matrices, generated.manifold), alphas)
    out["fidelity"] = fid.to_dict()
    out["cas"] = cas_evaluate(generated, real, C_grid, folds, seed).to_dict()
    return out
