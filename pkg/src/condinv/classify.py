"""KNN classification head and the comparison feature learners.

Five methods share one interface. raw_knn classifies original features
directly and fits nothing. The remaining four learn a kernel-space
projection from training data and differ only in which scatter matrices
enter the eigensolver's pencil:

  kpca          top components of the centered Gram matrix itself
                (numerator K, denominator I), i.e. plain kernel PCA
  dica_marginal marginal-invariance reconstruction: between-class scatter
                against per-domain-uniform domain scatter + within-class
                scatter + ridge. This approximates domain-invariant
                component analysis inside this package's own scatter
                machinery (uniform weights ignore class priors); it is not
                the cited DICA algorithm, and reports label it accordingly.
  kfda          between-class vs within-class + ridge (kernel Fisher
                discriminant analysis); no domain terms
  cidg          the full conditional-invariance pencil: between-class vs
                gamma * conditional + alpha * prior + within + ridge

All four produce a ProjectionModel whose projection feeds the same KNN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import LabeledDataset, group_index
from .kernel import CenteringStats, KernelSpec, center_train, gram, resolve_bandwidth
from .scatter import (
    ScatterSet,
    between_scatter,
    build_weights,
    domain_scatter,
    scatter_set,
    uniform_domain_weights,
    within_scatter,
)
from .solver import ProjectionModel, SolverConfig, SolverError, default_q, solve

METHOD_TAGS = ("raw_knn", "kpca", "dica_marginal", "kfda", "cidg")


class ClassifyError(ValueError):
    """Invalid method parameters or classification inputs."""


@dataclass(frozen=True)
class Method:
    """A method tag plus its hyperparameters.

    gamma/alpha apply to cidg only; epsilon to cidg, kfda and
    dica_marginal; q to every projection method (None picks
    min(n - 1, classes * domains) at fit time); k is the neighbor count of
    the classification head.
    """

    tag: str
    gamma: float = 1.0
    alpha: float = 1.0
    epsilon: float = 1e-5
    q: int | None = None
    k: int = 1

    def __post_init__(self):
        if self.tag not in METHOD_TAGS:
            raise ClassifyError(f"unknown method {self.tag!r}; use one of {METHOD_TAGS}")
        if self.gamma < 0 or self.alpha < 0:
            raise ClassifyError("gamma and alpha must be >= 0")
        if not self.epsilon > 0:
            raise ClassifyError("epsilon must be > 0")
        if self.q is not None and self.q < 1:
            raise ClassifyError("q must be >= 1")
        if self.k < 1:
            raise ClassifyError("k must be >= 1")


def knn_predict(
    train_feats: np.ndarray,
    train_labels: np.ndarray,
    test_feats: np.ndarray,
    k: int,
) -> np.ndarray:
    """k-nearest-neighbor majority vote under Euclidean distance.

    Deterministic and seed-free: neighbors are ranked by (distance, row
    index); among tied vote counts the class with the smallest summed
    neighbor distance wins, and a residual tie goes to the smallest class
    id.
    """
    train = np.asarray(train_feats, dtype=np.float64)
    labels = np.asarray(train_labels, dtype=np.int64)
    test = np.asarray(test_feats, dtype=np.float64)
    if train.ndim != 2 or test.ndim != 2 or train.shape[1] != test.shape[1]:
        raise ClassifyError(
            f"feature shapes are inconsistent: train {train.shape}, test {test.shape}"
        )
    n = train.shape[0]
    if n == 0:
        raise ClassifyError("empty training set")
    if labels.shape != (n,):
        raise ClassifyError("training labels do not match training features")
    if not 1 <= k <= n:
        raise ClassifyError(f"k must lie in 1..{n}, got {k}")
    dists = cdist(test, train)
    nearest = np.argsort(dists, axis=1, kind="stable")[:, :k]
    out = np.empty(test.shape[0], dtype=np.int64)
    for i in range(test.shape[0]):
        votes: dict[int, int] = {}
        sums: dict[int, float] = {}
        for idx in nearest[i]:
            c = int(labels[idx])
            votes[c] = votes.get(c, 0) + 1
            sums[c] = sums.get(c, 0.0) + float(dists[i, idx])
        best = max(votes.values())
        tied = [c for c, v in votes.items() if v == best]
        if len(tied) > 1:
            low = min(sums[c] for c in tied)
            tied = [c for c in tied if sums[c] == low]
        out[i] = min(tied)
    return out


def accuracy(predicted, truth) -> float:
    """Fraction of exact matches."""
    p = np.asarray(predicted)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ClassifyError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(p == t))


def _kpca_model(
    Kc: np.ndarray,
    q: int,
    spec: KernelSpec,
    feats: np.ndarray,
    stats: CenteringStats,
    eig_tolerance: float = 1e-10,
) -> ProjectionModel:
    import scipy.linalg

    lam, vecs = scipy.linalg.eigh(Kc)
    order = np.argsort(-lam, kind="stable")[:q]
    lam = lam[order]
    vecs = vecs[:, order]
    if lam.size == 0 or lam[0] <= 0:
        raise SolverError("centered Gram matrix has no positive eigenvalues")
    keep = (lam > 0) & (lam >= eig_tolerance * lam[0])
    warnings: tuple[str, ...] = ()
    if keep.sum() < q:
        warnings = (
            f"requested q={q} but only {int(keep.sum())} eigenvalues "
            "are positive above tolerance; truncated",
        )
    lam = lam[keep]
    vecs = vecs[:, keep]
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs = vecs.copy()
    vecs[:, flip] *= -1.0
    return ProjectionModel(
        coefficients=vecs,
        eigenvalues=lam,
        gamma=0.0,
        alpha=0.0,
        effective_epsilon=0.0,
        requested_q=q,
        warnings=warnings,
        kernel_spec=spec,
        training_features=feats,
        centering=stats,
    )


def fit_baseline(
    method: Method,
    train: LabeledDataset,
    spec: KernelSpec,
    lenient: bool = False,
) -> ProjectionModel:
    """Fit the projection for any method except raw_knn.

    The bandwidth is resolved on the training features when the spec
    carries the "median" sentinel, so the returned model is self-contained.
    """
    if method.tag == "raw_knn":
        raise ClassifyError("raw_knn has no projection model to fit")
    spec = resolve_bandwidth(spec, train.features)
    X = train.features
    K = gram(X, X, spec)
    stats = CenteringStats.from_train(K)
    Kc = center_train(K)
    groups = group_index(train)
    C, m = len(groups.per_class), len(groups.per_domain)
    q = method.q if method.q is not None else default_q(train.n, C, m)
    if q > train.n:
        raise ClassifyError(f"q={q} exceeds the training size n={train.n}")

    if method.tag == "kpca":
        return _kpca_model(Kc, q, spec, X, stats)

    weights = build_weights(groups, lenient=lenient)
    config = SolverConfig(
        gamma=method.gamma if method.tag == "cidg" else 0.0,
        alpha=method.alpha if method.tag == "cidg" else 0.0,
        epsilon=method.epsilon,
        q=q,
    )
    if method.tag == "dica_marginal":
        vectors, mean = uniform_domain_weights(groups)
        scatters = ScatterSet(
            conditional=np.zeros((train.n, train.n)),
            prior=domain_scatter(Kc, vectors, mean),
            between=between_scatter(Kc, weights),
            within=within_scatter(Kc, weights),
        )
        config = SolverConfig(gamma=0.0, alpha=1.0, epsilon=method.epsilon, q=q)
    else:
        # kfda sets gamma = alpha = 0, leaving between vs within + ridge
        scatters = scatter_set(Kc, weights)
    model = solve(scatters, config, kernel_spec=spec, training_features=X, centering=stats)
    extra = weights.adjustments
    if extra:
        model = ProjectionModel(
            coefficients=model.coefficients,
            eigenvalues=model.eigenvalues,
            gamma=model.gamma,
            alpha=model.alpha,
            effective_epsilon=model.effective_epsilon,
            requested_q=model.requested_q,
            warnings=model.warnings + tuple(extra),
            kernel_spec=model.kernel_spec,
            training_features=model.training_features,
            centering=model.centering,
        )
    return model
