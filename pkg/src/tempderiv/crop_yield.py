"""Yield-signal classification: labelling, stacking ensemble, importance.

Years whose yield is at least the long-run mean are labelled 1 (increase),
others 0. A two-level stacking ensemble (AdaBoost on stumps and a small
sigmoid network at the base, gradient boosting on top) predicts the label
from yearly weather features, and permutation importance ranks the features.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import AdaBoostClassifier, GradientBoostingClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import train_test_split
from sklearn.neural_network import MLPClassifier
from sklearn.tree import DecisionTreeClassifier

FEATURES = ("minT", "maxT", "aveT", "rainfall", "sunlight", "humidity")
IMPORTANCE_METHOD = "permutation (mean accuracy drop)"


class YieldModelError(ValueError):
    pass


def label(yields) -> np.ndarray:
    """1 where the long-run mean is <= the year's yield, else 0."""
    y = np.asarray(yields, dtype=float)
    if y.size < 2:
        raise YieldModelError("need at least two years of yields")
    return (y.mean() <= y).astype(int)


@dataclass
class YieldDataset:
    X: np.ndarray
    y: np.ndarray
    features: tuple = FEATURES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.shape != (len(self.y), len(self.features)):
            raise YieldModelError("feature matrix does not match labels/feature names")
        if not set(np.unique(self.y)) <= {0, 1}:
            raise YieldModelError("labels must be 0/1")

    def __len__(self):
        return len(self.y)


def synthetic_dataset(n_rows: int = 500, seed: int = 0, signal: str = "aveT",
                      noise: float = 0.0, permute_labels: bool = False) -> YieldDataset:
    """Features uniform on [0, 1]; yield rises with ``signal`` (plus optional noise).

    With ``noise=0`` the labels are a threshold of one feature, so the data is
    linearly separable.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_rows, len(FEATURES)))
    yields = 2.0 + 3.0 * X[:, FEATURES.index(signal)] + noise * rng.standard_normal(n_rows)
    y = label(yields)
    if permute_labels:
        y = rng.permutation(y)
    return YieldDataset(X, y)


def auc_score(y_true, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count 1/2)."""
    y = np.asarray(y_true, dtype=int)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise YieldModelError("AUC is undefined for a single-class set")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class EnsembleModel:
    base: list
    meta: GradientBoostingClassifier
    manifest: dict = field(default_factory=dict)

    def meta_features(self, X) -> np.ndarray:
        return np.column_stack([h.predict_proba(X)[:, 1] for h in self.base])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.meta_features(X))[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)


def _base_learners(seed: int, n_train: int) -> list:
    ada = AdaBoostClassifier(DecisionTreeClassifier(max_depth=1), n_estimators=50, random_state=seed)
    # full-batch gradient descent: one batch, no momentum, fixed 500 epochs
    ann = MLPClassifier(hidden_layer_sizes=(8,), activation="logistic", solver="sgd",
                        learning_rate_init=0.1, batch_size=n_train, momentum=0.0,
                        nesterovs_momentum=False, alpha=0.0, max_iter=500, shuffle=False,
                        n_iter_no_change=500, tol=0.0, random_state=seed)
    return [ada, ann]


def fit_stacking(X, y, seed: int = 0) -> EnsembleModel:
    """Algorithm: fit base learners on (X, y), build meta-features from their
    in-sample predicted probabilities, fit the meta learner on those."""
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise YieldModelError("training split has a single class")
    base = _base_learners(seed, len(y))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for h in base:
            h.fit(X, y)
    meta = GradientBoostingClassifier(n_estimators=50, learning_rate=0.1, max_depth=1,
                                      loss="log_loss", random_state=seed)
    model = EnsembleModel(base, meta, {"seed": seed, "n_train": int(len(y))})
    meta.fit(model.meta_features(X), y)
    return model


def evaluate(model: EnsembleModel, X, y) -> dict:
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    if len(y) == 0:
        raise YieldModelError("empty test set")
    out = {"accuracy": float(np.mean(model.predict(X) == y))}
    try:
        out["auc"] = auc_score(y, model.predict_proba(X))
    except YieldModelError:
        out["auc"] = None
    return out


def train_stacking(data: YieldDataset, test_fraction: float = 0.2, seed: int = 0):
    """80/20 split, stacking fit, held-out metrics.

    Returns ``(model, metrics, (X_test, y_test))``.
    """
    if len(data) < 10:
        raise YieldModelError("need at least 10 rows")
    stratify = data.y if min(np.bincount(data.y, minlength=2)) >= 2 else None
    X_tr, X_te, y_tr, y_te = train_test_split(data.X, data.y, test_size=test_fraction,
                                              random_state=seed, stratify=stratify)
    model = fit_stacking(X_tr, y_tr, seed)
    model.manifest.update({"test_fraction": test_fraction, "n_test": int(len(y_te))})
    return model, evaluate(model, X_te, y_te), (X_te, y_te)


def feature_importance(model: EnsembleModel, X, y, features=FEATURES, n_repeats: int = 30,
                       seed: int = 0) -> list[dict]:
    """Permutation importance ranked in descending order (rank 1 = most important)."""
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    base = float(np.mean(model.predict(X) == y))
    rows = []
    for j, name in enumerate(features):
        drops = np.empty(n_repeats)
        for r in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            drops[r] = base - float(np.mean(model.predict(Xp) == y))
        rows.append({"feature": name, "importance": float(drops.mean()), "std": float(drops.std())})
    rows.sort(key=lambda r: -r["importance"])
    for rank, r in enumerate(rows, start=1):
        r["rank"] = rank
    return rows


def write_importance_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance", "std", "rank"])
        for r in rows:
            w.writerow([r["feature"], repr(r["importance"]), repr(r["std"]), r["rank"]])
