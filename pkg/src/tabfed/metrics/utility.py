"""Train-on-synthetic, test-on-real classification utility."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.ensemble import AdaBoostClassifier, RandomForestClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeClassifier

from ..data.schema import CATEGORICAL, NUMERIC, TableData
from ..errors import ConfigurationError
from .fidelity import check_compatible, column_values


class ClassifierKind(str, Enum):
    LOGISTIC_REGRESSION = "logistic_regression"
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    ADABOOST_STUMPS = "adaboost_stumps"
    NAIVE_BAYES = "naive_bayes"


ALL_CLASSIFIERS = tuple(ClassifierKind)


class MixedNaiveBayes:
    """Gaussian likelihoods for numeric features times Laplace-smoothed
    frequency tables for categorical ones."""

    def __init__(self, n_numeric: int, n_categories: list[int], alpha: float = 1.0,
                 var_smoothing: float = 1e-9):
        self.n_numeric = n_numeric
        self.n_categories = n_categories
        self.alpha = alpha
        self.var_smoothing = var_smoothing

    def fit(self, numeric: np.ndarray, categorical: np.ndarray, y: np.ndarray) -> "MixedNaiveBayes":
        self.classes_ = np.unique(y)
        self.log_prior_ = np.log(np.array([np.mean(y == c) for c in self.classes_]))
        eps = self.var_smoothing * (numeric.var(axis=0).max() if numeric.size else 1.0)
        self.mean_ = np.array([numeric[y == c].mean(axis=0) for c in self.classes_])
        self.var_ = np.array([numeric[y == c].var(axis=0) for c in self.classes_]) + max(eps, 1e-12)
        self.log_freq_ = []
        for j, k in enumerate(self.n_categories):
            table = np.zeros((self.classes_.size, k))
            for ci, c in enumerate(self.classes_):
                counts = np.bincount(categorical[y == c, j], minlength=k)
                table[ci] = np.log((counts + self.alpha) / (counts.sum() + self.alpha * k))
            self.log_freq_.append(table)
        return self

    def predict(self, numeric: np.ndarray, categorical: np.ndarray) -> np.ndarray:
        scores = np.tile(self.log_prior_, (numeric.shape[0], 1))
        if self.n_numeric:
            diff = numeric[:, None, :] - self.mean_[None, :, :]
            scores += -0.5 * np.sum(np.log(2 * np.pi * self.var_)[None] + diff ** 2 / self.var_[None], axis=2)
        for j, table in enumerate(self.log_freq_):
            scores += table[:, categorical[:, j]].T
        return self.classes_[np.argmax(scores, axis=1)]


def _make(kind: ClassifierKind, seed: int):
    if kind is ClassifierKind.LOGISTIC_REGRESSION:
        return make_pipeline(StandardScaler(), LogisticRegression(max_iter=200))
    if kind is ClassifierKind.DECISION_TREE:
        return DecisionTreeClassifier(max_depth=8, criterion="gini", random_state=seed)
    if kind is ClassifierKind.RANDOM_FOREST:
        return RandomForestClassifier(n_estimators=20, max_depth=8, bootstrap=True, random_state=seed)
    if kind is ClassifierKind.ADABOOST_STUMPS:
        # SAMME is the only boosting variant left in scikit-learn
        return AdaBoostClassifier(DecisionTreeClassifier(max_depth=1), n_estimators=50, random_state=seed)
    raise ValueError(kind)


@dataclass
class _Design:
    onehot: np.ndarray       # numerics followed by one-hot categoricals
    numeric: np.ndarray
    categorical: np.ndarray  # integer codes over the union vocabulary
    y: np.ndarray


def _designs(train: TableData, test: TableData, label: str) -> tuple[_Design, _Design, list[int]]:
    schema = train.schema
    features = [c for c in schema.columns if c.name != label]
    num = [c.name for c in features if c.kind == NUMERIC]
    cat = [c.name for c in features if c.kind == CATEGORICAL]
    y_tr, y_te = column_values(train, label), column_values(test, label)
    parts = {"train": {"num": [], "cat": []}, "test": {"num": [], "cat": []}}
    sizes = []
    for name in num:
        parts["train"]["num"].append(train.column(name))
        parts["test"]["num"].append(test.column(name))
    for name in cat:
        a, b = column_values(train, name), column_values(test, name)
        cats, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
        inv = inv.reshape(-1)
        parts["train"]["cat"].append(inv[: a.size])
        parts["test"]["cat"].append(inv[a.size:])
        sizes.append(cats.size)
    designs = []
    for split, y in (("train", y_tr), ("test", y_te)):
        n = y.size
        numeric = np.column_stack(parts[split]["num"]) if num else np.zeros((n, 0))
        codes = np.column_stack(parts[split]["cat"]).astype(np.int64) if cat else np.zeros((n, 0), dtype=np.int64)
        onehots = [np.eye(k)[codes[:, j]] for j, k in enumerate(sizes)]
        onehot = np.hstack([numeric] + onehots) if onehots else numeric
        designs.append(_Design(onehot.reshape(n, -1), numeric.reshape(n, -1), codes, y))
    return designs[0], designs[1], sizes


def _canonical_order(design: _Design) -> np.ndarray:
    # fitting on a canonical row order makes the result independent of input order
    _, y_codes = np.unique(design.y, return_inverse=True)
    keys = [y_codes.reshape(-1)] + [design.onehot[:, j] for j in range(design.onehot.shape[1])]
    return np.lexsort(keys[::-1])


@dataclass
class UtilityReport:
    accuracies: dict[str, float]
    score: float
    warnings: list[str]


def utility(synth_train: TableData, real_test: TableData, label_column: str,
            classifiers=ALL_CLASSIFIERS, seed: int = 0) -> UtilityReport:
    """Mean accuracy on ``real_test`` of classifiers fitted to ``synth_train``."""
    check_compatible(real_test, synth_train)
    if real_test.schema.kind(label_column) != CATEGORICAL:
        raise ConfigurationError(f"label column {label_column!r} must be categorical")
    if synth_train.n_rows == 0 or real_test.n_rows == 0:
        raise ConfigurationError("utility needs non-empty train and test tables")
    train, test, sizes = _designs(synth_train, real_test, label_column)
    order = _canonical_order(train)
    train = _Design(train.onehot[order], train.numeric[order], train.categorical[order], train.y[order])
    notes = []
    accuracies = {}
    single_class = np.unique(train.y).size == 1
    for kind in classifiers:
        kind = ClassifierKind(kind)
        if single_class:
            notes.append(f"{kind.value}: synthetic labels hold a single class; predicting it")
            pred = np.full(test.y.size, train.y[0], dtype=object)
        elif kind is ClassifierKind.NAIVE_BAYES:
            model = MixedNaiveBayes(train.numeric.shape[1], sizes).fit(train.numeric, train.categorical, train.y)
            pred = model.predict(test.numeric, test.categorical)
        else:
            model = _make(kind, seed)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model.fit(train.onehot, train.y)
            pred = model.predict(test.onehot)
        accuracies[kind.value] = float(np.mean(pred == test.y))
    for note in notes:
        warnings.warn(note, RuntimeWarning)
    return UtilityReport(accuracies, float(np.mean(list(accuracies.values()))), notes)
