"""Probabilistic text classifiers behind a shared predict-proba contract.

Attacks and detectors only ever see a function mapping a token sequence to a
C-dimensional probability vector plus its argmax label, so any external model
can be plugged in. Two lightweight trainable families are built in:
multinomial naive Bayes with add-one smoothing, and L2-regularized logistic
regression on bag-of-words counts trained by full-batch gradient descent.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sequence

__all__ = [
    "Prediction",
    "TextClassifier",
    "NaiveBayesModel",
    "LogisticRegressionModel",
    "ClassifierError",
    "train",
    "predict",
    "accuracy",
    "save_model",
    "load_model",
]

MODEL_FAMILIES = ("naive-bayes", "logreg-bow")

# Reserved out-of-vocabulary marker. The tokenizer splits "<", "unk", ">"
# apart, so no trained vocabulary can ever contain this literal token.
UNKNOWN_TOKEN = "<unk>"

_FORMAT_VERSION = 1


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    probabilities: tuple[float, ...]
    label: int


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    return shifted - math.log(np.exp(shifted).sum())


def _vocab_hash(vocabulary: list[str]) -> str:
    return hashlib.sha256("\n".join(vocabulary).encode("utf-8")).hexdigest()


class TextClassifier:
    """Classifier contract: class probabilities over a fixed label set."""

    num_classes: int

    def predict_proba(self, tokens) -> np.ndarray:
        raise NotImplementedError

    def predict(self, seq: Sequence) -> Prediction:
        return predict(self, seq)


class NaiveBayesModel(TextClassifier):
    """Multinomial naive Bayes, add-one smoothing, OOV tokens skipped."""

    family = "naive-bayes"

    def __init__(self, num_classes, vocabulary, log_prior, log_likelihood):
        self.num_classes = num_classes
        self.vocabulary = list(vocabulary)
        self.log_prior = np.asarray(log_prior, dtype=np.float64)
        # shape (C, V)
        self.log_likelihood = np.asarray(log_likelihood, dtype=np.float64)
        self._index = {w: i for i, w in enumerate(self.vocabulary)}

    @classmethod
    def fit(cls, corpus: Corpus, alpha: float = 1.0) -> "NaiveBayesModel":
        vocabulary = sorted({tok for seq in corpus for tok in seq.tokens})
        index = {w: i for i, w in enumerate(vocabulary)}
        C, V = corpus.num_classes, len(vocabulary)
        counts = np.zeros((C, V), dtype=np.float64)
        class_sizes = np.zeros(C, dtype=np.float64)
        for seq in corpus:
            class_sizes[seq.label] += 1
            for tok in seq.tokens:
                counts[seq.label, index[tok]] += 1
        log_prior = np.log(class_sizes / class_sizes.sum())
        totals = counts.sum(axis=1, keepdims=True)
        log_likelihood = np.log((counts + alpha) / (totals + alpha * V))
        return cls(C, vocabulary, log_prior, log_likelihood)

    def predict_proba(self, tokens) -> np.ndarray:
        scores = self.log_prior.copy()
        for tok in tokens:
            j = self._index.get(tok)
            if j is not None:
                scores += self.log_likelihood[:, j]
        return np.exp(_log_softmax(scores))

    def params_dict(self) -> dict:
        return {
            "log_prior": self.log_prior.tolist(),
            "log_likelihood": self.log_likelihood.tolist(),
        }

    @classmethod
    def from_params(cls, num_classes, vocabulary, params) -> "NaiveBayesModel":
        return cls(
            num_classes, vocabulary, params["log_prior"], params["log_likelihood"]
        )


class LogisticRegressionModel(TextClassifier):
    """Softmax regression on bag-of-words counts.

    Trained by full-batch gradient descent with a fixed step size and
    iteration budget so that training is deterministic. The bias column is
    not regularized.
    """

    family = "logreg-bow"

    def __init__(self, num_classes, vocabulary, weights, bias):
        self.num_classes = num_classes
        self.vocabulary = list(vocabulary)
        self.weights = np.asarray(weights, dtype=np.float64)  # (C, V)
        self.bias = np.asarray(bias, dtype=np.float64)  # (C,)
        self._index = {w: i for i, w in enumerate(self.vocabulary)}

    @classmethod
    def fit(
        cls,
        corpus: Corpus,
        learning_rate: float = 0.1,
        iterations: int = 500,
        l2: float = 1e-3,
    ) -> "LogisticRegressionModel":
        vocabulary = sorted({tok for seq in corpus for tok in seq.tokens})
        index = {w: i for i, w in enumerate(vocabulary)}
        C, V, n = corpus.num_classes, len(vocabulary), len(corpus)
        X = np.zeros((n, V), dtype=np.float64)
        y = np.zeros(n, dtype=np.int64)
        for row, seq in enumerate(corpus):
            y[row] = seq.label
            for tok in seq.tokens:
                X[row, index[tok]] += 1
        W = np.zeros((C, V), dtype=np.float64)
        b = np.zeros(C, dtype=np.float64)
        onehot = np.zeros((n, C), dtype=np.float64)
        onehot[np.arange(n), y] = 1.0
        for _ in range(iterations):
            probs = cls._batch_proba(X, W, b)
            diff = probs - onehot  # (n, C)
            grad_W = diff.T @ X / n + l2 * W
            grad_b = diff.mean(axis=0)
            W -= learning_rate * grad_W
            b -= learning_rate * grad_b
        return cls(C, vocabulary, W, b)

    @staticmethod
    def _batch_proba(X, W, b) -> np.ndarray:
        scores = X @ W.T + b
        shifted = scores - scores.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    @staticmethod
    def loss(X, y, W, b, l2: float) -> float:
        """Mean cross-entropy plus L2 penalty on the weights."""
        probs = LogisticRegressionModel._batch_proba(X, W, b)
        n = X.shape[0]
        nll = -np.log(probs[np.arange(n), y]).mean()
        return float(nll + 0.5 * l2 * (W ** 2).sum())

    @staticmethod
    def gradient(X, y, W, b, l2: float):
        n, C = X.shape[0], W.shape[0]
        onehot = np.zeros((n, C))
        onehot[np.arange(n), y] = 1.0
        diff = LogisticRegressionModel._batch_proba(X, W, b) - onehot
        return diff.T @ X / n + l2 * W, diff.mean(axis=0)

    def features(self, tokens) -> np.ndarray:
        x = np.zeros(len(self.vocabulary), dtype=np.float64)
        for tok in tokens:
            j = self._index.get(tok)
            if j is not None:
                x[j] += 1
        return x

    def predict_proba(self, tokens) -> np.ndarray:
        scores = self.weights @ self.features(tokens) + self.bias
        return np.exp(_log_softmax(scores))

    def params_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_params(cls, num_classes, vocabulary, params):
        return cls(num_classes, vocabulary, params["weights"], params["bias"])


_FAMILY_CLASSES = {
    NaiveBayesModel.family: NaiveBayesModel,
    LogisticRegressionModel.family: LogisticRegressionModel,
}


def train(corpus: Corpus, family: str, hyperparams: dict | None = None):
    """Train a built-in model family on the training split."""
    if family not in _FAMILY_CLASSES:
        raise ClassifierError(
            f"unknown model family {family!r}; choose from {MODEL_FAMILIES}"
        )
    labels = {seq.label for seq in corpus}
    if len(labels) < 2:
        raise ClassifierError("training corpus contains a single class")
    hyperparams = dict(hyperparams or {})
    hyperparams.pop("seed", None)  # both families are deterministic
    try:
        return _FAMILY_CLASSES[family].fit(corpus, **hyperparams)
    except TypeError as exc:
        raise ClassifierError(f"bad hyperparams for {family}: {exc}") from exc


def predict(model: TextClassifier, seq: Sequence) -> Prediction:
    """Class probabilities and argmax label (ties -> lowest index)."""
    if not seq.tokens:
        raise ClassifierError("cannot predict on an empty sequence")
    probs = model.predict_proba(seq.tokens)
    return Prediction(
        probabilities=tuple(float(p) for p in probs),
        label=int(np.argmax(probs)),
    )


def accuracy(model: TextClassifier, corpus: Corpus) -> float:
    """Fraction of sequences whose argmax label matches the gold label."""
    if len(corpus) == 0:
        raise ClassifierError("corpus is empty")
    hits = sum(1 for seq in corpus if predict(model, seq).label == seq.label)
    return hits / len(corpus)


def save_model(model, path) -> None:
    blob = {
        "format_version": _FORMAT_VERSION,
        "family": model.family,
        "num_classes": model.num_classes,
        "vocabulary": model.vocabulary,
        "vocabulary_hash": _vocab_hash(model.vocabulary),
        "params": model.params_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("format_version") != _FORMAT_VERSION:
        raise ClassifierError(
            f"unsupported model format version {blob.get('format_version')!r}"
        )
    family = blob.get("family")
    if family not in _FAMILY_CLASSES:
        raise ClassifierError(f"unknown model family {family!r} in {path}")
    vocabulary = blob["vocabulary"]
    if _vocab_hash(vocabulary) != blob.get("vocabulary_hash"):
        raise ClassifierError(f"vocabulary hash mismatch in {path}")
    return _FAMILY_CLASSES[family].from_params(
        blob["num_classes"], vocabulary, blob["params"]
    )
