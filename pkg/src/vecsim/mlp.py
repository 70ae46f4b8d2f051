"""From-scratch multilayer perceptron for per-area content demand prediction.

Feed-forward net with ReLU hidden layers and a softmax head, trained by
mini-batch SGD on one-hot demographic/content features.  No autograd, no
optimizer state: plain gradients at a fixed learning rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import EMOTIONS, GENDERS, GENRES, Catalog, DemographicRecord

LOG_EPS = 1e-12  # clamp inside log() so empty predictions cannot produce inf


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for stability."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def cross_entropy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean over the batch of -sum_n y_n log(y_hat_n)."""
    y_true = np.atleast_2d(y_true)
    y_pred = np.atleast_2d(y_pred)
    return float(-(y_true * np.log(np.clip(y_pred, LOG_EPS, None))).sum(axis=1).mean())


class FeatureEncoder:
    """Encodes (age, gender, emotion, genre, rating) into a float vector.

    Categoricals are one-hot over fixed vocabularies with one reserved
    "unknown" slot each; age and rating are min-max scaled to [0, 1] with
    bounds fitted on training data.
    """

    def __init__(self):
        self.age_min = 0.0
        self.age_max = 1.0
        self.rating_min = 0.0
        self.rating_max = 1.0
        self.fitted = False

    @property
    def dim(self) -> int:
        return 2 + (len(GENDERS) + 1) + (len(EMOTIONS) + 1) + (len(GENRES) + 1)

    def fit(self, rows: Sequence[tuple[float, str, str, str, float]]) -> "FeatureEncoder":
        ages = [r[0] for r in rows]
        ratings = [r[4] for r in rows]
        self.age_min, self.age_max = float(min(ages)), float(max(ages))
        self.rating_min, self.rating_max = float(min(ratings)), float(max(ratings))
        if self.age_max == self.age_min:
            self.age_max = self.age_min + 1.0
        if self.rating_max == self.rating_min:
            self.rating_max = self.rating_min + 1.0
        self.fitted = True
        return self

    def _scale(self, v: float, lo: float, hi: float) -> float:
        return float(np.clip((v - lo) / (hi - lo), 0.0, 1.0))

    def encode(self, rows: Sequence[tuple[float, str, str, str, float]]) -> tuple[np.ndarray, dict[str, int]]:
        """Returns (X, unknown_counts) where unknown_counts tallies levels
        that fell into a reserved unknown slot, keyed by field name."""
        if not self.fitted:
            raise RuntimeError("encoder not fitted")
        X = np.zeros((len(rows), self.dim))
        unknown = {"gender": 0, "emotion": 0, "genre": 0}
        for i, (age, gender, emotion, genre, rating) in enumerate(rows):
            j = 0
            X[i, j] = self._scale(age, self.age_min, self.age_max)
            j += 1
            X[i, j] = self._scale(rating, self.rating_min, self.rating_max)
            j += 1
            for vocab, value, name in (
                (GENDERS, gender, "gender"),
                (EMOTIONS, emotion, "emotion"),
                (GENRES, genre, "genre"),
            ):
                if value in vocab:
                    X[i, j + vocab.index(value)] = 1.0
                else:
                    X[i, j + len(vocab)] = 1.0  # reserved unknown slot
                    unknown[name] += 1
                j += len(vocab) + 1
        return X, unknown

    def to_dict(self) -> dict:
        return {
            "age_min": self.age_min,
            "age_max": self.age_max,
            "rating_min": self.rating_min,
            "rating_max": self.rating_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        enc = cls()
        enc.age_min = d["age_min"]
        enc.age_max = d["age_max"]
        enc.rating_min = d["rating_min"]
        enc.rating_max = d["rating_max"]
        enc.fitted = True
        return enc


def record_features(r: DemographicRecord, catalog: Catalog) -> tuple[float, str, str, str, float]:
    return (r.age, r.gender, r.emotion, catalog.get(r.content_id).genre, r.rating)


class MlpModel:
    """Weights and biases of the network; layer_dims includes input and output."""

    def __init__(self, layer_dims: Sequence[int], seed: int = 0):
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output layers")
        if any(d < 1 for d in layer_dims):
            raise ValueError("layer dims must be positive")
        self.layer_dims = list(layer_dims)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            # Glorot uniform: +-sqrt(6 / (fan_in + fan_out))
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Softmax class probabilities, one row per input row."""
        a = np.atleast_2d(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = relu(a @ W + b)
        return softmax(a @ self.weights[-1] + self.biases[-1])

    def _forward_cached(self, X: np.ndarray):
        acts = [np.atleast_2d(X)]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(relu(acts[-1] @ W + b))
        out = softmax(acts[-1] @ self.weights[-1] + self.biases[-1])
        return acts, out

    def loss_gradients(self, X: np.ndarray, Y: np.ndarray):
        """Backprop gradients of the mean cross-entropy w.r.t. every weight
        and bias.  Returns (grads_W, grads_b, loss)."""
        Y = np.atleast_2d(Y)
        acts, out = self._forward_cached(X)
        n = out.shape[0]
        delta = (out - Y) / n  # softmax + cross-entropy pair
        grads_W: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_W[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = delta @ self.weights[layer].T
                delta[acts[layer] <= 0] = 0.0  # ReLU gate
        return grads_W, grads_b, cross_entropy(Y, out)

    def finite_difference_gradients(self, X: np.ndarray, Y: np.ndarray, eps: float = 1e-5):
        """Central finite differences of the loss over every parameter.
        Slow; intended as the reference for gradient checks."""
        grads_W = [np.zeros_like(W) for W in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        for params, grads in ((self.weights, grads_W), (self.biases, grads_b)):
            for p, g in zip(params, grads):
                flat_p = p.reshape(-1)
                flat_g = g.reshape(-1)
                for k in range(flat_p.size):
                    orig = flat_p[k]
                    flat_p[k] = orig + eps
                    hi = cross_entropy(Y, self.forward(X))
                    flat_p[k] = orig - eps
                    lo = cross_entropy(Y, self.forward(X))
                    flat_p[k] = orig
                    flat_g[k] = (hi - lo) / (2 * eps)
        return grads_W, grads_b

    def gradient_check(self, X: np.ndarray, Y: np.ndarray, eps: float = 1e-5) -> float:
        """Max relative error between backprop and central differences."""
        gW, gb, _ = self.loss_gradients(X, Y)
        nW, nb = self.finite_difference_gradients(X, Y, eps)
        worst = 0.0
        for a, b in list(zip(gW, nW)) + list(zip(gb, nb)):
            denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
            worst = max(worst, float((np.abs(a - b) / denom).max()))
        return worst

    def accuracy(self, X: np.ndarray, Y: np.ndarray) -> float:
        """Fraction of rows whose argmax matches the one-hot label."""
        pred = self.forward(X).argmax(axis=1)
        return float((pred == np.atleast_2d(Y).argmax(axis=1)).mean())


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (32, 32)
    lr: float = 0.002
    batch_size: int = 32
    epochs: int = 60
    split: float = 0.6  # train fraction
    seed: int = 0


@dataclass
class TrainingHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)

    def append(self, epoch: int, tl: float, ta: float, vl: float, va: float):
        self.epochs.append(epoch)
        self.train_loss.append(tl)
        self.train_acc.append(ta)
        self.test_loss.append(vl)
        self.test_acc.append(va)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(labels), n_classes))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


def train(
    records: Sequence[DemographicRecord],
    catalog: Catalog,
    n_areas: int,
    config: TrainConfig = TrainConfig(),
) -> tuple[MlpModel, FeatureEncoder, TrainingHistory]:
    """Fit the area classifier on viewing records.

    Splits train/test by config.split after a seeded shuffle, then runs
    mini-batch SGD.  Per-epoch loss and accuracy are recorded for both
    splits.  epochs=0 returns the initialized model with metrics only.
    """
    if n_areas < 2:
        raise ValueError(f"need at least 2 areas, got {n_areas}")
    if not 0.0 < config.split < 1.0:
        raise ValueError("train split must be in (0, 1)")
    if any(a.area > n_areas for a in records):
        raise ValueError("record area index exceeds n_areas")
    if len(records) < 2:
        raise ValueError("need at least 2 records")

    feats = [record_features(r, catalog) for r in records]
    encoder = FeatureEncoder().fit(feats)
    X, _ = encoder.encode(feats)
    labels = np.array([r.area - 1 for r in records])
    Y = one_hot(labels, n_areas)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(records))
    n_train = max(1, int(round(config.split * len(records))))
    tr, te = order[:n_train], order[n_train:]
    if len(te) == 0:
        te = tr  # degenerate split: report train metrics twice
    Xtr, Ytr, Xte, Yte = X[tr], Y[tr], X[te], Y[te]

    model = MlpModel([encoder.dim, *config.hidden, n_areas], seed=config.seed)
    history = TrainingHistory()

    def log_epoch(epoch: int):
        tl = cross_entropy(Ytr, model.forward(Xtr))
        vl = cross_entropy(Yte, model.forward(Xte))
        history.append(epoch, tl, model.accuracy(Xtr, Ytr), vl, model.accuracy(Xte, Yte))
        if not np.isfinite(tl) or not np.isfinite(vl):
            raise RuntimeError(f"non-finite loss at epoch {epoch}: train={tl}, test={vl}")

    log_epoch(0)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(tr))
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            gW, gb, loss = model.loss_gradients(Xtr[idx], Ytr[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite batch loss at epoch {epoch}")
            for W, g in zip(model.weights, gW):
                W -= config.lr * g
            for b, g in zip(model.biases, gb):
                b -= config.lr * g
        log_epoch(epoch)
    return model, encoder, history


# --------------------------------------------------------------------------
# Prediction table

@dataclass(frozen=True)
class PredictionRow:
    user_id: str
    age: float
    gender: str
    emotion: str
    genre: str
    content_id: str
    rating: float
    area: int               # record's own area label
    probs: tuple[float, ...]  # predicted area distribution


class AreaContentProbabilities:
    """Per-record predicted area distributions plus content-level summaries."""

    def __init__(self, rows: Sequence[PredictionRow], n_areas: int, unknown_counts: dict[str, int]):
        self.rows = list(rows)
        self.n_areas = n_areas
        self.unknown_counts = dict(unknown_counts)

    def rows_for_area(self, area: int) -> list[PredictionRow]:
        return [r for r in self.rows if r.area == area]

    def content_probabilities(self) -> dict[str, np.ndarray]:
        """Mean predicted distribution per content id, over its records."""
        sums: dict[str, np.ndarray] = {}
        counts: dict[str, int] = {}
        for r in self.rows:
            v = sums.get(r.content_id)
            if v is None:
                sums[r.content_id] = np.array(r.probs)
                counts[r.content_id] = 1
            else:
                v += np.array(r.probs)
                counts[r.content_id] += 1
        return {c: sums[c] / counts[c] for c in sums}

    def content_mean_rating(self) -> dict[str, float]:
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for r in self.rows:
            sums[r.content_id] = sums.get(r.content_id, 0.0) + r.rating
            counts[r.content_id] = counts.get(r.content_id, 0) + 1
        return {c: sums[c] / counts[c] for c in sums}

    def top_contents(self, area: int, k: int | None = None) -> list[tuple[str, float]]:
        """Contents ranked by mean predicted probability for `area`
        (descending, ties broken by id)."""
        if not 1 <= area <= self.n_areas:
            raise ValueError(f"area {area} outside 1..{self.n_areas}")
        probs = self.content_probabilities()
        ranked = sorted(probs, key=lambda c: (-probs[c][area - 1], c))
        pairs = [(c, float(probs[c][area - 1])) for c in ranked]
        return pairs if k is None else pairs[:k]

    def content_area_assignment(self) -> dict[str, int]:
        """Each content's argmax area (ties -> lowest area index)."""
        return {c: int(np.argmax(p)) + 1 for c, p in self.content_probabilities().items()}


def predict_area_probabilities(
    model: MlpModel,
    encoder: FeatureEncoder,
    records: Sequence[DemographicRecord],
    catalog: Catalog,
) -> AreaContentProbabilities:
    """Run the model over records; every output row sums to one."""
    feats = [record_features(r, catalog) for r in records]
    X, unknown = encoder.encode(feats)
    probs = model.forward(X)
    rows = [
        PredictionRow(
            user_id=r.user_id,
            age=r.age,
            gender=r.gender,
            emotion=r.emotion,
            genre=f[3],
            content_id=r.content_id,
            rating=r.rating,
            area=r.area,
            probs=tuple(float(x) for x in probs[i]),
        )
        for i, (r, f) in enumerate(zip(records, feats))
    ]
    return AreaContentProbabilities(rows, model.n_classes, unknown)


# --------------------------------------------------------------------------
# Serialization

def save_model(model: MlpModel, encoder: FeatureEncoder, path: str | Path) -> None:
    """Portable JSON: layer dims, row-major weights, biases, encoder bounds."""
    doc = {
        "format": "vecsim-mlp-v1",
        "layer_dims": model.layer_dims,
        "weights": [W.tolist() for W in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "encoder": encoder.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> tuple[MlpModel, FeatureEncoder]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "vecsim-mlp-v1":
        raise ValueError(f"unrecognized model format in {path}")
    model = MlpModel(doc["layer_dims"], seed=0)
    model.weights = [np.array(W) for W in doc["weights"]]
    model.biases = [np.array(b) for b in doc["biases"]]
    for W, b, fan_in, fan_out in zip(
        model.weights, model.biases, doc["layer_dims"][:-1], doc["layer_dims"][1:]
    ):
        if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ValueError("weight shapes disagree with layer_dims")
    return model, FeatureEncoder.from_dict(doc["encoder"])


def export_loss_curves(history: TrainingHistory, path: str | Path) -> None:
    """CSV of per-epoch loss/accuracy for both splits."""
    lines = ["epoch,train_loss,train_acc,test_loss,test_acc"]
    for i, e in enumerate(history.epochs):
        lines.append(
            f"{e},{history.train_loss[i]!r},{history.train_acc[i]!r},"
            f"{history.test_loss[i]!r},{history.test_acc[i]!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
