"""Signal-type classifier over autoencoder latents.

Three classes: idle background (I), WiFi burst (W), jammer (J).  A
small feed-forward net with one hidden layer of 15 ReLU units and
dropout 0.5 maps standardized latent vectors to class probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn

LABELS = ("I", "W", "J")


@dataclass
class FnnConfig:
    input_dim: int = 64
    hidden_units: int = 15
    dropout: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 150
    seed: int = 0
    classes: tuple = LABELS


@dataclass
class FnnModel:
    net: nn.Network
    mean: np.ndarray
    std: np.ndarray
    classes: tuple = LABELS

    def save(self, path):
        nn.save_network(
            self.net,
            path,
            extras={
                "feature_mean": self.mean,
                "feature_std": self.std,
                "class_codes": np.array([ord(c) for c in self.classes], dtype=np.int64),
            },
        )

    @classmethod
    def load(cls, path):
        net, extras = nn.load_network(path)
        return cls(
            net=net,
            mean=extras["feature_mean"],
            std=extras["feature_std"],
            classes=tuple(chr(int(c)) for c in extras["class_codes"]),
        )


def label_indices(labels, classes=LABELS):
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"unknown label {exc.args[0]!r}") from exc


def one_hot(indices, n_classes):
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((len(indices), n_classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def standardize(z, mean, std):
    return (np.asarray(z, dtype=np.float64) - mean) / std


def train_fnn(z_train, y_train, z_test=None, y_test=None, config=None, progress=None):
    """Fit the classifier on latent rows and string labels.

    Features are standardized with training-set statistics (kept in the
    model).  History carries per-epoch training cross-entropy and, when
    a test split is given, test accuracy.
    """
    config = config or FnnConfig()
    z_train = np.asarray(z_train, dtype=np.float64)
    if z_train.shape[1] != config.input_dim:
        raise ValueError("latent width does not match classifier input size")
    mean = z_train.mean(axis=0)
    std = z_train.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    x = standardize(z_train, mean, std)
    t = one_hot(label_indices(y_train, config.classes), len(config.classes))

    specs = [
        nn.LayerSpec(config.input_dim, config.hidden_units, "relu",
                     dropout_prob=config.dropout),
        nn.LayerSpec(config.hidden_units, len(config.classes), "softmax"),
    ]
    net = nn.init_network(specs, seed=config.seed)
    params = nn.parameters(net)
    state = nn.init_adam_state(params)
    rng = np.random.default_rng(config.seed + 1)

    model = FnnModel(net=net, mean=mean, std=std, classes=config.classes)
    history = {"epoch": [], "train_loss": [], "test_accuracy": []}
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = nn.backward(
                net, x[idx], t[idx], "cross_entropy", train=True, rng=rng
            )
            nn.adam_step(params, nn.grads_flat(grads), state, lr=config.learning_rate)
            epoch_loss += loss * len(idx)
        history["epoch"].append(epoch)
        history["train_loss"].append(epoch_loss / n)
        if z_test is not None:
            acc = accuracy(y_test, predict(model, z_test))
            history["test_accuracy"].append(acc)
        if progress:
            progress(epoch, history)
    return model, history


def predict_proba(model, z):
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 1
    x = standardize(z[None, :] if squeeze else z, model.mean, model.std)
    p = nn.forward(model.net, x)
    return p[0] if squeeze else p


def predict(model, z):
    p = predict_proba(model, z)
    idx = np.argmax(np.atleast_2d(p), axis=1)
    labels = [model.classes[i] for i in idx]
    return labels[0] if np.ndim(p) == 1 else labels


def confusion_matrix(y_true, y_pred, classes=LABELS):
    """Counts with true classes on rows, predicted on columns."""
    ti = label_indices(y_true, classes)
    pi = label_indices(y_pred, classes)
    k = len(classes)
    out = np.zeros((k, k), dtype=np.int64)
    np.add.at(out, (ti, pi), 1)
    return out


def accuracy(y_true, y_pred):
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError("length mismatch")
    hits = sum(a == b for a, b in zip(y_true, y_pred))
    return hits / len(y_true)


def per_class_recall(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    totals = matrix.sum(axis=1)
    with np.errstate(invalid="ignore"):
        recall = np.diag(matrix) / totals
    return np.where(totals > 0, recall, np.nan)


def misclass_rate(matrix, classes, from_label, to_label):
    """Fraction of from_label frames predicted as to_label."""
    i = classes.index(from_label)
    j = classes.index(to_label)
    row = matrix[i].sum()
    return matrix[i, j] / row if row > 0 else 0.0
