"""Posture decision function: a fully connected softmax network over
measurement vectors, trained per sample on the expected recognition cost.

Measurement vectors enter as interleaved real features
``(Re y_1, Im y_1, ..., Re y_K, Im y_K)``, standardized with statistics from
the training split. Posture labels are 0-based indices.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

MODEL_FORMAT = "rissense-decision-network"
MODEL_VERSION = 1


@dataclass(frozen=True, eq=False)
class CostModel:
    """``chi[i, j]`` is the cost of deciding posture j when the truth is i."""

    chi: np.ndarray
    priors: np.ndarray | None = None

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=float)
        if chi.ndim != 2 or chi.shape[0] != chi.shape[1]:
            raise ValueError("cost matrix must be square")
        if np.any(chi < 0):
            raise ValueError("costs must be non-negative")
        object.__setattr__(self, "chi", chi)
        p = np.full(chi.shape[0], 1.0 / chi.shape[0]) if self.priors is None \
            else np.asarray(self.priors, dtype=float)
        if p.shape != (chi.shape[0],) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ValueError("priors must be a probability vector over the postures")
        object.__setattr__(self, "priors", p)

    @classmethod
    def zero_one(cls, n_postures: int, priors=None) -> "CostModel":
        return cls(1.0 - np.eye(n_postures), priors)

    @property
    def n_postures(self) -> int:
        return self.chi.shape[0]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    Y: np.ndarray           # (N, K) complex measurement vectors
    labels: np.ndarray      # (N,) posture indices
    split: str = "train"

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.Y, dtype=complex))
        labels = np.asarray(self.labels, dtype=int)
        if labels.shape != (Y.shape[0],):
            raise ValueError("one label per measurement vector is required")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative posture indices")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size

    @property
    def n_frames(self) -> int:
        return self.Y.shape[1]


def features(Y: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: (..., K) complex -> (..., 2K)."""
    Y = np.asarray(Y, dtype=complex)
    out = np.empty(Y.shape[:-1] + (2 * Y.shape[-1],))
    out[..., 0::2] = Y.real
    out[..., 1::2] = Y.imag
    return out


_ACTIVATIONS = {
    "relu": (lambda a: np.maximum(a, 0.0), lambda a, h: (a > 0).astype(float)),
    "tanh": (np.tanh, lambda a, h: 1.0 - h ** 2),
    "sigmoid": (lambda a: 0.5 * (1.0 + np.tanh(a / 2)), lambda a, h: h * (1.0 - h)),
}


@dataclass(eq=False)
class DecisionNetwork:
    layer_sizes: tuple
    theta: np.ndarray
    activation: str = "relu"
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least an input and an output layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (n_parameters(self.layer_sizes),):
            raise ValueError("parameter vector does not match the layer sizes")
        n_in = self.layer_sizes[0]
        if self.feature_mean is None:
            self.feature_mean = np.zeros(n_in)
        if self.feature_scale is None:
            self.feature_scale = np.ones(n_in)
        self.feature_mean = np.asarray(self.feature_mean, dtype=float)
        self.feature_scale = np.asarray(self.feature_scale, dtype=float)

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def layers(self, theta: np.ndarray | None = None):
        """(W, b) views into the parameter vector, one pair per layer."""
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = theta[pos:pos + n_out * n_in].reshape(n_out, n_in)
            pos += n_out * n_in
            b = theta[pos:pos + n_out]
            pos += n_out
            out.append((W, b))
        return out


def n_parameters(layer_sizes) -> int:
    return sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_network(layer_sizes, rng, init: str = "uniform", activation: str = "relu",
                 feature_mean=None, feature_scale=None) -> DecisionNetwork:
    """``uniform`` draws every weight and bias from U(0, 1); ``scaled`` uses
    symmetric Glorot-uniform weights and zero biases."""
    n = n_parameters(layer_sizes)
    if init == "uniform":
        theta = rng.uniform(0.0, 1.0, n)
    elif init == "scaled":
        theta = np.zeros(n)
        net = DecisionNetwork(layer_sizes, theta, activation)
        for W, _ in net.layers(theta):
            lim = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            W[...] = rng.uniform(-lim, lim, W.shape)
    else:
        raise ValueError(f"unknown init {init!r}")
    return DecisionNetwork(layer_sizes, theta, activation, feature_mean, feature_scale)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _forward_features(net: DecisionNetwork, x: np.ndarray, theta=None, keep=False):
    act = _ACTIVATIONS[net.activation][0]
    h = (x - net.feature_mean) / net.feature_scale
    cache = [(None, h)]
    layers = net.layers(theta)
    for W, b in layers[:-1]:
        a = h @ W.T + b
        h = act(a)
        cache.append((a, h))
    W, b = layers[-1]
    probs = softmax(h @ W.T + b)
    return (probs, cache) if keep else probs


def forward(net: DecisionNetwork, y: np.ndarray) -> np.ndarray:
    """Posture probabilities for one measurement vector (or a batch)."""
    x = features(y)
    if x.shape[-1] != net.layer_sizes[0]:
        raise ValueError(f"network expects {net.layer_sizes[0] // 2} frames, "
                         f"got {x.shape[-1] // 2}")
    return _forward_features(net, x)


def sample_loss(probs: np.ndarray, label: int, cost: CostModel) -> float:
    return float(cost.chi[label] @ np.asarray(probs))


def _gradient(net: DecisionNetwork, x: np.ndarray, label: int, chi: np.ndarray,
              theta=None) -> tuple[float, np.ndarray]:
    probs, cache = _forward_features(net, x, theta, keep=True)
    row = chi[label]
    loss = float(row @ probs)
    delta = probs * (row - loss)            # d loss / d logits
    grad = np.empty_like(net.theta)
    dact = _ACTIVATIONS[net.activation][1]
    layers = net.layers(theta)
    offsets = np.cumsum([0] + [W.size + b.size for W, b in layers])
    for idx in range(len(layers) - 1, -1, -1):
        W, b = layers[idx]
        h_in = cache[idx][1]
        pos = offsets[idx]
        grad[pos:pos + W.size] = np.outer(delta, h_in).ravel()
        grad[pos + W.size:pos + W.size + b.size] = delta
        if idx:
            a_in, h_prev = cache[idx]
            delta = (W.T @ delta) * dact(a_in, h_prev)
    return loss, grad


def backprop_gradient(net: DecisionNetwork, y: np.ndarray, label: int,
                      cost: CostModel) -> np.ndarray:
    """Exact gradient of the sample cost with respect to ``net.theta``."""
    return _gradient(net, features(y), label, cost.chi)[1]


def total_loss(net: DecisionNetwork, X: np.ndarray, labels: np.ndarray,
               chi: np.ndarray, theta=None) -> float:
    probs = _forward_features(net, X, theta)
    return float(np.sum(probs * chi[labels]))


@dataclass
class TrainOptions:
    hidden: tuple = (64, 64)
    activation: str = "relu"
    init: str = "uniform"
    standardize: bool = True
    max_epochs: int = 500
    patience: int = 1
    shuffle: bool = False


@dataclass
class TrainResult:
    net: DecisionNetwork
    losses: list          # accepted epoch losses, starting with the initial loss
    rejected: float | None  # loss of the epoch that triggered the stop
    epochs: int


def train(dataset: LabeledDataset, cost: CostModel, learning_rate: float = 0.01,
          seed=None, options: TrainOptions | None = None) -> TrainResult:
    """Per-sample gradient descent on the cost-weighted loss.

    After every epoch the summed training loss is recomputed; training stops
    once ``options.patience`` consecutive epochs fail to lower it and the
    best parameters seen are returned.
    """
    options = options or TrainOptions()
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    if not 0 < learning_rate < 1:
        raise ValueError("learning rate must lie in (0, 1)")
    if dataset.labels.max() >= cost.n_postures:
        raise ValueError("label outside the cost model's postures")
    rng = np.random.default_rng(seed)
    X = features(dataset.Y)
    if options.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    sizes = (X.shape[1], *options.hidden, cost.n_postures)
    net = init_network(sizes, rng, options.init, options.activation, mean, scale)
    chi, labels = cost.chi, dataset.labels

    best_theta = net.theta.copy()
    best = total_loss(net, X, labels, chi)
    if not np.isfinite(best):
        raise FloatingPointError("initial loss is not finite")
    losses, rejected, misses, epoch = [best], None, 0, 0
    theta = net.theta.copy()
    for epoch in range(1, options.max_epochs + 1):
        order = rng.permutation(len(labels)) if options.shuffle else range(len(labels))
        for j in order:
            _, g = _gradient(net, X[j], labels[j], chi, theta)
            theta -= learning_rate * g
        loss = total_loss(net, X, labels, chi, theta)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss diverged at epoch {epoch}; lower the learning rate")
        if loss < best:
            best, best_theta, misses = loss, theta.copy(), 0
            losses.append(loss)
        else:
            misses += 1
            rejected = loss
            if misses >= options.patience:
                break
    net.theta = best_theta
    return TrainResult(net, losses, rejected, epoch)


@dataclass
class EvaluationReport:
    cost: float                    # empirical average false-recognition cost
    prior_weighted_cost: float     # same, classes reweighted by the priors
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray          # rows: true posture, columns: decision
    probs: np.ndarray = field(repr=False, default=None)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        n = self.confusion.shape[0]
        w.writerow(["true_posture", *[f"decided_{j}" for j in range(n)], "accuracy"])
        for i in range(n):
            w.writerow([i, *self.confusion[i].tolist(), f"{self.per_class_accuracy[i]:.12g}"])
        out.write(f"# accuracy={self.accuracy:.12g}\n")
        out.write(f"# cost={self.cost:.12g}\n")
        out.write(f"# prior_weighted_cost={self.prior_weighted_cost:.12g}\n")
        return out.getvalue()


def evaluate(net: DecisionNetwork, dataset: LabeledDataset, cost: CostModel) -> EvaluationReport:
    """Empirical cost, accuracy and confusion matrix of argmax decisions.

    ``np.argmax`` breaks probability ties toward the lower posture index.
    """
    if len(dataset) == 0:
        raise ValueError("evaluation set is empty")
    probs = forward(net, dataset.Y)
    labels = dataset.labels
    off = cost.chi.copy()
    np.fill_diagonal(off, 0.0)
    per_sample = np.sum(probs * off[labels], axis=1)
    n = cost.n_postures
    decided = np.argmax(probs, axis=1)
    confusion = np.zeros((n, n), dtype=int)
    np.add.at(confusion, (labels, decided), 1)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, np.diag(confusion) / counts, np.nan)
        class_cost = np.array([per_sample[labels == i].mean() if counts[i] else 0.0
                               for i in range(n)])
    present = counts > 0
    weights = cost.priors * present
    weighted = float(np.sum(weights * class_cost) / np.sum(weights)) if weights.sum() else 0.0
    return EvaluationReport(float(per_sample.mean()), weighted,
                            float(np.mean(decided == labels)), per_class, confusion, probs)


# -- model artifact ---------------------------------------------------------

def dumps_model(net: DecisionNetwork) -> str:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "feature_mean": [repr(float(v)) for v in net.feature_mean],
        "feature_scale": [repr(float(v)) for v in net.feature_scale],
        "theta": [repr(float(v)) for v in net.theta],
    }
    return json.dumps(payload, indent=1) + "\n"


def loads_model(text: str) -> DecisionNetwork:
    d = json.loads(text)
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a decision-network artifact")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    floats = lambda key: np.array([float(v) for v in d[key]])  # noqa: E731
    return DecisionNetwork(tuple(d["layer_sizes"]), floats("theta"), d["activation"],
                           floats("feature_mean"), floats("feature_scale"))
