"""A small dense classifier with exact input gradients.

ReLU hidden layers, softmax output, 64-bit floats end to end. The point is
not speed (BLAS through numpy is plenty at these sizes) but auditability:
the backward pass is exact, so finite-difference checks hold to tight
tolerances and every consumer of input gradients gets the true derivative
of the cross-entropy objective.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

WEIGHT_FORMAT_VERSION = 1
ACTIVATION_TAG = "relu_softmax"


class ModelFormatError(ValueError):
    """Raised when a weight file has an unknown version or activation."""


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class MLP:
    """Dense multi-layer perceptron, immutable during inference."""

    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up layer by layer")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError("inconsistent layer shapes")

    @classmethod
    def initialized(cls, layer_dims, rng):
        """Fresh model with uniform(-s, s) weights, s = sqrt(6/(fan_in+fan_out))."""
        if len(layer_dims) < 2:
            raise ValueError("need at least an input and an output dimension")
        weights = []
        biases = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            s = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_dims(self):
        return [w.shape[0] for w in self.weights] + [self.weights[-1].shape[1]]

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def num_classes(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    # -- inference -----------------------------------------------------

    def predict_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected inputs of dimension {self.input_dim}, got {X.shape[1]}"
            )
        acts = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts = np.maximum(acts @ w + b, 0.0)
        return _softmax(acts @ self.weights[-1] + self.biases[-1])

    def predict_one(self, x):
        return self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0]

    def predict_labels(self, X):
        return np.argmax(self.predict_batch(X), axis=1)

    def predict_label(self, x):
        return int(np.argmax(self.predict_one(x)))

    def _forward_cached(self, X):
        """Forward pass keeping pre- and post-activations for backprop."""
        pre = []
        post = [X]
        acts = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts @ w + b
            pre.append(z)
            acts = _softmax(z) if i == last else np.maximum(z, 0.0)
            post.append(acts)
        return pre, post

    # -- gradients -----------------------------------------------------

    def input_gradient_batch(self, X, labels):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.num_classes:
            raise ValueError("label out of range")
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected inputs of dimension {self.input_dim}, got {X.shape[1]}"
            )
        pre, post = self._forward_cached(X)
        delta = post[-1].copy()
        delta[np.arange(X.shape[0]), labels] -= 1.0
        for layer in range(len(self.weights) - 1, 0, -1):
            delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        return delta @ self.weights[0].T

    def input_gradient(self, x, target_label):
        """Exact gradient of the cross-entropy loss with respect to the input."""
        x = np.asarray(x, dtype=np.float64)
        return self.input_gradient_batch(x[None, :], [int(target_label)])[0]

    def loss(self, x, label):
        """Cross-entropy of one sample against the given label."""
        p = self.predict_one(x)[int(label)]
        return float(-np.log(max(p, 1e-300)))


def forward(model, batch):
    """Batch prediction, one probability vector per input, order preserved."""
    if len(batch) == 0:
        raise ValueError("forward requires a non-empty batch")
    return list(model.predict_batch(np.asarray(batch, dtype=np.float64)))


def train(model, data, epochs, lr, rng, batch_size=32):
    """Mini-batch SGD on the cross-entropy loss with per-epoch shuffling.

    Mutates and returns the given model. With lr = 0 the arithmetic leaves
    every weight bit-identical, which the determinism tests rely on.

    Args:
        model: the MLP to update in place.
        data: anything with .X (n, d) and integer .y (n,) attributes.
        epochs: full passes over the data.
        lr: SGD step size.
        rng: numpy Generator driving the shuffles.
        batch_size: mini-batch size; the last batch of an epoch may be short.
    """
    if data.y is None:
        raise ValueError("training requires labels")
    X = np.asarray(data.X, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("training requires a non-empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    n = len(X)
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _sgd_step(model, X[idx], y[idx], lr)
    return model


def _sgd_step(model, Xb, yb, lr):
    pre, post = model._forward_cached(Xb)
    count = Xb.shape[0]
    delta = post[-1].copy()
    delta[np.arange(count), yb] -= 1.0
    delta /= count
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w = post[layer].T @ delta
        grad_b = delta.sum(axis=0)
        if layer > 0:
            # propagate through the old weights before touching them
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0.0)
        model.weights[layer] -= lr * grad_w
        model.biases[layer] -= lr * grad_b


def gradient_check(model, x, label, h=1e-4):
    """Max relative disagreement between analytic and central differences.

    Coordinates where both gradients are below 1e-12 in magnitude are
    compared absolutely, so a flat loss reports zero error instead of 0/0.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    analytic = model.input_gradient(x, label)
    worst = 0.0
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += h
        dn[i] -= h
        numeric = (model.loss(up, label) - model.loss(dn, label)) / (2.0 * h)
        scale = max(abs(analytic[i]), abs(numeric))
        diff = abs(analytic[i] - numeric)
        worst = max(worst, diff if scale < 1e-12 else diff / scale)
    return worst


# -- persistence -------------------------------------------------------


def save_model(model, path):
    doc = {
        "format_version": WEIGHT_FORMAT_VERSION,
        "layer_dims": model.layer_dims,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "activation": ACTIVATION_TAG,
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path):
    """Load a weight file, rejecting unknown versions and activations."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != WEIGHT_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported weight format version: {version!r}")
    if doc.get("activation") != ACTIVATION_TAG:
        raise ModelFormatError(f"unsupported activation: {doc.get('activation')!r}")
    model = MLP(
        [np.array(w, dtype=np.float64) for w in doc["weights"]],
        [np.array(b, dtype=np.float64) for b in doc["biases"]],
    )
    if model.layer_dims != list(doc.get("layer_dims", [])):
        raise ModelFormatError("layer_dims do not match the stored arrays")
    return model
