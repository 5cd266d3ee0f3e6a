"""Hand-differentiated classifiers: softmax regression and a one-hidden-layer MLP."""

from __future__ import annotations

import numpy as np

from flexcomm.core import DenseGrad

KINDS = ("softmax_regression", "mlp_1hidden")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class SmallModel:
    """Parameter layout and analytic gradients for a tiny classifier.

    The model is stateless: parameters are passed in as one flat vector so
    that each worker replica can own its copy.
    """

    def __init__(self, kind: str, features: int, classes: int, hidden: int = 0) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}; choose from {KINDS}")
        if features < 1 or classes < 2:
            raise ValueError("need features >= 1 and classes >= 2")
        if kind == "mlp_1hidden" and hidden < 1:
            raise ValueError("mlp_1hidden needs hidden >= 1")
        self.kind = kind
        self.features = features
        self.classes = classes
        self.hidden = hidden if kind == "mlp_1hidden" else 0

        if kind == "softmax_regression":
            shapes = [("W", (features, classes)), ("b", (classes,))]
        else:
            shapes = [
                ("W1", (features, hidden)),
                ("b1", (hidden,)),
                ("W2", (hidden, classes)),
                ("b2", (classes,)),
            ]
        self.shapes = dict(shapes)
        layer_map, off = [], 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            layer_map.append((name, off, n))
            off += n
        self.layer_map = tuple(layer_map)
        self.n_params = off

    def unpack(self, params: np.ndarray) -> dict[str, np.ndarray]:
        return {
            name: params[off : off + n].reshape(self.shapes[name])
            for name, off, n in self.layer_map
        }

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "softmax_regression":
            return np.zeros(self.n_params)
        p = np.zeros(self.n_params)
        parts = self.unpack(p)
        parts["W1"][...] = rng.normal(0, 1 / np.sqrt(self.features), parts["W1"].shape)
        parts["W2"][...] = rng.normal(0, 1 / np.sqrt(self.hidden), parts["W2"].shape)
        return p

    def logits(self, params: np.ndarray, X: np.ndarray) -> np.ndarray:
        p = self.unpack(params)
        if self.kind == "softmax_regression":
            return X @ p["W"] + p["b"]
        return np.tanh(X @ p["W1"] + p["b1"]) @ p["W2"] + p["b2"]

    def loss(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        logp = _log_softmax(self.logits(params, X))
        return float(-logp[np.arange(len(y)), y].mean())

    def loss_and_grad(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean cross-entropy and its gradient as a flat array."""
        B = len(y)
        if B == 0:
            raise ValueError("empty batch")
        p = self.unpack(params)
        grad = np.zeros(self.n_params)
        g = self.unpack(grad)
        if self.kind == "softmax_regression":
            logp = _log_softmax(X @ p["W"] + p["b"])
            d = np.exp(logp)
            d[np.arange(B), y] -= 1.0
            d /= B
            g["W"][...] = X.T @ d
            g["b"][...] = d.sum(axis=0)
        else:
            h = np.tanh(X @ p["W1"] + p["b1"])
            logp = _log_softmax(h @ p["W2"] + p["b2"])
            d = np.exp(logp)
            d[np.arange(B), y] -= 1.0
            d /= B
            g["W2"][...] = h.T @ d
            g["b2"][...] = d.sum(axis=0)
            dh = (d @ p["W2"].T) * (1.0 - h * h)
            g["W1"][...] = X.T @ dh
            g["b1"][...] = dh.sum(axis=0)
        loss = float(-logp[np.arange(B), y].mean())
        return loss, grad

    def accuracy(self, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.logits(params, X).argmax(axis=1) == y))


def compute_grad(model: SmallModel, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[DenseGrad, float]:
    loss, grad = model.loss_and_grad(params, X, y)
    return DenseGrad(grad, model.layer_map), loss
