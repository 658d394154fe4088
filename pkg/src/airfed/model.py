"""Multinomial logistic regression on a flat parameter vector.

Parameters are a (d+1) x c weight matrix stored row-major as a vector of
length (d+1)*c; the last input coordinate is a constant 1 (the bias row).
"""

from __future__ import annotations

import numpy as np

from airfed.data import Dataset


def model_dim(n_features: int, n_classes: int) -> int:
    return (n_features + 1) * n_classes


def init_params(n_features: int, n_classes: int) -> np.ndarray:
    return np.zeros(model_dim(n_features, n_classes))


def _weights(w: np.ndarray, ds: Dataset) -> np.ndarray:
    expected = model_dim(ds.n_features, ds.n_classes)
    if w.shape != (expected,):
        raise ValueError(f"parameter vector has shape {w.shape}, expected ({expected},)")
    return w.reshape(ds.n_features + 1, ds.n_classes)


def _batch(batch, ds: Dataset) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise ValueError("batch must be non-empty")
    return batch


def logits(w: np.ndarray, indices, ds: Dataset) -> np.ndarray:
    W = _weights(w, ds)
    x = ds.features[indices]
    return x @ W[:-1] + W[-1]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss(w: np.ndarray, batch, ds: Dataset) -> float:
    """Mean softmax cross-entropy over ``batch`` (log-sum-exp stabilised)."""
    batch = _batch(batch, ds)
    logp = _log_softmax(logits(w, batch, ds))
    return float(-logp[np.arange(len(batch)), ds.labels[batch]].mean())


def gradient(w: np.ndarray, batch, ds: Dataset) -> np.ndarray:
    batch = _batch(batch, ds)
    probs = np.exp(_log_softmax(logits(w, batch, ds)))
    probs[np.arange(len(batch)), ds.labels[batch]] -= 1.0
    probs /= len(batch)
    x = ds.features[batch]
    grad = np.empty((ds.n_features + 1, ds.n_classes))
    grad[:-1] = x.T @ probs
    grad[-1] = probs.sum(axis=0)
    return grad.ravel()


def local_step(w: np.ndarray, lr: float, batch, ds: Dataset) -> np.ndarray:
    """One SGD step; returns a new vector and leaves ``w`` untouched."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    return w - lr * gradient(w, batch, ds)


def predict(w: np.ndarray, indices, ds: Dataset) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class id on ties
    return np.argmax(logits(w, indices, ds), axis=1)


def accuracy(w: np.ndarray, indices, ds: Dataset) -> float:
    indices = _batch(indices, ds)
    return float(np.mean(predict(w, indices, ds) == ds.labels[indices]))
