"""Fully connected network with sigmoid hidden layers and an affine output layer.

Weights are stored per layer as (n_out, n_in) matrices. Inputs are
standardized with per-feature mean/std stored on the model; the network
proper only ever sees standardized inputs.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError, NumericError, ParseError, SchemaError

log = logging.getLogger(__name__)

COST_KINDS = ("log-target-sse", "reconstruction-sse")
MODEL_MAGIC = "casimir-mlp"
MODEL_VERSION = 1


class ShapeError(SchemaError):
    """Model file architecture differs from the one requested."""


@dataclass
class Mlp:
    sizes: tuple
    weights: list
    biases: list
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 3 or min(self.sizes) < 1:
            raise DomainError(f"need input, >= 1 hidden and output layer, got {self.sizes}")
        if self.x_mean is None:
            self.x_mean = np.zeros(self.sizes[0])
        if self.x_std is None:
            self.x_std = np.ones(self.sizes[0])
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i + 1], self.sizes[i]) or b.shape != (self.sizes[i + 1],):
                raise ShapeError(f"layer {i + 1} has shape {W.shape}/{b.shape}, arch {self.sizes}")

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self):
        return Mlp(self.sizes, [W.copy() for W in self.weights], [b.copy() for b in self.biases],
                   self.x_mean.copy(), self.x_std.copy(), dict(self.meta))

    def standardize(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def predict(self, X):
        """Network output for raw (unstandardized) inputs, one row per sample."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out, _ = forward(self, self.standardize(X))
        return out


def mlp_init(sizes, seed):
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3 or min(sizes) < 1:
        raise DomainError(f"need input, >= 1 hidden and output layer, got {sizes}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1417]))
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Mlp(sizes, weights, biases)


def forward(mlp, x):
    """Forward pass on standardized inputs.

    ``x`` is (n_in,) or (batch, n_in). Returns the output and the list of
    layer activations (input first) needed by :func:`backprop_grad`.
    """
    a = np.asarray(x, dtype=float)
    if a.shape[-1] != mlp.sizes[0]:
        raise DomainError(f"input has {a.shape[-1]} features, network expects {mlp.sizes[0]}")
    acts = [a]
    last = len(mlp.weights) - 1
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ W.T + b
        a = z if i == last else expit(z)
        acts.append(a)
    return a, acts


def backprop_grad(mlp, X, Y, cost="log-target-sse"):
    """Gradient of E = sum_m sum_l (yhat_ml - y_ml)^2 over the batch.

    ``X`` holds standardized inputs. Both cost kinds are a plain SSE between
    the network output and the target rows (log-parameters for the
    characterizer, clean features for the autoencoder).
    Returns (grad_weights, grad_biases, E).
    """
    if cost not in COST_KINDS:
        raise DomainError(f"unknown cost {cost!r}")
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if len(X) == 0:
        raise DomainError("empty batch")
    out, acts = forward(mlp, X)
    diff = out - Y
    E = float(np.sum(diff * diff))
    delta = 2.0 * diff
    n_layers = len(mlp.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            a = acts[i]
            delta = (delta @ mlp.weights[i]) * a * (1.0 - a)
    return gW, gb, E


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 1000
    batch_size: int = 200
    seed: int = 0
    cost: str = "log-target-sse"
    weight_tol: float = None

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise DomainError("learning rate must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise DomainError("need epochs >= 0 and batch_size >= 1")
        if self.cost not in COST_KINDS:
            raise DomainError(f"unknown cost {self.cost!r}")

    def digest(self):
        text = (f"lr={self.learning_rate!r};epochs={self.epochs};M={self.batch_size};"
                f"seed={self.seed};cost={self.cost};tol={self.weight_tol!r}")
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def fit_standardization(mlp, X):
    """Store per-feature mean/std of the training inputs on the model."""
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    mlp.x_mean = X.mean(axis=0)
    mlp.x_std = np.where(std > 0, std, 1.0)
    return mlp


def train(mlp, X, Y, cfg, *, input_fn=None, log_every=0):
    """Mini-batch SGD; returns (trained model, per-epoch mean SSE per sample).

    ``X`` holds standardized inputs. Each epoch shuffles the training set and
    makes floor(N / M) updates w <- w - lr * grad(E) / M.
    ``input_fn(batch_inputs, rng)`` may transform each batch before it is
    presented (the denoiser uses it to draw fresh noise).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    if n == 0:
        raise DomainError("empty training set")
    if cfg.batch_size > n:
        raise DomainError(f"batch size {cfg.batch_size} exceeds training set size {n}")
    mlp = mlp.copy()
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x7EA1]))
    m = cfg.batch_size
    n_updates = n // m
    lr = cfg.learning_rate / m
    history = []
    for epoch in range(cfg.epochs):
        before = [W.copy() for W in mlp.weights] if cfg.weight_tol is not None else None
        perm = rng.permutation(n)
        total = 0.0
        for k in range(n_updates):
            idx = perm[k * m:(k + 1) * m]
            xb = X[idx]
            if input_fn is not None:
                xb = input_fn(xb, rng)
            with np.errstate(over="ignore", invalid="ignore"):
                gW, gb, E = backprop_grad(mlp, xb, Y[idx], cfg.cost)
            total += E
            for W, b, dW, db in zip(mlp.weights, mlp.biases, gW, gb):
                W -= lr * dW
                b -= lr * db
        loss = total / (n_updates * m)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch}; learning rate too high?")
        history.append(loss)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.6g", epoch, loss)
        if before is not None:
            delta = max(float(np.max(np.abs(W - W0))) for W, W0 in zip(mlp.weights, before))
            if delta < cfg.weight_tol:
                log.info("weights settled at epoch %d (max change %.3g)", epoch, delta)
                break
    return mlp, np.array(history)


@dataclass
class EvalReport:
    names: list
    rmse: np.ndarray
    true: np.ndarray
    predicted: np.ndarray

    def rmse_dict(self):
        return dict(zip(self.names, self.rmse.tolist()))


def evaluate_rmse(mlp, X, Y, names=None, units=None):
    """Per-output RMSE of the log-space predictions on a test set.

    ``units`` gives the scale that turns exp(log-output) back into natural
    units for the scatter pairs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if len(X) == 0:
        raise DomainError("empty test set")
    pred = mlp.predict(X)
    rmse = np.sqrt(np.mean((pred - Y) ** 2, axis=0))
    names = list(names) if names is not None else [f"y{i + 1}" for i in range(Y.shape[1])]
    scale = np.ones(Y.shape[1]) if units is None else np.asarray(units, dtype=float)
    return EvalReport(names, rmse, np.exp(Y) * scale, np.exp(pred) * scale)


# --- model file -----------------------------------------------------------------


def _row(values):
    return " ".join(f"{v:.17g}" for v in values)


def write_model(mlp, path):
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}", "arch " + " ".join(map(str, mlp.sizes)),
             "activation hidden=sigmoid output=identity"]
    for k, v in mlp.meta.items():
        lines.append(f"meta {k}={v}")
    lines.append("x_mean " + _row(mlp.x_mean))
    lines.append("x_std " + _row(mlp.x_std))
    for i, (W, b) in enumerate(zip(mlp.weights, mlp.biases), start=1):
        lines.append(f"layer {i} {W.shape[0]} {W.shape[1]}")
        lines.extend(_row(r) for r in W)
        lines.append(_row(b))
    lines.append("end")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _floats(line, n, lineno):
    try:
        vals = [float(v) for v in line.split()]
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from exc
    if len(vals) != n:
        raise ParseError(f"expected {n} values, found {len(vals)}", lineno)
    return np.array(vals)


def read_model(path, expected_sizes=None):
    """Load a model file; the whole file is validated before anything is returned."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != f"{MODEL_MAGIC} {MODEL_VERSION}":
        raise SchemaError(f"{path}: not a version-{MODEL_VERSION} model file")
    if lines[-1] != "end":
        raise ParseError(f"{path}: truncated model file (no end marker)", len(lines))
    pos = 1

    def take(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            raise ParseError(f"expected '{prefix}'", pos + 1)
        pos += 1
        return lines[pos - 1][len(prefix):].strip()

    try:
        sizes = tuple(int(v) for v in take("arch").split())
    except ValueError as exc:
        raise ParseError(str(exc), pos) from exc
    if expected_sizes is not None and tuple(expected_sizes) != sizes:
        raise ShapeError(f"model file has arch {sizes}, expected {tuple(expected_sizes)}")
    take("activation")
    meta = {}
    while lines[pos].startswith("meta "):
        k, _, v = lines[pos][5:].partition("=")
        meta[k] = v
        pos += 1
    x_mean = _floats(take("x_mean"), sizes[0], pos)
    x_std = _floats(take("x_std"), sizes[0], pos)
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        if take("layer").split() != [str(i), str(n_out), str(n_in)]:
            raise ShapeError(f"layer {i} header does not match arch {sizes}")
        W = np.empty((n_out, n_in))
        for r in range(n_out):
            if pos >= len(lines) - 1:
                raise ParseError("truncated weight block", pos + 1)
            W[r] = _floats(lines[pos], n_in, pos + 1)
            pos += 1
        biases.append(_floats(lines[pos], n_out, pos + 1))
        pos += 1
        weights.append(W)
    if lines[pos] != "end":
        raise ParseError("trailing content after last layer", pos + 1)
    return Mlp(sizes, weights, biases, x_mean, x_std, meta)
