"""Graph-agnostic base predictors: multinomial linear classifier and MLP.

Both models are trained from scratch with Adam on cross-entropy over the
training rows only; validation rows are read exclusively for best-epoch
selection. The MLP follows each hidden linear layer with batch
normalization, ReLU, and dropout; inference switches normalization to the
running statistics and disables dropout, so prediction is deterministic.

Everything is plain numpy with hand-written backpropagation, which keeps
the finite-difference gradient check meaningful end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.9  # running = momentum * running + (1 - momentum) * batch


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    For the MLP, `layers` counts linear layers (at least 2) and every
    hidden one has `hidden` units. The linear model ignores layers,
    hidden, and dropout. batch_size None means full batch. weight_decay
    is an L2 penalty applied to the weight matrices.
    """

    model_kind: str = "linear"
    layers: int = 3
    hidden: int = 64
    lr: float = 0.01
    dropout: float = 0.5
    epochs: int = 300
    batch_size: int | None = None
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.model_kind not in ("linear", "mlp"):
            raise ValidationError(f"unknown model kind {self.model_kind!r}")
        if self.model_kind == "mlp" and self.layers < 2:
            raise ValidationError("mlp needs at least 2 linear layers")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.epochs < 1 or self.lr <= 0:
            raise ValidationError("epochs must be >= 1 and lr > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be positive or None")


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    val_accuracies: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")


@dataclass
class BaseModel:
    """Trained parameters plus normalization statistics.

    weights[i]/biases[i] belong to the i-th linear layer (weights are
    fan_in x fan_out). For the MLP, gammas/betas/running_means/
    running_vars hold one entry per hidden layer.
    """

    kind: str
    weights: list
    biases: list
    gammas: list
    betas: list
    running_means: list
    running_vars: list
    n_features: int
    n_classes: int
    history: TrainHistory | None = None


def _layer_sizes(cfg: TrainConfig, n_features: int, n_classes: int) -> list:
    if cfg.model_kind == "linear":
        return [n_features, n_classes]
    return [n_features] + [cfg.hidden] * (cfg.layers - 1) + [n_classes]


def _init_params(cfg: TrainConfig, n_features: int, n_classes: int, rng):
    sizes = _layer_sizes(cfg, n_features, n_classes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    n_hidden = len(sizes) - 2
    gammas = [np.ones(sizes[i + 1]) for i in range(n_hidden)]
    betas = [np.zeros(sizes[i + 1]) for i in range(n_hidden)]
    running_means = [np.zeros(sizes[i + 1]) for i in range(n_hidden)]
    running_vars = [np.ones(sizes[i + 1]) for i in range(n_hidden)]
    return weights, biases, gammas, betas, running_means, running_vars


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_train(params, X, dropout_rate, rng, update_running=True):
    """Training-mode forward pass; returns probabilities and the backprop cache."""
    weights, biases, gammas, betas, running_means, running_vars = params
    n_hidden = len(gammas)
    B = X.shape[0]
    h = X
    cache = []
    for i in range(n_hidden):
        z = h @ weights[i] + biases[i]
        mean = z.mean(axis=0)
        var = z.var(axis=0)
        ivar = 1.0 / np.sqrt(var + _BN_EPS)
        xhat = (z - mean) * ivar
        a = gammas[i] * xhat + betas[i]
        relu_mask = a > 0
        a = a * relu_mask
        if dropout_rate > 0.0:
            drop_mask = (rng.random(a.shape) >= dropout_rate) / (1.0 - dropout_rate)
            a = a * drop_mask
        else:
            drop_mask = None
        cache.append((h, xhat, ivar, relu_mask, drop_mask))
        if update_running:
            # Standard semantics: biased variance normalizes the batch,
            # the unbiased estimate feeds the running average.
            unbiased = var * (B / (B - 1)) if B > 1 else var
            running_means[i] *= _BN_MOMENTUM
            running_means[i] += (1.0 - _BN_MOMENTUM) * mean
            running_vars[i] *= _BN_MOMENTUM
            running_vars[i] += (1.0 - _BN_MOMENTUM) * unbiased
        h = a
    logits = h @ weights[-1] + biases[-1]
    cache.append(h)
    return softmax(logits), cache


def _backward(params, cache, probs, y_onehot):
    """Gradients of mean cross-entropy w.r.t. every parameter."""
    weights, biases, gammas, betas = params[0], params[1], params[2], params[3]
    n_hidden = len(gammas)
    B = probs.shape[0]
    dlogits = (probs - y_onehot) / B
    h_last = cache[-1]
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    grad_g = [None] * n_hidden
    grad_be = [None] * n_hidden
    grad_w[-1] = h_last.T @ dlogits
    grad_b[-1] = dlogits.sum(axis=0)
    dh = dlogits @ weights[-1].T
    for i in range(n_hidden - 1, -1, -1):
        h_in, xhat, ivar, relu_mask, drop_mask = cache[i]
        if drop_mask is not None:
            dh = dh * drop_mask
        da = dh * relu_mask
        grad_g[i] = (da * xhat).sum(axis=0)
        grad_be[i] = da.sum(axis=0)
        dxhat = da * gammas[i]
        dz = (ivar / B) * (B * dxhat - dxhat.sum(axis=0)
                           - xhat * (dxhat * xhat).sum(axis=0))
        grad_w[i] = h_in.T @ dz
        grad_b[i] = dz.sum(axis=0)
        dh = dz @ weights[i].T
    return grad_w, grad_b, grad_g, grad_be


def _forward_eval(model: BaseModel, X: np.ndarray) -> np.ndarray:
    h = X
    for i in range(len(model.gammas)):
        z = h @ model.weights[i] + model.biases[i]
        xhat = (z - model.running_means[i]) / np.sqrt(model.running_vars[i] + _BN_EPS)
        h = np.maximum(model.gammas[i] * xhat + model.betas[i], 0.0)
    return h @ model.weights[-1] + model.biases[-1]


class Adam:
    """Adam with fixed (0.9, 0.999, 1e-8) moment constants."""

    def __init__(self, param_list, lr, weight_decay=0.0, decayed_flags=None):
        self.params = param_list
        self.lr = lr
        self.weight_decay = weight_decay
        self.decayed = decayed_flags or [False] * len(param_list)
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = [np.zeros_like(p) for p in param_list]
        self.v = [np.zeros_like(p) for p in param_list]

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if self.decayed[i] and self.weight_decay > 0.0:
                g = g + self.weight_decay * p
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[i] / bc1) / (np.sqrt(self.v[i] / bc2) + self.eps)


def _loss_and_grads(params, X, y, n_classes, dropout_rate, rng, weight_decay):
    probs, cache = _forward_train(params, X, dropout_rate, rng)
    B = X.shape[0]
    y_onehot = np.zeros((B, n_classes))
    y_onehot[np.arange(B), y] = 1.0
    logp = np.log(np.clip(probs[np.arange(B), y], 1e-300, None))
    loss = -float(logp.mean())
    grads = _backward(params, cache, probs, y_onehot)
    if weight_decay > 0.0:
        loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in params[0])
    return loss, grads


def train(features: np.ndarray, y: np.ndarray, split, cfg: TrainConfig,
          n_classes: int | None = None) -> BaseModel:
    """Fit a base predictor on the training rows of `split`.

    Gradients only ever touch rows in split.train; split.valid is scored
    once per epoch and the parameters from the best-validation epoch are
    returned (earliest epoch wins ties). Labels outside train/valid are
    never read. n_classes widens the output layer beyond the classes
    observed on train/valid rows (defaults to that observation).

    Raises
    ------
    ValidationError
        Empty training set, or missing labels on train/valid rows.
    ConvergenceError
        Non-finite loss or parameters (learning rate too high).
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(y)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.valid, dtype=np.int64)
    if train_idx.size == 0:
        raise ValidationError("empty training set")
    labeled = np.concatenate([train_idx, val_idx])
    if np.any(y[labeled] < 0):
        raise ValidationError("missing label on a train/validation row")
    seen = int(y[labeled].max()) + 1
    if n_classes is None:
        n_classes = seen
    elif n_classes < seen:
        raise ValidationError(f"n_classes={n_classes} but labels reach {seen - 1}")

    rng = np.random.default_rng(cfg.seed)
    params = _init_params(cfg, X.shape[1], n_classes, rng)
    weights, biases, gammas, betas, running_means, running_vars = params
    flat = weights + biases + gammas + betas
    decayed = [True] * len(weights) + [False] * (len(flat) - len(weights))
    opt = Adam(flat, cfg.lr, cfg.weight_decay, decayed)

    X_tr = X[train_idx]
    y_tr = y[train_idx].astype(np.int64)
    X_val = X[val_idx]
    y_val = y[val_idx].astype(np.int64)

    history = TrainHistory()
    best = None
    dropout = cfg.dropout if cfg.model_kind == "mlp" else 0.0

    for epoch in range(cfg.epochs):
        if cfg.batch_size is None or cfg.batch_size >= train_idx.size:
            batches = [np.arange(train_idx.size)]
        else:
            order = rng.permutation(train_idx.size)
            batches = [order[i:i + cfg.batch_size]
                       for i in range(0, order.size, cfg.batch_size)]
        epoch_loss = 0.0
        for batch in batches:
            loss, grads = _loss_and_grads(params, X_tr[batch], y_tr[batch],
                                          n_classes, dropout, rng,
                                          cfg.weight_decay)
            if not np.isfinite(loss):
                raise ConvergenceError(
                    f"training loss became non-finite at epoch {epoch} "
                    f"(learning rate {cfg.lr} too high?)")
            grad_w, grad_b, grad_g, grad_be = grads
            opt.step(grad_w + grad_b + grad_g + grad_be)
            epoch_loss += loss * batch.size
        for p in flat:
            if not np.all(np.isfinite(p)):
                raise ConvergenceError(
                    f"non-finite parameter after optimizer step in epoch {epoch}")
        history.losses.append(epoch_loss / train_idx.size)

        snapshot_model = BaseModel(
            kind=cfg.model_kind,
            weights=weights, biases=biases, gammas=gammas, betas=betas,
            running_means=running_means, running_vars=running_vars,
            n_features=X.shape[1], n_classes=n_classes)
        if val_idx.size:
            val_pred = np.argmax(_forward_eval(snapshot_model, X_val), axis=1)
            val_acc = float(np.mean(val_pred == y_val))
        else:
            val_acc = float("nan")
        history.val_accuracies.append(val_acc)
        # No validation set: keep the final epoch instead.
        if best is None or val_idx.size == 0 or val_acc > history.best_val_accuracy:
            history.best_epoch = epoch
            history.best_val_accuracy = val_acc
            best = ([w.copy() for w in weights], [b.copy() for b in biases],
                    [g.copy() for g in gammas], [b.copy() for b in betas],
                    [m.copy() for m in running_means], [v.copy() for v in running_vars])

    return BaseModel(kind=cfg.model_kind,
                     weights=best[0], biases=best[1], gammas=best[2],
                     betas=best[3], running_means=best[4], running_vars=best[5],
                     n_features=X.shape[1], n_classes=n_classes, history=history)


def predict_proba(model: BaseModel, features: np.ndarray) -> np.ndarray:
    """Row-stochastic class probabilities for every row of `features`.

    Inference mode: dropout off, normalization on running statistics, so
    repeated calls return identical output.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValidationError(
            f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {model.n_features}")
    return softmax(_forward_eval(model, X))


def count_parameters(model: BaseModel) -> int:
    """Trainable scalar count: weights, biases, and normalization scale/shift."""
    total = sum(w.size for w in model.weights)
    total += sum(b.size for b in model.biases)
    total += sum(g.size for g in model.gammas)
    total += sum(b.size for b in model.betas)
    return int(total)


def grad_check(cfg: TrainConfig, n_samples: int = 12, n_features: int = 6,
               n_classes: int = 3, seed: int = 0, step: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    Runs the training-mode forward pass (batch statistics active, dropout
    must be disabled so the loss is a deterministic function of the
    parameters) on a small random problem and perturbs every parameter
    scalar in turn. The per-scalar error is |a - n| / max(1, |a|, |n|).
    """
    if cfg.dropout != 0.0:
        raise ValidationError("grad_check requires dropout = 0")
    if n_samples > 20 or n_features > 10:
        raise ValidationError("grad_check is intended for tiny problems")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, n_features))
    y = rng.integers(0, n_classes, size=n_samples)
    params = _init_params(cfg, n_features, n_classes, rng)
    flat = params[0] + params[1] + params[2] + params[3]

    def loss_only():
        # Fresh rng each call: with dropout off the pass consumes no
        # randomness, and running-statistic updates do not affect the loss.
        l, _ = _loss_and_grads(params, X, y, n_classes, 0.0,
                               np.random.default_rng(0), cfg.weight_decay)
        return l

    _, grads = _loss_and_grads(params, X, y, n_classes, 0.0,
                               np.random.default_rng(0), cfg.weight_decay)
    analytic = grads[0] + grads[1] + grads[2] + grads[3]
    if cfg.weight_decay > 0.0:
        analytic = [g + cfg.weight_decay * p if i < len(params[0]) else g
                    for i, (g, p) in enumerate(zip(analytic, flat))]

    worst = 0.0
    for tensor, grad in zip(flat, analytic):
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + step
            up = loss_only()
            tensor[idx] = orig - step
            down = loss_only()
            tensor[idx] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(grad[idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints: a versioned binary container of shapes and parameters.

_CHECKPOINT_VERSION = 1


def save_model(path, model: BaseModel) -> None:
    arrays = {
        "format_version": np.array([_CHECKPOINT_VERSION]),
        "kind": np.array([model.kind]),
        "dims": np.array([model.n_features, model.n_classes,
                          len(model.weights), len(model.gammas)]),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    for i in range(len(model.gammas)):
        arrays[f"gamma{i}"] = model.gammas[i]
        arrays[f"beta{i}"] = model.betas[i]
        arrays[f"rmean{i}"] = model.running_means[i]
        arrays[f"rvar{i}"] = model.running_vars[i]
    np.savez(path, **arrays)


def load_model(path) -> BaseModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"][0])
        if version != _CHECKPOINT_VERSION:
            raise ValidationError(
                f"checkpoint version {version} unsupported (expected {_CHECKPOINT_VERSION})")
        kind = str(data["kind"][0])
        n_features, n_classes, n_linear, n_bn = (int(x) for x in data["dims"])
        weights = [data[f"W{i}"] for i in range(n_linear)]
        biases = [data[f"b{i}"] for i in range(n_linear)]
        gammas = [data[f"gamma{i}"] for i in range(n_bn)]
        betas = [data[f"beta{i}"] for i in range(n_bn)]
        rmeans = [data[f"rmean{i}"] for i in range(n_bn)]
        rvars = [data[f"rvar{i}"] for i in range(n_bn)]
    return BaseModel(kind=kind, weights=weights, biases=biases, gammas=gammas,
                     betas=betas, running_means=rmeans, running_vars=rvars,
                     n_features=n_features, n_classes=n_classes)
