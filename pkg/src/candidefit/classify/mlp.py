"""Small dense networks for AU8 and FP68 inputs, trained with Adam in numpy.

AU8Net:  dense 8 -> 8, dense 8 -> 4, softmax (no hidden nonlinearity).
FP68Net: dense 136 -> 16, batch-norm, ReLU, dropout 0.8, dense 16 -> 4, softmax.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

ARCHITECTURES = ("au8net", "fp68net")


class Dense:
    kind = "dense"

    def __init__(self, n_in, n_out, rng=None):
        limit = np.sqrt(6.0 / n_in)  # He-uniform
        self.W = rng.uniform(-limit, limit, size=(n_in, n_out)) if rng is not None else np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)

    params = ("W", "b")

    def forward(self, x, train, cache):
        cache["x"] = x
        return x @ self.W + self.b

    def backward(self, dy, cache, grads):
        grads["W"] = cache["x"].T @ dy
        grads["b"] = dy.sum(axis=0)
        return dy @ self.W.T


class BatchNorm:
    kind = "batchnorm"
    params = ("gamma", "beta")

    def __init__(self, n, momentum=0.9, eps=1e-5):
        self.gamma = np.ones(n)
        self.beta = np.zeros(n)
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x, train, cache, update_stats=True):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1 - m) * mean
                self.running_var = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        cache["xhat"], cache["inv"] = xhat, inv
        return self.gamma * xhat + self.beta

    def backward(self, dy, cache, grads):
        xhat, inv = cache["xhat"], cache["inv"]
        n = dy.shape[0]
        grads["gamma"] = (dy * xhat).sum(axis=0)
        grads["beta"] = dy.sum(axis=0)
        dxhat = dy * self.gamma
        return inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


class ReLU:
    kind = "relu"
    params = ()

    def forward(self, x, train, cache):
        cache["mask"] = x > 0
        return x * cache["mask"]

    def backward(self, dy, cache, grads):
        return dy * cache["mask"]


class Dropout:
    """Inverted dropout: at train time units are zeroed with probability ``rate``
    and survivors scaled by ``1 / (1 - rate)``; identity at eval time."""

    kind = "dropout"
    params = ()

    def __init__(self, rate):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train, cache, rng=None, mask=None):
        if not train or self.rate == 0:
            cache["scale"] = None
            return x
        if mask is None:
            mask = rng.uniform(size=x.shape) >= self.rate
        scale = mask / (1.0 - self.rate)
        cache["scale"] = scale
        return x * scale

    def backward(self, dy, cache, grads):
        return dy if cache["scale"] is None else dy * cache["scale"]


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MlpModel:
    """Layer stack for one of :data:`ARCHITECTURES`."""

    def __init__(self, arch, n_in, n_classes=4, classes=None, seed=0, dropout=0.8):
        if arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
        rng = np.random.default_rng(seed)
        self.arch = arch
        self.n_in = n_in
        self.classes = list(classes) if classes is not None else list(range(n_classes))
        n_classes = len(self.classes)
        if arch == "au8net":
            self.layers = [Dense(n_in, 8, rng), Dense(8, n_classes, rng)]
        else:
            self.layers = [Dense(n_in, 16, rng), BatchNorm(16), ReLU(), Dropout(dropout),
                           Dense(16, n_classes, rng)]

    @property
    def n_classes(self):
        return len(self.classes)

    def _check(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_in:
            raise ValueError(f"dimension mismatch: network expects {self.n_in} inputs, got {X.shape[1]}")
        return X

    def logits(self, X, train=False, rng=None, masks=None, update_stats=True, caches=None):
        h = self._check(X)
        for i, layer in enumerate(self.layers):
            cache = {} if caches is None else caches[i]
            if isinstance(layer, Dropout):
                h = layer.forward(h, train, cache, rng=rng, mask=None if masks is None else masks.get(i))
            elif isinstance(layer, BatchNorm):
                h = layer.forward(h, train, cache, update_stats=update_stats)
            else:
                h = layer.forward(h, train, cache)
        return h

    def forward(self, X, mode="eval", rng=None):
        """Class probabilities; ``mode`` is ``"train"`` or ``"eval"``."""
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        return softmax(self.logits(X, train=mode == "train", rng=rng))

    def predict_index(self, X):
        return np.argmax(self.logits(X), axis=1)

    def predict(self, X):
        return [self.classes[i] for i in self.predict_index(X)]

    def loss_and_grads(self, X, y, train=True, rng=None, masks=None, update_stats=False):
        """Mean softmax cross-entropy and its gradient for every parameter.

        Returns ``(loss, grads)`` where ``grads[i][name]`` matches
        ``getattr(self.layers[i], name)``.
        """
        caches = [{} for _ in self.layers]
        z = self.logits(X, train=train, rng=rng, masks=masks, update_stats=update_stats, caches=caches)
        p = softmax(z)
        n = len(y)
        loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300)))
        dz = p.copy()
        dz[np.arange(n), y] -= 1.0
        dz /= n
        grads = [{} for _ in self.layers]
        for i in reversed(range(len(self.layers))):
            dz = self.layers[i].backward(dz, caches[i], grads[i])
        return float(loss), grads

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield i, name

    def state(self):
        """Plain-list snapshot of every array, including batch-norm running stats."""
        out = []
        for layer in self.layers:
            entry = {"kind": layer.kind}
            if isinstance(layer, Dense):
                entry.update(W=layer.W.tolist(), b=layer.b.tolist())
            elif isinstance(layer, BatchNorm):
                entry.update(gamma=layer.gamma.tolist(), beta=layer.beta.tolist(),
                             running_mean=layer.running_mean.tolist(),
                             running_var=layer.running_var.tolist(),
                             momentum=layer.momentum, eps=layer.eps)
            elif isinstance(layer, Dropout):
                entry.update(rate=layer.rate)
            out.append(entry)
        return out

    def load_state(self, state):
        if len(state) != len(self.layers):
            raise ValueError("layer count mismatch")
        for layer, entry in zip(self.layers, state):
            if entry["kind"] != layer.kind:
                raise ValueError(f"layer kind mismatch: {entry['kind']} vs {layer.kind}")
            if isinstance(layer, Dense):
                W = np.asarray(entry["W"], dtype=float)
                if W.shape != layer.W.shape:
                    raise ValueError(f"weight shape {W.shape} does not match {layer.W.shape}")
                layer.W, layer.b = W, np.asarray(entry["b"], dtype=float)
            elif isinstance(layer, BatchNorm):
                for k in ("gamma", "beta", "running_mean", "running_var"):
                    setattr(layer, k, np.asarray(entry[k], dtype=float))
                layer.momentum, layer.eps = entry["momentum"], entry["eps"]
            elif isinstance(layer, Dropout):
                layer.rate = entry["rate"]

    def to_dict(self):
        return {"arch": self.arch, "n_in": self.n_in, "classes": list(self.classes),
                "layers": self.state()}

    @classmethod
    def from_dict(cls, d):
        model = cls(d["arch"], int(d["n_in"]), classes=d["classes"])
        model.load_state(d["layers"])
        return model


def mlp_forward(model, x, mode="eval", rng=None):
    return model.forward(x, mode, rng)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    plateau_patience: int = 10
    lr_factor: float = 0.5
    min_lr: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("learning_rate", "plateau_patience", "lr_factor", "batch_size", "max_epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, model, cfg):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(getattr(model.layers[k[0]], k[1])) for k in model.parameters()}
        self.v = {k: np.zeros_like(a) for k, a in self.m.items()}

    def step(self, model, grads, lr):
        c = self.cfg
        self.t += 1
        b1t, b2t = 1 - c.beta1 ** self.t, 1 - c.beta2 ** self.t
        for (i, name), m in self.m.items():
            g = grads[i][name]
            m *= c.beta1
            m += (1 - c.beta1) * g
            v = self.v[(i, name)]
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            update = lr * (m / b1t) / (np.sqrt(v / b2t) + c.adam_eps)
            setattr(model.layers[i], name, getattr(model.layers[i], name) - update)


def _accuracy(model, X, y):
    return float(np.mean(model.predict_index(X) == y)) if len(y) else 0.0


def mlp_train(arch, train_X, train_y, val_X, val_y, config=None, classes=None):
    """Train with Adam on softmax cross-entropy.

    ``train_y`` / ``val_y`` are class indices into ``classes``.  The learning
    rate is multiplied by ``lr_factor`` whenever validation accuracy has not
    improved for ``plateau_patience`` epochs.  The weights of the best
    validation epoch are returned together with a per-epoch log.
    """
    cfg = config or TrainConfig()
    train_X = np.asarray(train_X, dtype=float)
    val_X = np.asarray(val_X, dtype=float)
    train_y = np.asarray(train_y, dtype=int)
    val_y = np.asarray(val_y, dtype=int)
    if len(train_X) == 0 or len(val_X) == 0:
        raise ValueError("training and validation splits must be non-empty")
    n_classes = len(classes) if classes is not None else int(max(train_y.max(), val_y.max())) + 1
    rng = np.random.default_rng(cfg.seed)
    model = MlpModel(arch, train_X.shape[1], n_classes, classes=classes, seed=cfg.seed)
    opt = Adam(model, cfg)
    lr = cfg.learning_rate
    best_acc, best_epoch, best_state = -1.0, -1, None
    wait = 0
    epochs = []
    n = len(train_X)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(train_X[idx], train_y[idx], train=True, rng=rng,
                                               update_stats=True)
            opt.step(model, grads, lr)
            if not np.isfinite(loss):
                raise FloatingPointError(f"training loss became non-finite in epoch {epoch}")
            total += loss * len(idx)
        val_acc = _accuracy(model, val_X, val_y)
        epochs.append({"epoch": epoch, "loss": total / n, "val_accuracy": val_acc, "lr": lr})
        if val_acc > best_acc:
            best_acc, best_epoch, best_state = val_acc, epoch, copy.deepcopy(model.state())
            wait = 0
        else:
            wait += 1
            if wait >= cfg.plateau_patience:
                lr = max(lr * cfg.lr_factor, cfg.min_lr)
                wait = 0
    model.load_state(best_state)
    log = {
        "config": cfg.to_dict(),
        "epochs": epochs,
        "best_epoch": best_epoch,
        "best_val_accuracy": best_acc,
        "train_accuracy": _accuracy(model, train_X, train_y),
    }
    return model, log
