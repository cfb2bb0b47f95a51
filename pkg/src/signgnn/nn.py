"""The SIGN network: per-operator branch MLPs, concatenation, and a head MLP.

A hidden layer is ``linear -> batch-norm -> activation -> dropout``; the
last head layer is a plain linear map producing logits. Forward passes
return logits, the output non-linearity (softmax or sigmoid) lives in the
losses and in :func:`predict`. Gradients are written out by hand for this
fixed set of layers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kv, sgnm

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
TASKS = (MULTICLASS, MULTILABEL)
ACTIVATIONS = ("relu", "prelu")
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``branch_layers``/``hidden_dim`` are the inception layers and units,
    ``head_layers``/``head_hidden_dim`` the hidden classification layers and
    units (``head_layers = 0`` gives a single linear output layer).
    """

    num_classes: int
    hidden_dim: int = 64
    branch_layers: int = 1
    head_layers: int = 1
    head_hidden_dim: int = 64
    activation: str = "prelu"
    task: str = MULTICLASS
    dropout: float = 0.0
    batchnorm: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def validate(self) -> None:
        if self.num_classes < 1 or self.hidden_dim < 1 or self.head_hidden_dim < 1:
            raise ModelError("num_classes, hidden_dim and head_hidden_dim must be positive")
        if self.branch_layers < 1:
            raise ModelError("branch_layers must be >= 1")
        if self.head_layers < 0:
            raise ModelError("head_layers must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ModelError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.task not in TASKS:
            raise ModelError(f"task must be one of {TASKS}, got {self.task!r}")
        if not 0 <= self.dropout < 1:
            raise ModelError(f"dropout must lie in [0, 1), got {self.dropout}")


class Dense:
    """One feed-forward layer with optional batch-norm, activation and dropout."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, *,
                 batchnorm: bool = False, activation: str | None = None, dropout: float = 0.0,
                 momentum: float = 0.1, eps: float = 1e-5):
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        self.params: dict[str, np.ndarray] = {
            "weight": rng.uniform(-limit, limit, size=(in_dim, out_dim)),
        }
        self.buffers: dict[str, np.ndarray] = {}
        self.batchnorm = batchnorm
        if not batchnorm:
            self.params["bias"] = np.zeros(out_dim)
        else:
            # beta is the shift; a bias before the mean subtraction would be dead weight
            self.params["gamma"] = np.ones(out_dim)
            self.params["beta"] = np.zeros(out_dim)
            self.buffers["running_mean"] = np.zeros(out_dim)
            self.buffers["running_var"] = np.ones(out_dim)
        self.activation = activation
        if activation == "prelu":
            self.params["prelu"] = np.array([0.25])
        self.dropout = dropout
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None):
        """Return ``(output, cache)``; ``cache`` feeds :meth:`backward`."""
        p = self.params
        cache = {"x": x}
        h = x @ p["weight"]
        if "bias" in p:
            h = h + p["bias"]
        if self.batchnorm:
            if train:
                mean = h.mean(axis=0)
                var = h.var(axis=0)
                n = h.shape[0]
                rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
                rm *= 1 - self.momentum
                rm += self.momentum * mean
                rv *= 1 - self.momentum
                rv += self.momentum * (var * n / (n - 1) if n > 1 else var)
            else:
                mean, var = self.buffers["running_mean"], self.buffers["running_var"]
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (h - mean) * inv_std
            cache.update(xhat=xhat, inv_std=inv_std, bn_train=train)
            h = p["gamma"] * xhat + p["beta"]
        cache["pre"] = h
        if self.activation == "relu":
            h = np.maximum(h, 0.0)
        elif self.activation == "prelu":
            # branchless, so eval cost does not depend on the sign pattern of h
            neg = np.minimum(h, 0.0)
            neg *= p["prelu"][0]
            h = np.maximum(h, 0.0)
            h += neg
        if train and self.dropout > 0:
            mask = (rng.random(h.shape) >= self.dropout) / (1.0 - self.dropout)
            cache["mask"] = mask
            h = h * mask
        return h, cache

    def backward(self, grad: np.ndarray, cache: dict) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        p = self.params
        grads = {}
        if "mask" in cache:
            grad = grad * cache["mask"]
        pre = cache["pre"]
        if self.activation == "relu":
            grad = grad * (pre > 0)
        elif self.activation == "prelu":
            neg = pre <= 0
            grads["prelu"] = np.array([np.sum(grad * pre * neg)])
            grad = np.where(neg, p["prelu"][0] * grad, grad)
        if self.batchnorm:
            xhat, inv_std = cache["xhat"], cache["inv_std"]
            grads["gamma"] = np.sum(grad * xhat, axis=0)
            grads["beta"] = np.sum(grad, axis=0)
            dxhat = grad * p["gamma"]
            if cache["bn_train"]:
                n = grad.shape[0]
                grad = inv_std / n * (n * dxhat - dxhat.sum(axis=0)
                                      - xhat * np.sum(dxhat * xhat, axis=0))
            else:
                grad = dxhat * inv_std
        x = cache["x"]
        grads["weight"] = x.T @ grad
        if "bias" in p:
            grads["bias"] = grad.sum(axis=0)
        return grad @ p["weight"].T, grads


class SignModel:
    """``logits = head([branch_0(X), branch_1(A_1 X), ..., branch_r(A_r X)])``."""

    def __init__(self, config: ModelConfig, num_inputs: int, in_dim: int, seed: int = 0):
        config.validate()
        if num_inputs < 1 or in_dim < 1:
            raise ModelError("a SIGN model needs at least one input matrix and one feature")
        self.config = config
        self.num_inputs = num_inputs
        self.in_dim = in_dim
        rng = np.random.default_rng(seed)
        c = config
        hidden = dict(batchnorm=c.batchnorm, activation=c.activation, dropout=c.dropout,
                      momentum=c.bn_momentum, eps=c.bn_eps)
        self.branches: list[list[Dense]] = []
        for _ in range(num_inputs):
            dims = [in_dim] + [c.hidden_dim] * c.branch_layers
            self.branches.append([Dense(a, b, rng, **hidden) for a, b in zip(dims, dims[1:])])
        dims = [num_inputs * c.hidden_dim] + [c.head_hidden_dim] * c.head_layers
        self.head: list[Dense] = [Dense(a, b, rng, **hidden) for a, b in zip(dims, dims[1:])]
        self.head.append(Dense(dims[-1], c.num_classes, rng))

    @property
    def head_input_dim(self) -> int:
        return self.head[0].params["weight"].shape[0]

    def layers(self):
        """Yield ``(name, layer)`` in a fixed order."""
        for k, branch in enumerate(self.branches):
            for i, layer in enumerate(branch):
                yield f"branch{k}.{i}", layer
        for i, layer in enumerate(self.head):
            yield f"head.{i}", layer

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every learnable array, keyed ``layer.param``."""
        return {f"{name}.{p}": arr for name, layer in self.layers() for p, arr in layer.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{name}.{b}": arr for name, layer in self.layers() for b, arr in layer.buffers.items()}

    def state(self) -> dict[str, np.ndarray]:
        """Copies of parameters and buffers."""
        return {k: v.copy() for k, v in {**self.parameters(), **self.buffers()}.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        live = {**self.parameters(), **self.buffers()}
        if set(live) != set(state):
            raise ModelError(f"state keys differ: {sorted(set(live) ^ set(state))}")
        for k, arr in live.items():
            if arr.shape != state[k].shape:
                raise ModelError(f"{k}: shape {state[k].shape} != {arr.shape}")
            arr[...] = state[k]

    def set_dropout(self, rate: float) -> None:
        if not 0 <= rate < 1:
            raise ModelError(f"dropout must lie in [0, 1), got {rate}")
        self.config.dropout = rate
        for _, layer in self.layers():
            if layer.activation is not None:
                layer.dropout = rate

    def forward(self, inputs, train: bool = False, rng: np.random.Generator | None = None,
                keep_cache: bool = False) -> np.ndarray:
        inputs = _as_inputs(inputs)
        if len(inputs) != self.num_inputs:
            raise ModelError(f"model has {self.num_inputs} branches but got {len(inputs)} matrices")
        if train and rng is None:
            rng = np.random.default_rng()
        caches = []
        outs = []
        for branch, x in zip(self.branches, inputs):
            if x.ndim != 2 or x.shape[1] != self.in_dim:
                raise ModelError(f"input width {x.shape[-1]} != model feature dim {self.in_dim}")
            for layer in branch:
                x, cache = layer.forward(x, train, rng)
                caches.append(cache)
            outs.append(x)
        z = np.concatenate(outs, axis=1)
        for layer in self.head:
            z, cache = layer.forward(z, train, rng)
            caches.append(cache)
        if keep_cache:
            self._caches = caches
        return z

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of every parameter given ``d loss / d logits`` of the last cached forward."""
        caches = list(self._caches)
        grads: dict[str, np.ndarray] = {}
        g = dlogits
        for i in reversed(range(len(self.head))):
            g, lg = self.head[i].backward(g, caches.pop())
            grads.update({f"head.{i}.{k}": v for k, v in lg.items()})
        width = self.config.hidden_dim
        for k in reversed(range(self.num_inputs)):
            gb = g[:, k * width:(k + 1) * width]
            for i in reversed(range(len(self.branches[k]))):
                gb, lg = self.branches[k][i].backward(gb, caches.pop())
                grads.update({f"branch{k}.{i}.{p}": v for p, v in lg.items()})
        return {name: grads[name] for name in self.parameters()}


def _as_inputs(batch) -> list[np.ndarray]:
    matrices = getattr(batch, "matrices", batch)
    return [np.asarray(m, dtype=np.float64) for m in matrices]


def init_model(config: ModelConfig, r: int, d: int, seed: int = 0) -> SignModel:
    """Glorot-uniform weights, zero biases, PReLU slope 0.25; one branch per matrix (r + 1)."""
    if r < 0:
        raise ModelError("operator count must be >= 0")
    return SignModel(config, r + 1, d, seed)


def sign_forward(model: SignModel, batch, mode: str = "eval",
                 rng: np.random.Generator | None = None) -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return model.forward(batch, train=mode == "train", rng=rng)


def check_labels(labels: np.ndarray, task: str, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if task == MULTICLASS:
        if labels.ndim != 1:
            raise ModelError("multiclass labels must be a vector of class indices")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ModelError(f"class index out of range [0, {num_classes})")
        return labels.astype(np.int64)
    if labels.ndim != 2 or labels.shape[1] != num_classes:
        raise ModelError(f"multilabel labels must have shape (n, {num_classes})")
    if not np.all((labels == 0) | (labels == 1)):
        raise ModelError("multilabel labels must be 0/1")
    return labels.astype(np.float64)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))
    grad = np.exp(z - lse[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy averaged over every (row, class) cell."""
    per = np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    return float(per.mean()), (sigmoid(logits) - labels) / logits.size


def data_loss(logits: np.ndarray, labels: np.ndarray, task: str) -> tuple[float, np.ndarray]:
    if task == MULTICLASS:
        return softmax_cross_entropy(logits, labels)
    return sigmoid_cross_entropy(logits, labels)


def loss_and_grad(model: SignModel, batch, labels, task: str | None = None,
                  weight_decay: float = 0.0, rng: np.random.Generator | None = None):
    """Train-mode loss (data term plus ``weight_decay/2 * sum ||W||^2``) and gradients."""
    task = task or model.config.task
    labels = check_labels(labels, task, model.config.num_classes)
    logits = model.forward(batch, train=True, rng=rng, keep_cache=True)
    loss, dlogits = data_loss(logits, labels, task)
    grads = model.backward(dlogits)
    if weight_decay:
        for name, w in model.parameters().items():
            if name.endswith(".weight"):
                loss += 0.5 * weight_decay * float(np.sum(w * w))
                grads[name] = grads[name] + weight_decay * w
    return loss, grads


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def predict(model: SignModel, batch, batch_size: int | None = None) -> np.ndarray:
    """Class indices (multiclass, ties to the lowest index) or a 0/1 matrix (sigmoid >= 0.5)."""
    logits = predict_logits(model, batch, batch_size)
    return decide(logits, model.config.task)


def predict_logits(model: SignModel, batch, batch_size: int | None = None) -> np.ndarray:
    inputs = _as_inputs(batch)
    n = inputs[0].shape[0]
    if not batch_size or n <= batch_size:
        return model.forward(inputs, train=False)
    parts = [model.forward([m[i:i + batch_size] for m in inputs], train=False)
             for i in range(0, n, batch_size)]
    return np.concatenate(parts, axis=0)


def decide(logits: np.ndarray, task: str) -> np.ndarray:
    if task == MULTICLASS:
        return np.argmax(logits, axis=1)
    return (sigmoid(logits) >= 0.5).astype(np.int64)


# -- checkpoints -------------------------------------------------------------

def _to_matrix(a: np.ndarray) -> np.ndarray:
    return a.reshape(1, -1) if a.ndim == 1 else a


def save_checkpoint(model: SignModel, directory, optimizer: Adam | None = None) -> Path:
    """Write every tensor as SGNM plus a ``key = value`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items: dict[str, object] = {"version": CHECKPOINT_VERSION,
                                "num_inputs": model.num_inputs,
                                "in_dim": model.in_dim}
    for key, value in asdict(model.config).items():
        items[f"model.{key}"] = repr(value) if isinstance(value, float) else value
    for name, layer in model.layers():
        if "prelu" in layer.params:
            # record the float32 value that is actually persisted
            items[f"prelu.{name}"] = repr(float(np.float32(layer.params["prelu"][0])))
    tensors = dict(model.state())
    if optimizer is not None:
        items.update({"adam.lr": repr(optimizer.lr), "adam.beta1": repr(optimizer.beta1),
                      "adam.beta2": repr(optimizer.beta2), "adam.eps": repr(optimizer.eps),
                      "adam.t": optimizer.t})
        tensors.update({f"adam.m.{k}": v for k, v in optimizer.m.items()})
        tensors.update({f"adam.v.{k}": v for k, v in optimizer.v.items()})
    items["num_tensors"] = len(tensors)
    for i, (name, arr) in enumerate(tensors.items()):
        fname = f"{name}.sgnm"
        data = sgnm.save(directory / fname, _to_matrix(arr))
        items[f"tensor.{i}.name"] = name
        items[f"tensor.{i}.file"] = fname
        items[f"checksum.{i}"] = f"{sgnm.fnv1a_64(data):016x}"
    path = directory / "checkpoint.txt"
    sgnm.write_atomic(path, kv.dumps(items).encode("utf-8"))
    return path


def _parse_value(field_type, raw: str):
    if field_type in (bool, "bool"):
        return raw == "True"
    if field_type in (int, "int"):
        return int(raw)
    if field_type in (float, "float"):
        return float(raw)
    return raw


def load_checkpoint(directory) -> tuple[SignModel, Adam | None]:
    directory = Path(directory)
    path = directory / "checkpoint.txt"
    if not path.is_file():
        raise ModelError(f"checkpoint manifest missing in {directory}")
    m = kv.read(path)
    if int(m.get("version", -1)) != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {m.get('version')}")
    fields = ModelConfig.__dataclass_fields__
    cfg = ModelConfig(**{k: _parse_value(f.type, m[f"model.{k}"]) for k, f in fields.items()
                         if f"model.{k}" in m})
    model = SignModel(cfg, int(m["num_inputs"]), int(m["in_dim"]))
    tensors = {}
    for i in range(int(m["num_tensors"])):
        fpath = directory / m[f"tensor.{i}.file"]
        data = fpath.read_bytes()
        if f"{sgnm.fnv1a_64(data):016x}" != m[f"checksum.{i}"]:
            raise ModelError(f"checksum mismatch for {fpath}")
        tensors[m[f"tensor.{i}.name"]] = sgnm.decode(data)
    live = {**model.parameters(), **model.buffers()}
    model.load_state({k: tensors[k].reshape(v.shape) for k, v in live.items()})
    optimizer = None
    if "adam.t" in m:
        optimizer = Adam(float(m["adam.lr"]), float(m["adam.beta1"]), float(m["adam.beta2"]),
                         float(m["adam.eps"]))
        optimizer.t = int(m["adam.t"])
        for k, v in live.items():
            if f"adam.m.{k}" in tensors:
                optimizer.m[k] = tensors[f"adam.m.{k}"].reshape(v.shape)
                optimizer.v[k] = tensors[f"adam.v.{k}"].reshape(v.shape)
    return model, optimizer
