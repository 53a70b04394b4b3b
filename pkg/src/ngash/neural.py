"""Neural field from 32-component motor encodings to 27 transfer coefficients.

Architecture: input batch norm, then hidden affine stages (1024, 512, 256,
128 by default) each followed by batch norm, SiLU, and a decaying dropout
schedule, then a final affine to 27 outputs.  Training is plain MSE with
adaptive moment estimation, implemented from scratch in numpy.

Dimensions and dropout rates travel with the weights, so small throwaway
architectures share every code path with the default one.  All arithmetic
is float64; the weights file stores float32, and loading widens back to
float64, so a saved model re-saves byte-identically.
"""

import copy as _copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cga
from .errors import DataFormatError, IntegrityError, TrainingError
from .prt import TransferMatrix

DEFAULT_DIMS = (32, 1024, 512, 256, 128, 27)
DEFAULT_DROPOUT = (0.3, 0.2, 0.1, 0.05)
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

WEIGHTS_MAGIC = "ngash-weights v1"


@dataclass
class ModelWeights:
    dims: tuple
    dropout: tuple
    seed: int
    weights: list  # (out, in) matrices, input to output
    biases: list
    bn_gamma: list  # input stage first, then one per hidden layer
    bn_beta: list
    bn_mean: list
    bn_var: list
    target_mean: np.ndarray
    target_std: np.ndarray
    blade_hash: str = cga.BLADE_ORDER_HASH

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.dropout = tuple(float(r) for r in self.dropout)
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ValueError(f"bad dimension chain {self.dims}")
        hidden = self.hidden_count
        if len(self.dropout) != hidden:
            raise ValueError(f"need {hidden} dropout rates, got {len(self.dropout)}")
        if any(not 0.0 <= r < 1.0 for r in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")
        if any(a < b for a, b in zip(self.dropout, self.dropout[1:])):
            raise ValueError("dropout rates must be non-increasing across layers")
        if len(self.weights) != hidden + 1 or len(self.bn_gamma) != hidden + 1:
            raise ValueError("tensor lists do not match the dimension chain")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[l + 1], self.dims[l]) or b.shape != (self.dims[l + 1],):
                raise ValueError(f"layer {l + 1} tensors do not match dims {self.dims}")
        for i, width in enumerate(self.dims[:-1] if hidden else self.dims[:1]):
            if self.bn_gamma[i].shape != (width,):
                raise ValueError(f"batch-norm stage {i} width mismatch")
            if (self.bn_var[i] <= 0.0).any():
                raise ValueError("running variances must stay positive")
        self.target_mean = np.asarray(self.target_mean, dtype=np.float64)
        self.target_std = np.asarray(self.target_std, dtype=np.float64)
        if self.target_mean.shape != (self.dims[-1],) or self.target_std.shape != (
            self.dims[-1],
        ):
            raise ValueError("target statistics must match the output width")

    @property
    def hidden_count(self):
        return len(self.dims) - 2

    def copy(self):
        return _copy.deepcopy(self)


def init_model(seed=0, dims=DEFAULT_DIMS, dropout=DEFAULT_DROPOUT):
    """He fan-in normal weights, zero biases, identity batch-norm stages."""
    rng = np.random.default_rng(seed)
    dims = tuple(dims)
    weights, biases = [], []
    for l in range(len(dims) - 1):
        fan_in = dims[l]
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(dims[l + 1], fan_in)))
        biases.append(np.zeros(dims[l + 1]))
    stages = [dims[0]] + list(dims[1:-1])
    return ModelWeights(
        dims=dims,
        dropout=tuple(dropout),
        seed=seed,
        weights=weights,
        biases=biases,
        bn_gamma=[np.ones(w) for w in stages],
        bn_beta=[np.zeros(w) for w in stages],
        bn_mean=[np.zeros(w) for w in stages],
        bn_var=[np.ones(w) for w in stages],
        target_mean=np.zeros(dims[-1]),
        target_std=np.ones(dims[-1]),
    )


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_inputs(weights, x):
    if x.ndim != 2 or x.shape[1] != weights.dims[0]:
        raise ValueError(f"expected (n, {weights.dims[0]}) inputs, got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("inputs must be finite")


def _forward_eval(weights, x):
    h = weights.bn_gamma[0] * (x - weights.bn_mean[0]) / np.sqrt(
        weights.bn_var[0] + BN_EPS
    ) + weights.bn_beta[0]
    for l in range(weights.hidden_count):
        a = h @ weights.weights[l].T + weights.biases[l]
        a = weights.bn_gamma[l + 1] * (a - weights.bn_mean[l + 1]) / np.sqrt(
            weights.bn_var[l + 1] + BN_EPS
        ) + weights.bn_beta[l + 1]
        h = a * _sigmoid(a)
    return h @ weights.weights[-1].T + weights.biases[-1]


def _forward_eval_fast(weights, x):
    """Single-precision eval pass for the real-time path.

    Weight files already store float32, so this costs ~1e-7 of drift
    against _forward_eval while the matmuls run several times faster.
    """
    scale, shift = [], []
    for i in range(len(weights.bn_gamma)):
        s = weights.bn_gamma[i] / np.sqrt(weights.bn_var[i] + BN_EPS)
        scale.append(s.astype(np.float32))
        shift.append((weights.bn_beta[i] - weights.bn_mean[i] * s).astype(np.float32))
    mats = [w.astype(np.float32) for w in weights.weights]
    biases = [b.astype(np.float32) for b in weights.biases]
    h = x.astype(np.float32) * scale[0] + shift[0]
    # exp overflow saturates SiLU to its exact limit of 0, so silence it
    with np.errstate(over="ignore"):
        for l in range(weights.hidden_count):
            a = h @ mats[l].T + biases[l]
            a = a * scale[l + 1] + shift[l + 1]
            h = a / (1.0 + np.exp(-a))
    out = h @ mats[-1].T + biases[-1]
    return out.astype(np.float64)


def _bn_train(x, gamma, beta):
    mean = x.mean(axis=0)
    var = x.var(axis=0)  # biased, as used for normalization
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    x_hat = (x - mean) * inv_std
    return gamma * x_hat + beta, (x_hat, inv_std, mean, var)


def _forward_train(weights, x, rng):
    """Batch-statistics forward pass; returns output, backward cache, and the
    batch moments each stage would fold into its running statistics.  Running
    stats themselves are not touched, so the loss stays a pure function."""
    if x.shape[0] < 2:
        raise ValueError("training batches need at least 2 rows for batch norm")
    cache = {"x": x, "bn": [], "affine_in": [], "pre_act": [], "mask": []}
    moments = []

    h, bn_cache = _bn_train(x, weights.bn_gamma[0], weights.bn_beta[0])
    cache["bn"].append(bn_cache)
    moments.append((bn_cache[2], bn_cache[3]))

    for l in range(weights.hidden_count):
        cache["affine_in"].append(h)
        a = h @ weights.weights[l].T + weights.biases[l]
        a, bn_cache = _bn_train(a, weights.bn_gamma[l + 1], weights.bn_beta[l + 1])
        cache["bn"].append(bn_cache)
        moments.append((bn_cache[2], bn_cache[3]))
        cache["pre_act"].append(a)
        s = _sigmoid(a)
        h = a * s
        rate = weights.dropout[l]
        if rate > 0.0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
        else:
            mask = None
        cache["mask"].append(mask)
    cache["affine_in"].append(h)
    y = h @ weights.weights[-1].T + weights.biases[-1]
    return y, cache, moments


def forward(weights, inputs, training=False, rng=None):
    """Run the network; eval mode uses running statistics and no dropout."""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    _check_inputs(weights, x)
    if training:
        y, _, _ = _forward_train(
            weights, x, rng if rng is not None else np.random.default_rng(weights.seed)
        )
    else:
        y = _forward_eval(weights, x)
    return y[0] if single else y


def _bn_backward(dy, gamma, bn_cache):
    x_hat, inv_std, _, _ = bn_cache
    n = dy.shape[0]
    dgamma = (dy * x_hat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dx = (gamma * inv_std / n) * (
        n * dy - dbeta - x_hat * (dy * x_hat).sum(axis=0)
    )
    return dx, dgamma, dbeta


def _backward(weights, cache, dy):
    hidden = weights.hidden_count
    grads = {
        "weights": [None] * (hidden + 1),
        "biases": [None] * (hidden + 1),
        "gamma": [None] * (hidden + 1),
        "beta": [None] * (hidden + 1),
    }
    h_in = cache["affine_in"][hidden]
    grads["weights"][hidden] = dy.T @ h_in
    grads["biases"][hidden] = dy.sum(axis=0)
    dh = dy @ weights.weights[hidden]

    for l in range(hidden - 1, -1, -1):
        mask = cache["mask"][l]
        if mask is not None:
            dh = dh * mask
        a = cache["pre_act"][l]
        s = _sigmoid(a)
        da = dh * (s * (1.0 + a * (1.0 - s)))
        da, dgamma, dbeta = _bn_backward(da, weights.bn_gamma[l + 1], cache["bn"][l + 1])
        grads["gamma"][l + 1] = dgamma
        grads["beta"][l + 1] = dbeta
        h_in = cache["affine_in"][l]
        grads["weights"][l] = da.T @ h_in
        grads["biases"][l] = da.sum(axis=0)
        dh = da @ weights.weights[l]

    _, dgamma, dbeta = _bn_backward(dh, weights.bn_gamma[0], cache["bn"][0])
    grads["gamma"][0] = dgamma
    grads["beta"][0] = dbeta
    return grads


def loss_and_gradients(weights, inputs, targets, seed):
    """MSE loss with analytic gradients, pure per (weights, inputs, seed).

    Returns (loss, grads, batch moments); the moments are the per-stage
    batch mean/variance the caller may fold into running statistics.
    """
    x = np.asarray(inputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    _check_inputs(weights, x)
    if t.shape != (x.shape[0], weights.dims[-1]):
        raise ValueError(f"expected {(x.shape[0], weights.dims[-1])} targets, got {t.shape}")
    y, cache, moments = _forward_train(weights, x, np.random.default_rng(seed))
    diff = y - t
    loss = float(np.mean(diff * diff))
    grads = _backward(weights, cache, 2.0 * diff / diff.size)
    return loss, grads, moments


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (batch norm needs 2 rows)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("moment coefficients must lie in [0, 1)")


def _trainable(weights):
    return (
        [("weights", l) for l in range(len(weights.weights))]
        + [("biases", l) for l in range(len(weights.biases))]
        + [("gamma", i) for i in range(len(weights.bn_gamma))]
        + [("beta", i) for i in range(len(weights.bn_beta))]
    )


def _param(weights, key):
    kind, idx = key
    return {
        "weights": weights.weights,
        "biases": weights.biases,
        "gamma": weights.bn_gamma,
        "beta": weights.bn_beta,
    }[kind][idx]


@dataclass
class AdamState:
    step: int
    first: dict
    second: dict

    @classmethod
    def for_weights(cls, weights):
        first = {key: np.zeros_like(_param(weights, key)) for key in _trainable(weights)}
        second = {key: np.zeros_like(_param(weights, key)) for key in _trainable(weights)}
        return cls(step=0, first=first, second=second)


def train_step(weights, state, inputs, targets, config, step_seed=0):
    """One optimizer step, mutating weights and state; returns batch loss."""
    # divergence surfaces as TrainingError below, not as numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        loss, grads, moments = loss_and_gradients(weights, inputs, targets, step_seed)
    if not np.isfinite(loss):
        raise TrainingError(f"loss became non-finite ({loss}) at step {state.step + 1}")
    n = np.asarray(inputs).shape[0]
    unbias = n / (n - 1)
    for i, (mean, var) in enumerate(moments):
        weights.bn_mean[i] = (1.0 - BN_MOMENTUM) * weights.bn_mean[i] + BN_MOMENTUM * mean
        weights.bn_var[i] = (1.0 - BN_MOMENTUM) * weights.bn_var[i] + BN_MOMENTUM * (
            var * unbias
        )

    state.step += 1
    scale1 = 1.0 - config.beta1**state.step
    scale2 = 1.0 - config.beta2**state.step
    for key in _trainable(weights):
        kind, idx = key
        grad = grads[kind][idx]
        if not np.isfinite(grad).all():
            raise TrainingError(f"gradient for {kind}[{idx}] became non-finite at step {state.step}")
        m = state.first[key]
        v = state.second[key]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        update = config.learning_rate * (m / scale1) / (np.sqrt(v / scale2) + config.epsilon)
        _param(weights, key)[...] -= update
    return loss


@dataclass
class TrainResult:
    weights: ModelWeights
    best_weights: ModelWeights
    history: dict


def _raw_mse(weights, inputs, raw_targets):
    pred = _forward_eval(weights, inputs) * weights.target_std + weights.target_mean
    diff = pred - raw_targets
    return float(np.mean(diff * diff))


def train(inputs, targets, config=None, dims=DEFAULT_DIMS, dropout=DEFAULT_DROPOUT):
    """Train on (motor, transfer-row) pairs; returns final and best-val weights.

    Targets are standardized per coefficient with statistics from the training
    split; reported history MSE is always in raw target units.
    """
    config = config or TrainConfig()
    if config.learning_rate == 0.0:
        raise ValueError("training needs a positive learning rate")
    x = np.asarray(inputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training set must be non-empty")
    if t.shape[0] != x.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs but {t.shape[0]} targets")

    n = x.shape[0]
    n_val = max(1, round(n * config.val_fraction))
    if n - n_val < 2:
        raise ValueError(f"{n} pairs leave no training split at val fraction {config.val_fraction}")
    master = np.random.default_rng(config.seed)
    perm = master.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, t_train = x[train_idx], t[train_idx]
    x_val, t_val = x[val_idx], t[val_idx]

    mean = t_train.mean(axis=0)
    std = t_train.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    t_train_std = (t_train - mean) / std

    weights = init_model(seed=config.seed, dims=dims, dropout=dropout)
    weights.target_mean = mean
    weights.target_std = std
    state = AdamState.for_weights(weights)

    history = {"train_mse": [], "val_mse": []}
    best = weights.copy()
    best_val = np.inf
    n_train = x_train.shape[0]
    for _ in range(config.epochs):
        order = master.permutation(n_train)
        for lo in range(0, n_train, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            if batch.size < 2:  # batch norm cannot run on a single row
                continue
            step_seed = int(master.integers(1 << 62))
            train_step(
                weights, state, x_train[batch], t_train_std[batch], config, step_seed
            )
        history["train_mse"].append(_raw_mse(weights, x_train, t_train))
        val_mse = _raw_mse(weights, x_val, t_val)
        history["val_mse"].append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            best = weights.copy()
    return TrainResult(weights=weights, best_weights=best, history=history)


def predict_mesh(weights, mesh):
    """Encode every vertex as a motor and run the network in eval mode."""
    if not mesh.has_normals:
        raise ValueError("mesh needs normals; run compute_normals first")
    motors = cga.encode_batch(mesh.vertices, mesh.normals)
    out = _forward_eval_fast(weights, motors)
    rows = out * weights.target_std + weights.target_mean
    return TransferMatrix(rows=rows, sample_count=0, mode="sphere", shadowed=False,
                          source="predicted")


def _tensor_layout(dims):
    names = [(f"bn0.{p}", (dims[0],)) for p in ("gamma", "beta", "mean", "var")]
    hidden = len(dims) - 2
    for l in range(1, hidden + 1):
        names.append((f"layer{l}.weight", (dims[l], dims[l - 1])))
        names.append((f"layer{l}.bias", (dims[l],)))
        for p in ("gamma", "beta", "mean", "var"):
            names.append((f"bn{l}.{p}", (dims[l],)))
    names.append((f"layer{hidden + 1}.weight", (dims[-1], dims[-2])))
    names.append((f"layer{hidden + 1}.bias", (dims[-1],)))
    names.append(("target.mean", (dims[-1],)))
    names.append(("target.std", (dims[-1],)))
    return names


def _tensor_by_name(weights, name):
    group, param = name.split(".")
    if group == "target":
        return weights.target_mean if param == "mean" else weights.target_std
    idx = int(group.replace("layer", "").replace("bn", ""))
    if group.startswith("layer"):
        return weights.weights[idx - 1] if param == "weight" else weights.biases[idx - 1]
    return {
        "gamma": weights.bn_gamma,
        "beta": weights.bn_beta,
        "mean": weights.bn_mean,
        "var": weights.bn_var,
    }[param][idx]


def save_weights(path, weights):
    """Text manifest, an `end` line, then float32 little-endian tensor blobs."""
    lines = [
        WEIGHTS_MAGIC,
        "dims=" + ",".join(str(d) for d in weights.dims),
        "dropout=" + ",".join(repr(r) for r in weights.dropout),
        f"seed={weights.seed}",
        f"blade_hash={weights.blade_hash}",
    ]
    blobs = []
    for name, shape in _tensor_layout(weights.dims):
        lines.append(f"tensor={name} " + " ".join(str(s) for s in shape))
        tensor = _tensor_by_name(weights, name)
        blobs.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    lines.append("end")
    Path(path).write_bytes("\n".join(lines).encode("ascii") + b"\n" + b"".join(blobs))


def load_weights(path):
    path = Path(path)
    data = path.read_bytes()
    marker = b"\nend\n"
    cut = data.find(marker)
    if cut < 0:
        raise DataFormatError(f"{path}: missing end-of-manifest marker")
    header = data[:cut].decode("ascii").splitlines()
    blob = data[cut + len(marker) :]
    if not header or header[0] != WEIGHTS_MAGIC:
        raise DataFormatError(f"{path}: not a weights file (bad magic)")

    meta = {}
    declared = []
    for line in header[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFormatError(f"{path}: malformed manifest line {line!r}")
        if key == "tensor":
            parts = value.split()
            declared.append((parts[0], tuple(int(p) for p in parts[1:])))
        else:
            meta[key] = value
    for field_name in ("dims", "seed", "blade_hash"):
        if field_name not in meta:
            raise DataFormatError(f"{path}: manifest missing {field_name}")
    if meta["blade_hash"] != cga.BLADE_ORDER_HASH:
        raise IntegrityError(
            f"{path}: blade-order hash {meta['blade_hash']} does not match this build"
            f" ({cga.BLADE_ORDER_HASH})"
        )
    dims = tuple(int(d) for d in meta["dims"].split(","))
    dropout = tuple(float(r) for r in meta["dropout"].split(",")) if meta.get("dropout") else ()
    expected = _tensor_layout(dims)
    if declared != expected:
        raise DataFormatError(f"{path}: tensor declarations do not match dims {dims}")

    total = sum(int(np.prod(shape)) for _, shape in expected)
    if len(blob) != 4 * total:
        raise DataFormatError(
            f"{path}: tensor blob holds {len(blob)} bytes, expected {4 * total}"
        )

    tensors = {}
    offset = 0
    for name, shape in expected:
        size = int(np.prod(shape))
        flat = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
        tensors[name] = flat.astype(np.float64).reshape(shape)
        offset += 4 * size

    hidden = len(dims) - 2
    return ModelWeights(
        dims=dims,
        dropout=dropout,
        seed=int(meta["seed"]),
        weights=[tensors[f"layer{l}.weight"] for l in range(1, hidden + 2)],
        biases=[tensors[f"layer{l}.bias"] for l in range(1, hidden + 2)],
        bn_gamma=[tensors[f"bn{i}.gamma"] for i in range(hidden + 1)],
        bn_beta=[tensors[f"bn{i}.beta"] for i in range(hidden + 1)],
        bn_mean=[tensors[f"bn{i}.mean"] for i in range(hidden + 1)],
        bn_var=[tensors[f"bn{i}.var"] for i in range(hidden + 1)],
        target_mean=tensors["target.mean"],
        target_std=tensors["target.std"],
        blade_hash=meta["blade_hash"],
    )
