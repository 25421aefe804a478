"""Dense relu/softmax network engine: parameters, forward pass, training steps."""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import AggregationError, ConfigError, NumericalError

RELU = "relu"
SOFTMAX = "softmax"

DEFAULT_HIDDEN = (50, 25)


@dataclass(frozen=True)
class LayerSpec:
    in_width: int
    out_width: int
    activation: str


def specs_from_dims(dims: Sequence[int]) -> tuple:
    L = len(dims) - 1
    if L < 1:
        raise ConfigError("a model needs at least one layer")
    return tuple(
        LayerSpec(int(dims[l]), int(dims[l + 1]), SOFTMAX if l == L - 1 else RELU)
        for l in range(L)
    )


class ModelParams:
    """Layer-shaped parameters backed by one read-only flat vector.

    The flat layout is: for each layer in order, the weight matrix row-major
    then the bias. ``tensors`` are views into that storage, so conversion in
    either direction never changes a value.
    """

    __slots__ = ("layer_specs", "_flat", "_dims")

    def __init__(self, layer_specs, flat):
        specs = tuple(layer_specs)
        for l, s in enumerate(specs):
            want = SOFTMAX if l == len(specs) - 1 else RELU
            if s.activation != want:
                raise ConfigError(f"layer {l}: activation must be {want!r}, got {s.activation!r}")
            if l > 0 and specs[l - 1].out_width != s.in_width:
                raise ConfigError(
                    f"layer {l}: input width {s.in_width} does not match previous output {specs[l - 1].out_width}"
                )
        flat = np.array(flat, copy=True)
        if flat.dtype not in (np.float64, np.float32):
            flat = flat.astype(np.float64)
        dims = np.array([specs[0].in_width] + [s.out_width for s in specs], dtype=np.int64)
        if flat.ndim != 1 or flat.shape[0] != kernels.n_params(dims):
            raise ConfigError(f"flat vector has {flat.size} entries, layers need {kernels.n_params(dims)}")
        flat.flags.writeable = False
        self.layer_specs = specs
        self._flat = flat
        self._dims = dims

    @classmethod
    def from_tensors(cls, layer_specs, tensors):
        parts = []
        for (W, b) in tensors:
            parts.append(np.asarray(W).ravel())
            parts.append(np.asarray(b).ravel())
        return cls(layer_specs, np.concatenate(parts))

    @property
    def flat_view(self) -> np.ndarray:
        return self._flat

    @property
    def dims(self) -> np.ndarray:
        return self._dims

    @property
    def dtype(self):
        return self._flat.dtype

    @property
    def num_classes(self) -> int:
        return int(self._dims[-1])

    @property
    def tensors(self) -> list:
        out = []
        o = 0
        for s in self.layer_specs:
            n = s.in_width * s.out_width
            W = self._flat[o:o + n].reshape(s.in_width, s.out_width)
            o += n
            b = self._flat[o:o + s.out_width]
            o += s.out_width
            out.append((W, b))
        return out

    def with_flat(self, flat) -> "ModelParams":
        return ModelParams(self.layer_specs, flat)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.layer_specs, self._flat.astype(dtype))

    def same_shape(self, other) -> bool:
        return self.layer_specs == other.layer_specs

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.same_shape(other) and np.array_equal(self._flat, other._flat)

    def __repr__(self):
        widths = "->".join(str(int(d)) for d in self._dims)
        return f"ModelParams({widths}, dtype={self._flat.dtype})"


def init_model(dims: Sequence[int], rng: np.random.Generator, dtype=np.float64) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    specs = specs_from_dims(dims)
    tensors = []
    for s in specs:
        lim = np.sqrt(6.0 / (s.in_width + s.out_width))
        W = rng.uniform(-lim, lim, size=(s.in_width, s.out_width))
        tensors.append((W, np.zeros(s.out_width)))
    return ModelParams.from_tensors(specs, tensors).astype(dtype)


def fcnn(num_features: int, num_classes: int, rng: np.random.Generator,
         hidden: Sequence[int] = DEFAULT_HIDDEN, dtype=np.float64) -> ModelParams:
    return init_model([num_features, *hidden, num_classes], rng, dtype=dtype)


def zeros_like(model: ModelParams) -> ModelParams:
    return model.with_flat(np.zeros_like(model.flat_view))


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 5e-4
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer kind must be 'sgd' or 'adam', got {self.kind!r}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")

    @classmethod
    def fresh(cls, kind, learning_rate, n, dtype=np.float64, **kw):
        return cls(kind, learning_rate, np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype), 0, **kw)

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.kind, self.learning_rate,
                              None if self.m is None else self.m.copy(),
                              None if self.v is None else self.v.copy(),
                              self.step, self.beta1, self.beta2, self.eps)


@dataclass
class LossConfig:
    proximal_mu: float = 0.0
    scaffold_correction: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.proximal_mu < 0:
            raise ConfigError("proximal_mu must be non-negative")
        if self.proximal_mu > 0 and self.scaffold_correction is not None:
            raise ConfigError("proximal term and scaffold correction cannot both be active")


def _check_features(model: ModelParams, X):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ConfigError("features must be a non-empty 2-D batch")
    if X.shape[1] != model.layer_specs[0].in_width:
        raise ConfigError(
            f"layer 0 expects {model.layer_specs[0].in_width} features, batch has {X.shape[1]}"
        )
    return np.ascontiguousarray(X, dtype=model.dtype)


def forward(model: ModelParams, features) -> np.ndarray:
    """Row-stochastic class probabilities for a batch."""
    X = _check_features(model, features)
    return kernels.mlp_forward(model.flat_view, model.dims, X)


def predict(model: ModelParams, features) -> np.ndarray:
    return np.argmax(forward(model, features), axis=1)


def _loss_args(model, loss: Optional[LossConfig], anchor: Optional[ModelParams]):
    loss = loss or LossConfig()
    dt = model.dtype
    mu = float(loss.proximal_mu)
    if mu > 0:
        if anchor is None:
            raise ConfigError("proximal term needs an anchor model")
        anc = np.ascontiguousarray(anchor.flat_view, dtype=dt)
    else:
        anc = np.zeros(0, dtype=dt)
    if loss.scaffold_correction is not None:
        corr = np.ascontiguousarray(loss.scaffold_correction, dtype=dt)
        if corr.shape != model.flat_view.shape:
            raise ConfigError("scaffold correction length does not match the model")
    else:
        corr = np.zeros(0, dtype=dt)
    return mu, anc, corr


def _labels(model, y, n):
    y = np.ascontiguousarray(y, dtype=np.int64)
    if y.shape != (n,):
        raise ConfigError("labels must align with features")
    if n and (y.min() < 0 or y.max() >= model.num_classes):
        raise ConfigError(f"labels must lie in [0, {model.num_classes})")
    return y


def loss_and_grad(model: ModelParams, batch, loss: Optional[LossConfig] = None,
                  anchor: Optional[ModelParams] = None):
    X, y = batch
    X = _check_features(model, X)
    y = _labels(model, y, X.shape[0])
    mu, anc, corr = _loss_args(model, loss, anchor)
    return kernels.mlp_loss_grad(model.flat_view.copy(), model.dims, X, y, mu, anc, corr)


def _run(model, X, y, order, epoch_len, batch_size, opt: OptimizerState, loss, anchor):
    mu, anc, corr = _loss_args(model, loss, anchor)
    opt = opt.copy()
    n = model.flat_view.shape[0]
    if opt.m is None:
        opt.m = np.zeros(n, dtype=model.dtype)
        opt.v = np.zeros(n, dtype=model.dtype)
    flat = model.flat_view.copy()
    kind = kernels.ADAM if opt.kind == "adam" else kernels.SGD
    t, status, last = kernels.train_batches(
        flat, model.dims, X, y, order, epoch_len, batch_size, kind, float(opt.learning_rate),
        opt.m, opt.v, int(opt.step), opt.beta1, opt.beta2, opt.eps, mu, anc, corr,
    )
    if status != kernels.STATUS_OK:
        raise NumericalError(f"non-finite loss or gradient at optimizer step {t + 1} (loss={last})")
    opt.step = int(t)
    return model.with_flat(flat), opt


def train_step(model: ModelParams, batch, opt: OptimizerState, loss: Optional[LossConfig] = None,
               anchor: Optional[ModelParams] = None):
    """One gradient step on the whole batch. Returns ``(model, optimizer_state)``."""
    X, y = batch
    X = _check_features(model, X)
    y = _labels(model, y, X.shape[0])
    B = X.shape[0]
    order = np.arange(B, dtype=np.int64)
    return _run(model, X, y, order, B, B, opt, loss, anchor)


def train_epochs(model: ModelParams, features, labels, opt: OptimizerState, epochs: int,
                 batch_size: int, rng: np.random.Generator, loss: Optional[LossConfig] = None,
                 anchor: Optional[ModelParams] = None, shuffle: bool = True):
    """Minibatch training over ``epochs`` passes, reshuffling each epoch.

    Equivalent to calling :func:`train_step` on each minibatch in turn, but the
    whole loop runs inside one kernel call.
    """
    X = _check_features(model, features)
    n = X.shape[0]
    y = _labels(model, labels, n)
    if epochs < 1 or batch_size < 1:
        raise ConfigError("epochs and batch_size must be at least 1")
    if shuffle:
        order = np.concatenate([rng.permutation(n) for _ in range(epochs)]).astype(np.int64)
    else:
        order = np.tile(np.arange(n, dtype=np.int64), epochs)
    return _run(model, X, y, order, n, int(batch_size), opt, loss, anchor)


def linear_combination(models: Sequence[ModelParams], coefficients: Sequence[float]) -> ModelParams:
    if len(models) == 0 or len(models) != len(coefficients):
        raise AggregationError("need equally many models and coefficients, at least one")
    ref = models[0]
    for i, m in enumerate(models):
        if not ref.same_shape(m):
            raise AggregationError(f"client {i}: model shape does not match client 0")
    out = coefficients[0] * ref.flat_view
    for c, m in zip(coefficients[1:], models[1:]):
        out = out + c * m.flat_view
    return ref.with_flat(out.astype(ref.dtype, copy=False))


def scale(model: ModelParams, factor: float) -> ModelParams:
    return model.with_flat(model.flat_view * factor)


def _loss_extended(flat, dims, X, y, mu, anchor, corr):
    # scalar loss in long double; only used as a finite-difference oracle
    h = X.astype(np.longdouble)
    o = 0
    L = len(dims) - 1
    for l in range(L):
        din, dout = int(dims[l]), int(dims[l + 1])
        W = flat[o:o + din * dout].reshape(din, dout)
        o += din * dout
        b = flat[o:o + dout]
        o += dout
        z = h @ W + b
        h = np.maximum(z, 0) if l < L - 1 else z
    zmax = h.max(axis=1, keepdims=True)
    lse = np.log(np.exp(h - zmax).sum(axis=1)) + zmax[:, 0]
    val = np.mean(lse - h[np.arange(len(y)), y])
    if mu > 0:
        d = flat - anchor
        val += mu / 2 * np.sum(d * d)
    if corr.shape[0]:
        val += np.sum(corr * flat)
    return val


def gradient_check(model: ModelParams, batch, loss: Optional[LossConfig] = None,
                   anchor: Optional[ModelParams] = None, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``|analytic - numeric| / max(1e-12, |numeric|)`` over every parameter. The
    finite differences are evaluated in extended precision so that cancellation
    noise stays far below the tolerance the check is used with.
    """
    _, analytic = loss_and_grad(model, batch, loss, anchor)
    X, y = batch
    X = _check_features(model, X)
    y = _labels(model, y, X.shape[0])
    mu, anc, corr = _loss_args(model, loss, anchor)
    w = model.flat_view.astype(np.longdouble)
    anc = anc.astype(np.longdouble)
    corr = corr.astype(np.longdouble)
    worst = 0.0
    for k in range(w.shape[0]):
        orig = w[k]
        w[k] = orig + h
        fp = _loss_extended(w, model.dims, X, y, mu, anc, corr)
        w[k] = orig - h
        fm = _loss_extended(w, model.dims, X, y, mu, anc, corr)
        w[k] = orig
        numeric = float((fp - fm) / (2 * np.longdouble(h)))
        err = abs(analytic[k] - numeric) / max(1e-12, abs(numeric))
        worst = max(worst, err)
    return worst
