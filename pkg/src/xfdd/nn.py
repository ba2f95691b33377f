"""Dense feed-forward engine with a supervised-autoencoder topology.

A shared encoder maps inputs to a latent vector; a decoder head reconstructs
the inputs and a classifier head maps the latent vector to class logits.
Weight matrices are stored with shape (fan_in, fan_out) so a batch forward
pass is ``x @ W + b`` with samples in rows. Backpropagation is exact for the
composite objective in :mod:`xfdd.losses`, and training under a fixed seed is
bitwise reproducible.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, ShapeError
from .losses import (
    CompositeLossConfig,
    LossBreakdown,
    check_one_hot,
    class_weights,
    composite_loss,
    one_hot,
)

ACTIVATIONS = ("tanh", "linear")


def _apply_activation(kind: str, pre: np.ndarray) -> np.ndarray:
    return np.tanh(pre) if kind == "tanh" else pre


def _activation_grad(kind: str, act: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation value (tanh' = 1 - a^2)
    return 1.0 - act**2 if kind == "tanh" else np.ones_like(act)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths and activations of one supervised-autoencoder network.

    ``encoder_widths`` lists every encoder layer output width, ending at the
    latent width. ``decoder_widths`` mirrors it back and must end at
    ``input_dim``. The classifier head always maps the latent width to
    ``num_classes`` with linear logits.
    """

    input_dim: int
    encoder_widths: tuple[int, ...]
    decoder_widths: tuple[int, ...]
    num_classes: int
    activation: str = "tanh"
    decoder_output_activation: str = "linear"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))
        if self.input_dim < 1:
            raise ConfigurationError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.encoder_widths:
            raise ConfigurationError("encoder_widths must not be empty")
        if not self.decoder_widths:
            raise ConfigurationError("decoder_widths must not be empty")
        if any(w < 1 for w in self.encoder_widths + self.decoder_widths):
            raise ConfigurationError("all layer widths must be >= 1")
        if self.decoder_widths[-1] != self.input_dim:
            raise ConfigurationError(
                f"decoder must end at input_dim={self.input_dim}, got {self.decoder_widths[-1]}"
            )
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        for kind in (self.activation, self.decoder_output_activation):
            if kind not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {kind!r}")

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    @classmethod
    def mirrored(
        cls,
        input_dim: int,
        encoder_widths: Sequence[int],
        num_classes: int,
        activation: str = "tanh",
        decoder_output_activation: str = "linear",
        seed: int = 0,
    ) -> "NetworkSpec":
        """Build a spec whose decoder mirrors the encoder back to the input."""
        encoder_widths = tuple(int(w) for w in encoder_widths)
        decoder = tuple(reversed(encoder_widths[:-1])) + (int(input_dim),)
        return cls(
            input_dim=int(input_dim),
            encoder_widths=encoder_widths,
            decoder_widths=decoder,
            num_classes=int(num_classes),
            activation=activation,
            decoder_output_activation=decoder_output_activation,
            seed=seed,
        )


def arch_string(spec: NetworkSpec) -> str:
    """Human-readable architecture, e.g. ``52-5-10*-10-5-52``.

    The asterisk marks the latent layer feeding the classifier head; the
    decoder is listed starting again from the latent width.
    """
    enc = [str(spec.input_dim)] + [str(w) for w in spec.encoder_widths]
    dec = [str(spec.latent_dim)] + [str(w) for w in spec.decoder_widths]
    return "-".join(enc) + "*-" + "-".join(dec)


@dataclass
class Layer:
    """One affine layer: weights (fan_in, fan_out) and bias (fan_out,)."""

    W: np.ndarray
    b: np.ndarray


@dataclass
class Model:
    """Trained or in-training network: encoder, decoder and classifier layers."""

    spec: NetworkSpec
    encoder: list[Layer]
    decoder: list[Layer]
    classifier: Layer

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield (name, array) for every parameter in a fixed order."""
        for i, layer in enumerate(self.encoder):
            yield f"encoder[{i}].W", layer.W
            yield f"encoder[{i}].b", layer.b
        for i, layer in enumerate(self.decoder):
            yield f"decoder[{i}].W", layer.W
            yield f"decoder[{i}].b", layer.b
        yield "classifier.W", self.classifier.W
        yield "classifier.b", self.classifier.b

    def weight_matrices(self) -> list[np.ndarray]:
        """All weight matrices (no biases), the L2-penalized set."""
        mats = [layer.W for layer in self.encoder]
        mats += [layer.W for layer in self.decoder]
        mats.append(self.classifier.W)
        return mats

    def copy(self) -> "Model":
        return copy.deepcopy(self)


@dataclass
class ForwardCache:
    """Per-layer pre- and post-activations of one batch forward pass."""

    x: np.ndarray
    enc_pre: list[np.ndarray]
    enc_act: list[np.ndarray]
    dec_pre: list[np.ndarray]
    dec_act: list[np.ndarray]
    logits: np.ndarray
    probs: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.enc_act[-1]

    @property
    def x_hat(self) -> np.ndarray:
        return self.dec_act[-1]


@dataclass
class Gradients:
    """Gradient arrays aligned with :meth:`Model.parameters`."""

    encoder: list[Layer]
    decoder: list[Layer]
    classifier: Layer

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, layer in enumerate(self.encoder):
            yield f"encoder[{i}].W", layer.W
            yield f"encoder[{i}].b", layer.b
        for i, layer in enumerate(self.decoder):
            yield f"decoder[{i}].W", layer.W
            yield f"decoder[{i}].b", layer.b
        yield "classifier.W", self.classifier.W
        yield "classifier.b", self.classifier.b


def init_model(spec: NetworkSpec) -> Model:
    """Initialize weights from a scaled zero-mean uniform, biases at zero.

    The scale is sqrt(6 / (fan_in + fan_out)); draws are deterministic
    given ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)

    def make(fan_in: int, fan_out: int) -> Layer:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return Layer(W=W, b=np.zeros(fan_out))

    encoder = []
    width = spec.input_dim
    for w in spec.encoder_widths:
        encoder.append(make(width, w))
        width = w
    decoder = []
    for w in spec.decoder_widths:
        decoder.append(make(width, w))
        width = w
    classifier = make(spec.latent_dim, spec.num_classes)
    return Model(spec=spec, encoder=encoder, decoder=decoder, classifier=classifier)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: Model, batch: np.ndarray) -> ForwardCache:
    """Run one batch through encoder, decoder head and classifier head."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != model.spec.input_dim:
        raise ShapeError(
            f"batch must be (N, {model.spec.input_dim}), got {batch.shape}"
        )
    spec = model.spec

    enc_pre, enc_act = [], []
    a = batch
    for layer in model.encoder:
        pre = a @ layer.W + layer.b
        a = _apply_activation(spec.activation, pre)
        enc_pre.append(pre)
        enc_act.append(a)

    dec_pre, dec_act = [], []
    h = a
    last = len(model.decoder) - 1
    for i, layer in enumerate(model.decoder):
        pre = h @ layer.W + layer.b
        kind = spec.decoder_output_activation if i == last else spec.activation
        h = _apply_activation(kind, pre)
        dec_pre.append(pre)
        dec_act.append(h)

    logits = a @ model.classifier.W + model.classifier.b
    probs = softmax(logits)
    return ForwardCache(
        x=batch, enc_pre=enc_pre, enc_act=enc_act,
        dec_pre=dec_pre, dec_act=dec_act, logits=logits, probs=probs,
    )


def predict_proba(model: Model, x: np.ndarray) -> np.ndarray:
    return forward(model, x).probs


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(model, x), axis=1)


def model_composite_loss(
    model: Model,
    cache: ForwardCache,
    targets: np.ndarray,
    cfg: CompositeLossConfig,
    n_effective: int | None = None,
) -> LossBreakdown:
    """Composite loss with the L2 term taken from this model's weights."""
    return composite_loss(
        cache.x, cache.x_hat, cache.probs, targets,
        model.weight_matrices(), cfg, n_effective=n_effective,
    )


def backward(
    model: Model,
    cache: ForwardCache,
    targets: np.ndarray,
    cfg: CompositeLossConfig,
    n_effective: int | None = None,
) -> Gradients:
    """Exact gradients of the composite loss for every weight and bias."""
    check_one_hot(targets)
    if targets.shape[0] != cache.x.shape[0]:
        raise ShapeError(
            f"targets rows {targets.shape[0]} != batch rows {cache.x.shape[0]}"
        )
    if targets.shape[1] != model.spec.num_classes:
        raise ShapeError(
            f"targets have {targets.shape[1]} classes, model has {model.spec.num_classes}"
        )
    spec = model.spec
    n = n_effective if n_effective is not None else cache.x.shape[0]

    # classifier head: d/dlogits of the (optionally class-weighted) CE
    sw = class_weights(targets, cfg.delta)
    dlogits = (cfg.lambda2 / n) * (sw[:, None] * (cache.probs - targets))
    z = cache.z
    g_cls = Layer(W=z.T @ dlogits, b=dlogits.sum(axis=0))
    dz_cls = dlogits @ model.classifier.W.T

    # decoder head, top-down
    dact = (2.0 * cfg.lambda1 / n) * (cache.x_hat - cache.x)
    dec_grads: list[Layer] = [None] * len(model.decoder)  # type: ignore[list-item]
    last = len(model.decoder) - 1
    for i in range(last, -1, -1):
        kind = spec.decoder_output_activation if i == last else spec.activation
        dpre = dact * _activation_grad(kind, cache.dec_act[i])
        prev = cache.dec_act[i - 1] if i > 0 else z
        dec_grads[i] = Layer(W=prev.T @ dpre, b=dpre.sum(axis=0))
        dact = dpre @ model.decoder[i].W.T

    # both heads meet at the latent layer
    dz = dz_cls + dact
    enc_grads: list[Layer] = [None] * len(model.encoder)  # type: ignore[list-item]
    for i in range(len(model.encoder) - 1, -1, -1):
        dpre = dz * _activation_grad(spec.activation, cache.enc_act[i])
        prev = cache.enc_act[i - 1] if i > 0 else cache.x
        enc_grads[i] = Layer(W=prev.T @ dpre, b=dpre.sum(axis=0))
        dz = dpre @ model.encoder[i].W.T

    grads = Gradients(encoder=enc_grads, decoder=dec_grads, classifier=g_cls)
    if cfg.lambda3 > 0:
        scale = 2.0 * cfg.lambda3 / n
        for g_layer, m_layer in zip(
            grads.encoder + grads.decoder + [grads.classifier],
            model.encoder + model.decoder + [model.classifier],
        ):
            g_layer.W += scale * m_layer.W
    return grads


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators aligned with the model parameters."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: list[np.ndarray] = field(default_factory=list)
    second: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: Model, learning_rate: float = 1e-3, **kw) -> "OptimizerState":
        first = [np.zeros_like(p) for _, p in model.parameters()]
        second = [np.zeros_like(p) for _, p in model.parameters()]
        return cls(learning_rate=learning_rate, first=first, second=second, **kw)


def adam_step(model: Model, grads: Gradients, state: OptimizerState) -> tuple[Model, OptimizerState]:
    """Apply one adaptive-moment update in place; increments the step counter."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for (name, param), (_, grad), m, v in zip(
        model.parameters(), grads.parameters(), state.first, state.second
    ):
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient in {name}")
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad**2
        m_hat = m / bc1
        v_hat = v / bc2
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    shuffle_seed: int | None = None  # defaults to the model's init seed


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    total: float
    recon: float
    cls: float
    l2: float
    val_total: float | None = None


def _as_xy(data) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(data, "X") and hasattr(data, "y"):
        return np.asarray(data.X, dtype=float), np.asarray(data.y)
    x, y = data
    return np.asarray(x, dtype=float), np.asarray(y)


def train(
    model: Model,
    data,
    loss_cfg: CompositeLossConfig,
    schedule: TrainSchedule,
    val_data=None,
) -> tuple[Model, list[TraceRow]]:
    """Mini-batch training with shuffling under a seeded RNG.

    When validation data is given, the returned model is the epoch snapshot
    with the lowest validation composite loss seen during training;
    otherwise the final model. The loss trace records full-batch values per
    epoch and is not required to be monotone.

    Parameters
    ----------
    data, val_data : Dataset or (x, labels) tuple
        Inputs must already be standardized; labels are integers in
        [0, num_classes).
    """
    x, labels = _as_xy(data)
    m = model.spec.num_classes
    targets = one_hot(labels, m)
    if schedule.epochs == 0:
        return model, []

    val = None
    if val_data is not None:
        vx, vlabels = _as_xy(val_data)
        val = (vx, one_hot(vlabels, m))

    seed = schedule.shuffle_seed if schedule.shuffle_seed is not None else model.spec.seed
    rng = np.random.default_rng(seed)
    state = OptimizerState.for_model(model, learning_rate=schedule.learning_rate)
    n = x.shape[0]
    batch = max(1, min(schedule.batch_size, n))

    trace: list[TraceRow] = []
    best_val = np.inf
    best_model: Model | None = None
    for epoch in range(1, schedule.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            cache = forward(model, x[idx])
            grads = backward(model, cache, targets[idx], loss_cfg)
            adam_step(model, grads, state)

        full = model_composite_loss(model, forward(model, x), targets, loss_cfg)
        if not np.isfinite(full.total):
            raise DivergenceError(f"training loss diverged at epoch {epoch}")
        val_total = None
        if val is not None:
            vb = model_composite_loss(model, forward(model, val[0]), val[1], loss_cfg)
            val_total = vb.total
            if val_total < best_val:
                best_val = val_total
                best_model = model.copy()
        trace.append(
            TraceRow(epoch=epoch, total=full.total, recon=full.recon,
                     cls=full.cls, l2=full.l2, val_total=val_total)
        )

    if best_model is not None:
        return best_model, trace
    return model, trace


def model_to_dict(model: Model) -> dict:
    """JSON-ready description of spec and per-layer weight arrays (row-major)."""
    spec = model.spec
    return {
        "spec": {
            "input_dim": spec.input_dim,
            "encoder_widths": list(spec.encoder_widths),
            "decoder_widths": list(spec.decoder_widths),
            "num_classes": spec.num_classes,
            "activation": spec.activation,
            "decoder_output_activation": spec.decoder_output_activation,
            "seed": spec.seed,
        },
        "weights": {
            "encoder": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in model.encoder],
            "decoder": [{"W": l.W.tolist(), "b": l.b.tolist()} for l in model.decoder],
            "classifier": {"W": model.classifier.W.tolist(), "b": model.classifier.b.tolist()},
        },
    }


def model_from_dict(d: dict) -> Model:
    spec = NetworkSpec(
        input_dim=d["spec"]["input_dim"],
        encoder_widths=tuple(d["spec"]["encoder_widths"]),
        decoder_widths=tuple(d["spec"]["decoder_widths"]),
        num_classes=d["spec"]["num_classes"],
        activation=d["spec"]["activation"],
        decoder_output_activation=d["spec"]["decoder_output_activation"],
        seed=d["spec"]["seed"],
    )

    def layer(obj) -> Layer:
        return Layer(W=np.asarray(obj["W"], dtype=float), b=np.asarray(obj["b"], dtype=float))

    return Model(
        spec=spec,
        encoder=[layer(o) for o in d["weights"]["encoder"]],
        decoder=[layer(o) for o in d["weights"]["decoder"]],
        classifier=layer(d["weights"]["classifier"]),
    )
