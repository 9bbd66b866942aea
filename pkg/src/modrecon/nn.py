"""Dense numeric kernel: tanh graph layers, inner-product decoder, F-norm loss.

Everything here is plain float64 numpy with hand-derived gradients;
:func:`gradient_check` is the safety net for them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DECODERS = ("identity", "tanh")
BATCH_MODES = ("paired", "uniform")
CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class LayerWeights:
    """One weight matrix plus its Adam accumulators."""

    w: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    def __post_init__(self):
        if not (self.w.shape == self.first_moment.shape == self.second_moment.shape):
            raise ValueError("weight and moment shapes differ")
        if self.step_count < 0:
            raise ValueError("step_count must be non-negative")

    @classmethod
    def from_array(cls, w):
        w = np.array(w, dtype=np.float64)
        return cls(w, np.zeros_like(w), np.zeros_like(w), 0)

    @property
    def shape(self):
        return self.w.shape


@dataclass
class TrainingConfig:
    """Hyper-parameters shared by all trainers.

    ``minibatch_size``, ``neighbor_samples``, ``input_learning_rate`` and
    ``batch_mode`` only matter for the sampled two-stage trainer.
    ``input_learning_rate`` is the step for the degree-scaled updates of its
    first-layer modularity block (``None`` uses ``learning_rate``).
    ``batch_mode="paired"`` fills each batch with ``p/2`` shuffled nodes plus
    one sampled neighbor of each; ``"uniform"`` takes ``p`` shuffled nodes.
    """

    layer_dims: tuple = (32, 16)
    learning_rate: float = 0.01
    epochs: int = 200
    seed: int = 0
    minibatch_size: int = 16
    neighbor_samples: int = 5
    decoder_nonlinearity: str = "identity"
    input_learning_rate: float | None = None
    batch_mode: str = "paired"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if not self.layer_dims or min(self.layer_dims) < 1:
            raise ValueError("layer_dims must be non-empty and positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.minibatch_size < 1 or self.neighbor_samples < 1:
            raise ValueError("minibatch_size and neighbor_samples must be >= 1")
        if self.decoder_nonlinearity not in DECODERS:
            raise ValueError(f"decoder_nonlinearity must be one of {DECODERS}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_mode not in BATCH_MODES:
            raise ValueError(f"batch_mode must be one of {BATCH_MODES}")
        if self.input_learning_rate is not None and self.input_learning_rate <= 0:
            raise ValueError("input_learning_rate must be positive")


def init_weights(in_dim, out_dim, seed):
    """Uniform fan-in/fan-out initialization from a seeded generator."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError("dimensions must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return LayerWeights.from_array(rng.uniform(-limit, limit, size=(in_dim, out_dim)))


def gcn_layer_forward(a_norm, H, weights):
    """``tanh(A_norm @ H @ W)``."""
    W = weights.w if isinstance(weights, LayerWeights) else weights
    if H.shape[1] != W.shape[0]:
        raise ValueError(f"input width {H.shape[1]} does not match weight rows {W.shape[0]}")
    return np.tanh(a_norm @ (H @ W))


def decode(Z, nonlin="identity"):
    S = Z @ Z.T
    return np.tanh(S) if nonlin == "tanh" else S


def reconstruction_loss(Z, B, nonlin="identity"):
    """Squared Frobenius distance between the decoded ``Z Z^T`` and ``B``."""
    if Z.shape[0] != B.shape[0] or B.shape[0] != B.shape[1]:
        raise ValueError("Z rows must match the square target")
    R = decode(Z, nonlin) - B
    return float(np.sum(R * R))


def loss_gradient_wrt_embedding(Z, B, nonlin="identity"):
    """Gradient of :func:`reconstruction_loss` with respect to ``Z``.

    For the identity decoder this is ``4 (Z Z^T - B) Z``; both ``B`` and the
    decoded matrix are symmetric, which folds the two index positions.
    """
    if Z.shape[0] != B.shape[0]:
        raise ValueError("Z rows must match the target")
    S = Z @ Z.T
    if nonlin == "tanh":
        T = np.tanh(S)
        G = (T - B) * (1.0 - T * T)
    else:
        G = S - B
    return 4.0 * G @ Z


def forward_layers(a_norm, H0, weights):
    """Stacked tanh layers; returns every activation ``[H0, H1, ..., HL]``."""
    acts = [H0]
    for lw in weights:
        acts.append(gcn_layer_forward(a_norm, acts[-1], lw))
    return acts


def backprop_through_layers(activations, weights, upstream, a_norm):
    """Weight gradients of stacked tanh GCN layers.

    ``activations`` is ``[H0, ..., HL]`` as produced by :func:`forward_layers`
    and ``upstream`` is dLoss/dHL. Uses the symmetry of ``a_norm``.
    """
    if len(activations) != len(weights) + 1:
        raise ValueError("need one more activation than weight matrices")
    if upstream.shape != activations[-1].shape:
        raise ValueError("upstream gradient does not match final layer output")
    grads = [None] * len(weights)
    g = upstream
    for l in range(len(weights) - 1, -1, -1):
        out = activations[l + 1]
        d_pre = g * (1.0 - out * out)
        AH = a_norm @ activations[l]
        W = weights[l].w if isinstance(weights[l], LayerWeights) else weights[l]
        if AH.shape[1] != W.shape[0]:
            raise ValueError("inconsistent cached shapes")
        grads[l] = AH.T @ d_pre
        if l > 0:
            g = a_norm @ (d_pre @ W.T)
    return grads


def adam_update(weights, grad, lr):
    """One bias-corrected Adam step; returns a new :class:`LayerWeights`."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != weights.w.shape:
        raise ValueError(f"gradient shape {grad.shape} != weight shape {weights.w.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    t = weights.step_count + 1
    m = ADAM_BETA1 * weights.first_moment + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * weights.second_moment + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    w = weights.w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return LayerWeights(w, m, v, t)


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tolerance)


def numerical_gradient(fun, params, eps=1e-5):
    """Central differences of ``fun(params)`` for every entry of every array."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            fp = fun(params)
            p[idx] = orig - eps
            fm = fun(params)
            p[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def gradient_check(fun, params, analytic, tolerance=1e-4, eps=1e-5):
    """Compare analytic gradients with central differences.

    The error for each parameter array is ``|a - n| / max(|a|, |n|)`` in
    the 2-norm; the report holds the worst one.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    numeric = numerical_gradient(fun, params, eps)
    errs = []
    for a, n in zip(analytic, numeric):
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        errs.append(0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale))
    return GradCheckReport(max(errs) if errs else 0.0, errs, tolerance)


# checkpoints -------------------------------------------------------------


def save_checkpoint(path, kind, weights, config, extra=None):
    """Write weights to an ``.npz`` container.

    The archive holds a ``header`` entry (JSON string with format version,
    model kind, config and layer shapes) and ``w0..w{L-1}`` float64 arrays.
    """
    header = {
        "format": CHECKPOINT_FORMAT,
        "kind": kind,
        "config": {**asdict(config), "layer_dims": list(config.layer_dims)},
        "shapes": [list(lw.shape) for lw in weights],
        "extra": extra or {},
    }
    arrays = {f"w{i}": np.ascontiguousarray(lw.w) for i, lw in enumerate(weights)}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(kind, weights, config, extra)``."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
        weights = [LayerWeights.from_array(z[f"w{i}"]) for i in range(len(header["shapes"]))]
    config = TrainingConfig(**header["config"])
    return header["kind"], weights, config, header.get("extra", {})
