"""One-class deep SVDD scoring: bias-free MLP, soft-boundary objective, Adam.

The network is a plain matrix chain with leaky-ReLU activations (applied after
every layer, including the last, unless configured otherwise) and no bias
terms.  The anomaly score of an observation is the squared distance of its
latent image from a center frozen at initialization.  All math follows the
dtype of the weight matrices: float32 for production models, float64 in the
numerical tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TrainingSettings
from .errors import ConfigError, ContractError, TrainingDiverged


def flatten_observation(frame: np.ndarray) -> np.ndarray:
    """Column-major stack of real parts then imaginary parts of one symbol."""
    flat = np.ravel(frame, order="F")
    return np.concatenate([flat.real, flat.imag])


def unflatten_observation(values: np.ndarray, n_rx: int, n_subcarriers: int) -> np.ndarray:
    """Inverse of :func:`flatten_observation`."""
    values = np.asarray(values)
    half = n_rx * n_subcarriers
    if values.shape != (2 * half,):
        raise ContractError(f"expected {2 * half} values, got shape {values.shape}")
    flat = values[:half] + 1j * values[half:]
    return flat.reshape((n_rx, n_subcarriers), order="F")


def leaky_relu(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z >= 0, z, alpha * z)


def leaky_relu_grad(z: np.ndarray, alpha: float) -> np.ndarray:
    # slope at exactly 0 is taken as 1
    return np.where(z >= 0, 1.0, alpha)


@dataclass
class MlpParams:
    """Bias-free MLP weights; each layer computes x @ W."""

    weights: list[np.ndarray]
    alpha_leaky: float = 0.01
    final_activation: bool = True

    def __post_init__(self):
        if not self.weights:
            raise ConfigError("need at least one layer")
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ConfigError(
                    f"layer shapes do not chain: {a.shape} -> {b.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.weights[-1].shape[1]


def init_mlp(in_dim: int, hidden_widths, latent_dim: int, rng: np.random.Generator,
             alpha_leaky: float = 0.01, final_activation: bool = True,
             dtype=np.float32) -> MlpParams:
    """Gaussian init scaled by 1/sqrt(fan_in)."""
    dims = (in_dim, *hidden_widths, latent_dim)
    weights = [np.asarray(rng.standard_normal((a, b)) / math.sqrt(a), dtype=dtype)
               for a, b in zip(dims, dims[1:])]
    return MlpParams(weights, alpha_leaky=alpha_leaky, final_activation=final_activation)


def forward(params: MlpParams, v: np.ndarray) -> np.ndarray:
    """Latent image of one vector (dim,) or a batch (B, dim)."""
    v = np.asarray(v)
    if v.shape[-1] != params.in_dim:
        raise ContractError(f"input dim {v.shape[-1]} != expected {params.in_dim}")
    h = v
    last = len(params.weights) - 1
    for i, w in enumerate(params.weights):
        z = h @ w
        h = leaky_relu(z, params.alpha_leaky) if (i < last or params.final_activation) else z
    return h


def _forward_cached(params: MlpParams, batch: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    pre, act = [], [batch]
    h = batch
    last = len(params.weights) - 1
    for i, w in enumerate(params.weights):
        z = h @ w
        pre.append(z)
        h = leaky_relu(z, params.alpha_leaky) if (i < last or params.final_activation) else z
        act.append(h)
    return pre, act


@dataclass
class DsvddModel:
    """Trained scorer: standardization, network, frozen center, radius."""

    params: MlpParams
    center: np.ndarray
    radius: float
    input_mean: np.ndarray
    input_scale: np.ndarray
    hyper: TrainingSettings = field(default_factory=TrainingSettings)

    def __post_init__(self):
        if self.center.shape != (self.params.latent_dim,):
            raise ConfigError("center length must equal the latent width")
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.input_mean.shape != (self.params.in_dim,) \
                or self.input_scale.shape != (self.params.in_dim,):
            raise ConfigError("standardization vectors must match the input width")

    def standardize(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=self.input_mean.dtype) - self.input_mean) / self.input_scale

    def latent(self, v: np.ndarray) -> np.ndarray:
        return forward(self.params, self.standardize(v))


def anomaly_score(model: DsvddModel, v: np.ndarray) -> np.ndarray | float:
    """Squared latent distance from the frozen center; scalar for one vector."""
    diff = model.latent(v) - model.center
    return np.sum(diff * diff, axis=-1)


def compute_center(params: MlpParams, data: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Mean latent image of the (already standardized) training matrix."""
    data = np.asarray(data)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ConfigError("need a non-empty (n, dim) training matrix")
    total = np.zeros(params.latent_dim, dtype=np.float64)
    for start in range(0, data.shape[0], chunk):
        total += forward(params, data[start:start + chunk]).sum(axis=0, dtype=np.float64)
    return (total / data.shape[0]).astype(data.dtype)


def _scores_std(params: MlpParams, center: np.ndarray, batch_std: np.ndarray) -> np.ndarray:
    diff = forward(params, batch_std) - center
    return np.sum(diff * diff, axis=-1)


def svdd_loss(model: DsvddModel, batch: np.ndarray) -> float:
    """Soft-boundary objective on one batch.

    R^2 + mean(max(0, score - R^2)) / lambda1 + lambda2 * sum of squared weights.
    """
    batch = np.atleast_2d(batch)
    scores = _scores_std(model.params, model.center, model.standardize(batch))
    r2 = model.radius ** 2
    hinge = np.maximum(0.0, scores - r2)
    decay = sum(float(np.sum(w * w)) for w in model.params.weights)
    return float(r2 + hinge.mean() / model.hyper.lambda1 + model.hyper.lambda2 * decay)


def loss_gradient(model: DsvddModel, batch: np.ndarray):
    """Exact gradients of :func:`svdd_loss` w.r.t. every weight matrix and R.

    Returns ``(weight_grads, radius_grad)``.  The hinge subgradient at
    score == R^2 is taken as 0 (the term counts only strict exceedances).
    """
    return _loss_gradient_std(model, model.standardize(np.atleast_2d(batch)))


def _loss_gradient_std(model: DsvddModel, std: np.ndarray):
    """Same as :func:`loss_gradient` on an already standardized batch."""
    params = model.params
    n = std.shape[0]
    pre, act = _forward_cached(params, std)
    diff = act[-1] - model.center
    scores = np.sum(diff * diff, axis=-1)
    r2 = model.radius ** 2
    active = scores > r2
    lam1 = model.hyper.lambda1

    # d loss / d latent, one row per sample
    w_hinge = active.astype(std.dtype) / (lam1 * n)
    d_latent = 2.0 * diff * w_hinge[:, None]

    grads = [None] * len(params.weights)
    last = len(params.weights) - 1
    dz = d_latent * leaky_relu_grad(pre[last], params.alpha_leaky) \
        if params.final_activation else d_latent
    for i in range(last, -1, -1):
        grads[i] = act[i].T @ dz + 2.0 * model.hyper.lambda2 * params.weights[i]
        if i > 0:
            dz = (dz @ params.weights[i].T) * leaky_relu_grad(pre[i - 1], params.alpha_leaky)
    radius_grad = 2.0 * model.radius * (1.0 - float(active.sum()) / (lam1 * n))
    return grads, radius_grad


class AdamOptimizer:
    """Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, variables: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Update the variables in place from one gradient evaluation."""
        if self._m is None:
            self._m = [np.zeros_like(v, dtype=np.float64) for v in variables]
            self._v = [np.zeros_like(v, dtype=np.float64) for v in variables]
        if len(grads) != len(variables):
            raise ContractError("need one gradient per variable")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for var, g, m, v in zip(variables, grads, self._m, self._v):
            g = np.asarray(g, dtype=np.float64)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps))
            var -= update.astype(var.dtype)


def train_dsvdd(data: np.ndarray, hyper: TrainingSettings,
                rng: np.random.Generator, dtype=np.float32) -> DsvddModel:
    """Train a scorer on RIS-free observations.

    Standardization statistics, the center (mean latent of the initialized
    network), and the initial radius (so R^2 sits at the 90th percentile of
    initial scores) are all fixed before the Adam loop over (weights, R).
    """
    data = np.asarray(data, dtype=dtype)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ConfigError("need a non-empty (n, dim) training matrix")
    n, in_dim = data.shape

    mean = data.mean(axis=0)
    scale = data.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0).astype(dtype)
    std_data = (data - mean) / scale

    params = init_mlp(in_dim, hyper.hidden_widths, hyper.latent_dim, rng,
                      alpha_leaky=hyper.alpha_leaky,
                      final_activation=hyper.final_activation, dtype=dtype)
    center = compute_center(params, std_data)
    init_scores = np.concatenate(
        [_scores_std(params, center, std_data[s:s + 4096])
         for s in range(0, n, 4096)])
    radius = float(np.sqrt(np.quantile(init_scores, 0.9)))

    model = DsvddModel(params=params, center=center, radius=radius,
                       input_mean=mean, input_scale=scale, hyper=hyper)
    radius_box = np.array(radius, dtype=np.float64)
    optimizer = AdamOptimizer(hyper.learning_rate)

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = std_data[order[start:start + hyper.batch_size]]
            # gradients are computed on pre-standardized rows
            grads, g_r = _loss_gradient_std(model, batch)
            if any(not np.all(np.isfinite(g)) for g in grads) or not math.isfinite(g_r):
                raise TrainingDiverged(
                    f"non-finite gradient in epoch {epoch}, step {start // hyper.batch_size}")
            optimizer.step(params.weights + [radius_box], grads + [np.asarray(g_r)])
            np.maximum(radius_box, 0.0, out=radius_box)     # R stays a radius
            model.radius = float(radius_box)
    return model
