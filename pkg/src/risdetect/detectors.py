"""Online change-point statistics over an observation stream.

Scan-B maintains non-overlapping reference blocks plus a sliding live window
and averages unbiased MMD estimates between each block and the window; the
same machinery runs on scalar anomaly scores or on raw flattened symbols.
Hotelling's T-squared compares the live window mean against reference
statistics with trace shrinkage.  All alarms are latched: once the statistic
crosses the threshold the alarm stays raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


class LinearKernel:
    """k(x, y) = <x, y>; scalars are treated as 1-d vectors."""

    name = "linear"

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.atleast_2d(_as_rows(a) @ _as_rows(b).T)

    def pair(self, x, y) -> float:
        return float(np.dot(np.ravel(x), np.ravel(y)))


class RbfKernel:
    """k(x, y) = exp(-gamma * ||x - y||^2)."""

    name = "rbf"

    def __init__(self, gamma: float = 1.0):
        if gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {gamma}")
        self.gamma = gamma

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = _as_rows(a), _as_rows(b)
        sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * a @ b.T)
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def pair(self, x, y) -> float:
        d = np.ravel(x) - np.ravel(y)
        return float(np.exp(-self.gamma * np.dot(d, d)))


def make_kernel(name: str, rbf_gamma: float = 1.0):
    if name == "linear":
        return LinearKernel()
    if name == "rbf":
        return RbfKernel(rbf_gamma)
    raise ConfigError(f"unknown kernel {name!r}")


def median_heuristic_gamma(observations: np.ndarray) -> float:
    """RBF bandwidth from data: gamma = 1 / median pairwise squared distance."""
    obs = _as_rows(np.asarray(observations))
    if obs.shape[0] < 2:
        raise ConfigError(f"need >= 2 observations, got {obs.shape[0]}")
    sq = np.sum((obs[:, None, :] - obs[None, :, :]) ** 2, axis=-1)
    med = float(np.median(sq[np.triu_indices_from(sq, k=1)]))
    if med <= 0.0:
        raise ConfigError("median pairwise distance is zero; cannot set gamma")
    return 1.0 / med


def _as_rows(x: np.ndarray) -> np.ndarray:
    """(n,) scalars -> (n, 1); (n, dim) unchanged."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim == 2:
        return x
    raise ContractError(f"expected scalars or row vectors, got shape {x.shape}")


def h_fn(x_i, x_j, y_i, y_j, kernel=None) -> float:
    """Two-sample U-statistic kernel h(x_i, x_j, y_i, y_j)."""
    kernel = kernel or LinearKernel()
    return (kernel.pair(x_i, x_j) + kernel.pair(y_i, y_j)
            - kernel.pair(x_i, y_j) - kernel.pair(x_j, y_i))


def mmd_unbiased(block_a: np.ndarray, block_b: np.ndarray, kernel=None) -> float:
    """Unbiased MMD estimate between two equal-length blocks.

    Equals the brute-force average of :func:`h_fn` over all ordered pairs
    (i, j) with i != j.
    """
    kernel = kernel or LinearKernel()
    a, b = _as_rows(block_a), _as_rows(block_b)
    w = a.shape[0]
    if w < 2:
        raise ConfigError(f"blocks need >= 2 entries, got {w}")
    if b.shape != a.shape:
        raise ContractError(f"block shapes differ: {a.shape} vs {b.shape}")
    kaa = kernel.gram(a, a)
    kbb = kernel.gram(b, b)
    kab = kernel.gram(a, b)
    off_aa = kaa.sum() - np.trace(kaa)
    off_bb = kbb.sum() - np.trace(kbb)
    cross = 2.0 * (kab.sum() - np.trace(kab))
    return float((off_aa + off_bb - cross) / (w * (w - 1)))


@dataclass
class ReferenceBank:
    """Non-overlapping reference blocks, shape (m_w, window, dim)."""

    blocks: np.ndarray

    def __post_init__(self):
        if self.blocks.ndim != 3:
            raise ContractError(f"blocks must be 3-d, got shape {self.blocks.shape}")
        self.blocks.flags.writeable = False

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def window(self) -> int:
        return self.blocks.shape[1]


def build_reference(observations: np.ndarray, window: int) -> ReferenceBank:
    """Chop the reference stream into contiguous non-overlapping blocks."""
    obs = _as_rows(np.asarray(observations))
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    m0 = obs.shape[0]
    if m0 == 0 or m0 % window != 0:
        raise ConfigError(
            f"reference length {m0} is not a positive multiple of window {window}")
    blocks = obs.reshape(m0 // window, window, obs.shape[1]).copy()
    return ReferenceBank(blocks)


class ScanBDetector:
    """Latched scan-B monitor over a stream of scalars or vectors.

    Per update the live window Gram and one Gram per reference block are
    evaluated: exactly ``(n_blocks + 1) * window**2`` kernel evaluations
    (reference self-Grams are cached at construction).
    """

    def __init__(self, reference: ReferenceBank, threshold: float, kernel=None):
        self.kernel = kernel or LinearKernel()
        self.reference = reference
        self.threshold = float(threshold)
        w = reference.window
        self._w = w
        self._dim = reference.blocks.shape[2]
        self._ref_flat = reference.blocks.reshape(-1, self._dim)
        ref_grams = np.stack([self.kernel.gram(b, b) for b in reference.blocks])
        self._ref_off = ref_grams.sum(axis=(1, 2)) - np.trace(ref_grams,
                                                              axis1=1, axis2=2)
        self._buf = np.empty((w, self._dim), dtype=np.float64)
        self._seen = 0
        self.alarm = False
        self.last_stat: float | None = None
        self.kernel_evals = 0          # cumulative, per-step evaluations only
        self.kernel_evals_last_step = 0

    @property
    def per_step_kernel_evals(self) -> int:
        """Exact kernel-evaluation count of one full update."""
        return (self.reference.n_blocks + 1) * self._w ** 2

    def step(self, obs) -> tuple[float | None, bool]:
        """Push one observation; returns (statistic or None, latched alarm)."""
        row = np.ravel(np.asarray(obs, dtype=np.float64))
        if row.shape != (self._dim,):
            raise ContractError(f"observation dim {row.shape} != ({self._dim},)")
        self._buf[self._seen % self._w] = row
        self._seen += 1
        self.kernel_evals_last_step = 0
        if self._seen < self._w:
            self.last_stat = None
            return None, self.alarm
        # live window in arrival order (oldest first)
        start = self._seen % self._w
        live = np.concatenate([self._buf[start:], self._buf[:start]], axis=0)
        kbb = self.kernel.gram(live, live)
        kab = self.kernel.gram(self._ref_flat, live)
        self.kernel_evals_last_step = kbb.size + kab.size
        self.kernel_evals += self.kernel_evals_last_step
        off_bb = kbb.sum() - np.trace(kbb)
        per_block = kab.reshape(self.reference.n_blocks, self._w, self._w)
        cross = 2.0 * (per_block.sum(axis=(1, 2))
                       - np.trace(per_block, axis1=1, axis2=2))
        mmds = (self._ref_off + off_bb - cross) / (self._w * (self._w - 1))
        z = float(mmds.mean())
        self.last_stat = z
        if z >= self.threshold:
            self.alarm = True
        return z, self.alarm


class HotellingDetector:
    """Latched windowed Hotelling T-squared against reference statistics.

    The reference covariance is shrunk by ``shrinkage * (trace/dim) * I``
    before inversion.
    """

    def __init__(self, reference_vectors: np.ndarray, threshold: float,
                 window: int, shrinkage: float = 1e-3):
        ref = _as_rows(np.asarray(reference_vectors))
        if ref.shape[0] < 2:
            raise ConfigError("need >= 2 reference vectors")
        if window < 1:
            raise ConfigError(f"window must be >= 1, got {window}")
        self.threshold = float(threshold)
        self._w = window
        self._dim = ref.shape[1]
        self.ref_mean = ref.mean(axis=0)
        cov = np.cov(ref, rowvar=False, ddof=1).reshape(self._dim, self._dim)
        shrink = shrinkage * (np.trace(cov) / self._dim)
        cov_reg = cov + shrink * np.eye(self._dim)
        self._inv = np.linalg.inv(cov_reg)   # raises LinAlgError if singular
        self._buf = np.empty((window, self._dim), dtype=np.float64)
        self._seen = 0
        self.alarm = False
        self.last_stat: float | None = None

    def step(self, obs) -> tuple[float | None, bool]:
        row = np.ravel(np.asarray(obs, dtype=np.float64))
        if row.shape != (self._dim,):
            raise ContractError(f"observation dim {row.shape} != ({self._dim},)")
        self._buf[self._seen % self._w] = row
        self._seen += 1
        if self._seen < self._w:
            self.last_stat = None
            return None, self.alarm
        diff = self._buf.mean(axis=0) - self.ref_mean
        t2 = float(self._w * diff @ self._inv @ diff)
        self.last_stat = t2
        if t2 >= self.threshold:
            self.alarm = True
        return t2, self.alarm
