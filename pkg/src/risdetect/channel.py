"""Wideband MIMO-OFDM uplink with static reflectors and optional RIS segments.

Geometry conventions (fixed for the whole package): half-wavelength element
spacing everywhere; array responses use the phase convention
``exp(-j*pi*n*sin(elevation))`` per element index ``n`` (ULA) and the product
of row/column terms ``exp(-j*pi*(p*sin(el) + q*sin(az)*cos(el)))`` (URA,
row-major element order).  The BS is a URA, the UE a ULA, reflectors are URAs
whose elements reflect with a diagonal coefficient matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import SurfaceSpec, SystemConfig
from .errors import ConfigError, ContractError


def ula_steering(n_elements: int, elevation: float) -> np.ndarray:
    """Response of an n-element ULA to a plane wave at the given elevation."""
    if n_elements < 1:
        raise ConfigError(f"array needs >= 1 element, got {n_elements}")
    idx = np.arange(n_elements)
    return np.exp(-1j * np.pi * idx * np.sin(elevation))


def ura_steering(rows: int, cols: int, elevation: float, azimuth: float) -> np.ndarray:
    """Response of a rows x cols URA, flattened row-major."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"array needs >= 1 row/column, got {rows}x{cols}")
    row_term = np.arange(rows) * np.sin(elevation)
    col_term = np.arange(cols) * np.sin(azimuth) * np.cos(elevation)
    return np.exp(-1j * np.pi * (row_term[:, None] + col_term[None, :])).ravel()


def raised_cosine(t, sample_period: float, rolloff: float):
    """Raised-cosine pulse with unit peak, p(0) = 1.

    The removable singularity at ``2*rolloff*t/T_s = +-1`` is evaluated by its
    limit ``(pi/4) * sinc(1/(2*rolloff))``.
    """
    if sample_period <= 0:
        raise ConfigError(f"sample_period must be positive, got {sample_period}")
    if not 0.0 <= rolloff <= 1.0:
        raise ConfigError(f"rolloff must lie in [0, 1], got {rolloff}")
    u = np.asarray(t, dtype=np.float64) / sample_period
    num = np.sinc(u) * np.cos(np.pi * rolloff * u)
    den = 1.0 - (2.0 * rolloff * u) ** 2
    if rolloff == 0.0:
        out = num  # den == 1 everywhere
    else:
        singular = np.abs(den) < 1e-12
        out = np.where(singular,
                       (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)),
                       num / np.where(singular, 1.0, den))
    return float(out) if np.isscalar(t) else out


def friis_path_loss(wavelength: float, distance: float) -> float:
    """Free-space power gain (lambda / 4 pi d)^2 of one hop."""
    if distance <= 0:
        raise ConfigError(f"distance must be positive, got {distance}")
    return (wavelength / (4.0 * np.pi * distance)) ** 2


def _cn_samples(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric unit-variance complex Gaussian draws."""
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


@dataclass
class DirectPaths:
    """Parameters of direct (or direct-equivalent) BS-UE paths.

    ``prefactor`` scales the whole sum over paths; drawn sets use the usual
    sqrt(path_loss / count) normalization while collapsed reflector paths
    carry their full scale inside ``gains`` and use prefactor 1.
    """

    bs_elevation: np.ndarray
    bs_azimuth: np.ndarray
    ue_elevation: np.ndarray
    gains: np.ndarray
    delays: np.ndarray
    path_loss: float = 1.0
    prefactor: float | None = None

    def __post_init__(self):
        n = len(self.gains)
        for name in ("bs_elevation", "bs_azimuth", "ue_elevation", "delays"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"{name} must have one entry per path")
        if n < 1:
            raise ConfigError("need at least one path")
        if self.path_loss <= 0:
            raise ConfigError(f"path_loss must be positive, got {self.path_loss}")
        if self.prefactor is None:
            self.prefactor = math.sqrt(self.path_loss / n)

    @property
    def count(self) -> int:
        return len(self.gains)


@dataclass
class CascadedPaths:
    """Two-hop path parameters through one planar reflector."""

    surface: SurfaceSpec
    # BS side: arrival angles at the BS, departure angles from the surface
    bs_elevation: np.ndarray
    bs_azimuth: np.ndarray
    dep_elevation: np.ndarray
    dep_azimuth: np.ndarray
    bs_gains: np.ndarray
    bs_delays: np.ndarray
    # UE side: arrival angles at the surface, departure angle from the UE
    arr_elevation: np.ndarray
    arr_azimuth: np.ndarray
    ue_elevation: np.ndarray
    ue_gains: np.ndarray
    ue_delays: np.ndarray
    path_loss_bs: float = 1.0
    path_loss_ue: float = 1.0

    def __post_init__(self):
        lq, ln = len(self.bs_gains), len(self.ue_gains)
        if lq < 1 or ln < 1:
            raise ConfigError("need at least one path on each hop")
        for name in ("bs_elevation", "bs_azimuth", "dep_elevation",
                     "dep_azimuth", "bs_delays"):
            if len(getattr(self, name)) != lq:
                raise ConfigError(f"{name} must have one entry per BS-side path")
        for name in ("arr_elevation", "arr_azimuth", "ue_elevation", "ue_delays"):
            if len(getattr(self, name)) != ln:
                raise ConfigError(f"{name} must have one entry per UE-side path")
        if self.path_loss_bs <= 0 or self.path_loss_ue <= 0:
            raise ConfigError("path losses must be positive")

    @property
    def prefactor(self) -> float:
        return math.sqrt(self.path_loss_bs * self.path_loss_ue
                         / (len(self.bs_gains) * len(self.ue_gains)))


@dataclass
class SurfaceState:
    """Instantaneous diagonal reflection coefficients of one surface."""

    diagonal: np.ndarray
    ris_active: bool = False


def surface_matrix(spec: SurfaceSpec, phases: np.ndarray | None = None) -> SurfaceState:
    """Reflection state of a surface; ``phases`` drive the RIS segment.

    With ``phases=None`` the RIS segment is idle and reflects like the host
    material, so the whole surface is static.
    """
    if phases is None:
        ris_part = np.full(spec.ris_count, spec.static_coeff, dtype=np.complex128)
        active = False
    else:
        phases = np.asarray(phases, dtype=np.float64)
        if phases.shape != (spec.ris_count,):
            raise ConfigError(
                f"expected {spec.ris_count} phases, got shape {phases.shape}")
        ris_part = np.exp(1j * phases)
        active = spec.ris_count > 0
    return SurfaceState(np.concatenate([ris_part, spec.static_coeffs]), ris_active=active)


def draw_ris_phases(count: int, rng: np.random.Generator,
                    phase_set: Sequence[float] = (0.0, math.pi)) -> np.ndarray:
    """Draw one phase per RIS element uniformly from the discrete set."""
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    return rng.choice(np.asarray(phase_set, dtype=np.float64), size=count)


def draw_direct_paths(cfg: SystemConfig, rng: np.random.Generator) -> DirectPaths:
    """Draw the direct BS-UE path parameters for one coherence frame."""
    n = cfg.paths_direct
    return DirectPaths(
        bs_elevation=rng.uniform(0.0, 2.0 * np.pi, n),
        bs_azimuth=rng.uniform(0.0, 2.0 * np.pi, n),
        ue_elevation=rng.uniform(0.0, 2.0 * np.pi, n),
        gains=_cn_samples(rng, (n,)),
        delays=rng.uniform(0.0, cfg.max_delay, n),
        path_loss=friis_path_loss(cfg.wavelength, cfg.d_bs_ue),
    )


def draw_cascaded_paths(cfg: SystemConfig, surface: SurfaceSpec,
                        rng: np.random.Generator) -> CascadedPaths:
    """Draw the two-hop path parameters through one reflector.

    Per-hop delays are uniform on [0, D*T_s/2] so every cascaded delay stays
    within the cyclic prefix.
    """
    lq, ln = cfg.paths_bs_surface, cfg.paths_surface_ue
    return CascadedPaths(
        surface=surface,
        bs_elevation=rng.uniform(0.0, 2.0 * np.pi, lq),
        bs_azimuth=rng.uniform(0.0, 2.0 * np.pi, lq),
        dep_elevation=rng.uniform(0.0, 2.0 * np.pi, lq),
        dep_azimuth=rng.uniform(0.0, 2.0 * np.pi, lq),
        bs_gains=_cn_samples(rng, (lq,)),
        bs_delays=rng.uniform(0.0, cfg.max_delay / 2.0, lq),
        arr_elevation=rng.uniform(0.0, 2.0 * np.pi, ln),
        arr_azimuth=rng.uniform(0.0, 2.0 * np.pi, ln),
        ue_elevation=rng.uniform(0.0, 2.0 * np.pi, ln),
        ue_gains=_cn_samples(rng, (ln,)),
        ue_delays=rng.uniform(0.0, cfg.max_delay / 2.0, ln),
        path_loss_bs=friis_path_loss(
            cfg.wavelength,
            cfg.d_bs_surface if surface.d_bs is None else surface.d_bs),
        path_loss_ue=friis_path_loss(
            cfg.wavelength,
            cfg.d_surface_ue if surface.d_ue is None else surface.d_ue),
    )


def _bs_steering_matrix(cfg: SystemConfig, elevation, azimuth) -> np.ndarray:
    """Stack of BS URA responses, one row per path."""
    return np.stack([ura_steering(cfg.bs_rows, cfg.bs_cols, el, az)
                     for el, az in zip(elevation, azimuth)])


def _surface_steering_matrix(spec: SurfaceSpec, elevation, azimuth) -> np.ndarray:
    return np.stack([ura_steering(spec.rows, spec.cols, el, az)
                     for el, az in zip(elevation, azimuth)])


def direct_delay_channel(paths: DirectPaths, cfg: SystemConfig, d: int) -> np.ndarray:
    """Delay-d tap of the direct channel, shape (n_bs, n_ue)."""
    pulse = raised_cosine(d * cfg.sample_period - paths.delays,
                          cfg.sample_period, cfg.rolloff)
    a_bs = _bs_steering_matrix(cfg, paths.bs_elevation, paths.bs_azimuth)
    a_ue = np.stack([ula_steering(cfg.n_ue, el) for el in paths.ue_elevation])
    weights = paths.gains * pulse
    return paths.prefactor * np.einsum("l,li,lj->ij", weights, a_bs, a_ue.conj())


def cascaded_delay_channel(cascaded: Sequence[CascadedPaths],
                           states: Sequence[SurfaceState],
                           cfg: SystemConfig, d: int) -> np.ndarray:
    """Delay-d tap of the reflected channel summed over all surfaces."""
    if len(cascaded) != len(states):
        raise ContractError("need one surface state per cascaded path set")
    out = np.zeros((cfg.n_bs, cfg.n_ue), dtype=np.complex128)
    for paths, state in zip(cascaded, states):
        if state.diagonal.shape != (paths.surface.n_elements,):
            raise ContractError("surface state size does not match the surface")
        a_dep = _surface_steering_matrix(paths.surface, paths.dep_elevation,
                                         paths.dep_azimuth)
        a_arr = _surface_steering_matrix(paths.surface, paths.arr_elevation,
                                         paths.arr_azimuth)
        # coupling[q, n] = a_dep[q]^H diag(s) a_arr[n]
        coupling = (a_dep.conj() * state.diagonal) @ a_arr.T
        pulse = raised_cosine(
            d * cfg.sample_period - paths.bs_delays[:, None] - paths.ue_delays[None, :],
            cfg.sample_period, cfg.rolloff)
        a_bs = _bs_steering_matrix(cfg, paths.bs_elevation, paths.bs_azimuth)
        a_ue = np.stack([ula_steering(cfg.n_ue, el) for el in paths.ue_elevation])
        weights = (paths.bs_gains[:, None] * paths.ue_gains[None, :]) * coupling * pulse
        out += paths.prefactor * np.einsum("qn,qi,nj->ij", weights, a_bs, a_ue.conj())
    return out


def equivalent_direct_paths(cascaded: Sequence[CascadedPaths],
                            states: Sequence[SurfaceState]) -> DirectPaths:
    """Collapse single-path static reflectors into extra direct-channel paths.

    Each reflector with exactly one path on both hops and a time-invariant
    surface contributes one extra path of gain
    sqrt(PL_bs * PL_ue) * beta_bs * beta_ue * (a_dep^H S a_arr), delayed by
    the sum of the hop delays.  The returned set carries its own scale
    (prefactor 1), so it can be evaluated alongside the drawn direct paths.
    """
    if len(cascaded) != len(states):
        raise ContractError("need one surface state per cascaded path set")
    if not cascaded:
        raise ContractError("need at least one reflector to collapse")
    bs_el, bs_az, ue_el, gains, delays = [], [], [], [], []
    for paths, state in zip(cascaded, states):
        if len(paths.bs_gains) != 1 or len(paths.ue_gains) != 1:
            raise ContractError("collapse requires single-path links on both hops")
        if state.ris_active:
            raise ContractError("collapse requires a time-invariant surface")
        a_dep = ura_steering(paths.surface.rows, paths.surface.cols,
                             paths.dep_elevation[0], paths.dep_azimuth[0])
        a_arr = ura_steering(paths.surface.rows, paths.surface.cols,
                             paths.arr_elevation[0], paths.arr_azimuth[0])
        alpha = np.vdot(a_dep, state.diagonal * a_arr)
        scale = math.sqrt(paths.path_loss_bs * paths.path_loss_ue)
        bs_el.append(paths.bs_elevation[0])
        bs_az.append(paths.bs_azimuth[0])
        ue_el.append(paths.ue_elevation[0])
        gains.append(scale * paths.bs_gains[0] * paths.ue_gains[0] * alpha)
        delays.append(paths.bs_delays[0] + paths.ue_delays[0])
    return DirectPaths(bs_elevation=np.array(bs_el), bs_azimuth=np.array(bs_az),
                       ue_elevation=np.array(ue_el), gains=np.array(gains),
                       delays=np.array(delays), path_loss=1.0, prefactor=1.0)


def freq_response(delay_tensor: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """DFT of the delay taps: H[k] = sum_d H[d] exp(-2j pi k d / K)."""
    if n_subcarriers < 1:
        raise ConfigError(f"n_subcarriers must be >= 1, got {n_subcarriers}")
    n_taps = delay_tensor.shape[-1]
    grid = np.outer(np.arange(n_taps), np.arange(n_subcarriers))
    twiddle = np.exp(-2j * np.pi * grid / n_subcarriers)
    return delay_tensor @ twiddle


@dataclass
class ChannelRealization:
    """One coherence frame: drawn paths plus the end-to-end channel tensors."""

    direct: DirectPaths
    cascaded: list[CascadedPaths]
    states: list[SurfaceState]
    delay_tensor: np.ndarray    # (n_bs, n_ue, D)
    freq_tensor: np.ndarray     # (n_bs, n_ue, K)


def end_to_end_delay_tensor(direct: DirectPaths, cascaded: Sequence[CascadedPaths],
                            states: Sequence[SurfaceState],
                            cfg: SystemConfig) -> np.ndarray:
    """Stack direct + reflected taps over d = 0 .. D-1."""
    taps = [direct_delay_channel(direct, cfg, d)
            + cascaded_delay_channel(cascaded, states, cfg, d)
            for d in range(cfg.cyclic_prefix)]
    return np.stack(taps, axis=-1)


def draw_realization(cfg: SystemConfig, surfaces: Sequence[SurfaceSpec],
                     rng: np.random.Generator) -> ChannelRealization:
    """Draw one coherence frame with all surfaces in their static state."""
    direct = draw_direct_paths(cfg, rng)
    cascaded = [draw_cascaded_paths(cfg, spec, rng) for spec in surfaces]
    states = [surface_matrix(spec) for spec in surfaces]
    delay = end_to_end_delay_tensor(direct, cascaded, states, cfg)
    freq = freq_response(delay, cfg.n_subcarriers)
    return ChannelRealization(direct, list(cascaded), states, delay, freq)


def with_surface_states(realization: ChannelRealization,
                        states: Sequence[SurfaceState],
                        cfg: SystemConfig) -> ChannelRealization:
    """Same paths, new surface states; tensors rebuilt."""
    delay = end_to_end_delay_tensor(realization.direct, realization.cascaded,
                                    states, cfg)
    return ChannelRealization(realization.direct, realization.cascaded,
                              list(states), delay,
                              freq_response(delay, cfg.n_subcarriers))


class ActiveSurfaceUpdater:
    """Fast per-symbol tensor refresh when one reflector's coefficients change.

    Everything except the active reflector's contribution is frozen at
    construction; ``refresh`` only recomputes that reflector's taps from its
    new diagonal.  Matches the plain evaluation route to float precision.
    """

    def __init__(self, realization: ChannelRealization, cfg: SystemConfig,
                 active_index: int):
        if not 0 <= active_index < len(realization.cascaded):
            raise ContractError(f"active_index {active_index} out of range")
        self._cfg = cfg
        paths = realization.cascaded[active_index]
        self._paths = paths
        d_grid = np.arange(cfg.cyclic_prefix) * cfg.sample_period
        self._pulse = raised_cosine(
            d_grid[None, None, :] - paths.bs_delays[:, None, None]
            - paths.ue_delays[None, :, None],
            cfg.sample_period, cfg.rolloff)                      # (Lq, Ln, D)
        self._a_dep_conj = _surface_steering_matrix(
            paths.surface, paths.dep_elevation, paths.dep_azimuth).conj()
        self._a_arr = _surface_steering_matrix(
            paths.surface, paths.arr_elevation, paths.arr_azimuth)
        self._a_bs = _bs_steering_matrix(cfg, paths.bs_elevation, paths.bs_azimuth)
        self._a_ue_conj = np.stack([ula_steering(cfg.n_ue, el)
                                    for el in paths.ue_elevation]).conj()
        self._gain = (paths.prefactor
                      * paths.bs_gains[:, None] * paths.ue_gains[None, :])
        grid = np.outer(np.arange(cfg.cyclic_prefix), np.arange(cfg.n_subcarriers))
        self._twiddle = np.exp(-2j * np.pi * grid / cfg.n_subcarriers)
        other_states = [SurfaceState(np.zeros(p.surface.n_elements), False)
                        if i == active_index else s
                        for i, (p, s) in enumerate(zip(realization.cascaded,
                                                       realization.states))]
        self._base_delay = end_to_end_delay_tensor(
            realization.direct, realization.cascaded, other_states, cfg)
        self._base_freq = self._base_delay @ self._twiddle

    def refresh(self, diagonal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """End-to-end (delay, freq) tensors for a new active-surface diagonal."""
        coupling = (self._a_dep_conj * diagonal) @ self._a_arr.T   # (Lq, Ln)
        weights = self._gain * coupling
        active = np.einsum("qn,qnd,qi,nj->ijd", weights, self._pulse,
                           self._a_bs, self._a_ue_conj, optimize=True)
        delay = self._base_delay + active
        return delay, self._base_freq + active @ self._twiddle


def simulate_symbol(realization: ChannelRealization, cfg: SystemConfig,
                    rng: np.random.Generator,
                    symbols: np.ndarray | None = None) -> np.ndarray:
    """Received frequency-domain symbol, shape (n_bs, K).

    Transmit symbols are CN(0, I) draws per subcarrier unless ``symbols``
    (shape (n_ue, K)) is given; receiver noise is CN(0, sigma^2 I).
    """
    freq = realization.freq_tensor
    if symbols is None:
        symbols = _cn_samples(rng, (cfg.n_ue, cfg.n_subcarriers))
    elif symbols.shape != (cfg.n_ue, cfg.n_subcarriers):
        raise ContractError(f"symbols must have shape {(cfg.n_ue, cfg.n_subcarriers)}")
    noise = math.sqrt(cfg.noise_var) * _cn_samples(rng, (cfg.n_bs, cfg.n_subcarriers))
    return np.einsum("ijk,jk->ik", freq, symbols) + noise
