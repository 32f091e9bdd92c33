"""Scenario constants and hyperparameters, plus the plain-text config file parser.

The config file format is one ``key = value`` pair per line; ``#`` starts a
comment and blank lines are ignored.  Every key maps to one field below and
unknown keys are rejected.  An empty file yields the default scenario
(10 UE antennas, 4x5 BS array, two 20x20 reflectors, 128-tap channel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Constants of one uplink scenario."""

    n_ue: int = 10              # UE antennas (ULA)
    bs_rows: int = 4            # BS URA rows
    bs_cols: int = 5            # BS URA columns
    n_subcarriers: int = 64     # K, OFDM subcarriers
    cyclic_prefix: int = 128    # D, delay taps spanned by the cyclic prefix
    sample_period: float = 1e-7     # T_s [s]
    carrier_freq: float = 3.5e9     # f_c [Hz]
    paths_direct: int = 4           # L, direct BS-UE paths
    paths_bs_surface: int = 4       # paths per BS-reflector link
    paths_surface_ue: int = 4       # paths per reflector-UE link
    noise_var_db: float = -120.0    # receiver noise variance [dB]
    rolloff: float = 0.5            # raised-cosine roll-off
    d_bs_ue: float = 10.0           # BS-UE distance [m]
    d_bs_surface: float = 3.0       # BS-reflector distance [m]
    d_surface_ue: float = 3.0       # reflector-UE distance [m]
    frame_len: int = 500            # M, symbols per episode / coherence frame
    change_time: int = 150          # mu, first RIS-affected symbol index
    ref_len: int = 100              # m0, symbols feeding the detector reference
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("n_ue", "bs_rows", "bs_cols", "n_subcarriers",
                     "cyclic_prefix", "paths_direct", "paths_bs_surface",
                     "paths_surface_ue", "frame_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("sample_period", "carrier_freq", "d_bs_ue",
                     "d_bs_surface", "d_surface_ue"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if not 0 <= self.ref_len < self.change_time <= self.frame_len:
            raise ConfigError(
                "need 0 <= ref_len < change_time <= frame_len, got "
                f"ref_len={self.ref_len} change_time={self.change_time} "
                f"frame_len={self.frame_len}")

    @property
    def n_bs(self) -> int:
        return self.bs_rows * self.bs_cols

    @property
    def noise_var(self) -> float:
        return 10.0 ** (self.noise_var_db / 10.0)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def max_delay(self) -> float:
        """Largest supported path delay D*T_s [s]."""
        return self.cyclic_prefix * self.sample_period

    @property
    def feature_dim(self) -> int:
        """Length of one flattened received symbol (real+imag parts)."""
        return 2 * self.n_bs * self.n_subcarriers


@dataclass(frozen=True, eq=False)
class SurfaceSpec:
    """Geometry and reflection coefficients of one planar reflector.

    The first ``ris_count`` elements form the reconfigurable segment; the
    remaining elements keep fixed coefficients ``static_coeffs``.  While the
    RIS segment is idle it reflects like the host material (``static_coeff``).
    ``d_bs``/``d_ue`` place this reflector at its own hop distances; ``None``
    falls back to the system-wide defaults.
    """

    rows: int
    cols: int
    ris_count: int = 0
    static_coeff: complex = 1.0 + 0.0j      # host material coefficient
    static_coeffs: np.ndarray | None = None  # per-element override, len n_elements - ris_count
    ris_phase_set: tuple[float, ...] = (0.0, math.pi)
    d_bs: float | None = None               # BS-reflector distance [m]
    d_ue: float | None = None               # reflector-UE distance [m]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("surface needs at least one row and column")
        for name in ("d_bs", "d_ue"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        n = self.rows * self.cols
        if not 0 <= self.ris_count <= n:
            raise ConfigError(f"ris_count must lie in [0, {n}], got {self.ris_count}")
        if self.static_coeffs is None:
            coeffs = np.full(n - self.ris_count, self.static_coeff, dtype=np.complex128)
        else:
            coeffs = np.asarray(self.static_coeffs, dtype=np.complex128)
        if coeffs.shape != (n - self.ris_count,):
            raise ConfigError(
                f"expected {n - self.ris_count} static coefficients, got {coeffs.shape}")
        if coeffs.size and np.max(np.abs(coeffs)) > 1.0 + 1e-12:
            raise ConfigError("reflection coefficients must have magnitude <= 1")
        if abs(self.static_coeff) > 1.0 + 1e-12:
            raise ConfigError("static_coeff must have magnitude <= 1")
        if len(self.ris_phase_set) < 1:
            raise ConfigError("ris_phase_set must not be empty")
        coeffs.flags.writeable = False
        object.__setattr__(self, "static_coeffs", coeffs)

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols


def activate_surface(spec: SurfaceSpec, ris_count: int | None = None) -> SurfaceSpec:
    """Spec of the same reflector with its first elements coated as RIS."""
    count = spec.n_elements if ris_count is None else ris_count
    if not 0 < count <= spec.n_elements:
        raise ConfigError(f"ris_count must lie in [1, {spec.n_elements}], got {count}")
    # pre-activation the whole surface is static, so the retained static tail
    # is the current coefficient vector beyond the coated segment
    full = np.concatenate([np.full(spec.ris_count, spec.static_coeff), spec.static_coeffs])
    return SurfaceSpec(spec.rows, spec.cols, ris_count=count,
                       static_coeff=spec.static_coeff, static_coeffs=full[count:],
                       ris_phase_set=spec.ris_phase_set,
                       d_bs=spec.d_bs, d_ue=spec.d_ue)


@dataclass(frozen=True)
class DetectorSettings:
    """Monitoring-side knobs shared by all detectors."""

    window: int = 5                 # W, sliding-window length
    kernel: str = "linear"          # scan-B kernel: linear | rbf
    rbf_gamma: float | None = 1.0   # None: median heuristic over the reference
    hotelling_shrinkage: float = 1e-3
    false_alarm_budget: float = 0.25    # F, per-episode false-alarm budget
    n_calibration: int = 200            # no-change episodes used to set theta

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        if self.kernel not in ("linear", "rbf"):
            raise ConfigError(f"kernel must be linear or rbf, got {self.kernel!r}")
        if self.rbf_gamma is not None and self.rbf_gamma <= 0:
            raise ConfigError(f"rbf_gamma must be positive, got {self.rbf_gamma}")
        if not 0.0 < self.false_alarm_budget <= 1.0:
            raise ConfigError("false_alarm_budget must lie in (0, 1]")
        if self.hotelling_shrinkage <= 0:
            raise ConfigError("hotelling_shrinkage must be positive")


@dataclass(frozen=True)
class TrainingSettings:
    """Deep-SVDD architecture and optimizer hyperparameters."""

    latent_dim: int = 32
    hidden_widths: tuple[int, ...] = (1280, 640, 320)
    alpha_leaky: float = 0.01
    final_activation: bool = True
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 30
    lambda1: float = 0.1        # hinge weight 1/(lambda1*batch)
    lambda2: float = 1e-4       # weight decay
    train_size: int = 60_000
    train_frame_len: int | None = None  # symbols per realization when generating data

    def __post_init__(self):
        if self.latent_dim < 1 or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("layer widths must be >= 1")
        if self.batch_size < 1 or self.epochs < 0 or self.train_size < 1:
            raise ConfigError("batch_size/train_size must be >= 1 and epochs >= 0")
        if self.lambda1 <= 0 or self.lambda2 < 0 or self.learning_rate <= 0:
            raise ConfigError("lambda1/learning_rate must be positive, lambda2 >= 0")
        if self.train_frame_len is not None and self.train_frame_len < 1:
            raise ConfigError("train_frame_len must be >= 1")


@dataclass(frozen=True)
class SweepSettings:
    """Monte-Carlo sweep grid."""

    k_sweep: tuple[int, ...] = (64, 128, 256, 512)
    noise_db_sweep: tuple[float, ...] = (-120.0,)
    episodes: int = 1000

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if any(k < 1 for k in self.k_sweep):
            raise ConfigError("k_sweep entries must be >= 1")


@dataclass(frozen=True, eq=False)
class Config:
    """Full parsed configuration bundle."""

    system: SystemConfig = field(default_factory=SystemConfig)
    surfaces: tuple[SurfaceSpec, ...] = ()
    active_surface: int = 1         # 0-based index of the reflector that turns RIS
    active_ris_count: int | None = None  # coated elements after the change (None = all)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def __post_init__(self):
        if not self.surfaces:
            object.__setattr__(
                self, "surfaces",
                (SurfaceSpec(20, 20), SurfaceSpec(20, 20)))
        if not 0 <= self.active_surface < len(self.surfaces):
            raise ConfigError(
                f"active_surface index {self.active_surface} out of range")
        n = self.surfaces[self.active_surface].n_elements
        if self.active_ris_count is not None and not 0 < self.active_ris_count <= n:
            raise ConfigError(f"active_ris_count must lie in [1, {n}]")
        if (self.system.ref_len < self.detector.window
                or self.system.ref_len % self.detector.window != 0):
            raise ConfigError(
                f"ref_len={self.system.ref_len} must be a positive multiple "
                f"of window={self.detector.window}")


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _parse_opt_int(text: str) -> int | None:
    return None if text.lower() == "none" else int(text)


def _parse_opt_float(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


# key -> (section, field name, parser); sections match Config attributes
_KEYS: dict[str, tuple[str, str, object]] = {
    "n_ue": ("system", "n_ue", int),
    "bs_rows": ("system", "bs_rows", int),
    "bs_cols": ("system", "bs_cols", int),
    "n_subcarriers": ("system", "n_subcarriers", int),
    "cyclic_prefix": ("system", "cyclic_prefix", int),
    "sample_period": ("system", "sample_period", float),
    "carrier_freq": ("system", "carrier_freq", float),
    "paths_direct": ("system", "paths_direct", int),
    "paths_bs_surface": ("system", "paths_bs_surface", int),
    "paths_surface_ue": ("system", "paths_surface_ue", int),
    "noise_var_db": ("system", "noise_var_db", float),
    "rolloff": ("system", "rolloff", float),
    "d_bs_ue": ("system", "d_bs_ue", float),
    "d_bs_surface": ("system", "d_bs_surface", float),
    "d_surface_ue": ("system", "d_surface_ue", float),
    "frame_len": ("system", "frame_len", int),
    "change_time": ("system", "change_time", int),
    "ref_len": ("system", "ref_len", int),
    "rng_seed": ("system", "rng_seed", int),
    "n_surfaces": ("surfaces", "n_surfaces", int),
    "surface_rows": ("surfaces", "surface_rows", int),
    "surface_cols": ("surfaces", "surface_cols", int),
    "surface_static_coeff": ("surfaces", "surface_static_coeff", complex),
    "active_d_bs": ("surfaces", "active_d_bs", float),
    "active_d_ue": ("surfaces", "active_d_ue", float),
    "active_surface": ("top", "active_surface", int),
    "active_ris_count": ("top", "active_ris_count", _parse_opt_int),
    "window": ("detector", "window", int),
    "kernel": ("detector", "kernel", str),
    "rbf_gamma": ("detector", "rbf_gamma", _parse_opt_float),
    "hotelling_shrinkage": ("detector", "hotelling_shrinkage", float),
    "false_alarm_budget": ("detector", "false_alarm_budget", float),
    "n_calibration": ("detector", "n_calibration", int),
    "latent_dim": ("training", "latent_dim", int),
    "hidden_widths": ("training", "hidden_widths", _parse_int_tuple),
    "alpha_leaky": ("training", "alpha_leaky", float),
    "final_activation": ("training", "final_activation", _parse_bool),
    "learning_rate": ("training", "learning_rate", float),
    "batch_size": ("training", "batch_size", int),
    "epochs": ("training", "epochs", int),
    "lambda1": ("training", "lambda1", float),
    "lambda2": ("training", "lambda2", float),
    "train_size": ("training", "train_size", int),
    "train_frame_len": ("training", "train_frame_len", _parse_opt_int),
    "k_sweep": ("sweep", "k_sweep", _parse_int_tuple),
    "noise_db_sweep": ("sweep", "noise_db_sweep", _parse_float_tuple),
    "episodes": ("sweep", "episodes", int),
}


def parse_config(path: str, overrides: dict[str, str] | None = None) -> Config:
    """Read a key/value config file and return the validated bundle.

    ``overrides`` maps config keys to raw value strings and wins over the
    file contents (used for CLI flags).
    """
    raw: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, value = (part.strip() for part in text.split("=", 1))
                if key in raw:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                raw[key] = value
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if overrides:
        raw.update(overrides)
    return config_from_items(raw, source=path)


def config_from_items(items: dict[str, str], source: str = "<config>") -> Config:
    """Build a Config from raw key/value strings, rejecting unknown keys."""
    sections: dict[str, dict] = {"system": {}, "detector": {}, "training": {},
                                 "sweep": {}, "surfaces": {}, "top": {}}
    for key, value in items.items():
        if key not in _KEYS:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        section, name, parser = _KEYS[key]
        try:
            sections[section][name] = parser(value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {value!r}") from exc

    surf = sections["surfaces"]
    n_surfaces = surf.get("n_surfaces", 2)
    if n_surfaces < 1:
        raise ConfigError(f"{source}: n_surfaces must be >= 1")
    spec = SurfaceSpec(rows=surf.get("surface_rows", 20),
                       cols=surf.get("surface_cols", 20),
                       static_coeff=surf.get("surface_static_coeff", 1.0 + 0.0j))
    top = sections["top"]
    active = top.get("active_surface", min(2, n_surfaces)) - 1  # file keys are 1-based
    specs = [spec] * n_surfaces
    if ("active_d_bs" in surf or "active_d_ue" in surf) and 0 <= active < n_surfaces:
        specs[active] = replace(spec, d_bs=surf.get("active_d_bs"),
                                d_ue=surf.get("active_d_ue"))
    return Config(system=SystemConfig(**sections["system"]),
                  surfaces=tuple(specs),
                  active_surface=active,
                  active_ris_count=top.get("active_ris_count"),
                  detector=DetectorSettings(**sections["detector"]),
                  training=TrainingSettings(**sections["training"]),
                  sweep=SweepSettings(**sections["sweep"]))


def config_snapshot(cfg: Config) -> dict:
    """JSON-serializable snapshot of a Config (for run manifests)."""
    def scrub(obj):
        if isinstance(obj, np.ndarray):
            return [scrub(v) for v in obj.tolist()]
        if isinstance(obj, complex):
            return {"re": obj.real, "im": obj.imag}
        if isinstance(obj, (list, tuple)):
            return [scrub(v) for v in obj]
        if isinstance(obj, dict):
            return {k: scrub(v) for k, v in obj.items()}
        return obj

    out = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple) and value and isinstance(value[0], SurfaceSpec):
            out[f.name] = [scrub(vars(s)) for s in value]
        elif hasattr(value, "__dataclass_fields__"):
            out[f.name] = scrub(vars(value))
        else:
            out[f.name] = scrub(value)
    return out
