"""Episode protocol, threshold calibration, and Monte-Carlo evaluation.

An episode spans ``frame_len`` symbols of one channel realization.  Symbols
1..ref_len feed the detector's reference; later symbols are monitored.  From
``change_time`` on, the designated reflector's RIS segment redraws 1-bit
phases every symbol.  Episode seeds are shared across detectors so paired
runs see byte-identical observation streams.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as artifact_io
from .channel import (ActiveSurfaceUpdater, draw_realization, draw_ris_phases,
                      simulate_symbol, surface_matrix)
from .config import Config, activate_surface
from .detectors import (HotellingDetector, ScanBDetector, build_reference,
                        make_kernel, median_heuristic_gamma)
from .errors import ConfigError
from .svdd import DsvddModel, anomaly_score, flatten_observation

DETECTOR_KINDS = ("dsvdd", "scanb-raw", "hotelling")


@dataclass
class EpisodeResult:
    """Outcome of one monitored episode."""

    change_time: float              # math.inf when the RIS never activates
    horizon: int
    first_alarm: int | None
    max_stat: float | None          # largest statistic over monitored symbols
    avg_update_time: float          # s/symbol: featurization + statistic
    avg_stat_time: float            # s/symbol: statistic stage only
    stream_hash: str
    trace: list[tuple[int, float | None, bool]] | None = None

    @property
    def false_alarm(self) -> bool:
        return self.first_alarm is not None and self.first_alarm < self.change_time

    @property
    def detected(self) -> bool:
        return self.first_alarm is not None and self.first_alarm >= self.change_time

    @property
    def missed(self) -> bool:
        return self.first_alarm is None and self.change_time <= self.horizon

    @property
    def clean(self) -> bool:
        return self.first_alarm is None and self.change_time > self.horizon

    @property
    def delay(self) -> int | None:
        return self.first_alarm - int(self.change_time) if self.detected else None

    @property
    def censored_delay(self) -> int | None:
        """Detection delay, counting misses at the censoring point M - mu."""
        if self.detected:
            return self.delay
        if self.missed:
            return self.horizon - int(self.change_time)
        return None


class _ScanAdapter:
    """Scan-B over anomaly scores (with model) or raw flattened symbols.

    With ``rbf_gamma=None`` the bandwidth is set per episode by the median
    heuristic over the reference stream.
    """

    def __init__(self, cfg: Config, theta: float, model: DsvddModel | None):
        self.model = model
        self._kernel_name = cfg.detector.kernel
        self._rbf_gamma = cfg.detector.rbf_gamma
        self._window = cfg.detector.window
        self._theta = theta
        self.detector: ScanBDetector | None = None

    def featurize(self, frame: np.ndarray):
        v = flatten_observation(frame)
        if self.model is None:
            return v
        return anomaly_score(self.model, v)

    def build(self, reference: list) -> None:
        obs = np.asarray(reference)
        gamma = self._rbf_gamma
        if self._kernel_name == "rbf" and gamma is None:
            gamma = median_heuristic_gamma(obs)
        kernel = make_kernel(self._kernel_name, 1.0 if gamma is None else gamma)
        bank = build_reference(obs, self._window)
        self.detector = ScanBDetector(bank, self._theta, kernel)


class _HotellingAdapter:
    def __init__(self, cfg: Config, theta: float):
        self._window = cfg.detector.window
        self._shrinkage = cfg.detector.hotelling_shrinkage
        self._theta = theta
        self.detector: HotellingDetector | None = None

    def featurize(self, frame: np.ndarray):
        return flatten_observation(frame)

    def build(self, reference: list) -> None:
        self.detector = HotellingDetector(np.asarray(reference), self._theta,
                                          self._window, self._shrinkage)


def make_detector_adapter(kind: str, cfg: Config, theta: float,
                          model: DsvddModel | None = None):
    if kind == "dsvdd":
        if model is None:
            raise ConfigError("the dsvdd detector needs a trained model")
        return _ScanAdapter(cfg, theta, model)
    if kind == "scanb-raw":
        return _ScanAdapter(cfg, theta, None)
    if kind == "hotelling":
        return _HotellingAdapter(cfg, theta)
    raise ConfigError(f"unknown detector kind {kind!r}; choose from {DETECTOR_KINDS}")


def episode_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Deterministic per-episode generator; streams keep uses disjoint."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, index]))


def run_episode(cfg: Config, kind: str, theta: float, rng: np.random.Generator,
                model: DsvddModel | None = None,
                change_time: float | None = None,
                collect_trace: bool = False) -> EpisodeResult:
    """Simulate one episode and monitor it with the chosen detector.

    ``change_time=math.inf`` yields a no-change episode; ``None`` uses the
    configured value.  Timing covers only featurization and statistic
    updates, never channel synthesis.
    """
    sys_cfg = cfg.system
    mu = sys_cfg.change_time if change_time is None else change_time
    horizon, m0 = sys_cfg.frame_len, sys_cfg.ref_len

    realization = draw_realization(sys_cfg, cfg.surfaces, rng)
    active_spec = activate_surface(cfg.surfaces[cfg.active_surface],
                                   cfg.active_ris_count)
    updater = None
    if mu <= horizon:
        updater = ActiveSurfaceUpdater(realization, sys_cfg, cfg.active_surface)

    adapter = make_detector_adapter(kind, cfg, theta, model)
    digest = hashlib.blake2b(digest_size=16)
    reference: list = []
    trace: list[tuple[int, float | None, bool]] | None = [] if collect_trace else None
    first_alarm: int | None = None
    max_stat: float | None = None
    update_time = 0.0
    stat_time = 0.0
    monitored = 0

    base_freq = realization.freq_tensor
    for m in range(1, horizon + 1):
        if m >= mu:
            phases = draw_ris_phases(active_spec.ris_count, rng,
                                     active_spec.ris_phase_set)
            state = surface_matrix(active_spec, phases)
            _, realization.freq_tensor = updater.refresh(state.diagonal)
        else:
            realization.freq_tensor = base_freq
        frame = simulate_symbol(realization, sys_cfg, rng)
        digest.update(frame.tobytes())

        if m <= m0:
            reference.append(adapter.featurize(frame))
            if m == m0:
                adapter.build(reference)
            continue

        t0 = time.perf_counter()
        obs = adapter.featurize(frame)
        t1 = time.perf_counter()
        stat, alarm = adapter.detector.step(obs)
        t2 = time.perf_counter()
        update_time += t2 - t0
        stat_time += t2 - t1
        monitored += 1
        if stat is not None and (max_stat is None or stat > max_stat):
            max_stat = stat
        if alarm and first_alarm is None:
            first_alarm = m
        if trace is not None:
            trace.append((m, stat, alarm))

    realization.freq_tensor = base_freq
    return EpisodeResult(
        change_time=mu, horizon=horizon, first_alarm=first_alarm,
        max_stat=max_stat,
        avg_update_time=update_time / monitored if monitored else 0.0,
        avg_stat_time=stat_time / monitored if monitored else 0.0,
        stream_hash=digest.hexdigest(),
        trace=trace)


def nearest_rank_quantile(values, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*n)-th smallest value (at least the 1st)."""
    data = sorted(values)
    if not data:
        raise ConfigError("need at least one value")
    rank = max(1, math.ceil(q * len(data)))
    return data[rank - 1]


def calibrate_threshold(cfg: Config, kind: str, rng_seed: int,
                        model: DsvddModel | None = None,
                        n_episodes: int | None = None,
                        budget: float | None = None) -> float:
    """Threshold at the (1 - F) nearest-rank quantile of no-change maxima."""
    n = cfg.detector.n_calibration if n_episodes is None else n_episodes
    if n < 20:
        raise ConfigError(f"calibration needs >= 20 episodes, got {n}")
    f = cfg.detector.false_alarm_budget if budget is None else budget
    maxima = []
    for i in range(n):
        result = run_episode(cfg, kind, math.inf, episode_rng(rng_seed, 1, i),
                             model=model, change_time=math.inf)
        maxima.append(-math.inf if result.max_stat is None else result.max_stat)
    theta = nearest_rank_quantile(maxima, 1.0 - f)
    if not math.isfinite(theta):
        raise ConfigError("calibration produced a non-finite threshold")
    return float(theta)


@dataclass
class MonteCarloReport:
    """Aggregate detection metrics of one detector over paired episodes."""

    detector: str
    theta: float
    episodes: int
    detected: int = 0
    false_alarms: int = 0
    missed: int = 0
    clean: int = 0
    avg_delay: float | None = None            # detected episodes only
    censored_avg_delay: float | None = None   # misses counted at M - mu
    false_alarm_rate: float | None = None
    miss_rate: float | None = None
    avg_update_time: float | None = None      # s/symbol
    avg_stat_time: float | None = None
    results: list[EpisodeResult] = field(default_factory=list)

    @classmethod
    def from_results(cls, detector: str, theta: float,
                     results: list[EpisodeResult]) -> "MonteCarloReport":
        report = cls(detector=detector, theta=theta, episodes=len(results),
                     results=results)
        if not results:
            return report     # rates stay undefined (None)
        report.detected = sum(r.detected for r in results)
        report.false_alarms = sum(r.false_alarm for r in results)
        report.missed = sum(r.missed for r in results)
        report.clean = sum(r.clean for r in results)
        delays = [r.delay for r in results if r.detected]
        censored = [r.censored_delay for r in results if r.censored_delay is not None]
        report.avg_delay = float(np.mean(delays)) if delays else None
        report.censored_avg_delay = float(np.mean(censored)) if censored else None
        report.false_alarm_rate = report.false_alarms / len(results)
        report.miss_rate = report.missed / len(results)
        report.avg_update_time = float(np.mean([r.avg_update_time for r in results]))
        report.avg_stat_time = float(np.mean([r.avg_stat_time for r in results]))
        return report


_WORKER_STATE: dict = {}


def _init_worker(cfg, kind, theta, model, collect_traces):
    _WORKER_STATE.update(cfg=cfg, kind=kind, theta=theta, model=model,
                         collect=collect_traces)


def _episode_task(args) -> EpisodeResult:
    seed, index = args
    s = _WORKER_STATE
    return run_episode(s["cfg"], s["kind"], s["theta"],
                       episode_rng(seed, 2, index), model=s["model"],
                       collect_trace=s["collect"])


def monte_carlo(cfg: Config, kinds, thetas: dict[str, float], n_episodes: int,
                rng_seed: int, models: dict[str, DsvddModel] | None = None,
                workers: int = 1, collect_traces: bool = False
                ) -> dict[str, MonteCarloReport]:
    """Run paired episodes for each detector; episode i shares its seed across
    detectors, so the simulated observation streams are identical."""
    models = models or {}
    reports = {}
    for kind in kinds:
        if kind not in DETECTOR_KINDS:
            raise ConfigError(f"unknown detector kind {kind!r}")
        theta = thetas[kind]
        model = models.get(kind)
        if kind == "dsvdd" and model is None:
            raise ConfigError("monte_carlo needs a model for the dsvdd detector")
        tasks = [(rng_seed, i) for i in range(n_episodes)]
        if workers > 1 and n_episodes > 1:
            with ProcessPoolExecutor(
                    max_workers=workers, initializer=_init_worker,
                    initargs=(cfg, kind, theta, model, collect_traces)) as pool:
                results = list(pool.map(_episode_task, tasks,
                                        chunksize=max(1, n_episodes // (4 * workers))))
        else:
            _init_worker(cfg, kind, theta, model, collect_traces)
            results = [_episode_task(t) for t in tasks]
        reports[kind] = MonteCarloReport.from_results(kind, theta, results)
    return reports


def generate_training_set(cfg: Config, size: int, rng: np.random.Generator,
                          frame_len: int | None = None,
                          out_path: str | None = None) -> np.ndarray:
    """RIS-free flattened observations, one fresh realization per frame.

    Returns a float32 (size, feature_dim) matrix; optionally also written to
    ``out_path`` in the dataset file format.
    """
    if size < 1:
        raise ConfigError(f"size must be >= 1, got {size}")
    frame = frame_len or cfg.training.train_frame_len or cfg.system.frame_len
    sys_cfg = cfg.system
    features = np.empty((size, sys_cfg.feature_dim), dtype=np.float32)
    realization = None
    for i in range(size):
        if i % frame == 0:
            realization = draw_realization(sys_cfg, cfg.surfaces, rng)
        symbol = simulate_symbol(realization, sys_cfg, rng)
        features[i] = flatten_observation(symbol)
    if out_path is not None:
        artifact_io.save_dataset(out_path, features)
    return features
