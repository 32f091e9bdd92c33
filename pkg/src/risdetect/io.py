"""Binary artifact formats, CSV outputs, and run manifests.

Dataset files: magic ``RISDS1``, then int32 count and dim, then the float32
feature matrix row-major.  Model files: magic ``DSVDD1``, int32 layer count,
per-layer int32 (rows, cols) pairs, then float32 payload: each weight matrix
row-major, the center, R, and the standardization mean and scale vectors.
Everything is little-endian.
"""

from __future__ import annotations

import json
import struct
import time
from importlib import metadata

import numpy as np

from .config import Config, TrainingSettings, config_snapshot
from .errors import ConfigError, FormatError
from .svdd import DsvddModel, MlpParams

DATASET_MAGIC = b"RISDS1"
MODEL_MAGIC = b"DSVDD1"


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def save_dataset(path: str, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ConfigError(f"features must be 2-d, got shape {features.shape}")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<ii", *features.shape))
        fh.write(features.tobytes())


def load_dataset(path: str, expected_dim: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(DATASET_MAGIC), "magic") != DATASET_MAGIC:
            raise FormatError(f"{path} is not a dataset file (bad magic)")
        count, dim = struct.unpack("<ii", _read_exact(fh, 8, "header"))
        if count < 1 or dim < 1:
            raise FormatError(f"invalid dataset header: count={count} dim={dim}")
        payload = _read_exact(fh, 4 * count * dim, "feature payload")
        if fh.read(1):
            raise FormatError(f"{path} has trailing bytes")
    if expected_dim is not None and dim != expected_dim:
        raise ConfigError(
            f"dataset dim {dim} does not match the configured dim {expected_dim}")
    return np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()


def save_model(path: str, model: DsvddModel) -> None:
    weights = [np.ascontiguousarray(w, dtype="<f4") for w in model.params.weights]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<i", len(weights)))
        for w in weights:
            fh.write(struct.pack("<ii", *w.shape))
        for w in weights:
            fh.write(w.tobytes())
        fh.write(np.ascontiguousarray(model.center, dtype="<f4").tobytes())
        fh.write(struct.pack("<f", model.radius))
        fh.write(np.ascontiguousarray(model.input_mean, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.input_scale, dtype="<f4").tobytes())


def load_model(path: str, hyper: TrainingSettings | None = None) -> DsvddModel:
    """Load a model file; score-relevant hypers (alpha_leaky, final activation)
    are not stored in the file and come from ``hyper`` (defaults otherwise)."""
    hyper = hyper or TrainingSettings()
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MODEL_MAGIC), "magic") != MODEL_MAGIC:
            raise FormatError(f"{path} is not a model file (bad magic)")
        (n_layers,) = struct.unpack("<i", _read_exact(fh, 4, "layer count"))
        if not 1 <= n_layers <= 64:
            raise FormatError(f"implausible layer count {n_layers}")
        shapes = [struct.unpack("<ii", _read_exact(fh, 8, "layer shape"))
                  for _ in range(n_layers)]
        for (rows, cols) in shapes:
            if rows < 1 or cols < 1:
                raise FormatError(f"invalid layer shape {(rows, cols)}")
        for (_, cols), (rows, _) in zip(shapes, shapes[1:]):
            if cols != rows:
                raise FormatError(f"layer shapes do not chain: {shapes}")
        weights = []
        for rows, cols in shapes:
            buf = _read_exact(fh, 4 * rows * cols, "weights")
            weights.append(np.frombuffer(buf, dtype="<f4").reshape(rows, cols).copy())
        latent = shapes[-1][1]
        center = np.frombuffer(_read_exact(fh, 4 * latent, "center"), dtype="<f4").copy()
        (radius,) = struct.unpack("<f", _read_exact(fh, 4, "radius"))
        if radius < 0:
            raise FormatError(f"negative radius {radius}")
        in_dim = shapes[0][0]
        mean = np.frombuffer(_read_exact(fh, 4 * in_dim, "mean"), dtype="<f4").copy()
        scale = np.frombuffer(_read_exact(fh, 4 * in_dim, "scale"), dtype="<f4").copy()
        if fh.read(1):
            raise FormatError(f"{path} has trailing bytes")
    params = MlpParams(weights, alpha_leaky=hyper.alpha_leaky,
                       final_activation=hyper.final_activation)
    return DsvddModel(params=params, center=center, radius=radius,
                      input_mean=mean, input_scale=scale, hyper=hyper)


def write_trace_csv(path: str, rows, manifest_path: str | None = None) -> None:
    """Statistic trace: one (m, statistic, alarm) row per monitored symbol."""
    with open(path, "w", encoding="utf-8") as fh:
        if manifest_path:
            fh.write(f"# manifest={manifest_path}\n")
        fh.write("m,statistic,alarm\n")
        for m, stat, alarm in rows:
            stat_text = "" if stat is None else f"{stat:.17g}"
            fh.write(f"{m},{stat_text},{int(alarm)}\n")


RESULT_COLUMNS = ("detector", "k", "noise_db", "theta", "episodes", "detected",
                  "false_alarms", "missed", "avg_delay", "censored_avg_delay",
                  "false_alarm_rate", "miss_rate", "avg_update_time_us",
                  "avg_stat_time_us")


def write_results_csv(path: str, rows: list[dict],
                      manifest_path: str | None = None) -> None:
    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.9g}"
        return str(value)

    with open(path, "w", encoding="utf-8") as fh:
        if manifest_path:
            fh.write(f"# manifest={manifest_path}\n")
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row.get(col)) for col in RESULT_COLUMNS) + "\n")


def read_results_csv(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header: list[str] | None = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            values = line.split(",")
            rows.append({k: (v if v != "" else None)
                         for k, v in zip(header, values)})
    if header is None:
        raise FormatError(f"{path} has no header row")
    return rows


def package_version() -> str:
    try:
        return metadata.version("risdetect")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(path: str, command: str, cfg: Config | None, seed: int | None,
                   inputs: dict | None = None, outputs: dict | None = None,
                   extra: dict | None = None) -> str:
    """Provenance record for one CLI invocation; returns the path written."""
    payload = {
        "command": command,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seed": seed,
        "versions": {"risdetect": package_version(), "numpy": np.__version__},
        "inputs": inputs or {},
        "outputs": outputs or {},
        "config": config_snapshot(cfg) if cfg is not None else None,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
