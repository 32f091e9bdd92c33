"""Binary artifact formats, CSV outputs, and manifests."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risdetect.config import (Config, SurfaceSpec, SystemConfig,
                              TrainingSettings)
from risdetect.errors import ConfigError, FormatError
from risdetect.io import (DATASET_MAGIC, MODEL_MAGIC, load_dataset,
                          load_model, package_version, read_manifest,
                          read_results_csv, save_dataset, save_model,
                          write_manifest, write_results_csv, write_trace_csv)
from risdetect.svdd import anomaly_score, train_dsvdd

seeds = st.integers(0, 2 ** 31 - 1)


def tiny_model(seed=0, in_dim=4):
    data = np.random.default_rng(seed).normal(size=(32, in_dim)).astype(np.float32)
    hyper = TrainingSettings(latent_dim=2, hidden_widths=(3,), epochs=1,
                             batch_size=8, train_size=32)
    return train_dsvdd(data, hyper, np.random.default_rng(seed + 1))


# ---------------------------------------------------------------- datasets

@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_dataset_roundtrip(seed, count, dim):
    import tempfile
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(count, dim)).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/data.bin"
        save_dataset(path, features)
        assert np.array_equal(load_dataset(path), features)


def test_dataset_rejects_non_matrix(tmp_path):
    with pytest.raises(ConfigError):
        save_dataset(str(tmp_path / "x.bin"), np.zeros(4))


def test_dataset_bad_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOTRIS" + struct.pack("<ii", 1, 1) + b"\x00" * 4)
    with pytest.raises(FormatError, match="magic"):
        load_dataset(str(path))


def test_dataset_truncated_payload(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(DATASET_MAGIC + struct.pack("<ii", 2, 2) + b"\x00" * 8)
    with pytest.raises(FormatError, match="truncated"):
        load_dataset(str(path))


def test_dataset_trailing_bytes(tmp_path):
    path = str(tmp_path / "x.bin")
    save_dataset(path, np.zeros((1, 2), dtype=np.float32))
    with open(path, "ab") as fh:
        fh.write(b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        load_dataset(path)


def test_dataset_invalid_header(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(DATASET_MAGIC + struct.pack("<ii", 0, 3))
    with pytest.raises(FormatError, match="header"):
        load_dataset(str(path))


def test_dataset_dim_mismatch(tmp_path):
    path = str(tmp_path / "x.bin")
    save_dataset(path, np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(ConfigError, match="dim"):
        load_dataset(path, expected_dim=4)


# ------------------------------------------------------------------ models

def test_model_roundtrip_preserves_scores(tmp_path):
    model = tiny_model()
    path = str(tmp_path / "m.bin")
    save_model(path, model)
    loaded = load_model(path, hyper=model.hyper)
    probe = np.random.default_rng(9).normal(size=(16, 4)).astype(np.float32)
    assert np.array_equal(anomaly_score(loaded, probe),
                          anomaly_score(model, probe))
    for w1, w2 in zip(model.params.weights, loaded.params.weights):
        assert np.array_equal(w1, w2)
    assert loaded.radius == pytest.approx(model.radius, rel=1e-6)


def test_model_load_applies_score_hypers(tmp_path):
    path = str(tmp_path / "m.bin")
    save_model(path, tiny_model())
    hyper = TrainingSettings(latent_dim=2, hidden_widths=(3,),
                             alpha_leaky=0.2, final_activation=False)
    loaded = load_model(path, hyper=hyper)
    assert loaded.params.alpha_leaky == 0.2
    assert loaded.params.final_activation is False


def test_model_bad_magic(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"NOTMDL" + struct.pack("<i", 1))
    with pytest.raises(FormatError, match="magic"):
        load_model(str(path))


def test_model_implausible_layer_count(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(MODEL_MAGIC + struct.pack("<i", 0))
    with pytest.raises(FormatError, match="layer count"):
        load_model(str(path))


def test_model_unchained_layer_shapes(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(MODEL_MAGIC + struct.pack("<i", 2)
                     + struct.pack("<ii", 2, 3) + struct.pack("<ii", 4, 1))
    with pytest.raises(FormatError, match="chain"):
        load_model(str(path))


def test_model_negative_radius(tmp_path):
    path = str(tmp_path / "m.bin")
    model = tiny_model()
    save_model(path, model)
    blob = bytearray(open(path, "rb").read())
    in_dim = model.params.in_dim
    lo = len(blob) - 8 * in_dim - 4      # radius sits before mean and scale
    blob[lo:lo + 4] = struct.pack("<f", -2.0)
    open(path, "wb").write(bytes(blob))
    with pytest.raises(FormatError, match="radius"):
        load_model(path)


def test_model_truncation_and_trailing(tmp_path):
    path = str(tmp_path / "m.bin")
    save_model(path, tiny_model())
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-3])
    with pytest.raises(FormatError, match="truncated"):
        load_model(path)
    open(path, "wb").write(blob + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        load_model(path)


# --------------------------------------------------------------------- csv

def test_trace_csv_layout(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(str(path), [(11, None, False), (12, 0.5, True)],
                    manifest_path="run.json")
    lines = path.read_text().splitlines()
    assert lines == ["# manifest=run.json", "m,statistic,alarm",
                     "11,,0", "12,0.5,1"]


def test_results_csv_roundtrip(tmp_path):
    path = str(tmp_path / "res.csv")
    rows = [{"detector": "dsvdd", "k": 32, "noise_db": -120.0, "theta": 1.5,
             "episodes": 10, "detected": 8, "false_alarms": 1, "missed": 1,
             "avg_delay": 12.25, "censored_avg_delay": None,
             "false_alarm_rate": 0.1, "miss_rate": 0.1,
             "avg_update_time_us": 100.0, "avg_stat_time_us": None}]
    write_results_csv(path, rows, manifest_path="mc.json")
    back = read_results_csv(path)
    assert len(back) == 1
    assert back[0]["detector"] == "dsvdd"
    assert back[0]["avg_delay"] == "12.25"
    assert back[0]["censored_avg_delay"] is None
    assert back[0]["avg_stat_time_us"] is None


def test_results_csv_requires_header(tmp_path):
    path = tmp_path / "res.csv"
    path.write_text("# only a comment\n")
    with pytest.raises(FormatError, match="header"):
        read_results_csv(str(path))


# --------------------------------------------------------------- manifests

def test_manifest_records_config_and_extra(tmp_path):
    cfg = Config(system=SystemConfig(n_ue=2, bs_rows=2, bs_cols=2,
                                     n_subcarriers=8, cyclic_prefix=4,
                                     frame_len=30, change_time=15, ref_len=10),
                 surfaces=(SurfaceSpec(2, 2),
                           SurfaceSpec(2, 2, d_bs=0.3, d_ue=0.4,
                                       static_coeff=0.5 + 0.5j)),
                 active_surface=1)
    path = write_manifest(str(tmp_path / "run.json"), "run", cfg, seed=7,
                          inputs={"model": "m.bin"},
                          outputs={"trace": "t.csv"},
                          extra={"first_alarm": 42})
    data = read_manifest(path)
    assert data["command"] == "run" and data["seed"] == 7
    assert data["inputs"] == {"model": "m.bin"}
    assert data["first_alarm"] == 42
    assert data["config"]["system"]["n_subcarriers"] == 8
    surf = data["config"]["surfaces"][1]
    assert surf["d_bs"] == 0.3 and surf["d_ue"] == 0.4
    assert surf["static_coeff"] == {"re": 0.5, "im": 0.5}
    assert data["versions"]["numpy"] == np.__version__
    json.dumps(data)                      # fully JSON-serializable


def test_manifest_without_config(tmp_path):
    path = write_manifest(str(tmp_path / "x.json"), "gen-data", None, None)
    assert read_manifest(path)["config"] is None


def test_package_version_is_a_string():
    assert isinstance(package_version(), str) and package_version()
