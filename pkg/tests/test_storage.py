import numpy as np
import numpy.testing as npt
import pytest

from core.errors import CheckpointError, StorageError
from core.optim import AdamState
from models.run_models import METRICS_COLUMNS, MetricsRecord
from storage.checkpoint_store import (
    Checkpoint,
    check_compatible,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from storage.metrics_store import MetricsSink, read_metrics


def sample_checkpoint(rng) -> Checkpoint:
    params = {"W": rng.normal(size=(2, 3)), "U": np.eye(3), "b": np.zeros(3)}
    adam = AdamState(
        lr=1e-3,
        t=7,
        m={k: rng.normal(size=v.shape) for k, v in params.items()},
        v={k: rng.random(size=v.shape) for k, v in params.items()},
    )
    return Checkpoint(
        task="adding",
        cell="pru",
        iteration=7,
        seed=11,
        params=params,
        adam=adam,
        best_valid_loss=0.1234567890123,
        best_iteration=6,
        stale_evals=1,
        extra={"n_hidden": "3", "T": "10"},
    )


def record(iteration, valid=0.5):
    return MetricsRecord(
        iteration=iteration,
        epoch=0,
        seconds=0.0,
        train_loss=0.25,
        valid_loss=valid,
        units="mse",
        cell="pru",
        seed=1,
    )


def test_checkpoint_round_trip_is_byte_identical(rng, tmp_path):
    first = save_checkpoint(tmp_path / "a.prnn", sample_checkpoint(rng))
    loaded = load_checkpoint(first)
    second = save_checkpoint(tmp_path / "b.prnn", loaded)
    assert first.read_bytes() == second.read_bytes()


def test_loaded_checkpoint_restores_every_field(rng, tmp_path):
    original = sample_checkpoint(rng)
    loaded = load_checkpoint(save_checkpoint(tmp_path / "c.prnn", original))
    assert (loaded.task, loaded.cell, loaded.iteration, loaded.seed) == ("adding", "pru", 7, 11)
    assert loaded.best_valid_loss == original.best_valid_loss
    assert loaded.adam.t == 7
    assert loaded.extra == {"n_hidden": "3", "T": "10"}
    for name, arr in original.params.items():
        assert np.array_equal(loaded.params[name], arr)
        assert np.array_equal(loaded.adam.m[name], original.adam.m[name])
        assert np.array_equal(loaded.adam.v[name], original.adam.v[name])


def test_header_is_readable_text(rng):
    blob = encode_checkpoint(sample_checkpoint(rng))
    header = blob[: blob.index(b"\nend\n")].decode("ascii")
    assert header.startswith("PRNN-CHECKPOINT\nversion=1\n")
    assert "tensor param W float64 2,3" in header
    assert "tensor adam_v b float64 3" in header


@pytest.mark.parametrize(
    "damage",
    [
        lambda blob: b"NOT-A-CHECKPOINT" + blob,
        lambda blob: blob.replace(b"version=1\n", b"version=9\n", 1),
        lambda blob: blob[:-8],
        lambda blob: blob + b"\x00",
        lambda blob: blob[:20],
    ],
    ids=["magic", "version", "truncated", "trailing", "header-cut"],
)
def test_damaged_checkpoints_are_rejected(rng, damage):
    blob = encode_checkpoint(sample_checkpoint(rng))
    with pytest.raises(CheckpointError):
        decode_checkpoint(damage(blob))


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.prnn")


def test_check_compatible(rng):
    ckpt = sample_checkpoint(rng)
    check_compatible(ckpt, {"W": (2, 3), "U": (3, 3), "b": (3,)}, cell="pru", task="adding")
    with pytest.raises(CheckpointError, match="W"):
        check_compatible(ckpt, {"W": (2, 4), "U": (3, 3), "b": (3,)})
    with pytest.raises(CheckpointError):
        check_compatible(ckpt, {"W": (2, 3), "U": (3, 3)})
    with pytest.raises(CheckpointError):
        check_compatible(ckpt, {"W": (2, 3), "U": (3, 3), "b": (3,)}, cell="lstm")


def test_save_into_unwritable_location(rng, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StorageError):
        save_checkpoint(blocker / "ckpt.prnn", sample_checkpoint(rng))


def test_metrics_sink_writes_header_then_rows(tmp_path):
    path = tmp_path / "metrics.csv"
    with MetricsSink(path) as sink:
        sink.append(record(2, 0.4))
        sink.append(record(4, 0.3))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_COLUMNS)
    assert lines[1] == "2,0,0.0,0.25,0.4,mse,pru,1"
    assert [r.iteration for r in read_metrics(path)] == [2, 4]


def test_metrics_sink_header_only(tmp_path):
    path = tmp_path / "metrics.csv"
    with MetricsSink(path):
        pass
    assert path.read_text() == ",".join(METRICS_COLUMNS) + "\n"
    assert read_metrics(path) == []


def test_metrics_iterations_must_increase(tmp_path):
    with MetricsSink(tmp_path / "metrics.csv") as sink:
        sink.append(record(3))
        with pytest.raises(StorageError):
            sink.append(record(3))


def test_metrics_resume_appends_after_the_last_row(tmp_path):
    path = tmp_path / "metrics.csv"
    with MetricsSink(path) as sink:
        sink.append(record(2))
    with MetricsSink(path, resume=True) as sink:
        assert sink.last_iteration == 2
        with pytest.raises(StorageError):
            sink.append(record(1))
        sink.append(record(4))
    rows = read_metrics(path)
    assert [r.iteration for r in rows] == [2, 4]
    assert path.read_text().count("iteration,") == 1


def test_metrics_round_trip_keeps_float_bits(tmp_path):
    path = tmp_path / "metrics.csv"
    valid = 0.1 + 0.2
    with MetricsSink(path) as sink:
        sink.append(record(1, valid))
    npt.assert_array_equal(read_metrics(path)[0].valid_loss, valid)
