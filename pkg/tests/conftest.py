import os
from pathlib import Path
from typing import Callable, Dict

import numpy as np
import pytest

from config.settings import BUNDLED_CORPUS
from models.run_models import RunConfig

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_collection_modifyitems(config, items):
    if os.getenv("PRNN_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set PRNN_RUN_SLOW=1 to run benchmark reproductions")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def out_dir(tmp_path) -> Path:
    path = tmp_path / "runs"
    path.mkdir()
    return path


@pytest.fixture
def tiny_config(out_dir) -> Callable[..., RunConfig]:
    """Small, fast RunConfig; keyword overrides win."""

    def make(**overrides) -> RunConfig:
        values = dict(
            task="adding",
            cell="pru",
            T=6,
            n_hidden=5,
            batch_size=4,
            max_iterations=6,
            eval_interval=2,
            valid_batches=2,
            seed=3,
            output_dir=str(out_dir),
            corpus_path=str(BUNDLED_CORPUS),
        )
        values.update(overrides)
        return RunConfig(**values)

    return make


def finite_difference(loss: Callable[[Dict[str, np.ndarray]], float], values: Dict[str, np.ndarray], eps: float = 1e-6):
    """Central-difference gradient of ``loss`` with respect to every entry of every array."""
    grads = {}
    for name, arr in values.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus = {k: v.copy() for k, v in values.items()}
            minus = {k: v.copy() for k, v in values.items()}
            plus[name][idx] += eps
            minus[name][idx] -= eps
            g[idx] = (loss(plus) - loss(minus)) / (2 * eps)
        grads[name] = g
    return grads


def check_golden(name: str, content: str) -> None:
    """Byte comparison against tests/golden/<name>. PRNN_UPDATE_GOLDEN=1 rewrites the file."""
    path = GOLDEN_DIR / name
    if os.getenv("PRNN_UPDATE_GOLDEN") == "1":
        GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        return
    if not path.exists():
        pytest.fail(f"golden file {path} is missing; set PRNN_UPDATE_GOLDEN=1 to create it")
    assert path.read_text(encoding="utf-8") == content, f"{name} differs from the golden copy"
